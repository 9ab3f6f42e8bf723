#pragma once

/// Synthetic desk-scale fixtures: procedurally built scenes (floor, wall,
/// boxes) with a posed humanoid, rendered into the engine's own input
/// bundle format, plus the exact ground truth the renders were made from.
/// These stand in for dataset + neural-frontend inputs in every test.

#include "physic/io.hpp"
#include "physic/objective.hpp"

namespace physic {

// ============================================================================
// Analytic scene geometry
// ============================================================================

struct SceneGeometry {
  double floor_y = 1.4;  // camera at origin, +y down, floor below
  double wall_z = 6.0;   // back wall
  std::vector<Aabb> boxes;
};

/// Depth (along +z) of the first surface hit by a ray through the camera
/// origin, or +inf on a miss. `dir` must have dir.z == 1.
double ray_depth(const SceneGeometry& geo, const Vec3& dir);

/// Exact unsigned distance from a point to the union of scene surfaces.
double surface_distance(const SceneGeometry& geo, const Vec3& p);

DepthRaster render_scene_depth(const SceneGeometry& geo, const CameraIntrinsics& cam);

/// Z-buffer depth render of a triangle mesh (+inf where uncovered).
std::vector<double> render_mesh_depth(const MatX3& vertices,
                                      const std::vector<std::array<int, 3>>& faces,
                                      const CameraIntrinsics& cam);

// ============================================================================
// Fixtures
// ============================================================================

enum class FixtureKind { Standing, Seated, OccludedLower, MultiHuman };

FixtureKind fixture_kind_from_string(const std::string& name);
std::string fixture_kind_name(FixtureKind kind);

struct FixtureGroundTruth {
  std::vector<BodyParams> params;      // per human
  std::vector<ContactReport> contacts; // eps_c rule against the GT geometry
  SceneGeometry geometry;
  Plane floor;                         // world floor plane (engine orientation)
  double eps_extract = 0.05;
};

struct SynthFixture {
  InputBundle bundle;
  FixtureGroundTruth gt;
};

/// Deterministic fixture synthesis: renders rasters/masks/keypoints from a
/// pinhole camera, perturbs the initial body parameters (translation offset
/// up to 0.3 m, per-joint noise up to 0.15 rad), and derives ground-truth
/// contacts with the eps_c rule against the analytic geometry.
SynthFixture synth_fixture(FixtureKind kind, uint64_t seed);

/// Writes bundle files into `dir` and ground truth into `dir`/gt.
void save_fixture(const std::filesystem::path& dir, const SynthFixture& fixture);

/// Loads the ground-truth half of a saved fixture.
FixtureGroundTruth load_fixture_gt(const std::filesystem::path& dir,
                                   const BodyTemplate& tmpl);

}  // namespace physic
