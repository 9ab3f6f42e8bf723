#pragma once

/// File formats and configuration.
///
///   rasters      binary: magic "PHSRAST1", LE u32 width/height/channels,
///                row-major IEEE-754 LE float32 payload, NaN = invalid
///   masks        binary PGM (P5), 255 = inside
///   point clouds ASCII PLY, x y z [nx ny nz]
///   everything else (params/config/manifest/templates) JSON, UTF-8
///
/// All writes are atomic (write to a temp file, then rename). All formats
/// round-trip byte-identically.

#include "physic/body.hpp"
#include "physic/objective.hpp"
#include "physic/scene.hpp"
#include "physic/types.hpp"

#include <filesystem>

namespace physic {

// ============================================================================
// Raster / mask / PLY formats
// ============================================================================

void write_depth_raster(const std::filesystem::path& path, const DepthRaster& raster);
DepthRaster read_depth_raster(const std::filesystem::path& path);

void write_point_map(const std::filesystem::path& path, const PointMap& pm);
PointMap read_point_map(const std::filesystem::path& path);

void write_mask(const std::filesystem::path& path, const PixelMask& mask);
PixelMask read_mask(const std::filesystem::path& path);

void write_ply(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud read_ply(const std::filesystem::path& path);

// ============================================================================
// JSON-backed records
// ============================================================================

void save_template(const std::filesystem::path& path, const BodyTemplate& tmpl);
/// Parses and validates a body template. Throws ParseError on malformed
/// input and InvariantViolation (naming the offending field) otherwise.
BodyTemplate load_template(const std::filesystem::path& path);

void save_body_params(const std::filesystem::path& path, const BodyParams& params,
                      const BodyTemplate& tmpl);
BodyParams load_body_params(const std::filesystem::path& path, const BodyTemplate& tmpl);

void save_keypoints(const std::filesystem::path& path, const Keypoints2D& kp);
Keypoints2D load_keypoints(const std::filesystem::path& path);

void save_contact_set(const std::filesystem::path& path, const ContactVertexSet& set);
ContactVertexSet load_contact_set(const std::filesystem::path& path);

void save_contact_report(const std::filesystem::path& path, const ContactReport& report);
ContactReport load_contact_report(const std::filesystem::path& path);

// ============================================================================
// Configuration
// ============================================================================

struct Schedule {
  int stage2_j2d_iters = 30;
  int stage2_lbfgs_iters = 2;
  int stage3_iters = 100;
  double adam_lr = 1e-2;
  int occ_refresh_every = 30;

  void validate() const {
    if (stage2_j2d_iters < 1 || stage2_lbfgs_iters < 1 || stage3_iters < 1 ||
        occ_refresh_every < 1)
      throw Error(ErrorCode::InvariantViolation, "schedule iteration counts must be >= 1");
    if (!(adam_lr > 0)) throw Error(ErrorCode::InvariantViolation, "learning rate must be > 0");
  }
};

struct PipelineConfig {
  uint64_t seed = 1;

  SceneBuildConfig scene;
  int grid_resolution = 128;

  LossWeights weights;            // joint optimization (stage 3)
  double align_j2d = 5000.0;      // stage-2 alignment weights
  double align_d = 0.6;

  double eps_active = 0.15;       // meters
  double eps_extract = 0.05;      // meters
  RobustLossSpec rho_contact{-2.0, 0.05};
  RobustLossSpec rho_interp{-2.0, 0.05};

  Schedule schedule;
  double camera_facing_angle_deg = 70.0;
  double selfocc_depth_tolerance = 0.005;  // meters
  double selfocc_part_fraction = 0.3;
  int ph_max_points = 8192;

  bool occlusion_aware = true;    // ablation: exclude V_occ from L_i
  bool use_static_contacts = false;
  bool brute_force_nn = false;    // benchmark: bypass the NN grid
};

PipelineConfig default_config();
/// Loads a config (missing fields keep defaults). The PHYSIC_SEED
/// environment variable, when set, overrides the seed.
PipelineConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const PipelineConfig& cfg);
/// Applies the PHYSIC_SEED override to an in-memory config.
void apply_seed_override(PipelineConfig& cfg);

// ============================================================================
// Input bundles
// ============================================================================

struct HumanInputs {
  PixelMask mask;
  Keypoints2D keypoints;
  BodyParams init_params;
  ContactVertexSet contacts;
};

struct InputBundle {
  int width = 0;
  int height = 0;
  DepthRaster scene_depth;     // D_s, inpainted scene image depth
  PointMap scene_relpoints;    // relative scene point map
  PointMap full_relpoints;     // relative point map of the original image
  std::optional<PixelMask> floor_mask;
  CameraIntrinsics intrinsics_hint;
  std::vector<HumanInputs> humans;
  BodyTemplate body;
};

/// Loads and validates a bundle directory (manifest.json names each
/// component). All validation failures are collected into the error
/// message rather than stopping at the first.
InputBundle load_bundle(const std::filesystem::path& dir);
void save_bundle(const std::filesystem::path& dir, const InputBundle& bundle);

// ============================================================================
// Scene scaffold output
// ============================================================================

/// scene.ply (points + normals) plus a sidecar JSON with the floor plane,
/// recalibrated intrinsics, provenance counts, and the applied scale.
void save_scene_scaffold(const std::filesystem::path& ply_path, const SceneScaffold& scaffold,
                         double applied_scale = 1.0);

}  // namespace physic
