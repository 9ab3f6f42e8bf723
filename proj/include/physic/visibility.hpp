#pragma once

/// Camera-facing vertex selection and object/self occlusion masks.
/// Self-occlusion uses a software z-buffer at the input image resolution;
/// masks are piecewise-constant state refreshed by the pipeline, never
/// differentiated through.

#include "physic/types.hpp"

namespace physic {

struct VisibilityMasks {
  std::vector<uint8_t> camera_facing;      // per vertex
  std::vector<uint8_t> occluded;           // per vertex (object or part-level self)
  std::vector<uint8_t> per_part_occluded;  // per part (30% self-occlusion rule)
};

/// Flags vertices whose area-weighted normal deviates less than
/// `max_angle_deg` (default 70) from the direction toward the camera.
/// Zero-area faces contribute nothing.
std::vector<uint8_t> camera_facing(const MatX3& vertices,
                                   const std::vector<std::array<int, 3>>& faces,
                                   const CameraIntrinsics& cam,
                                   double max_angle_deg = 70.0);

/// Flags vertices whose projection lands outside the image or on a pixel
/// where the human mask is zero.
std::vector<uint8_t> object_occlusion(const MatX3& vertices, const CameraIntrinsics& cam,
                                      const PixelMask& human_mask);

/// Part-level self-occlusion: a vertex is self-occluded when a face of a
/// different part covers its pixel at depth smaller by more than
/// `depth_tolerance` (meters); a part is occluded when strictly more than
/// `part_fraction` of its vertices are self-occluded.
std::vector<uint8_t> self_occlusion(const MatX3& vertices,
                                    const std::vector<std::array<int, 3>>& faces,
                                    const std::vector<int>& part_labels, int part_count,
                                    const CameraIntrinsics& cam,
                                    double depth_tolerance = 0.005,
                                    double part_fraction = 0.3);

/// Union rule: a vertex is occluded iff it is object-occluded or its part
/// is self-occluded.
std::vector<uint8_t> combine_occlusion(const std::vector<uint8_t>& vertex_obj_occ,
                                       const std::vector<uint8_t>& part_self_occ,
                                       const std::vector<int>& part_labels);

}  // namespace physic
