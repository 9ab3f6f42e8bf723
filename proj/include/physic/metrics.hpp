#pragma once

/// Evaluation metrics: MPJPE / PA-MPJPE / MPVPE (millimeters) and
/// contact precision / recall / F1 over per-vertex binary labels.

#include "physic/types.hpp"

namespace physic {

struct MetricsReport {
  double mpjpe_mm = 0.0;
  double pa_mpjpe_mm = 0.0;
  double mpvpe_mm = 0.0;
  double contact_precision = 0.0;
  double contact_recall = 0.0;
  double contact_f1 = 0.0;
};

/// Camera-frame joint/vertex errors plus contact classification metrics.
/// Empty-positive edge cases: precision/recall are 0 when their denominator
/// is 0, and F1 is 0 when precision + recall is 0.
MetricsReport compute_metrics(const MatX3& pred_vertices, const MatX3& pred_joints,
                              const MatX3& gt_vertices, const MatX3& gt_joints,
                              const std::vector<uint8_t>& pred_contacts,
                              const std::vector<uint8_t>& gt_contacts);

}  // namespace physic
