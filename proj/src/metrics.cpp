#include "physic/metrics.hpp"

#include "physic/geometry.hpp"

namespace physic {

MetricsReport compute_metrics(const MatX3& pred_vertices, const MatX3& pred_joints,
                              const MatX3& gt_vertices, const MatX3& gt_joints,
                              const std::vector<uint8_t>& pred_contacts,
                              const std::vector<uint8_t>& gt_contacts) {
  if (pred_vertices.rows() != gt_vertices.rows() || pred_joints.rows() != gt_joints.rows() ||
      pred_contacts.size() != gt_contacts.size())
    throw Error(ErrorCode::CardinalityMismatch, "prediction/ground-truth sizes differ");
  if (pred_joints.rows() == 0 || pred_vertices.rows() == 0)
    throw Error(ErrorCode::EmptySet, "metrics need nonempty joints and vertices");

  MetricsReport report;

  double joint_err = 0.0;
  for (int j = 0; j < pred_joints.rows(); ++j)
    joint_err += (pred_joints.row(j) - gt_joints.row(j)).norm();
  report.mpjpe_mm = joint_err / double(pred_joints.rows()) * 1000.0;

  std::vector<Vec3> pred_list(pred_joints.rows()), gt_list(gt_joints.rows());
  for (int j = 0; j < pred_joints.rows(); ++j) {
    pred_list[j] = pred_joints.row(j).transpose();
    gt_list[j] = gt_joints.row(j).transpose();
  }
  report.pa_mpjpe_mm = procrustes_align(pred_list, gt_list).residual_mm;

  double vert_err = 0.0;
  for (int v = 0; v < pred_vertices.rows(); ++v)
    vert_err += (pred_vertices.row(v) - gt_vertices.row(v)).norm();
  report.mpvpe_mm = vert_err / double(pred_vertices.rows()) * 1000.0;

  int tp = 0, fp = 0, fn = 0;
  for (size_t v = 0; v < pred_contacts.size(); ++v) {
    const bool p = pred_contacts[v] != 0;
    const bool g = gt_contacts[v] != 0;
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
  }
  report.contact_precision = (tp + fp) > 0 ? double(tp) / double(tp + fp) : 0.0;
  report.contact_recall = (tp + fn) > 0 ? double(tp) / double(tp + fn) : 0.0;
  const double pr = report.contact_precision + report.contact_recall;
  report.contact_f1 =
      pr > 0.0 ? 2.0 * report.contact_precision * report.contact_recall / pr : 0.0;
  return report;
}

}  // namespace physic
