#pragma once

/// Stage orchestration: Adam and L-BFGS steps, the stage-2 alignment
/// (translation-only), the stage-3 joint human-scene optimization, and the
/// end-to-end pipeline. Termination is strictly by iteration count.

#include "physic/io.hpp"
#include "physic/objective.hpp"

namespace physic {

// ============================================================================
// Optimizers
// ============================================================================

struct AdamMoments {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  int t = 0;

  explicit AdamMoments(int n) : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}
};

/// One bias-corrected Adam update (beta1 = 0.9, beta2 = 0.999, eps = 1e-8).
/// Throws NonFiniteGradient on non-finite gradients.
void adam_step(Eigen::VectorXd& x, const Eigen::VectorXd& grad, AdamMoments& moments,
               double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

/// L-BFGS (history 10, strong Wolfe line search, unit initial step) over
/// the three translation coordinates of lambda_j2d*L_j2d + lambda_d*L_d.
/// Falls back to a backtracking gradient step when the line search fails.
BodyParams lbfgs_translate(const BodyTemplate& tmpl, BodyParams params,
                           const HumanObservation& obs, const CameraIntrinsics& cam,
                           double lambda_j2d, double lambda_d, int iters = 2);

// ============================================================================
// Stages
// ============================================================================

struct Stage2Result {
  std::vector<BodyParams> params;            // per human, after alignment
  std::vector<std::vector<Vec3>> human_points;  // P_h per human (metric)
  ScaleShift full_alignment;                 // full-image map -> metric scene
};

/// Stage 2: align the full-image relative map to the metric scene
/// (excluding human pixels), extract per-human metric points, then
/// per human run the 2D-keypoint translation fit and the L-BFGS depth
/// alignment.
Stage2Result run_stage2(const InputBundle& bundle, const SceneBuildResult& scene,
                        const BodyTemplate& tmpl, const PipelineConfig& cfg);

struct Stage3Result {
  OptimState state;
  std::vector<ContactReport> contacts;
  std::vector<double> loss_history;
  bool aborted_non_finite = false;
};

/// Stage 3: joint Adam optimization of all humans' parameters and the
/// shared scene scale. V_cf stays frozen; V_occ refreshes every
/// `occ_refresh_every` iterations. On a non-finite loss the last finite
/// state is returned.
Stage3Result run_stage3(const BodyTemplate& tmpl, OptimState state, ObjectiveContext& ctx,
                        const LossWeights& weights, const Schedule& schedule,
                        const PipelineConfig& cfg);

// ============================================================================
// Pipeline
// ============================================================================

struct PipelineOutputs {
  SceneBuildResult scene;
  NearestPointGrid grid;
  OptimState state;                      // final parameters + scene scale
  std::vector<ContactReport> contacts;  // per human
  std::vector<double> stage3_loss;
  bool aborted_non_finite = false;
};

/// build_scene -> run_stage2 -> run_stage3 -> contact extraction.
/// Deterministic for a fixed bundle + config.
PipelineOutputs run_pipeline(const InputBundle& bundle, const PipelineConfig& cfg);

/// Serializes pipeline outputs into a directory: scene.ply (+ meta),
/// human_<i>_params.json, human_<i>_contacts.json, run_log.json.
void write_pipeline_outputs(const std::filesystem::path& dir, const InputBundle& bundle,
                            const PipelineOutputs& outputs);

/// Builds the stage-3 objective context (grid, visibility, observations)
/// from stage-2 results; exposed for benchmarks and ablation tests.
ObjectiveContext make_objective_context(const InputBundle& bundle,
                                        const SceneBuildResult& scene,
                                        const NearestPointGrid& grid,
                                        const BodyTemplate& tmpl,
                                        const Stage2Result& stage2,
                                        const PipelineConfig& cfg);

}  // namespace physic
