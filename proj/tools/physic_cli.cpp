// Command-line driver: fixture synthesis, stage-1 scene building, the full
// optimization pipeline, contact inspection, and metric evaluation.

#include "physic/fixture.hpp"
#include "physic/metrics.hpp"
#include "physic/optimize.hpp"
#include "physic/rng.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <iostream>

namespace {

using namespace physic;

constexpr const char* kVersion = "physic 1.0.0";

bool is_validation_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError:
    case ErrorCode::InvariantViolation:
    case ErrorCode::AlignmentMismatch:
    case ErrorCode::MissingComponent:
    case ErrorCode::CardinalityMismatch:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::InsufficientOverlap:
    case ErrorCode::InsufficientPixels:
    case ErrorCode::TooFewPoints:
      return true;
    default:
      return false;
  }
}

PipelineConfig config_or_default(const std::string& path) {
  if (path.empty()) {
    PipelineConfig cfg = default_config();
    apply_seed_override(cfg);
    return cfg;
  }
  return load_config(path);
}

int cmd_synth(const std::string& kind_name, uint64_t seed, const std::string& out_dir) {
  const FixtureKind kind = fixture_kind_from_string(kind_name);
  const SynthFixture fixture = synth_fixture(kind, seed);
  save_fixture(out_dir, fixture);
  std::cerr << "wrote " << fixture_kind_name(kind) << " fixture (seed " << seed << ", "
            << fixture.bundle.humans.size() << " human(s)) to " << out_dir << "\n";
  return 0;
}

int cmd_build_scene(const std::string& bundle_dir, const std::string& out_ply,
                    const std::string& config_path) {
  const PipelineConfig cfg = config_or_default(config_path);
  const InputBundle bundle = load_bundle(bundle_dir);
  SceneBuildConfig scene_cfg = cfg.scene;
  scene_cfg.align_ransac.seed = splitmix64(cfg.seed ^ 0x5ce11eULL);
  scene_cfg.plane_ransac.seed = splitmix64(cfg.seed ^ 0xf100eULL);
  const SceneBuildResult scene =
      build_scene(bundle.scene_depth, bundle.scene_relpoints,
                  bundle.floor_mask ? &*bundle.floor_mask : nullptr, bundle.intrinsics_hint,
                  scene_cfg);
  save_scene_scaffold(out_ply, scene.scaffold, 1.0);
  std::cerr << "scene: " << scene.scaffold.points.size() << " points ("
            << scene.scaffold.observed_count() << " observed), floor "
            << (scene.scaffold.floor ? "fitted" : "absent") << ", f = "
            << scene.scaffold.cam.fx << "/" << scene.scaffold.cam.fy << "\n";
  return 0;
}

int cmd_optimize(const std::string& bundle_dir, const std::string& config_path,
                 const std::string& out_dir) {
  const PipelineConfig cfg = config_or_default(config_path);
  const InputBundle bundle = load_bundle(bundle_dir);
  const auto start = std::chrono::steady_clock::now();
  const PipelineOutputs outputs = run_pipeline(bundle, cfg);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_pipeline_outputs(out_dir, bundle, outputs);
  std::cerr << "optimized " << bundle.humans.size() << " human(s) in " << secs
            << " s; s_sc = " << outputs.state.s_sc;
  if (!outputs.stage3_loss.empty())
    std::cerr << "; loss " << outputs.stage3_loss.front() << " -> "
              << outputs.stage3_loss.back();
  std::cerr << (outputs.aborted_non_finite ? " (aborted on non-finite loss)" : "") << "\n";
  return 0;
}

int cmd_contacts(const std::string& dir) {
  bool any = false;
  for (size_t h = 0;; ++h) {
    const auto path =
        std::filesystem::path(dir) / ("human" + std::to_string(h) + "_contacts.json");
    if (!std::filesystem::exists(path)) break;
    any = true;
    const ContactReport report = load_contact_report(path);
    int count = 0;
    double min_dist = std::numeric_limits<double>::infinity();
    for (size_t v = 0; v < report.in_contact.size(); ++v) {
      if (report.in_contact[v]) ++count;
      min_dist = std::min(min_dist, report.distances[v]);
    }
    std::cout << "human " << h << ": " << count << "/" << report.in_contact.size()
              << " vertices in contact (threshold " << report.threshold
              << " m, min distance " << min_dist << " m)\n";
  }
  if (!any)
    throw Error(ErrorCode::MissingComponent, "no contact reports under " + dir);
  return 0;
}

int cmd_metrics(const std::string& pred_dir, const std::string& gt_dir) {
  const InputBundle bundle = load_bundle(gt_dir);
  const FixtureGroundTruth gt = load_fixture_gt(gt_dir, bundle.body);

  nlohmann::json out = nlohmann::json::array();
  double sum_mpjpe = 0, sum_pa = 0, sum_mpvpe = 0, sum_f1 = 0;
  for (size_t h = 0; h < gt.params.size(); ++h) {
    const std::string tag = "human" + std::to_string(h);
    const BodyParams pred =
        load_body_params(std::filesystem::path(pred_dir) / (tag + "_params.json"), bundle.body);
    const ContactReport pred_contacts =
        load_contact_report(std::filesystem::path(pred_dir) / (tag + "_contacts.json"));

    const BodyState pred_state = body_forward(bundle.body, pred);
    const BodyState gt_state = body_forward(bundle.body, gt.params[h]);
    const MetricsReport m =
        compute_metrics(pred_state.vertices, pred_state.joints, gt_state.vertices,
                        gt_state.joints, pred_contacts.in_contact, gt.contacts[h].in_contact);
    out.push_back({{"human", h},
                   {"mpjpe_mm", m.mpjpe_mm},
                   {"pa_mpjpe_mm", m.pa_mpjpe_mm},
                   {"mpvpe_mm", m.mpvpe_mm},
                   {"contact_precision", m.contact_precision},
                   {"contact_recall", m.contact_recall},
                   {"contact_f1", m.contact_f1}});
    sum_mpjpe += m.mpjpe_mm;
    sum_pa += m.pa_mpjpe_mm;
    sum_mpvpe += m.mpvpe_mm;
    sum_f1 += m.contact_f1;
  }
  const double n = double(gt.params.size());
  nlohmann::json report;
  report["per_human"] = out;
  report["mean"] = {{"mpjpe_mm", sum_mpjpe / n},
                    {"pa_mpjpe_mm", sum_pa / n},
                    {"mpvpe_mm", sum_mpvpe / n},
                    {"contact_f1", sum_f1 / n}};
  std::cout << report.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Metric human-scene reconstruction from pre-extracted perception outputs"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string bundle_dir, out_path, config_path, kind, pred_dir, gt_dir, dir;
  uint64_t seed = 1;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic fixture bundle");
  synth->add_option("kind", kind, "standing | seated | occluded-lower | multi-human")
      ->required();
  synth->add_option("--seed", seed, "Fixture seed");
  synth->add_option("-o,--output", out_path, "Output bundle directory")->required();

  auto* build = app.add_subcommand("build-scene", "Run stage 1 and write the scene PLY");
  build->add_option("bundle", bundle_dir, "Input bundle directory")->required();
  build->add_option("-o,--output", out_path, "Output PLY path")->required();
  build->add_option("-c,--config", config_path, "Config JSON");

  auto* opt = app.add_subcommand("optimize", "Run the full three-stage pipeline");
  opt->add_option("bundle", bundle_dir, "Input bundle directory")->required();
  opt->add_option("-o,--output", out_path, "Output directory")->required();
  opt->add_option("-c,--config", config_path, "Config JSON");

  auto* contacts = app.add_subcommand("contacts", "Summarize contact reports in a directory");
  contacts->add_option("dir", dir, "Optimization output directory")->required();

  auto* metrics = app.add_subcommand("metrics", "Evaluate predictions against fixture GT");
  metrics->add_option("pred", pred_dir, "Prediction directory (optimize output)")->required();
  metrics->add_option("gt", gt_dir, "Fixture directory with gt/")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n" << app.help() << "\n";
    return 1;
  }

  try {
    if (synth->parsed()) return cmd_synth(kind, seed, out_path);
    if (build->parsed()) return cmd_build_scene(bundle_dir, out_path, config_path);
    if (opt->parsed()) return cmd_optimize(bundle_dir, config_path, out_path);
    if (contacts->parsed()) return cmd_contacts(dir);
    if (metrics->parsed()) return cmd_metrics(pred_dir, gt_dir);
  } catch (const physic::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_validation_error(e.code()) ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
