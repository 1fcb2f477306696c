#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nodule/augment.hpp"
#include "nodule/baselines.hpp"
#include "nodule/cnn.hpp"
#include "nodule/dataset.hpp"
#include "nodule/error.hpp"
#include "nodule/eval.hpp"
#include "nodule/gpr.hpp"
#include "nodule/png.hpp"
#include "nodule/volume.hpp"

namespace {

using namespace nodule;

std::array<int, 3> parse_center(const std::string& text) {
  std::array<int, 3> center{};
  if (std::sscanf(text.c_str(), "%d,%d,%d", &center[0], &center[1], &center[2]) != 3) {
    throw DataError("bad --center, expected x,y,z integers: " + text);
  }
  return center;
}

void export_tensor_pngs(const ProjectionTensor& t, const std::string& prefix) {
  for (int c = 0; c < 3; ++c) {
    write_png_normalized(prefix + "_c" + std::to_string(c) + ".png", t.channels[c]);
  }
}

ExperimentConfig config_from_options(const std::string& config_path,
                                     const std::string& manifest, bool has_seed,
                                     std::uint64_t seed) {
  ExperimentConfig cfg;
  if (!config_path.empty()) cfg = ExperimentConfig::from_file(config_path);
  if (!manifest.empty()) cfg.manifest = manifest;
  if (has_seed) cfg.seed = seed;
  return cfg;
}

int run_synth(const SynthConfig& cfg) {
  const std::string manifest = synth_generate(cfg);
  std::cout << manifest << "\n";
  return 0;
}

int run_project(const std::string& in, const std::string& center_text, int side,
                double resample_mm, bool no_resample, const std::string& out,
                const std::string& png_prefix) {
  Volume vol = load_volume(in);
  std::array<int, 3> center = parse_center(center_text);
  if (!no_resample) {
    const std::array<double, 3> spacing = vol.spacing;
    vol = resample_isotropic(vol, resample_mm);
    for (int i = 0; i < 3; ++i) {
      const double mapped = (center[i] + 0.5) * spacing[i] / resample_mm - 0.5;
      center[i] = static_cast<int>(std::clamp(std::lround(mapped), 0L,
                                              static_cast<long>(vol.dims[i] - 1)));
    }
  }
  const ProjectionTensor t = compose_tensor(extract_patch(vol, center, side));
  save_tensor(t, out);
  if (!png_prefix.empty()) export_tensor_pngs(t, png_prefix);
  std::cout << out << "\n";
  return 0;
}

int run_augment(const std::string& in, const std::string& out_dir, const AugmentConfig& cfg,
                bool png) {
  const ProjectionTensor t = load_tensor(in);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create output directory " + out_dir);
  const auto samples = augment_set(t, cfg);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "aug_%04zu", i);
    const std::string base = (std::filesystem::path(out_dir) / name).string();
    save_tensor(samples[i], base + ".ptn");
    if (png) export_tensor_pngs(samples[i], base);
  }
  std::cout << samples.size() << " tensors written to " << out_dir << "\n";
  return 0;
}

int run_train(const ExperimentConfig& cfg, const std::string& out,
              const std::string& loss_csv) {
  const TrainResult result = train_on_manifest(cfg);
  save_checkpoint(result.params, out);
  if (!loss_csv.empty()) export_loss_csv(result.loss_curve, loss_csv);
  std::cout << out << "\n";
  return 0;
}

int run_features(const std::string& model_path, const std::string& manifest_path,
                 double resample_mm, const std::string& out) {
  const NetworkParams params = load_checkpoint(model_path);
  const ConsensusResult consensus = consensus_label(load_manifest(manifest_path));
  if (consensus.samples.empty()) throw DataError("features: no usable samples");
  const std::string manifest_dir =
      std::filesystem::path(manifest_path).parent_path().string();

  FeatureTable table;
  std::vector<double> values;
  for (const auto& s : consensus.samples) {
    const ProjectionTensor t = sample_tensor(s.volume_path, s.center, manifest_dir,
                                             params.cfg.input_side, resample_mm);
    const FeatureVector f = extract_features(params, t);
    table.ids.push_back(s.id);
    table.scores.push_back(s.consensus_score);
    values.insert(values.end(), f.begin(), f.end());
  }
  table.x = Matrix(table.ids.size(), values.size() / table.ids.size());
  std::copy(values.begin(), values.end(), table.x.data.begin());
  save_feature_csv(table, out);
  std::cout << out << "\n";
  return 0;
}

struct RegressOptions {
  std::string method = "gp";
  std::string train_csv;
  std::string test_csv;
  std::string out;
  double lambda = 0.01;
  double alpha = 0.5;
  double c = 1.0;
  double epsilon = 0.1;
  double length_scale = 0.0;   // 0 = median heuristic
  double sigma_f = 0.0;        // 0 = std of targets
  double sigma_n = -1.0;       // <0 = sigma_n_scale * std of targets
  double sigma_n_scale = 0.1;  // config gp_sigma_n_scale
};

int run_regress(const RegressOptions& opt) {
  const FeatureTable train_t = load_feature_csv(opt.train_csv);
  const FeatureTable test_t = load_feature_csv(opt.test_csv);
  std::vector<double> mean, variance(test_t.ids.size(), 0.0);

  if (opt.method == "gp") {
    KernelConfig kc;
    double y_std = 0.0;
    {
      double m = 0.0;
      for (double v : train_t.scores) m += v;
      m /= static_cast<double>(train_t.scores.size());
      for (double v : train_t.scores) y_std += (v - m) * (v - m);
      y_std = std::sqrt(y_std / static_cast<double>(train_t.scores.size()));
    }
    kc.length_scale = opt.length_scale > 0.0 ? opt.length_scale : median_heuristic(train_t.x);
    kc.sigma_f = opt.sigma_f > 0.0 ? opt.sigma_f : std::max(y_std, 1e-6);
    kc.sigma_n = opt.sigma_n >= 0.0 ? opt.sigma_n : std::max(opt.sigma_n_scale * y_std, 1e-9);
    const GPModel model = fit(train_t.x, train_t.scores, kc);
    const GPPrediction pred = predict(model, test_t.x);
    mean = pred.mean;
    variance = pred.variance;
  } else {
    LinearModel model;
    if (opt.method == "lasso") {
      model = fit_lasso(train_t.x, train_t.scores, opt.lambda);
    } else if (opt.method == "enet") {
      model = fit_elastic_net(train_t.x, train_t.scores, opt.lambda, opt.alpha);
    } else if (opt.method == "svr") {
      model = fit_svr(train_t.x, train_t.scores, opt.c, opt.epsilon);
    } else {
      throw DataError("unknown method: " + opt.method);
    }
    if (!model.converged) {
      throw NumericError(opt.method + " did not converge within the iteration budget");
    }
    mean = predict_linear(model, test_t.x);
  }
  save_predictions_csv(test_t.ids, mean, variance, opt.out);
  std::cout << opt.out << "\n";
  return 0;
}

int run_evaluate(const ExperimentConfig& cfg, const std::string& out, bool timing) {
  const Report report = run_experiment(cfg);
  const std::string json = report.to_json(timing);
  std::ofstream file(out, std::ios::trunc | std::ios::binary);
  if (!file) throw DataError("cannot open report for writing: " + out);
  file << json;
  if (!file) throw DataError("short report write: " + out);
  std::cout << report.render_table();
  return 0;
}

int run_report(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("report not found: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::cout << Report::from_json_text(text).render_table();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nodule characterization pipeline: median-projection tensors, "
               "CNN feature learning and GP regression of malignancy scores"};
  app.require_subcommand(1);

  // synth
  SynthConfig synth_cfg;
  auto* synth = app.add_subcommand("synth", "Generate phantom volumes and a manifest");
  synth->add_option("--count", synth_cfg.count, "Number of nodules")->capture_default_str();
  synth->add_option("--side", synth_cfg.side, "Volume side in voxels (odd)")->capture_default_str();
  synth->add_option("--out", synth_cfg.out_dir, "Output directory")->required();
  synth->add_option("--seed", synth_cfg.seed, "Master seed")->capture_default_str();
  synth->add_option("--latent-noise", synth_cfg.latent_noise_std, "Latent score noise std")
      ->capture_default_str();
  synth->add_option("--rater-noise", synth_cfg.rater_noise_std, "Simulated rater noise std")
      ->capture_default_str();
  std::string synth_config;
  synth->add_option("--config", synth_config, "Accepted on every subcommand; unused here");

  // project
  std::string project_in, project_center, project_out, project_png, project_config;
  std::uint64_t project_seed = 0;
  int project_side = 41;
  double project_resample = 0.5;
  bool project_no_resample = false;
  auto* project = app.add_subcommand("project", "Volume patch to median-projection tensor");
  project->add_option("--in", project_in, "Input RVOL volume")->required();
  project->add_option("--center", project_center, "Patch center voxel x,y,z")->required();
  auto* project_side_opt =
      project->add_option("--side", project_side, "Patch side (odd)")->capture_default_str();
  auto* project_resample_opt =
      project->add_option("--resample", project_resample, "Isotropic target spacing in mm")
          ->capture_default_str();
  project->add_flag("--no-resample", project_no_resample, "Use the stored voxel grid");
  project->add_option("--out", project_out, "Output PTN tensor")->required();
  project->add_option("--png", project_png, "Optional PNG prefix for the three channels");
  project->add_option("--config", project_config,
                      "Experiment config supplying patch_side/resample_mm defaults");
  project->add_option("--seed", project_seed, "Accepted on every subcommand; unused here");

  // augment
  std::string augment_in, augment_out, augment_config;
  bool augment_png = false;
  AugmentConfig augment_cfg;
  auto* augment = app.add_subcommand("augment", "Expand a tensor into augmented samples");
  augment->add_option("--in", augment_in, "Input PTN tensor")->required();
  augment->add_option("--out", augment_out, "Output directory")->required();
  auto* augment_count_opt =
      augment->add_option("--count", augment_cfg.count, "Samples to generate")
          ->capture_default_str();
  auto* augment_seed_opt =
      augment->add_option("--seed", augment_cfg.seed, "Seed")->capture_default_str();
  augment->add_option("--config", augment_config,
                      "Experiment config supplying augmentation defaults");
  auto* aug_up = augment->add_option("--scale-up", augment_cfg.scale_up, "Up-scaling factor")
                     ->capture_default_str();
  auto* aug_down = augment->add_option("--scale-down", augment_cfg.scale_down,
                                       "Down-scaling factor")
                       ->capture_default_str();
  auto* aug_gm = augment->add_option("--gaussian-mean-range", augment_cfg.gaussian_mean_range,
                                     "Gaussian noise mean range (fraction of intensity range)")
                     ->capture_default_str();
  auto* aug_gs = augment->add_option("--gaussian-sigma", augment_cfg.gaussian_sigma,
                                     "Gaussian noise std (fraction of intensity range)")
                     ->capture_default_str();
  auto* aug_sp = augment->add_option("--sp-fraction", augment_cfg.sp_fraction,
                                     "Salt & pepper fraction")
                     ->capture_default_str();
  auto* aug_sk = augment->add_option("--speckle-sigma", augment_cfg.speckle_sigma,
                                     "Speckle noise std")
                     ->capture_default_str();
  augment->add_flag("--png", augment_png, "Also write normalized channel PNGs");

  // train
  std::string train_manifest, train_config, train_out, train_loss_csv;
  std::uint64_t train_seed = 0;
  auto* train_cmd = app.add_subcommand("train", "Train the CNN on a manifest");
  train_cmd->add_option("--manifest", train_manifest, "Manifest CSV");
  train_cmd->add_option("--config", train_config, "Experiment config file");
  auto* train_seed_opt = train_cmd->add_option("--seed", train_seed, "Master seed");
  train_cmd->add_option("--out", train_out, "Output checkpoint")->required();
  train_cmd->add_option("--loss-csv", train_loss_csv, "Write per-iteration loss CSV");

  // features
  std::string feat_model, feat_manifest, feat_out, feat_config;
  std::uint64_t feat_seed = 0;
  double feat_resample = 0.5;
  auto* features = app.add_subcommand("features", "Extract FC1 features for a manifest");
  features->add_option("--model", feat_model, "Checkpoint file")->required();
  features->add_option("--manifest", feat_manifest, "Manifest CSV")->required();
  auto* feat_resample_opt =
      features->add_option("--resample", feat_resample, "Isotropic target spacing in mm")
          ->capture_default_str();
  features->add_option("--out", feat_out, "Output feature CSV")->required();
  features->add_option("--config", feat_config,
                       "Experiment config supplying the resample_mm default");
  features->add_option("--seed", feat_seed, "Accepted on every subcommand; unused here");

  // regress
  RegressOptions reg;
  auto* regress = app.add_subcommand("regress", "Fit a regressor on features and predict");
  regress->add_option("--method", reg.method, "gp|lasso|enet|svr")->capture_default_str();
  regress->add_option("--train", reg.train_csv, "Training feature CSV")->required();
  regress->add_option("--test", reg.test_csv, "Query feature CSV")->required();
  regress->add_option("--out", reg.out, "Predictions CSV")->required();
  regress->add_option("--lambda", reg.lambda, "L1/elastic-net penalty")->capture_default_str();
  regress->add_option("--alpha", reg.alpha, "Elastic-net mixing")->capture_default_str();
  regress->add_option("--c", reg.c, "SVR box constraint")->capture_default_str();
  regress->add_option("--epsilon", reg.epsilon, "SVR tube width")->capture_default_str();
  regress->add_option("--length-scale", reg.length_scale, "GP length scale (0 = median heuristic)")
      ->capture_default_str();
  regress->add_option("--sigma-f", reg.sigma_f, "GP signal std (0 = std of targets)")
      ->capture_default_str();
  regress->add_option("--sigma-n", reg.sigma_n, "GP noise std (<0 = 0.1 * std of targets)")
      ->capture_default_str();
  std::string reg_config;
  std::uint64_t reg_seed = 0;
  regress->add_option("--config", reg_config,
                      "Experiment config supplying the GP noise scale default");
  regress->add_option("--seed", reg_seed, "Accepted on every subcommand; unused here");

  // evaluate
  std::string eval_config, eval_manifest, eval_out;
  std::uint64_t eval_seed = 0;
  bool eval_timing = false;
  auto* evaluate = app.add_subcommand("evaluate", "Run the cross-validated experiment");
  evaluate->add_option("--config", eval_config, "Experiment config file")->required();
  evaluate->add_option("--manifest", eval_manifest, "Override the config manifest");
  auto* eval_seed_opt = evaluate->add_option("--seed", eval_seed, "Override the config seed");
  evaluate->add_option("--out", eval_out, "Report JSON path")->required();
  evaluate->add_flag("--timing", eval_timing, "Include wall time in the report JSON");

  // report
  std::string report_path, report_config;
  std::uint64_t report_seed = 0;
  auto* report_cmd = app.add_subcommand("report", "Render a report JSON as a table");
  report_cmd->add_option("report", report_path, "Report JSON file")->required();
  report_cmd->add_option("--config", report_config, "Accepted on every subcommand; unused here");
  report_cmd->add_option("--seed", report_seed, "Accepted on every subcommand; unused here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 1;
  }

  try {
    if (synth->parsed()) return run_synth(synth_cfg);
    if (project->parsed()) {
      if (!project_config.empty()) {
        const ExperimentConfig cfg = ExperimentConfig::from_file(project_config);
        if (project_side_opt->empty()) project_side = cfg.patch_side;
        if (project_resample_opt->empty()) project_resample = cfg.resample_mm;
      }
      return run_project(project_in, project_center, project_side, project_resample,
                         project_no_resample, project_out, project_png);
    }
    if (augment->parsed()) {
      if (!augment_config.empty()) {
        const ExperimentConfig cfg = ExperimentConfig::from_file(augment_config);
        AugmentConfig from_cfg = cfg.augment;
        from_cfg.count = cfg.augment_count;
        from_cfg.seed = cfg.seed;
        if (!augment_count_opt->empty()) from_cfg.count = augment_cfg.count;
        if (!augment_seed_opt->empty()) from_cfg.seed = augment_cfg.seed;
        if (!aug_up->empty()) from_cfg.scale_up = augment_cfg.scale_up;
        if (!aug_down->empty()) from_cfg.scale_down = augment_cfg.scale_down;
        if (!aug_gm->empty()) from_cfg.gaussian_mean_range = augment_cfg.gaussian_mean_range;
        if (!aug_gs->empty()) from_cfg.gaussian_sigma = augment_cfg.gaussian_sigma;
        if (!aug_sp->empty()) from_cfg.sp_fraction = augment_cfg.sp_fraction;
        if (!aug_sk->empty()) from_cfg.speckle_sigma = augment_cfg.speckle_sigma;
        augment_cfg = from_cfg;
      }
      return run_augment(augment_in, augment_out, augment_cfg, augment_png);
    }
    if (train_cmd->parsed()) {
      ExperimentConfig cfg = config_from_options(train_config, train_manifest,
                                                 !train_seed_opt->empty(), train_seed);
      return run_train(cfg, train_out, train_loss_csv);
    }
    if (features->parsed()) {
      if (!feat_config.empty() && feat_resample_opt->empty()) {
        feat_resample = ExperimentConfig::from_file(feat_config).resample_mm;
      }
      return run_features(feat_model, feat_manifest, feat_resample, feat_out);
    }
    if (regress->parsed()) {
      if (!reg_config.empty()) {
        reg.sigma_n_scale = ExperimentConfig::from_file(reg_config).gp_sigma_n_scale;
      }
      return run_regress(reg);
    }
    if (evaluate->parsed()) {
      ExperimentConfig cfg = config_from_options(eval_config, eval_manifest,
                                                 !eval_seed_opt->empty(), eval_seed);
      return run_evaluate(cfg, eval_out, eval_timing);
    }
    if (report_cmd->parsed()) return run_report(report_path);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
