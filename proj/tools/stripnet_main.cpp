// stripnet: skull-stripping U-Net pipeline.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "stripnet/errors.hpp"
#include "stripnet/pipeline.hpp"
#include "stripnet/run_config.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> arch;
  std::optional<std::string> out;
  std::vector<std::string> set;
};

stripnet::RunConfig resolve(const Flags& f) {
  stripnet::RunConfig cfg;
  if (!f.config.empty()) cfg = stripnet::load_run_config(f.config);
  for (const std::string& kv : f.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw stripnet::ConfigError("--set expects key=value, got '" + kv + "'");
    stripnet::set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (f.seed) cfg.seed = *f.seed;
  if (f.arch) cfg.arch = stripnet::parse_architecture(*f.arch);
  if (f.out) cfg.out = *f.out;
  stripnet::validate(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Skull stripping with 2D U-Nets: preprocessing, augmentation, training and prediction"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags flags;
  app.add_option("--config", flags.config, "Run configuration file (key = value lines)");
  app.add_option("--seed", flags.seed, "Seed for initialization, splits, batch order and augmentation");
  app.add_option("--arch", flags.arch, "Architecture: vanilla, residual or dense");
  app.add_option("--out", flags.out, "Output directory");
  app.add_option("--set", flags.set, "Override a configuration key (key=value); repeatable");

  auto* preprocess = app.add_subcommand("preprocess", "Z-normalize volumes and store them as f16 NPY");
  std::vector<std::string> pre_scans;
  preprocess->add_option("scans", pre_scans, "Scan files (overrides data.scans)");

  auto* augment = app.add_subcommand("augment", "Expand scans with seeded spatial and intensity transforms");
  auto* train = app.add_subcommand("train", "Fit a U-Net on an augmented dataset");
  std::string train_dataset;
  train->add_option("dataset", train_dataset, "Augmented dataset directory (overrides data.dataset)");

  auto* predict = app.add_subcommand("predict", "Predict a brain mask and skull-strip a volume");
  std::string pred_checkpoint, pred_volume, pred_truth;
  predict->add_option("checkpoint", pred_checkpoint, "Model checkpoint");
  predict->add_option("volume", pred_volume, "Input volume (.nii or .npy)");
  predict->add_option("--truth", pred_truth, "Ground-truth mask for metrics");

  auto* count = app.add_subcommand("count-params", "Compare parameter counts with the published table");
  std::string count_arch;
  count->add_option("arch", count_arch, "Only this architecture");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every primitive and toy U-Nets");
  std::size_t gc_seeds = 20;
  gradcheck->add_option("seeds", gc_seeds, "Number of seeds, starting at --seed")->capture_default_str();

  auto* describe = app.add_subcommand("describe", "Print the layer graph and channel table");
  std::string describe_arch;
  describe->add_option("arch", describe_arch, "Architecture (defaults to --arch or the config)");

  app.add_subcommand("defaults", "Print every configuration key with its value");

  auto* phantom = app.add_subcommand("phantom", "Write synthetic head phantoms as NIfTI");
  std::size_t ph_count = 4;
  std::vector<std::size_t> ph_dims{32, 64, 64};
  phantom->add_option("count", ph_count, "Number of volumes")->capture_default_str();
  phantom->add_option("--dims", ph_dims, "Volume dims d h w")->expected(3)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : stripnet::kExitConfig;
  }

  try {
    stripnet::RunConfig cfg = resolve(flags);
    auto& log = std::cerr;
    if (*preprocess) {
      if (!pre_scans.empty()) cfg.scans.assign(pre_scans.begin(), pre_scans.end());
      stripnet::cmd_preprocess(cfg, log);
    } else if (*augment) {
      stripnet::cmd_augment(cfg, log);
    } else if (*train) {
      if (!train_dataset.empty()) cfg.dataset = train_dataset;
      stripnet::cmd_train(cfg, log);
    } else if (*predict) {
      if (!pred_checkpoint.empty()) cfg.checkpoint = pred_checkpoint;
      if (!pred_volume.empty()) cfg.volume = pred_volume;
      if (!pred_truth.empty()) cfg.ground_truth = pred_truth;
      stripnet::cmd_predict(cfg, log);
    } else if (*count) {
      std::optional<stripnet::ArchitectureKind> only;
      if (!count_arch.empty()) only = stripnet::parse_architecture(count_arch);
      return stripnet::cmd_count_params(only, std::cout);
    } else if (*gradcheck) {
      return stripnet::cmd_gradcheck(cfg.seed, gc_seeds, std::cout);
    } else if (*describe) {
      const auto kind = describe_arch.empty() ? cfg.arch : stripnet::parse_architecture(describe_arch);
      stripnet::cmd_describe(kind, cfg.model, std::cout);
    } else if (app.got_subcommand("defaults")) {
      std::cout << stripnet::format_run_config(cfg);
    } else if (*phantom) {
      for (const auto& p : stripnet::cmd_phantom(cfg.out, ph_count, ph_dims[0], ph_dims[1], ph_dims[2], cfg.seed, log)) {
        std::cout << p.string() << "\n";
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return stripnet::exit_code_for(e);
  }
  return 0;
}
