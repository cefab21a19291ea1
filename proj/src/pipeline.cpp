#include "stripnet/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "stripnet/augment.hpp"
#include "stripnet/checkpoint.hpp"
#include "stripnet/errors.hpp"
#include "stripnet/gradcheck.hpp"
#include "stripnet/nifti.hpp"
#include "stripnet/npy.hpp"
#include "stripnet/phantom.hpp"
#include "stripnet/random.hpp"
#include "stripnet/volume_store.hpp"

namespace stripnet {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const DataError*>(&e)) return kExitData;
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  return kExitUnexpected;
}

namespace {
bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json stats_json(const ZNormStats& s) {
  return json{{"mean", s.mean}, {"std", s.stddev}, {"region", std::string(to_string(s.region))}, {"count", s.count}};
}

/// Adds the file name to errors raised while handling one input.
template <class F>
auto with_context(const fs::path& path, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const FormatError& e) {
    throw FormatError(e.kind(), path.string() + ": " + e.what());
  } catch (const ZeroStdError& e) {
    throw ZeroStdError(path.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError(path.string() + ": " + e.what());
  }
}

}  // namespace

Volume3D load_volume(const fs::path& path) {
  const std::string name = path.filename().string();
  if (!fs::exists(path)) throw DataError("input not found: " + path.string());
  if (ends_with(name, ".nii")) return read_nifti(path);
  if (ends_with(name, ".npy")) {
    Volume3D v = volume_from_npy(load_npy(path));
    v.source = path.string();
    return v;
  }
  if (ends_with(name, ".nii.gz")) {
    throw DataError(path.string() + ": compressed NIfTI is not supported; decompress it first (gunzip -k)");
  }
  throw DataError(path.string() + ": expected a .nii or .npy file");
}

std::string scan_id_for(const fs::path& path) {
  std::string name = path.filename().string();
  for (std::string_view ext : {".nii.gz", ".nii", ".npy"}) {
    if (ends_with(name, ext)) return name.substr(0, name.size() - ext.size());
  }
  return name;
}

PreprocessReport cmd_preprocess(const RunConfig& cfg, std::ostream& log) {
  validate(cfg);
  if (cfg.scans.empty()) throw ConfigError("preprocess: data.scans is empty");
  if (cfg.region == StatsRegion::Mask && cfg.masks.empty()) {
    throw ConfigError("preprocess: data.region = mask requires data.masks");
  }
  PreprocessReport report;
  for (std::size_t i = 0; i < cfg.scans.size(); ++i) {
    const fs::path& scan_path = cfg.scans[i];
    const std::string id = scan_id_for(scan_path);
    with_context(scan_path, [&] {
      const Volume3D scan = load_volume(scan_path);
      std::optional<Volume3D> mask;
      if (!cfg.masks.empty()) {
        mask = with_context(cfg.masks[i], [&] { return load_volume(cfg.masks[i]); });
        if (!mask->same_dims(scan)) throw DataError("mask dims differ from the scan");
        binarize_mask(*mask);
      }
      const ZNormResult normed = cfg.region == StatsRegion::Mask ? znorm(scan, *mask) : znorm(scan);
      const fs::path dir = cfg.out / id;
      make_dirs(dir);
      save_npy(dir / "scan.npy", npy_from_volume(normed.volume, Precision::F16));
      if (mask) save_npy(dir / "mask.npy", npy_from_volume(*mask, Precision::I8));
      json sidecar{{"source", scan_path.string()}, {"znorm", stats_json(normed.stats)},
                   {"shape", {scan.d, scan.h, scan.w}}};
      write_text(dir / "stats.json", sidecar.dump(2) + "\n");
      log << id << ": mean " << normed.stats.mean << " std " << normed.stats.stddev << " over "
          << normed.stats.count << " " << to_string(normed.stats.region) << " voxels\n";
      report.ids.push_back(id);
      report.stats.push_back(normed.stats);
    });
  }
  return report;
}

AugmentReport cmd_augment(const RunConfig& cfg, std::ostream& log) {
  validate(cfg);
  if (cfg.scans.empty()) throw DataError("augment: data.scans is empty");
  if (cfg.masks.empty()) throw ConfigError("augment: data.masks is required (statistics use the brain mask)");
  const AugmentationPlan plan{cfg.augment_factor, cfg.seed};
  AugmentReport report;
  for (std::size_t i = 0; i < cfg.scans.size(); ++i) {
    ScanPair pair;
    pair.id = scan_id_for(cfg.scans[i]);
    pair.scan = with_context(cfg.scans[i], [&] { return load_volume(cfg.scans[i]); });
    pair.mask = with_context(cfg.masks[i], [&] { return load_volume(cfg.masks[i]); });
    if (!pair.scan.same_dims(pair.mask)) throw DataError(cfg.masks[i].string() + ": mask dims differ from the scan");
    const auto copies = with_context(cfg.scans[i], [&] { return expand_scan(pair, i, plan); });
    for (const AugmentedScan& a : copies) {
      const fs::path dir = cfg.out / a.id / std::to_string(a.copy);
      make_dirs(dir);
      with_context(dir, [&] {
        save_npy(dir / "scan.npy", npy_from_volume(a.scan, Precision::F16));
        save_npy(dir / "mask.npy", npy_from_volume(a.mask, Precision::I8));
      });
      json sidecar = json::parse(transform_to_json(a.spec));
      sidecar["source"] = cfg.scans[i].string();
      sidecar["copy"] = a.copy;
      sidecar["znorm"] = stats_json(a.stats);
      write_text(dir / "transform.json", sidecar.dump(2) + "\n");
      ++report.outputs;
    }
    ++report.inputs;
    log << pair.id << ": " << copies.size() << " copies\n";
  }
  log << report.inputs << " scans -> " << report.outputs << " augmented volumes\n";
  return report;
}

DatasetIndex index_dataset(const fs::path& root) {
  if (root.empty()) throw ConfigError("data.dataset is not set");
  if (!fs::is_directory(root)) throw DataError("dataset directory not found: " + root.string());
  std::vector<fs::path> scan_dirs;
  for (const auto& id : fs::directory_iterator(root)) {
    if (!id.is_directory()) continue;
    for (const auto& copy : fs::directory_iterator(id.path())) {
      if (copy.is_directory() && fs::exists(copy.path() / "scan.npy")) scan_dirs.push_back(copy.path());
    }
  }
  std::sort(scan_dirs.begin(), scan_dirs.end());
  DatasetIndex index;
  for (const auto& dir : scan_dirs) {
    if (!fs::exists(dir / "mask.npy")) throw DataError(dir.string() + ": scan.npy without mask.npy");
    index.scans.push_back(dir / "scan.npy");
    index.masks.push_back(dir / "mask.npy");
    index.groups.push_back(dir.parent_path().filename().string());
  }
  if (index.scans.empty()) throw DataError("dataset is empty: no {id}/{copy}/scan.npy under " + root.string());
  return index;
}

TrainReport cmd_train(const RunConfig& cfg, std::ostream& log) {
  validate(cfg);
  const DatasetIndex index = index_dataset(cfg.dataset);
  StoreOptions opts{cfg.cache_slices};
  StoreSlices data(open_lazy(index.scans, opts), open_lazy(index.masks, opts), index.groups);
  if (data.size() == 0) throw DataError("dataset has no slices");

  UNetConfig mcfg = cfg.model;
  mcfg.height = data.height();
  mcfg.width = data.width();
  try {
    mcfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("dataset slices do not fit the model: ") + e.what());
  }
  TrainingConfig tcfg = cfg.train;
  tcfg.seed = cfg.seed;

  UNetModel<float> model(cfg.arch, mcfg, cfg.seed);
  TrainReport report;
  report.parameter_count = count_parameters(model);
  log << to_string(cfg.arch) << " U-Net, " << report.parameter_count << " parameters, " << data.size()
      << " slices of " << mcfg.height << "x" << mcfg.width << "\n";

  report.fit = fit(model, data, tcfg, [&](const EpochRecord& r) {
    log << "epoch " << r.epoch << "  loss " << r.train_loss << "  acc " << r.train_accuracy << "  val_loss "
        << r.val_loss << "  val_acc " << r.val_accuracy << "  lr " << r.learning_rate << "  (" << std::fixed
        << std::setprecision(1) << r.wall_seconds << " s)\n"
        << std::defaultfloat << std::setprecision(6);
  });
  const FitResult& fr = report.fit;
  for (const auto& g : fr.split.val_groups) {
    if (fr.trained_groups.count(g)) throw ContractViolation("validation scan '" + g + "' leaked into training");
  }

  make_dirs(cfg.out);
  report.checkpoint = cfg.out / "checkpoint.ssck";
  report.curves = cfg.out / "curves.csv";
  report.manifest = cfg.out / "manifest.json";
  save_checkpoint(model, report.checkpoint);
  emit_curves(fr.records, report.curves);

  const EpochRecord& last = fr.records.back();
  json manifest{
      {"architecture", std::string(to_string(cfg.arch))},
      {"config", format_run_config(cfg)},
      {"config_hash", hex64(config_hash(cfg))},
      {"seed", cfg.seed},
      {"parameter_count", report.parameter_count},
      {"analytic_parameter_count", analytic_parameter_count(model.graph())},
      {"input", {{"height", mcfg.height}, {"width", mcfg.width}}},
      {"dataset", {{"volumes", index.scans.size()}, {"slices", data.size()}}},
      {"split",
       {{"train", fr.split.train_groups},
        {"val", fr.split.val_groups},
        {"train_slices", fr.split.train_indices.size()},
        {"val_slices", fr.split.val_indices.size()}}},
      {"epochs", fr.records.size()},
      {"updates", fr.updates},
      {"stopped_early", fr.stopped_early},
      {"final",
       {{"train_loss", last.train_loss},
        {"train_acc", last.train_accuracy},
        {"val_loss", last.val_loss},
        {"val_acc", last.val_accuracy},
        {"lr", last.learning_rate}}}};
  write_text(report.manifest, manifest.dump(2) + "\n");
  log << "wrote " << report.checkpoint.string() << ", " << report.curves.string() << ", "
      << report.manifest.string() << "\n";
  return report;
}

PredictionResult skull_strip(const Volume3D& probability, const Volume3D& znormed, const Volume3D& raw,
                             double threshold) {
  if (!probability.same_dims(znormed) || !probability.same_dims(raw)) {
    throw ContractViolation("skull_strip: probability, input and raw volumes must share dims");
  }
  PredictionResult r;
  r.probability = probability;
  r.mask = Volume3D(probability.d, probability.h, probability.w);
  r.stripped = Volume3D(probability.d, probability.h, probability.w);
  r.stripped_raw = Volume3D(probability.d, probability.h, probability.w);
  for (std::size_t i = 0; i < probability.size(); ++i) {
    const bool brain = probability.data[i] >= threshold;
    r.mask.data[i] = brain ? 1.0 : 0.0;
    r.stripped.data[i] = brain ? znormed.data[i] : 0.0;
    r.stripped_raw.data[i] = brain ? raw.data[i] : 0.0;
  }
  return r;
}

SegmentationMetrics segmentation_metrics(const Volume3D& probability, const Volume3D& truth, double threshold) {
  if (!probability.same_dims(truth)) throw DataError("ground-truth mask dims differ from the prediction");
  MetricTotals totals;
  totals.add(std::span<const double>(probability.data), std::span<const double>(truth.data), threshold);
  return {totals.bce(), totals.accuracy(), totals.dice()};
}

Volume3D predict_probability(UNetModel<float>& model, const Volume3D& znormed, std::size_t batch_size) {
  const std::size_t plane = znormed.slice_size();
  const std::size_t div = model.config().divisor();
  if (znormed.h % div != 0 || znormed.w % div != 0) {
    throw DataError("slices of " + std::to_string(znormed.h) + "x" + std::to_string(znormed.w) +
                    " are not divisible by " + std::to_string(div) + " as the model requires");
  }
  if (batch_size == 0) batch_size = 1;
  Volume3D prob(znormed.d, znormed.h, znormed.w);
  for (std::size_t z0 = 0; z0 < znormed.d; z0 += batch_size) {
    const std::size_t n = std::min(batch_size, znormed.d - z0);
    Tensor<float> batch(Shape4{n, 1, znormed.h, znormed.w});
    for (std::size_t i = 0; i < n * plane; ++i) batch[i] = static_cast<float>(znormed.data[z0 * plane + i]);
    const Tensor<float> out = model.forward(batch);
    for (std::size_t i = 0; i < n * plane; ++i) prob.data[z0 * plane + i] = out[i];
  }
  return prob;
}

PredictionResult cmd_predict(const RunConfig& cfg, std::ostream& log) {
  validate(cfg);
  if (cfg.checkpoint.empty()) throw ConfigError("predict: predict.checkpoint is not set");
  if (cfg.volume.empty()) throw ConfigError("predict: predict.volume is not set");
  UNetModel<float> model = load_checkpoint(cfg.checkpoint);
  const Volume3D raw = load_volume(cfg.volume);
  const ZNormResult normed = with_context(cfg.volume, [&] { return znorm(raw); });

  // f32-rounded, exactly as saved.
  Volume3D input = normed.volume;
  for (double& v : input.data) v = static_cast<float>(v);

  const Volume3D prob = with_context(cfg.volume, [&] { return predict_probability(model, input, cfg.train.batch_size); });
  PredictionResult result = skull_strip(prob, input, raw, cfg.threshold);

  json metrics{{"threshold", cfg.threshold},
               {"znorm", stats_json(normed.stats)},
               {"shape", {raw.d, raw.h, raw.w}},
               {"brain_voxels", static_cast<std::size_t>(std::count(result.mask.data.begin(), result.mask.data.end(), 1.0))}};
  if (!cfg.ground_truth.empty()) {
    Volume3D truth = load_volume(cfg.ground_truth);
    with_context(cfg.ground_truth, [&] { binarize_mask(truth); });
    result.metrics = segmentation_metrics(prob, truth, cfg.threshold);
    metrics["bce"] = result.metrics->bce;
    metrics["accuracy"] = result.metrics->accuracy;
    metrics["dice"] = result.metrics->dice;
    log << "bce " << result.metrics->bce << "  accuracy " << result.metrics->accuracy << "  dice "
        << result.metrics->dice << "\n";
  }

  make_dirs(cfg.out);
  save_npy(cfg.out / "probability.npy", npy_from_volume(result.probability, Precision::F32));
  save_npy(cfg.out / "mask.npy", npy_from_volume(result.mask, Precision::I8));
  save_npy(cfg.out / "input_znorm.npy", npy_from_volume(input, Precision::F32));
  save_npy(cfg.out / "stripped.npy", npy_from_volume(result.stripped, Precision::F32));
  save_npy(cfg.out / "stripped_raw.npy", npy_from_volume(result.stripped_raw, Precision::F64));
  write_text(cfg.out / "metrics.json", metrics.dump(2) + "\n");
  log << "wrote predictions for " << cfg.volume.string() << " to " << cfg.out.string() << "\n";
  return result;
}

int cmd_count_params(std::optional<ArchitectureKind> only, std::ostream& out) {
  int status = kExitOk;
  for (ArchitectureKind kind : {ArchitectureKind::Vanilla, ArchitectureKind::Residual, ArchitectureKind::Dense}) {
    if (only && *only != kind) continue;
    const UNetConfig cfg;
    const LayerGraph graph = build_graph(kind, cfg);
    const std::uint64_t analytic = analytic_parameter_count(graph);
    const std::uint64_t runtime = count_parameters(UNetModel<float>(kind, cfg, 0));
    const std::uint64_t reference = kind == ArchitectureKind::Vanilla    ? kPublishedVanillaParams
                                    : kind == ArchitectureKind::Residual ? kPublishedResidualParams
                                                                         : kPublishedDenseParams;
    out << to_string(kind) << ": analytic " << analytic << "  runtime " << runtime << "  reference " << reference
        << "\n";
    if (analytic != runtime) {
      out << "  INCONSISTENT analytic and runtime counts differ\n";
      status = kExitNumeric;
    }
    if (runtime == reference) {
      out << runtime << " MATCH\n";
    } else if (kind == ArchitectureKind::Dense) {
      const auto delta = static_cast<std::int64_t>(reference) - static_cast<std::int64_t>(runtime);
      out << runtime << " DISCREPANCY reference " << reference << " delta " << delta
          << " (documented: the dense block wiring yields " << runtime << ")\n";
    } else {
      out << runtime << " MISMATCH reference " << reference << "\n";
      status = kExitNumeric;
    }
  }
  return status;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t seeds, std::ostream& out) {
  const auto cases = gradcheck_suite(seed, seeds);
  std::vector<std::string> names;
  for (const auto& c : cases) {
    if (std::find(names.begin(), names.end(), c.name) == names.end()) names.push_back(c.name);
  }
  bool all = true;
  for (const auto& name : names) {
    double worst = 0.0;
    std::size_t failed = 0, runs = 0, checked = 0;
    std::string where;
    for (const auto& c : cases) {
      if (c.name != name) continue;
      ++runs;
      checked += c.report.checked;
      if (!c.report.pass) ++failed;
      if (c.report.max_rel_err >= worst) {
        worst = c.report.max_rel_err;
        where = "seed " + std::to_string(c.seed) + " " + c.report.worst;
      }
    }
    all = all && failed == 0;
    out << (failed == 0 ? "PASS " : "FAIL ") << name << "  seeds " << runs << "  coords " << checked
        << "  max_rel_err " << worst << "  (" << where << ")\n";
  }
  return all ? kExitOk : kExitNumeric;
}

void cmd_describe(ArchitectureKind kind, const UNetConfig& cfg, std::ostream& out) {
  out << format_summary(describe(UNetModel<float>(kind, cfg, 0)));
}

std::vector<fs::path> cmd_phantom(const fs::path& out, std::size_t count, std::size_t d, std::size_t h,
                                  std::size_t w, std::uint64_t seed, std::ostream& log) {
  if (count == 0) throw ConfigError("phantom: count must be positive");
  make_dirs(out);
  std::vector<fs::path> written;
  for (std::size_t i = 0; i < count; ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "phantom_%02zu", i);
    const ScanPair p = make_phantom_scan(d, h, w, mix_seed(seed, i), stem);
    const fs::path scan = out / (std::string(stem) + ".nii");
    const fs::path mask = out / (std::string(stem) + "_mask.nii");
    save_nifti(scan, p.scan, {NiftiDatatype::F32});
    save_nifti(mask, p.mask, {NiftiDatatype::U8});
    written.push_back(scan);
    written.push_back(mask);
  }
  log << "wrote " << count << " phantom volumes of " << d << "x" << h << "x" << w << " to " << out.string() << "\n";
  return written;
}

}  // namespace stripnet
