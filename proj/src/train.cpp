#include "stripnet/train.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "stripnet/errors.hpp"
#include "stripnet/kernels.hpp"
#include "stripnet/random.hpp"

namespace stripnet {

void TrainingConfig::validate() const {
  adam.validate();
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (max_epochs == 0) throw ConfigError("train.max_epochs must be positive");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("train.val_fraction must lie in (0, 1)");
}

EarlyStopper::Decision EarlyStopper::update(double val_loss) {
  ++seen_;
  if (std::isnan(val_loss)) {
    std::cerr << "warning: validation loss is NaN at epoch " << seen_ << "; counted as no improvement\n";
    ++since_;
  } else if (val_loss < best_) {
    best_ = val_loss;
    best_epoch_ = seen_;
    since_ = 0;
  } else {
    ++since_;
  }
  return since_ >= patience_ ? Decision::Stop : Decision::Continue;
}

void InMemorySlices::add(std::string group, std::vector<float> image, std::vector<float> mask) {
  if (image.size() != h_ * w_ || mask.size() != h_ * w_) {
    throw DataError("slice for '" + group + "' does not match " + std::to_string(h_) + "x" + std::to_string(w_));
  }
  groups_.push_back(std::move(group));
  images_.push_back(std::move(image));
  masks_.push_back(std::move(mask));
}

void InMemorySlices::load(std::size_t i, float* image, float* mask) const {
  std::copy(images_.at(i).begin(), images_.at(i).end(), image);
  std::copy(masks_.at(i).begin(), masks_.at(i).end(), mask);
}

StoreSlices::StoreSlices(VolumeStore scans, VolumeStore masks, std::vector<std::string> groups)
    : scans_(std::move(scans)), masks_(std::move(masks)), groups_(std::move(groups)) {
  if (scans_.scan_count() != masks_.scan_count() || groups_.size() != scans_.scan_count()) {
    throw DataError("scan, mask and group lists differ in length");
  }
  for (std::size_t s = 0; s < scans_.scan_count(); ++s) {
    if (scans_.slice_count(s) != masks_.slice_count(s) || scans_.height(s) != masks_.height(s) ||
        scans_.width(s) != masks_.width(s)) {
      throw DataError("mask geometry differs from scan: " + scans_.path(s).string());
    }
    if (scans_.height(s) != scans_.height(0) || scans_.width(s) != scans_.width(0)) {
      throw DataError("slice size differs across scans: " + scans_.path(s).string());
    }
    for (std::size_t z = 0; z < scans_.slice_count(s); ++z) index_.emplace_back(s, z);
  }
}

std::size_t StoreSlices::height() const { return scans_.scan_count() ? scans_.height(0) : 0; }
std::size_t StoreSlices::width() const { return scans_.scan_count() ? scans_.width(0) : 0; }

void StoreSlices::load(std::size_t i, float* image, float* mask) const {
  const auto [s, z] = index_.at(i);
  auto a = scans_.slice(s, z);
  auto b = masks_.slice(s, z);
  std::copy(a->begin(), a->end(), image);
  std::copy(b->begin(), b->end(), mask);
}

HoldoutSplit split_by_group(const SliceSource& data, double val_fraction, std::uint64_t seed) {
  if (data.size() == 0) throw DataError("dataset is empty");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in (0, 1)");
  std::vector<std::string> groups;
  for (std::size_t i = 0; i < data.size(); ++i) groups.push_back(data.group(i));
  std::sort(groups.begin(), groups.end());
  groups.erase(std::unique(groups.begin(), groups.end()), groups.end());
  if (groups.size() < 2) throw DataError("a scan-level holdout split needs at least two scans");

  Rng rng(mix_seed(seed, 0x73706c6974ULL));
  rng.shuffle(groups);
  auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(groups.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, groups.size() - 1);

  HoldoutSplit split;
  split.val_groups.assign(groups.begin(), groups.begin() + static_cast<std::ptrdiff_t>(n_val));
  split.train_groups.assign(groups.begin() + static_cast<std::ptrdiff_t>(n_val), groups.end());
  std::sort(split.val_groups.begin(), split.val_groups.end());
  std::sort(split.train_groups.begin(), split.train_groups.end());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const bool val = std::binary_search(split.val_groups.begin(), split.val_groups.end(), data.group(i));
    (val ? split.val_indices : split.train_indices).push_back(i);
  }
  return split;
}

std::pair<Tensor<float>, Tensor<float>> load_batch(const SliceSource& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ContractViolation("load_batch: empty batch");
  const std::size_t h = data.height(), w = data.width();
  Shape4 shape{indices.size(), 1, h, w};
  Tensor<float> images(shape), masks(shape);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    data.load(indices[b], images.data() + b * h * w, masks.data() + b * h * w);
  }
  return {std::move(images), std::move(masks)};
}

template <class T>
StepResult train_step(UNetModel<T>& model, AdamState<T>& state, const AdamConfig& cfg, const Tensor<T>& images,
                      const Tensor<T>& masks, MetricTotals* totals) {
  Tape<T> tape;
  Var x = tape.constant(images);
  Var logits = model.forward_logits(tape, x);
  Var target = tape.constant(masks);
  Var loss = ops::bce_with_logits(tape, logits, target);

  MetricTotals batch;
  const Tensor<T> prob = kernels::sigmoid(tape.value(logits));
  batch.add(prob.values(), masks.values());

  model.zero_grad();
  tape.backward(loss);
  adam_step(model.parameters(), state, cfg);

  if (totals != nullptr) {
    totals->bce_sum += batch.bce_sum;
    totals->correct += batch.correct;
    totals->count += batch.count;
    totals->pred_positive += batch.pred_positive;
    totals->target_positive += batch.target_positive;
    totals->overlap += batch.overlap;
  }
  return {batch.bce(), batch.accuracy()};
}

template StepResult train_step(UNetModel<float>&, AdamState<float>&, const AdamConfig&, const Tensor<float>&,
                               const Tensor<float>&, MetricTotals*);
template StepResult train_step(UNetModel<double>&, AdamState<double>&, const AdamConfig&, const Tensor<double>&,
                               const Tensor<double>&, MetricTotals*);

MetricTotals evaluate(UNetModel<float>& model, const SliceSource& data, std::span<const std::size_t> indices,
                      std::size_t batch_size) {
  if (batch_size == 0) throw ContractViolation("evaluate: batch_size must be positive");
  MetricTotals totals;
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, indices.size() - start);
    auto [images, masks] = load_batch(data, indices.subspan(start, n));
    const Tensor<float> prob = model.forward(images);
    totals.add(prob.values(), masks.values());
  }
  return totals;
}

FitResult fit(UNetModel<float>& model, const SliceSource& data, const TrainingConfig& cfg,
              const EpochCallback& on_epoch) {
  cfg.validate();
  return fit(model, data, split_by_group(data, cfg.val_fraction, cfg.seed), cfg, on_epoch);
}

FitResult fit(UNetModel<float>& model, const SliceSource& data, HoldoutSplit split, const TrainingConfig& cfg,
              const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.size() == 0 || split.train_indices.empty()) throw DataError("training set is empty");
  if (cfg.batch_size > split.train_indices.size()) {
    throw DataError("batch size " + std::to_string(cfg.batch_size) + " exceeds the " +
                    std::to_string(split.train_indices.size()) + " training slices");
  }
  FitResult result;
  result.split = std::move(split);
  const auto& train = result.split.train_indices;
  const auto& val = result.split.val_indices;

  AdamState<float> state = make_adam_state<float>(model.parameters());
  EarlyStopper stopper(cfg.patience);
  std::vector<std::size_t> order = train;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    order = train;
    Rng rng(mix_seed(cfg.seed, 0x65706f6368ULL + epoch));
    rng.shuffle(order);

    MetricTotals train_totals;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - b);
      std::span<const std::size_t> batch(order.data() + b, n);
      for (std::size_t i : batch) result.trained_groups.insert(data.group(i));
      auto [images, masks] = load_batch(data, batch);
      train_step(model, state, cfg.adam, images, masks, &train_totals);
      ++result.updates;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_totals.bce();
    rec.train_accuracy = train_totals.accuracy();
    if (!val.empty()) {
      MetricTotals val_totals = evaluate(model, data, val, cfg.batch_size);
      rec.val_loss = val_totals.bce();
      rec.val_accuracy = val_totals.accuracy();
    } else {
      rec.val_loss = std::numeric_limits<double>::quiet_NaN();
      rec.val_accuracy = std::numeric_limits<double>::quiet_NaN();
    }
    rec.learning_rate = effective_lr(state.t, cfg.adam);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.records.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (stopper.update(rec.val_loss) == EarlyStopper::Decision::Stop) {
      result.stopped_early = epoch < cfg.max_epochs;
      break;
    }
  }
  return result;
}

namespace {
void append_number(std::string& out, double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::scientific, 16);
  if (ec != std::errc{}) throw ContractViolation("curve value formatting failed");
  out.append(buf, end);
}

double parse_number(std::string_view s) {
  double v = 0.0;
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "-nan") return -std::numeric_limits<double>::quiet_NaN();
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw DataError("bad curve value '" + std::string(s) + "'");
  return v;
}
}  // namespace

std::string format_curves(const std::vector<EpochRecord>& records) {
  std::string out = "epoch,train_loss,train_acc,val_loss,val_acc,lr\n";
  for (const auto& r : records) {
    out += std::to_string(r.epoch);
    for (double v : {r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy, r.learning_rate}) {
      out += ',';
      append_number(out, v);
    }
    out += '\n';
  }
  return out;
}

std::vector<EpochRecord> parse_curves(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "epoch,train_loss,train_acc,val_loss,val_acc,lr") {
    throw DataError("curves: unexpected header");
  }
  std::vector<EpochRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest = line;
    for (std::size_t pos; (pos = rest.find(',')) != std::string_view::npos;) {
      fields.push_back(rest.substr(0, pos));
      rest.remove_prefix(pos + 1);
    }
    fields.push_back(rest);
    if (fields.size() != 6) throw DataError("curves: expected 6 fields in '" + line + "'");
    EpochRecord r;
    auto [ptr, ec] = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), r.epoch);
    if (ec != std::errc{}) throw DataError("curves: bad epoch in '" + line + "'");
    r.train_loss = parse_number(fields[1]);
    r.train_accuracy = parse_number(fields[2]);
    r.val_loss = parse_number(fields[3]);
    r.val_accuracy = parse_number(fields[4]);
    r.learning_rate = parse_number(fields[5]);
    out.push_back(r);
  }
  return out;
}

void emit_curves(const std::vector<EpochRecord>& records, const std::filesystem::path& path) {
  if (records.empty()) throw ContractViolation("emit_curves: no records");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << format_curves(records);
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace stripnet
