#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "stripnet/adam.hpp"
#include "stripnet/loss.hpp"
#include "stripnet/unet.hpp"
#include "stripnet/volume_store.hpp"

namespace stripnet {

struct TrainingConfig {
  AdamConfig adam;
  std::size_t batch_size = 32;
  std::size_t patience = 2;
  std::size_t max_epochs = 50;
  std::uint64_t seed = 0;
  double val_fraction = 0.10;

  void validate() const;
};

/// Stops once validation loss has failed to strictly improve for
/// `patience` consecutive epochs. NaN counts as no improvement.
class EarlyStopper {
 public:
  enum class Decision { Continue, Stop };

  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}

  Decision update(double val_loss);

  double best() const { return best_; }
  std::size_t best_epoch() const { return best_epoch_; }
  std::size_t epochs_since_improvement() const { return since_; }
  std::size_t epochs_seen() const { return seen_; }

 private:
  std::size_t patience_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t best_epoch_ = 0;
  std::size_t since_ = 0;
  std::size_t seen_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double learning_rate = 0.0;
  /// Not written to the curves file, which must be reproducible.
  double wall_seconds = 0.0;
};

/// Slice-level training data. Every slice carries a group tag (its source
/// scan) so holdout splits never separate slices of one scan.
class SliceSource {
 public:
  virtual ~SliceSource() = default;
  virtual std::size_t size() const = 0;
  virtual std::size_t height() const = 0;
  virtual std::size_t width() const = 0;
  virtual const std::string& group(std::size_t i) const = 0;
  /// Writes height*width values into each buffer.
  virtual void load(std::size_t i, float* image, float* mask) const = 0;
};

class InMemorySlices final : public SliceSource {
 public:
  InMemorySlices(std::size_t height, std::size_t width) : h_(height), w_(width) {}

  void add(std::string group, std::vector<float> image, std::vector<float> mask);

  std::size_t size() const override { return groups_.size(); }
  std::size_t height() const override { return h_; }
  std::size_t width() const override { return w_; }
  const std::string& group(std::size_t i) const override { return groups_.at(i); }
  void load(std::size_t i, float* image, float* mask) const override;

 private:
  std::size_t h_, w_;
  std::vector<std::string> groups_;
  std::vector<std::vector<float>> images_;
  std::vector<std::vector<float>> masks_;
};

/// Slices served lazily from paired scan/mask volume stores.
class StoreSlices final : public SliceSource {
 public:
  /// groups[i] tags scan i; scan and mask stores must have matching geometry.
  StoreSlices(VolumeStore scans, VolumeStore masks, std::vector<std::string> groups);

  std::size_t size() const override { return index_.size(); }
  std::size_t height() const override;
  std::size_t width() const override;
  const std::string& group(std::size_t i) const override { return groups_.at(index_.at(i).first); }
  void load(std::size_t i, float* image, float* mask) const override;

  const VolumeStore& scans() const { return scans_; }

 private:
  VolumeStore scans_;
  VolumeStore masks_;
  std::vector<std::string> groups_;
  std::vector<std::pair<std::size_t, std::size_t>> index_;
};

struct HoldoutSplit {
  std::vector<std::string> train_groups;
  std::vector<std::string> val_groups;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
};

/// Scan-level split: a seeded shuffle of the distinct groups assigns
/// round(val_fraction * groups) (at least one) to validation.
HoldoutSplit split_by_group(const SliceSource& data, double val_fraction, std::uint64_t seed);

/// Assembles the given slices into (n, 1, h, w) image and mask tensors.
std::pair<Tensor<float>, Tensor<float>> load_batch(const SliceSource& data, std::span<const std::size_t> indices);

struct StepResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Forward on logits, fused BCE backward, one Adam update. The returned
/// metrics are for the pre-update forward pass.
template <class T>
StepResult train_step(UNetModel<T>& model, AdamState<T>& state, const AdamConfig& cfg, const Tensor<T>& images,
                      const Tensor<T>& masks, MetricTotals* totals = nullptr);

MetricTotals evaluate(UNetModel<float>& model, const SliceSource& data, std::span<const std::size_t> indices,
                      std::size_t batch_size);

struct FitResult {
  std::vector<EpochRecord> records;
  HoldoutSplit split;
  /// Groups that actually appeared in training batches.
  std::set<std::string> trained_groups;
  bool stopped_early = false;
  std::uint64_t updates = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Epoch loop over a scan-level holdout split with early stopping. The
/// weights after the last executed epoch are kept.
FitResult fit(UNetModel<float>& model, const SliceSource& data, const TrainingConfig& cfg,
              const EpochCallback& on_epoch = {});

/// Same loop over an explicit split.
FitResult fit(UNetModel<float>& model, const SliceSource& data, HoldoutSplit split, const TrainingConfig& cfg,
              const EpochCallback& on_epoch = {});

/// CSV: epoch,train_loss,train_acc,val_loss,val_acc,lr with 17 significant digits.
std::string format_curves(const std::vector<EpochRecord>& records);
std::vector<EpochRecord> parse_curves(const std::string& text);
void emit_curves(const std::vector<EpochRecord>& records, const std::filesystem::path& path);

}  // namespace stripnet
