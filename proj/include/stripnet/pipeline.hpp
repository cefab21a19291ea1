#pragma once

// Subcommands behind the stripnet tool.
//
// On-disk layout
//   preprocess  {out}/{id}/scan.npy (f16), mask.npy (i8, when masks given), stats.json
//   augment     {out}/{id}/{copy}/scan.npy (f16), mask.npy (i8), transform.json
//   train       {out}/checkpoint.ssck, curves.csv, manifest.json
//   predict     {out}/probability.npy (f4), mask.npy (i1), input_znorm.npy (f4),
//               stripped.npy (f4), stripped_raw.npy (f8), metrics.json
//
// Exit codes: 0 success, 1 unexpected failure, 2 configuration error,
// 3 data error, 4 numeric failure.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "stripnet/run_config.hpp"
#include "stripnet/train.hpp"
#include "stripnet/volume.hpp"
#include "stripnet/znorm.hpp"

namespace stripnet {

enum ExitCode : int {
  kExitOk = 0,
  kExitUnexpected = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumeric = 4,
};

int exit_code_for(const std::exception& e);

/// Reads .nii or .npy by extension; always returns f64 data.
Volume3D load_volume(const std::filesystem::path& path);

/// File name without the .nii / .npy extension.
std::string scan_id_for(const std::filesystem::path& path);

struct PreprocessReport {
  std::vector<std::string> ids;
  std::vector<ZNormStats> stats;
};
PreprocessReport cmd_preprocess(const RunConfig& cfg, std::ostream& log);

struct AugmentReport {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
};
AugmentReport cmd_augment(const RunConfig& cfg, std::ostream& log);

/// Scan/mask files of an augmented dataset, grouped by source scan id.
struct DatasetIndex {
  std::vector<std::filesystem::path> scans;
  std::vector<std::filesystem::path> masks;
  std::vector<std::string> groups;
};
DatasetIndex index_dataset(const std::filesystem::path& root);

struct TrainReport {
  FitResult fit;
  std::uint64_t parameter_count = 0;
  std::filesystem::path checkpoint;
  std::filesystem::path curves;
  std::filesystem::path manifest;
};
TrainReport cmd_train(const RunConfig& cfg, std::ostream& log);

struct SegmentationMetrics {
  double bce = 0.0;
  double accuracy = 0.0;
  double dice = 0.0;
};

struct PredictionResult {
  Volume3D probability;
  /// prob >= threshold, as 0/1.
  Volume3D mask;
  /// mask * z-normalized input.
  Volume3D stripped;
  /// mask * raw input.
  Volume3D stripped_raw;
  std::optional<SegmentationMetrics> metrics;
};

/// Thresholds prob and applies the mask to both inputs. All dims must agree.
PredictionResult skull_strip(const Volume3D& probability, const Volume3D& znormed, const Volume3D& raw,
                             double threshold = 0.5);

SegmentationMetrics segmentation_metrics(const Volume3D& probability, const Volume3D& truth, double threshold = 0.5);

/// Slice-wise forward passes stacked back into a volume.
Volume3D predict_probability(UNetModel<float>& model, const Volume3D& znormed, std::size_t batch_size);

PredictionResult cmd_predict(const RunConfig& cfg, std::ostream& log);

/// Prints analytic and runtime counts against the published table. Returns
/// nonzero when a count is internally inconsistent or a published
/// Vanilla/Residual count is missed.
int cmd_count_params(std::optional<ArchitectureKind> only, std::ostream& out);

/// Runs the gradient-check suite; nonzero on any failure.
int cmd_gradcheck(std::uint64_t seed, std::size_t seeds, std::ostream& out);

void cmd_describe(ArchitectureKind kind, const UNetConfig& cfg, std::ostream& out);

/// Writes count synthetic head volumes as NIfTI: {out}/phantom_NN.nii and
/// {out}/phantom_NN_mask.nii.
std::vector<std::filesystem::path> cmd_phantom(const std::filesystem::path& out, std::size_t count, std::size_t d,
                                               std::size_t h, std::size_t w, std::uint64_t seed, std::ostream& log);

}  // namespace stripnet
