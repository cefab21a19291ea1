#pragma once

// Vanilla, Residual and Dense 2D U-Nets as explicit layer graphs.
//
// Block wiring (X = block input, f = level filters, convs are 3x3 + ReLU):
//
//   Vanilla   c1 = conv(X)   c2 = conv(c1)             out = c2
//   Residual  c1 = conv(X)   c2 = conv(c1)             out = concat(X, c2)
//   Dense     c1 = conv(X)   c2 = conv(concat(X, c1))  out = concat(X, c2)
//
// The encoder max-pools each block output and hands c2 across to the decoder.
// A decoder level up-samples the previous block output with a 2x2 transpose
// convolution, concatenates the skip, and runs the same block. A 1x1
// convolution with sigmoid produces the per-pixel brain probability.
//
// With base_filters = 32 and depth 4 the Vanilla and Residual graphs have
// 7,759,521 and 9,895,073 trainable parameters. The Dense graph has
// 14,327,681; the published figure for the dense variant is 15,479,681 and is
// not reachable from the block description above.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stripnet/autodiff.hpp"

namespace stripnet {

enum class ArchitectureKind { Vanilla, Residual, Dense };

std::string_view to_string(ArchitectureKind kind);
/// Accepts "vanilla", "residual", "dense" (case-insensitive).
ArchitectureKind parse_architecture(std::string_view text);

inline constexpr std::uint64_t kPublishedVanillaParams = 7'759'521;
inline constexpr std::uint64_t kPublishedResidualParams = 9'895'073;
inline constexpr std::uint64_t kPublishedDenseParams = 15'479'681;

struct UNetConfig {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t base_filters = 32;
  std::size_t depth = 4;
  /// 0 selects base_filters * 2^depth.
  std::size_t bottleneck_filters = 0;
  std::size_t height = 256;
  std::size_t width = 256;

  std::size_t filters(std::size_t level) const { return base_filters << level; }
  std::size_t bottleneck() const {
    return bottleneck_filters != 0 ? bottleneck_filters : base_filters << depth;
  }
  std::size_t divisor() const { return std::size_t{1} << depth; }

  /// Throws ConfigError.
  void validate() const;

  bool operator==(const UNetConfig&) const = default;
};

enum class NodeOp { Input, Conv, UpConv, Pool, Concat, Relu, Sigmoid };

std::string_view to_string(NodeOp op);

struct LayerNode {
  NodeOp op = NodeOp::Input;
  std::string name;
  std::vector<std::size_t> inputs;
  /// Output channel count.
  std::size_t channels = 0;
  /// Kernel extent for Conv (3 or 1) and UpConv (2).
  std::size_t kernel = 0;
  /// Index of the weight parameter; the bias follows it. -1 when parameter-free.
  int param = -1;
  /// Spatial downsampling factor relative to the model input.
  std::size_t scale = 1;
};

/// Channel widths at the block boundaries, for audits.
struct ChannelTable {
  std::vector<std::size_t> encoder_outputs;
  std::size_t bottleneck_output = 0;
  std::vector<std::size_t> upconv_inputs;
  std::size_t head_input = 0;
};

enum class InitKind { HeNormal, GlorotUniform, Zeros };

struct ParamSpec {
  std::string name;
  Shape4 shape;
  InitKind init = InitKind::Zeros;
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
};

/// Topologically ordered layer graph with parameter specifications.
struct LayerGraph {
  std::vector<LayerNode> nodes;
  std::vector<ParamSpec> params;
  std::size_t input = 0;
  std::size_t logits = 0;
  std::size_t output = 0;
  ChannelTable channels;
};

LayerGraph build_graph(ArchitectureKind kind, const UNetConfig& cfg);

/// Sum of (kh*kw*cin + 1) * cout over the graph's convolutions, derived
/// from channel bookkeeping alone.
std::uint64_t analytic_parameter_count(const LayerGraph& graph);

/// Checks the channel bookkeeping: conv input widths, concat sums and
/// parameter shapes. Throws ContractViolation on the first inconsistency.
void validate_graph(const LayerGraph& graph);

template <class T>
class UNetModel {
 public:
  UNetModel(ArchitectureKind kind, const UNetConfig& cfg, std::uint64_t seed);

  ArchitectureKind kind() const { return kind_; }
  const UNetConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  const LayerGraph& graph() const { return graph_; }

  std::span<Parameter<T>> parameters() { return params_; }
  std::span<const Parameter<T>> parameters() const { return params_; }
  Parameter<T>* find_parameter(std::string_view name);

  /// Pre-sigmoid output, recorded on the tape.
  Var forward_logits(Tape<T>& tape, Var input);
  /// Probabilities, recorded on the tape.
  Var forward(Tape<T>& tape, Var input);
  /// Probabilities without recording.
  Tensor<T> forward(const Tensor<T>& batch);

  void zero_grad();

 private:
  void check_input(const Shape4& s) const;
  Var run(Tape<T>& tape, Var input, std::size_t until);

  ArchitectureKind kind_;
  UNetConfig config_;
  std::uint64_t seed_;
  LayerGraph graph_;
  std::vector<Parameter<T>> params_;
};

extern template class UNetModel<float>;
extern template class UNetModel<double>;

template <class T>
UNetModel<T> build_unet(ArchitectureKind kind, const UNetConfig& cfg, std::uint64_t seed = 0) {
  return UNetModel<T>(kind, cfg, seed);
}

/// Number of scalars in the model's parameter store.
template <class T>
std::uint64_t count_parameters(const UNetModel<T>& model) {
  std::uint64_t total = 0;
  for (const auto& p : model.parameters()) total += p.value.numel();
  return total;
}

struct NodeSummary {
  std::string name;
  NodeOp op;
  std::size_t channels;
  std::size_t height;
  std::size_t width;
  std::uint64_t params;
};

struct ModelSummary {
  ArchitectureKind kind;
  UNetConfig config;
  std::vector<NodeSummary> nodes;
  ChannelTable channels;
  std::uint64_t analytic_params = 0;
  std::uint64_t runtime_params = 0;
};

template <class T>
ModelSummary describe(const UNetModel<T>& model);

std::string format_summary(const ModelSummary& summary);

}  // namespace stripnet
