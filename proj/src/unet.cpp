#include "stripnet/unet.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "stripnet/errors.hpp"
#include "stripnet/random.hpp"

namespace stripnet {

std::string_view to_string(ArchitectureKind kind) {
  switch (kind) {
    case ArchitectureKind::Vanilla: return "vanilla";
    case ArchitectureKind::Residual: return "residual";
    case ArchitectureKind::Dense: return "dense";
  }
  return "unknown";
}

ArchitectureKind parse_architecture(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "vanilla") return ArchitectureKind::Vanilla;
  if (lower == "residual") return ArchitectureKind::Residual;
  if (lower == "dense") return ArchitectureKind::Dense;
  throw ConfigError("unknown architecture '" + std::string(text) + "' (expected vanilla, residual or dense)");
}

std::string_view to_string(NodeOp op) {
  switch (op) {
    case NodeOp::Input: return "input";
    case NodeOp::Conv: return "conv";
    case NodeOp::UpConv: return "upconv";
    case NodeOp::Pool: return "maxpool";
    case NodeOp::Concat: return "concat";
    case NodeOp::Relu: return "relu";
    case NodeOp::Sigmoid: return "sigmoid";
  }
  return "?";
}

void UNetConfig::validate() const {
  if (in_channels == 0 || out_channels == 0) throw ConfigError("channel counts must be positive");
  if (base_filters == 0) throw ConfigError("base_filters must be positive");
  if (depth == 0 || depth > 8) throw ConfigError("depth must be in [1, 8]");
  if (height == 0 || width == 0 || height % divisor() != 0 || width % divisor() != 0) {
    throw ConfigError("input " + std::to_string(height) + "x" + std::to_string(width) +
                      " is not divisible by 2^depth = " + std::to_string(divisor()));
  }
}

namespace {

class GraphBuilder {
 public:
  explicit GraphBuilder(ArchitectureKind kind) : kind_(kind) {}

  std::size_t input(std::size_t channels) {
    return add(LayerNode{NodeOp::Input, "input", {}, channels, 0, -1, 1});
  }

  std::size_t conv_relu(const std::string& name, std::size_t src, std::size_t cout) {
    const std::size_t c = conv(name, src, cout, 3, InitKind::HeNormal);
    return add(LayerNode{NodeOp::Relu, name + ".relu", {c}, cout, 0, -1, scale(c)});
  }

  std::size_t conv(const std::string& name, std::size_t src, std::size_t cout, std::size_t k, InitKind init) {
    const std::size_t cin = g_.nodes[src].channels;
    const int p = add_params(name, Shape4{cout, cin, k, k}, init, cin * k * k, cout * k * k, cout);
    return add(LayerNode{NodeOp::Conv, name, {src}, cout, k, p, scale(src)});
  }

  std::size_t upconv(const std::string& name, std::size_t src, std::size_t cout) {
    const std::size_t cin = g_.nodes[src].channels;
    // Each output pixel of a stride-2 2x2 transpose convolution sums cin terms.
    const int p = add_params(name, Shape4{cin, cout, 2, 2}, InitKind::HeNormal, cin, cout, cout);
    return add(LayerNode{NodeOp::UpConv, name, {src}, cout, 2, p, scale(src) / 2});
  }

  std::size_t pool(const std::string& name, std::size_t src) {
    return add(LayerNode{NodeOp::Pool, name, {src}, g_.nodes[src].channels, 0, -1, scale(src) * 2});
  }

  std::size_t concat(const std::string& name, std::vector<std::size_t> srcs) {
    std::size_t channels = 0;
    for (std::size_t s : srcs) channels += g_.nodes[s].channels;
    const std::size_t sc = scale(srcs.front());
    return add(LayerNode{NodeOp::Concat, name, std::move(srcs), channels, 0, -1, sc});
  }

  std::size_t sigmoid(std::size_t src) {
    return add(LayerNode{NodeOp::Sigmoid, "sigmoid", {src}, g_.nodes[src].channels, 0, -1, scale(src)});
  }

  struct Block {
    std::size_t output;
    std::size_t skip;
  };

  Block block(const std::string& name, std::size_t x, std::size_t filters) {
    const std::size_t c1 = conv_relu(name + ".conv1", x, filters);
    std::size_t conv2_input = c1;
    if (kind_ == ArchitectureKind::Dense) conv2_input = concat(name + ".dense_concat", {x, c1});
    const std::size_t c2 = conv_relu(name + ".conv2", conv2_input, filters);
    if (kind_ == ArchitectureKind::Vanilla) return {c2, c2};
    return {concat(name + ".residual_concat", {x, c2}), c2};
  }

  std::size_t channels(std::size_t node) const { return g_.nodes[node].channels; }

  LayerGraph finish() { return std::move(g_); }
  LayerGraph& graph() { return g_; }

 private:
  std::size_t scale(std::size_t node) const { return g_.nodes[node].scale; }

  std::size_t add(LayerNode node) {
    g_.nodes.push_back(std::move(node));
    return g_.nodes.size() - 1;
  }

  int add_params(const std::string& name, Shape4 shape, InitKind init, std::size_t fan_in, std::size_t fan_out,
                 std::size_t cout) {
    const int index = static_cast<int>(g_.params.size());
    g_.params.push_back(ParamSpec{name + ".weight", shape, init, fan_in, fan_out});
    g_.params.push_back(ParamSpec{name + ".bias", Shape4{cout, 1, 1, 1}, InitKind::Zeros, 0, 0});
    return index;
  }

  ArchitectureKind kind_;
  LayerGraph g_;
};

}  // namespace

LayerGraph build_graph(ArchitectureKind kind, const UNetConfig& cfg) {
  cfg.validate();
  GraphBuilder b(kind);
  std::size_t x = b.input(cfg.in_channels);
  ChannelTable table;
  std::vector<std::size_t> skips;
  for (std::size_t level = 0; level < cfg.depth; ++level) {
    const std::string name = "enc" + std::to_string(level);
    const auto blk = b.block(name, x, cfg.filters(level));
    table.encoder_outputs.push_back(b.channels(blk.output));
    skips.push_back(blk.skip);
    x = b.pool(name + ".pool", blk.output);
  }
  auto bottom = b.block("bottleneck", x, cfg.bottleneck());
  table.bottleneck_output = b.channels(bottom.output);
  std::size_t prev = bottom.output;
  for (std::size_t level = cfg.depth; level-- > 0;) {
    const std::string name = "dec" + std::to_string(level);
    table.upconv_inputs.push_back(b.channels(prev));
    const std::size_t up = b.upconv(name + ".up", prev, cfg.filters(level));
    const std::size_t joined = b.concat(name + ".skip_concat", {up, skips[level]});
    prev = b.block(name, joined, cfg.filters(level)).output;
  }
  table.head_input = b.channels(prev);
  const std::size_t logits = b.conv("head", prev, cfg.out_channels, 1, InitKind::GlorotUniform);
  const std::size_t output = b.sigmoid(logits);
  LayerGraph g = b.finish();
  g.input = 0;
  g.logits = logits;
  g.output = output;
  g.channels = std::move(table);
  validate_graph(g);
  return g;
}

std::uint64_t analytic_parameter_count(const LayerGraph& graph) {
  std::uint64_t total = 0;
  for (const LayerNode& n : graph.nodes) {
    if (n.op != NodeOp::Conv && n.op != NodeOp::UpConv) continue;
    const std::uint64_t cin = graph.nodes[n.inputs.front()].channels;
    total += (n.kernel * n.kernel * cin + 1) * n.channels;
  }
  return total;
}

void validate_graph(const LayerGraph& graph) {
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    const LayerNode& n = graph.nodes[i];
    for (std::size_t src : n.inputs) {
      if (src >= i) throw ContractViolation("graph node " + n.name + " consumes a later node");
    }
    switch (n.op) {
      case NodeOp::Concat: {
        std::size_t sum = 0;
        for (std::size_t src : n.inputs) sum += graph.nodes[src].channels;
        if (sum != n.channels) throw ContractViolation("concat " + n.name + " channel sum mismatch");
        break;
      }
      case NodeOp::Conv:
      case NodeOp::UpConv: {
        if (n.param < 0 || static_cast<std::size_t>(n.param) + 1 >= graph.params.size()) {
          throw ContractViolation("layer " + n.name + " has no parameters");
        }
        const Shape4& ws = graph.params[static_cast<std::size_t>(n.param)].shape;
        const std::size_t cin = graph.nodes[n.inputs.front()].channels;
        const bool ok = n.op == NodeOp::Conv ? (ws.n == n.channels && ws.c == cin)
                                             : (ws.n == cin && ws.c == n.channels);
        if (!ok) throw ContractViolation("layer " + n.name + " weight " + ws.str() + " disagrees with channel bookkeeping");
        break;
      }
      default:
        break;
    }
  }
}

template <class T>
UNetModel<T>::UNetModel(ArchitectureKind kind, const UNetConfig& cfg, std::uint64_t seed)
    : kind_(kind), config_(cfg), seed_(seed), graph_(build_graph(kind, cfg)) {
  Rng rng(seed);
  params_.reserve(graph_.params.size());
  for (const ParamSpec& spec : graph_.params) {
    Tensor<T> value(spec.shape);
    switch (spec.init) {
      case InitKind::HeNormal: {
        const double stddev = std::sqrt(2.0 / static_cast<double>(spec.fan_in));
        auto& w = value.storage();
        for (std::size_t i = 0; i < w.size(); i += 2) {
          const auto [a, b] = rng.normal_pair();
          w[i] = static_cast<T>(stddev * a);
          if (i + 1 < w.size()) w[i + 1] = static_cast<T>(stddev * b);
        }
        break;
      }
      case InitKind::GlorotUniform: {
        const double limit = std::sqrt(6.0 / static_cast<double>(spec.fan_in + spec.fan_out));
        for (T& v : value.storage()) v = static_cast<T>(rng.uniform(-limit, limit));
        break;
      }
      case InitKind::Zeros:
        break;
    }
    params_.emplace_back(spec.name, std::move(value));
  }
}

template <class T>
Parameter<T>* UNetModel<T>::find_parameter(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

template <class T>
void UNetModel<T>::check_input(const Shape4& s) const {
  if (s.c != config_.in_channels) {
    throw ContractViolation("forward: expected " + std::to_string(config_.in_channels) + " input channel(s), got " + s.str());
  }
  if (s.h % config_.divisor() != 0 || s.w % config_.divisor() != 0) {
    throw ContractViolation("forward: spatial dims of " + s.str() + " are not divisible by " +
                            std::to_string(config_.divisor()));
  }
}

template <class T>
Var UNetModel<T>::run(Tape<T>& tape, Var input, std::size_t until) {
  check_input(tape.value(input).shape());
  std::vector<Var> out(graph_.nodes.size());
  for (std::size_t i = 0; i <= until; ++i) {
    const LayerNode& n = graph_.nodes[i];
    switch (n.op) {
      case NodeOp::Input:
        out[i] = input;
        break;
      case NodeOp::Conv: {
        const auto p = static_cast<std::size_t>(n.param);
        out[i] = ops::conv2d(tape, out[n.inputs[0]], tape.parameter(params_[p]), tape.parameter(params_[p + 1]));
        break;
      }
      case NodeOp::UpConv: {
        const auto p = static_cast<std::size_t>(n.param);
        out[i] = ops::conv2d_transpose(tape, out[n.inputs[0]], tape.parameter(params_[p]),
                                       tape.parameter(params_[p + 1]));
        break;
      }
      case NodeOp::Pool:
        out[i] = ops::maxpool2(tape, out[n.inputs[0]]);
        break;
      case NodeOp::Concat: {
        std::vector<Var> parts;
        for (std::size_t src : n.inputs) parts.push_back(out[src]);
        out[i] = ops::concat<T>(tape, parts);
        break;
      }
      case NodeOp::Relu:
        out[i] = ops::relu(tape, out[n.inputs[0]]);
        break;
      case NodeOp::Sigmoid:
        out[i] = ops::sigmoid(tape, out[n.inputs[0]]);
        break;
    }
  }
  return out[until];
}

template <class T>
Var UNetModel<T>::forward_logits(Tape<T>& tape, Var input) {
  return run(tape, input, graph_.logits);
}

template <class T>
Var UNetModel<T>::forward(Tape<T>& tape, Var input) {
  return run(tape, input, graph_.output);
}

template <class T>
Tensor<T> UNetModel<T>::forward(const Tensor<T>& batch) {
  Tape<T> tape(false);
  const Var out = run(tape, tape.constant(batch), graph_.output);
  return tape.value(out);
}

template <class T>
void UNetModel<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template class UNetModel<float>;
template class UNetModel<double>;

template <class T>
ModelSummary describe(const UNetModel<T>& model) {
  const LayerGraph& g = model.graph();
  const UNetConfig& cfg = model.config();
  ModelSummary s{model.kind(), cfg, {}, g.channels, analytic_parameter_count(g), count_parameters(model)};
  for (const LayerNode& n : g.nodes) {
    std::uint64_t params = 0;
    if (n.param >= 0) {
      const auto p = static_cast<std::size_t>(n.param);
      params = model.parameters()[p].value.numel() + model.parameters()[p + 1].value.numel();
    }
    s.nodes.push_back(NodeSummary{n.name, n.op, n.channels, cfg.height / n.scale, cfg.width / n.scale, params});
  }
  return s;
}

template ModelSummary describe(const UNetModel<float>&);
template ModelSummary describe(const UNetModel<double>&);

namespace {
std::string join(const std::vector<std::size_t>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + std::to_string(v[i]);
  return out + "]";
}
}  // namespace

std::string format_summary(const ModelSummary& s) {
  std::ostringstream os;
  os << to_string(s.kind) << " U-Net  base_filters=" << s.config.base_filters << " depth=" << s.config.depth
     << " bottleneck=" << s.config.bottleneck() << " input=" << s.config.in_channels << "x" << s.config.height
     << "x" << s.config.width << "\n";
  auto pad = [](std::string text, std::size_t width) {
    text.resize(std::max(text.size(), width), ' ');
    return text;
  };
  os << pad("node", 30) << " " << pad("op", 9) << " " << pad("channels", 9) << " " << pad("height x width", 15)
     << " params\n";
  for (const NodeSummary& n : s.nodes) {
    os << pad(n.name, 30) << " " << pad(std::string(to_string(n.op)), 9) << " " << pad(std::to_string(n.channels), 9)
       << " " << pad(std::to_string(n.height) + " x " + std::to_string(n.width), 15) << " " << n.params << "\n";
  }
  os << "encoder block outputs: " << join(s.channels.encoder_outputs) << "\n";
  os << "bottleneck output: " << s.channels.bottleneck_output << "\n";
  os << "up-conv inputs: " << join(s.channels.upconv_inputs) << "\n";
  os << "head input: " << s.channels.head_input << "\n";
  os << "parameters: analytic=" << s.analytic_params << " runtime=" << s.runtime_params << "\n";
  return os.str();
}

}  // namespace stripnet
