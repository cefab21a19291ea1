#include "stripnet/run_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "stripnet/errors.hpp"

namespace stripnet {

namespace {
std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, end);
}

template <class T>
T parse_unsigned(std::string_view key, std::string_view v) {
  T out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError(std::string(key) + ": expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError(std::string(key) + ": expected a number, got '" + std::string(v) + "'");
  }
  return out;
}

std::vector<std::filesystem::path> parse_paths(std::string_view v) {
  std::vector<std::filesystem::path> out;
  while (!v.empty()) {
    const auto comma = v.find(',');
    const auto item = trim(v.substr(0, comma));
    if (!item.empty()) out.emplace_back(std::string(item));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  return out;
}

std::string join(const std::vector<std::filesystem::path>& paths) {
  std::string out;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    if (i) out += ',';
    out += paths[i].string();
  }
  return out;
}
}  // namespace

std::string format_run_config(const RunConfig& c) {
  std::ostringstream o;
  o << "arch = " << to_string(c.arch) << '\n'
    << "seed = " << c.seed << '\n'
    << "out = " << c.out.string() << '\n'
    << "model.in_channels = " << c.model.in_channels << '\n'
    << "model.out_channels = " << c.model.out_channels << '\n'
    << "model.base_filters = " << c.model.base_filters << '\n'
    << "model.depth = " << c.model.depth << '\n'
    << "model.bottleneck_filters = " << c.model.bottleneck_filters << '\n'
    << "train.learning_rate = " << number(c.train.adam.learning_rate) << '\n'
    << "train.beta1 = " << number(c.train.adam.beta1) << '\n'
    << "train.beta2 = " << number(c.train.adam.beta2) << '\n'
    << "train.epsilon = " << number(c.train.adam.epsilon) << '\n'
    << "train.decay = " << number(c.train.adam.decay) << '\n'
    << "train.batch_size = " << c.train.batch_size << '\n'
    << "train.patience = " << c.train.patience << '\n'
    << "train.max_epochs = " << c.train.max_epochs << '\n'
    << "train.val_fraction = " << number(c.train.val_fraction) << '\n'
    << "train.cache_slices = " << c.cache_slices << '\n'
    << "data.scans = " << join(c.scans) << '\n'
    << "data.masks = " << join(c.masks) << '\n'
    << "data.region = " << to_string(c.region) << '\n'
    << "data.dataset = " << c.dataset.string() << '\n'
    << "augment.factor = " << c.augment_factor << '\n'
    << "predict.checkpoint = " << c.checkpoint.string() << '\n'
    << "predict.volume = " << c.volume.string() << '\n'
    << "predict.ground_truth = " << c.ground_truth.string() << '\n'
    << "predict.threshold = " << number(c.threshold) << '\n';
  return o.str();
}

void set_config_value(RunConfig& c, std::string_view key, std::string_view v) {
  v = trim(v);
  if (key == "arch") {
    c.arch = parse_architecture(v);
  } else if (key == "seed") {
    c.seed = parse_unsigned<std::uint64_t>(key, v);
  } else if (key == "out") {
    c.out = std::string(v);
  } else if (key == "model.in_channels") {
    c.model.in_channels = parse_unsigned<std::size_t>(key, v);
  } else if (key == "model.out_channels") {
    c.model.out_channels = parse_unsigned<std::size_t>(key, v);
  } else if (key == "model.base_filters") {
    c.model.base_filters = parse_unsigned<std::size_t>(key, v);
  } else if (key == "model.depth") {
    c.model.depth = parse_unsigned<std::size_t>(key, v);
  } else if (key == "model.bottleneck_filters") {
    c.model.bottleneck_filters = parse_unsigned<std::size_t>(key, v);
  } else if (key == "train.learning_rate") {
    c.train.adam.learning_rate = parse_double(key, v);
  } else if (key == "train.beta1") {
    c.train.adam.beta1 = parse_double(key, v);
  } else if (key == "train.beta2") {
    c.train.adam.beta2 = parse_double(key, v);
  } else if (key == "train.epsilon") {
    c.train.adam.epsilon = parse_double(key, v);
  } else if (key == "train.decay") {
    c.train.adam.decay = parse_double(key, v);
  } else if (key == "train.batch_size") {
    c.train.batch_size = parse_unsigned<std::size_t>(key, v);
  } else if (key == "train.patience") {
    c.train.patience = parse_unsigned<std::size_t>(key, v);
  } else if (key == "train.max_epochs") {
    c.train.max_epochs = parse_unsigned<std::size_t>(key, v);
  } else if (key == "train.val_fraction") {
    c.train.val_fraction = parse_double(key, v);
  } else if (key == "train.cache_slices") {
    c.cache_slices = parse_unsigned<std::size_t>(key, v);
  } else if (key == "data.scans") {
    c.scans = parse_paths(v);
  } else if (key == "data.masks") {
    c.masks = parse_paths(v);
  } else if (key == "data.region") {
    if (v == "mask") {
      c.region = StatsRegion::Mask;
    } else if (v == "nonzero") {
      c.region = StatsRegion::Nonzero;
    } else {
      throw ConfigError("data.region: expected mask or nonzero, got '" + std::string(v) + "'");
    }
  } else if (key == "data.dataset") {
    c.dataset = std::string(v);
  } else if (key == "augment.factor") {
    c.augment_factor = parse_unsigned<std::size_t>(key, v);
  } else if (key == "predict.checkpoint") {
    c.checkpoint = std::string(v);
  } else if (key == "predict.volume") {
    c.volume = std::string(v);
  } else if (key == "predict.ground_truth") {
    c.ground_truth = std::string(v);
  } else if (key == "predict.threshold") {
    c.threshold = parse_double(key, v);
  } else {
    throw ConfigError("unknown configuration key '" + std::string(key) + "'");
  }
}

RunConfig parse_run_config(std::string_view text, RunConfig base) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    try {
      set_config_value(base, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse_run_config(text.str(), std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::uint64_t config_hash(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : format_run_config(cfg)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void validate(const RunConfig& c) {
  c.train.validate();
  if (c.model.in_channels != 1 || c.model.out_channels != 1) {
    throw ConfigError("model.in_channels and model.out_channels must be 1 for single-modality brain masks");
  }
  if (c.model.base_filters == 0 || c.model.depth == 0) throw ConfigError("model.base_filters and model.depth must be positive");
  if (c.augment_factor == 0) throw ConfigError("augment.factor must be at least 1");
  if (c.cache_slices == 0) throw ConfigError("train.cache_slices must be positive");
  if (!(c.threshold > 0.0 && c.threshold < 1.0)) throw ConfigError("predict.threshold must lie in (0, 1)");
  if (!c.masks.empty() && c.masks.size() != c.scans.size()) {
    throw ConfigError("data.masks must list one mask per entry of data.scans");
  }
}

}  // namespace stripnet
