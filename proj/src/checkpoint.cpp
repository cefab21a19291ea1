#include "stripnet/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "stripnet/errors.hpp"
#include "stripnet/npy.hpp"

namespace stripnet {

namespace {
using nlohmann::json;

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

json config_json(const UNetConfig& c) {
  return json{{"in_channels", c.in_channels},   {"out_channels", c.out_channels}, {"base_filters", c.base_filters},
              {"depth", c.depth},               {"bottleneck_filters", c.bottleneck_filters},
              {"height", c.height},             {"width", c.width}};
}

UNetConfig config_from_json(const json& j) {
  UNetConfig c;
  c.in_channels = j.at("in_channels").get<std::size_t>();
  c.out_channels = j.at("out_channels").get<std::size_t>();
  c.base_filters = j.at("base_filters").get<std::size_t>();
  c.depth = j.at("depth").get<std::size_t>();
  c.bottleneck_filters = j.at("bottleneck_filters").get<std::size_t>();
  c.height = j.at("height").get<std::size_t>();
  c.width = j.at("width").get<std::size_t>();
  return c;
}

struct Parsed {
  CheckpointManifest manifest;
  std::size_t data_start = 0;
};

Parsed parse(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
    throw FormatError(FormatErrorKind::BadMagic, "not a stripnet checkpoint");
  }
  const std::uint64_t len = get_u64(bytes.data() + 8);
  if (len > bytes.size() - 16) throw FormatError(FormatErrorKind::Truncated, "checkpoint manifest is truncated");
  Parsed p;
  p.data_start = 16 + static_cast<std::size_t>(len);
  try {
    const json j = json::parse(bytes.begin() + 16, bytes.begin() + static_cast<std::ptrdiff_t>(p.data_start));
    p.manifest.kind = parse_architecture(j.at("architecture").get<std::string>());
    p.manifest.config = config_from_json(j.at("config"));
    p.manifest.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& t : j.at("tensors")) {
      p.manifest.tensors.push_back(
          {t.at("name").get<std::string>(), t.at("offset").get<std::uint64_t>(), t.at("length").get<std::uint64_t>()});
    }
  } catch (const json::exception& e) {
    throw FormatError(FormatErrorKind::BadHeader, std::string("checkpoint manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(FormatErrorKind::BadHeader, std::string("checkpoint manifest: ") + e.what());
  }
  return p;
}
}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const UNetModel<float>& model) {
  std::vector<std::uint8_t> data;
  json tensors = json::array();
  for (const auto& p : model.parameters()) {
    const Shape4 s = p.value.shape();
    const auto record = write_npy(make_npy<float>({s.n, s.c, s.h, s.w}, p.value.values()));
    tensors.push_back({{"name", p.name}, {"offset", data.size()}, {"length", record.size()}});
    data.insert(data.end(), record.begin(), record.end());
  }
  const json manifest{{"format", 1},
                      {"architecture", std::string(to_string(model.kind()))},
                      {"config", config_json(model.config())},
                      {"seed", model.seed()},
                      {"tensors", tensors}};
  const std::string text = manifest.dump();

  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 8);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), data.begin(), data.end());
  return out;
}

CheckpointManifest read_checkpoint_manifest(std::span<const std::uint8_t> bytes) { return parse(bytes).manifest; }

UNetModel<float> deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  const Parsed p = parse(bytes);
  UNetModel<float> model(p.manifest.kind, p.manifest.config, p.manifest.seed);
  auto params = model.parameters();
  if (p.manifest.tensors.size() != params.size()) {
    throw FormatError(FormatErrorKind::BadHeader, "checkpoint tensor count does not match the architecture");
  }
  const std::size_t data_size = bytes.size() - p.data_start;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = p.manifest.tensors[i];
    if (e.name != params[i].name) {
      throw FormatError(FormatErrorKind::BadHeader, "checkpoint tensor '" + e.name + "' where '" + params[i].name +
                                                        "' was expected");
    }
    if (e.offset > data_size || e.length > data_size - e.offset) {
      throw FormatError(FormatErrorKind::Truncated, "checkpoint tensor '" + e.name + "' extends past the file");
    }
    const NpyRecord rec = read_npy(bytes.subspan(p.data_start + e.offset, e.length));
    const Shape4 s = params[i].value.shape();
    if (rec.dtype != Precision::F32 || rec.shape != std::vector<std::size_t>{s.n, s.c, s.h, s.w}) {
      throw FormatError(FormatErrorKind::LengthMismatch, "checkpoint tensor '" + e.name + "' has the wrong shape");
    }
    std::memcpy(params[i].value.data(), rec.data.data(), rec.data.size());
  }
  return model;
}

void save_checkpoint(const UNetModel<float>& model, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

UNetModel<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint not found: " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return deserialize_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace stripnet
