#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <sys/wait.h>

#include "doctest.h"
#include "json.hpp"
#include "stripnet/errors.hpp"
#include "stripnet/npy.hpp"
#include "stripnet/pipeline.hpp"
#include "stripnet/run_config.hpp"

using namespace stripnet;
namespace fs = std::filesystem;

namespace {
std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(STRIPNET_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct Workspace {
  fs::path root = fs::temp_directory_path() / "stripnet_pipeline_test";
  std::ostringstream log;
  RunConfig base;

  Workspace() {
    fs::remove_all(root);
    fs::create_directories(root);
    const auto files = cmd_phantom(root / "raw", 3, 4, 16, 16, 5, log);
    for (std::size_t i = 0; i < files.size(); i += 2) {
      base.scans.push_back(files[i]);
      base.masks.push_back(files[i + 1]);
    }
    base.seed = 3;
    base.model.base_filters = 2;
    base.model.depth = 2;
    base.train.batch_size = 4;
    base.train.max_epochs = 2;
    base.train.val_fraction = 0.3;
    base.train.adam.learning_rate = 1e-3;
    base.augment_factor = 2;
  }
  ~Workspace() { fs::remove_all(root); }

  RunConfig with_out(const std::string& name) const {
    RunConfig c = base;
    c.out = root / name;
    return c;
  }
};
}  // namespace

TEST_CASE("config text round trip and errors") {
  RunConfig c;
  c.arch = ArchitectureKind::Dense;
  c.seed = 99;
  c.scans = {"a.nii", "b.nii"};
  c.train.adam.learning_rate = 1e-3;
  c.train.batch_size = 8;
  const std::string text = format_run_config(c);
  const RunConfig back = parse_run_config(text);
  CHECK(format_run_config(back) == text);
  CHECK(config_hash(back) == config_hash(c));
  CHECK(back.train.adam.learning_rate == 1e-3);

  RunConfig d = c;
  set_config_value(d, "train.batch_size", "16");
  CHECK(config_hash(d) != config_hash(c));
  CHECK(parse_run_config("# comment\n\narch = residual  # trailing\n").arch == ArchitectureKind::Residual);

  CHECK_THROWS_AS(parse_run_config("bogus.key = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("train.batch_size = many\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("no equals sign\n"), ConfigError);
  RunConfig bad;
  bad.train.batch_size = 0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  CHECK_THROWS_AS(load_run_config("/nonexistent/run.cfg"), ConfigError);
}

TEST_CASE("exit code mapping") {
  CHECK(exit_code_for(ConfigError("x")) == kExitConfig);
  CHECK(exit_code_for(DataError("x")) == kExitData);
  CHECK(exit_code_for(FormatError(FormatErrorKind::BadMagic, "x")) == kExitData);
  CHECK(exit_code_for(ZeroStdError("x")) == kExitData);
  CHECK(exit_code_for(NumericError("x")) == kExitNumeric);
  CHECK(exit_code_for(ContractViolation("x")) == kExitUnexpected);
  CHECK(exit_code_for(std::runtime_error("x")) == kExitUnexpected);
}

TEST_CASE("skull strip identity and metrics") {
  const Volume3D prob(1, 2, 2, std::vector<double>{0.2, 0.5, 0.7, 0.49999});
  const Volume3D z(1, 2, 2, std::vector<double>{-1.5, 2.0, 0.25, 3.0});
  const Volume3D raw(1, 2, 2, std::vector<double>{10, 20, 30, 40});
  const auto r = skull_strip(prob, z, raw);
  CHECK(r.mask.data == std::vector<double>{0, 1, 1, 0});
  CHECK(r.stripped.data == std::vector<double>{0, 2.0, 0.25, 0});
  CHECK(r.stripped_raw.data == std::vector<double>{0, 20, 30, 0});
  CHECK_THROWS_AS(skull_strip(prob, Volume3D(1, 1, 4), raw), ContractViolation);

  const Volume3D truth(1, 2, 2, std::vector<double>{0, 1, 0, 0});
  const auto m = segmentation_metrics(prob, truth);
  CHECK(m.accuracy == 0.75);
  CHECK(m.dice == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("volume loading helpers") {
  CHECK(scan_id_for("/x/y/sub-01_T1w.nii") == "sub-01_T1w");
  CHECK(scan_id_for("scan.npy") == "scan");
  CHECK_THROWS_AS(load_volume("/tmp/volume.nii.gz"), DataError);
  CHECK_THROWS_AS(load_volume("/tmp/volume.mgz"), DataError);
  CHECK(load_volume(fs::path(STRIPNET_FIXTURES) / "nifti_f32_le.nii").at(1, 0, 0) == 1.0);
}

TEST_CASE("end to end on phantoms") {
  Workspace ws;

  const auto pre = cmd_preprocess(ws.with_out("pre"), ws.log);
  CHECK(pre.ids.size() == 3);
  CHECK(load_npy(ws.root / "pre" / pre.ids[0] / "scan.npy").descr() == "<f2");
  CHECK(load_npy(ws.root / "pre" / pre.ids[0] / "mask.npy").descr() == "|i1");
  CHECK(fs::exists(ws.root / "pre" / pre.ids[0] / "stats.json"));

  RunConfig aug = ws.with_out("aug");
  const auto ar = cmd_augment(aug, ws.log);
  CHECK(ar.inputs == 3);
  CHECK(ar.outputs == 6);
  const auto sidecar = nlohmann::json::parse(read_text(ws.root / "aug" / pre.ids[1] / "1" / "transform.json"));
  CHECK(sidecar.at("copy") == 1);
  CHECK(sidecar.contains("znorm"));
  const auto index = index_dataset(ws.root / "aug");
  CHECK(index.scans.size() == 6);
  CHECK(index.groups[0] == index.groups[1]);

  RunConfig aug2 = ws.with_out("aug2");
  cmd_augment(aug2, ws.log);
  for (const auto& entry : fs::recursive_directory_iterator(ws.root / "aug")) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), ws.root / "aug");
    if (rel.filename() == "transform.json") continue;
    CHECK(read_bytes(entry.path()) == read_bytes(ws.root / "aug2" / rel));
  }

  RunConfig t1 = ws.with_out("train1");
  t1.dataset = ws.root / "aug";
  RunConfig t2 = t1;
  t2.out = ws.root / "train2";
  const auto r1 = cmd_train(t1, ws.log);
  cmd_train(t2, ws.log);
  CHECK(read_bytes(r1.curves) == read_bytes(ws.root / "train2" / "curves.csv"));
  CHECK(read_bytes(r1.checkpoint) == read_bytes(ws.root / "train2" / "checkpoint.ssck"));
  CHECK(r1.fit.records.size() >= 1);
  const auto manifest = nlohmann::json::parse(read_text(r1.manifest));
  CHECK(manifest.at("seed") == 3);
  CHECK(manifest.at("architecture") == "vanilla");
  for (const auto& g : r1.fit.split.val_groups) CHECK(r1.fit.trained_groups.count(g) == 0);

  RunConfig p = ws.with_out("pred");
  p.checkpoint = r1.checkpoint;
  p.volume = ws.base.scans[0];
  p.ground_truth = ws.base.masks[0];
  const auto pr = cmd_predict(p, ws.log);
  REQUIRE(pr.metrics.has_value());
  CHECK(pr.metrics->accuracy >= 0.0);

  const auto prob = npy_to_doubles(load_npy(ws.root / "pred" / "probability.npy"));
  const auto mask = npy_to_doubles(load_npy(ws.root / "pred" / "mask.npy"));
  const auto input = npy_to_doubles(load_npy(ws.root / "pred" / "input_znorm.npy"));
  const auto stripped = npy_to_doubles(load_npy(ws.root / "pred" / "stripped.npy"));
  const auto raw = load_volume(ws.base.scans[0]).data;
  const auto stripped_raw = npy_to_doubles(load_npy(ws.root / "pred" / "stripped_raw.npy"));
  REQUIRE(prob.size() == raw.size());
  for (std::size_t i = 0; i < prob.size(); ++i) {
    CHECK(mask[i] == (prob[i] >= 0.5 ? 1.0 : 0.0));
    CHECK(stripped[i] == mask[i] * input[i]);
    CHECK(stripped_raw[i] == mask[i] * raw[i]);
  }
  CHECK(fs::exists(ws.root / "pred" / "metrics.json"));

  RunConfig broken = ws.with_out("broken");
  broken.dataset = ws.root / "empty";
  fs::create_directories(broken.dataset);
  CHECK_THROWS_AS(cmd_train(broken, ws.log), DataError);
}

TEST_CASE("command line exit codes") {
  CHECK(run_cli("count-params") == 0);
  CHECK(run_cli("count-params dense") == 0);
  CHECK(run_cli("count-params unet9") == kExitConfig);
  CHECK(run_cli("--set train.batch_size=0 defaults") == kExitConfig);
  CHECK(run_cli("--set nope=1 defaults") == kExitConfig);
  CHECK(run_cli("--no-such-flag defaults") == kExitConfig);
  CHECK(run_cli("predict /nonexistent.ssck /nonexistent.nii --out /tmp/stripnet_cli_x") == kExitData);
  CHECK(run_cli("gradcheck 1") == 0);
  CHECK(run_cli("defaults") == 0);
}
