#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "stripnet/adam.hpp"
#include "stripnet/errors.hpp"
#include "stripnet/loss.hpp"
#include "stripnet/phantom.hpp"
#include "stripnet/train.hpp"

using namespace stripnet;

namespace {
Tensor<double> row(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor<double>({1, 1, 1, n}, std::move(v));
}

InMemorySlices phantom_slices(std::size_t scans, std::size_t per_scan, std::size_t size) {
  InMemorySlices data(size, size);
  for (std::size_t s = 0; s < scans; ++s) {
    for (std::size_t k = 0; k < per_scan; ++k) {
      auto p = make_phantom_slice(size, size, s * 100 + k);
      std::vector<float> img(p.image.size()), mask(p.mask.size());
      for (std::size_t i = 0; i < img.size(); ++i) {
        img[i] = static_cast<float>(p.image[i] / 500.0 - 1.0);
        mask[i] = static_cast<float>(p.mask[i]);
      }
      data.add("scan" + std::to_string(s), img, mask);
    }
  }
  return data;
}

UNetConfig small_net(std::size_t size) {
  UNetConfig c;
  c.base_filters = 2;
  c.depth = 2;
  c.height = c.width = size;
  return c;
}
}  // namespace

TEST_CASE("bce examples") {
  CHECK(bce_loss(row({0.5, 0.5, 0.5}), row({1, 0, 1})) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  const double perfect = bce_loss(row({1, 0, 1, 0}), row({1, 0, 1, 0}));
  CHECK(perfect <= -std::log(1 - 1e-7) * (1 + 1e-9));
  CHECK(perfect == doctest::Approx(1.0000000e-7).epsilon(1e-6));
  CHECK(bce_loss(row({0.9, 0.1}), row({1, 0})) == doctest::Approx(0.105360516).epsilon(1e-8));
  CHECK_THROWS_AS(bce_loss(row({0.5}), row({1, 0})), ContractViolation);
  CHECK(std::isfinite(bce_loss(row({0.0, 1.0}), row({1, 0}))));
}

TEST_CASE("accuracy and dice examples") {
  CHECK(pixel_accuracy(row({1, 0, 1}), row({1, 0, 1})) == 1.0);
  CHECK(pixel_accuracy(row({0, 1, 0}), row({1, 0, 1})) == 0.0);
  CHECK(pixel_accuracy(row({0.6, 0.4, 0.7, 0.2}), row({1, 1, 0, 0})) == 0.5);

  const std::vector<double> a{1, 1, 0, 0}, b{1, 1, 0, 0}, c{0, 0, 1, 1}, d{1, 0, 1, 0}, e{0, 0, 0, 0};
  CHECK(dice_coefficient(a, b) == 1.0);
  CHECK(dice_coefficient(a, c) == 0.0);
  CHECK(dice_coefficient(a, d) == 0.5);
  CHECK(dice_coefficient(e, e) == 1.0);

  MetricTotals t;
  const std::vector<double> p{0.6, 0.4}, y{1, 1};
  const std::vector<double> p2{0.7, 0.2}, y2{0, 0};
  t.add(p, y);
  t.add(p2, y2);
  CHECK(t.accuracy() == 0.5);
  CHECK(t.count == 4);
}

TEST_CASE("effective learning rate") {
  AdamConfig cfg;
  CHECK(effective_lr(0, cfg) == 1e-5);
  const double expect = 1e-5 / (1 + 1.99e-7);
  CHECK(std::abs(effective_lr(1, cfg) - expect) <= 1e-15 * expect);
  CHECK(effective_lr(1, cfg) == doctest::Approx(9.99999801e-6).epsilon(1e-9));
  double prev = effective_lr(0, cfg);
  for (std::uint64_t t = 1; t < 2000; t += 37) {
    CHECK(effective_lr(t, cfg) <= prev);
    prev = effective_lr(t, cfg);
  }
  cfg.decay = 0;
  CHECK(effective_lr(123456, cfg) == 1e-5);
}

TEST_CASE("adam step") {
  AdamConfig cfg;
  cfg.decay = 0;

  SUBCASE("scalar hand example") {
    std::vector<Parameter<double>> ps{{"theta", Tensor<double>({1, 1, 1, 1}, 1.0)}};
    ps[0].grad[0] = 1.0;
    auto st = make_adam_state<double>(ps);
    adam_step<double>(ps, st, cfg);
    CHECK(st.t == 1);
    CHECK(std::abs(ps[0].value[0] - (1.0 - 1e-5 * (1.0 / (1.0 + 1e-8)))) <= 1e-12);
    CHECK(std::abs(ps[0].value[0] - 0.99999000) <= 1e-12);
  }
  SUBCASE("zero gradient leaves parameters") {
    std::vector<Parameter<float>> ps{{"w", Tensor<float>({1, 2, 3, 3}, 0.25f)}};
    auto st = make_adam_state<float>(ps);
    adam_step<float>(ps, st, cfg);
    for (float v : ps[0].value.values()) CHECK(v == 0.25f);
  }
  SUBCASE("identical parameters move identically") {
    std::vector<Parameter<double>> ps{{"a", Tensor<double>({1, 1, 1, 3}, 0.5)}, {"b", Tensor<double>({1, 1, 1, 3}, 0.5)}};
    ps[0].grad = ps[1].grad = row({0.3, -2.0, 1e-3});
    auto st = make_adam_state<double>(ps);
    for (int step = 0; step < 5; ++step) adam_step<double>(ps, st, cfg);
    CHECK(ps[0].value.storage() == ps[1].value.storage());
  }
  SUBCASE("constant gradient step is bounded by lr") {
    std::vector<Parameter<double>> ps{{"w", Tensor<double>({1, 1, 1, 1}, 0.0)}};
    auto st = make_adam_state<double>(ps);
    for (int step = 0; step < 2000; ++step) {
      ps[0].grad[0] = 3.7;
      const double before = ps[0].value[0];
      adam_step<double>(ps, st, cfg);
      CHECK(std::abs(ps[0].value[0] - before) <= cfg.learning_rate * 1.0000001);
      CHECK(st.v[0][0] >= 0.0);
    }
  }
  SUBCASE("non-finite gradient aborts without changes") {
    std::vector<Parameter<float>> ps{{"first", Tensor<float>({1, 1, 1, 2}, 1.0f)}, {"broken", Tensor<float>({1, 1, 1, 2}, 2.0f)}};
    ps[0].grad[0] = 1.0f;
    ps[1].grad[1] = std::numeric_limits<float>::quiet_NaN();
    auto st = make_adam_state<float>(ps);
    try {
      adam_step<float>(ps, st, cfg);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("broken") != std::string::npos);
    }
    CHECK(ps[0].value[0] == 1.0f);
    CHECK(st.t == 0);
  }
  SUBCASE("one step decreases a smooth loss for small learning rates") {
    for (double lr : {1e-1, 1e-2, 1e-3, 1e-4, 1e-5}) {
      AdamConfig c = cfg;
      c.learning_rate = lr;
      std::vector<Parameter<double>> ps{{"w", Tensor<double>({1, 1, 2, 2}, {0.9, -1.2, 0.3, 2.0})}};
      auto st = make_adam_state<double>(ps);
      auto loss = [&] {
        Tape<double> t;
        Var w = t.parameter(ps[0]);
        Var l = ops::sum(t, ops::mul(t, w, w));
        ps[0].zero_grad();
        t.backward(l);
        return t.value(l).item();
      };
      const double before = loss();
      adam_step<double>(ps, st, c);
      CHECK(loss() < before);
    }
  }
}

TEST_CASE("early stopping traces") {
  {
    EarlyStopper s(2);
    CHECK(s.update(0.5) == EarlyStopper::Decision::Continue);
    CHECK(s.update(0.4) == EarlyStopper::Decision::Continue);
    CHECK(s.update(0.41) == EarlyStopper::Decision::Continue);
    CHECK(s.update(0.42) == EarlyStopper::Decision::Stop);
    CHECK(s.epochs_seen() == 4);
    CHECK(s.best_epoch() == 2);
  }
  {
    EarlyStopper s(2);
    for (int e = 0; e < 100; ++e) CHECK(s.update(1.0 - 0.001 * e) == EarlyStopper::Decision::Continue);
  }
  {
    EarlyStopper s(2);
    CHECK(s.update(0.5) == EarlyStopper::Decision::Continue);
    CHECK(s.update(0.5) == EarlyStopper::Decision::Continue);
    CHECK(s.update(0.5) == EarlyStopper::Decision::Stop);
  }
  {
    EarlyStopper s(2);
    s.update(0.5);
    CHECK(s.update(std::numeric_limits<double>::quiet_NaN()) == EarlyStopper::Decision::Continue);
    CHECK(s.epochs_since_improvement() == 1);
    CHECK(s.update(0.3) == EarlyStopper::Decision::Continue);
    CHECK(s.best() == 0.3);
  }
  {
    // Never runs past best_epoch + patience.
    const std::vector<double> seq{0.9, 0.7, 0.8, 0.6, 0.65, 0.64, 0.3, 0.31, 0.29, 0.5, 0.5};
    EarlyStopper s(2);
    std::size_t ran = 0;
    for (double v : seq) {
      ++ran;
      CHECK(s.epochs_since_improvement() <= 2);
      if (s.update(v) == EarlyStopper::Decision::Stop) break;
    }
    CHECK(ran <= s.best_epoch() + 2);
    CHECK(ran == 6);
  }
}

TEST_CASE("curves csv") {
  std::vector<EpochRecord> recs;
  for (std::size_t e = 1; e <= 10; ++e) {
    recs.push_back({e, 0.1 / static_cast<double>(e), 0.9, 1.0 / 3.0, 0.875 + 1e-17, effective_lr(e * 7, {}), 1.5});
  }
  const std::string text = format_curves(recs);
  CHECK(std::count(text.begin(), text.end(), '\n') == 11);
  CHECK(text.rfind("epoch,train_loss,train_acc,val_loss,val_acc,lr\n", 0) == 0);
  const std::string single = format_curves({recs[0]});
  CHECK(std::count(single.begin(), single.end(), '\n') == 2);
  const auto back = parse_curves(text);
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].epoch == recs[i].epoch);
    CHECK(back[i].train_loss == recs[i].train_loss);
    CHECK(back[i].train_accuracy == recs[i].train_accuracy);
    CHECK(back[i].val_loss == recs[i].val_loss);
    CHECK(back[i].val_accuracy == recs[i].val_accuracy);
    CHECK(back[i].learning_rate == recs[i].learning_rate);
  }
  CHECK_THROWS_AS(emit_curves(recs, "/nonexistent-dir/curves.csv"), DataError);
  CHECK_THROWS_AS(emit_curves({}, std::filesystem::temp_directory_path() / "c.csv"), ContractViolation);
}

TEST_CASE("holdout split is disjoint by scan") {
  auto data = phantom_slices(10, 3, 16);
  const auto split = split_by_group(data, 0.1, 4);
  CHECK(split.val_groups.size() == 1);
  CHECK(split.train_groups.size() == 9);
  CHECK(split.train_indices.size() + split.val_indices.size() == 30);
  for (std::size_t i : split.train_indices) {
    CHECK(std::find(split.val_groups.begin(), split.val_groups.end(), data.group(i)) == split.val_groups.end());
  }
  CHECK(split_by_group(data, 0.1, 4).val_groups == split.val_groups);
  bool differs = false;
  for (std::uint64_t s = 5; s < 15 && !differs; ++s) differs = split_by_group(data, 0.1, s).val_groups != split.val_groups;
  CHECK(differs);

  auto one = phantom_slices(1, 3, 16);
  CHECK_THROWS_AS(split_by_group(one, 0.1, 0), DataError);
}

TEST_CASE("fit contract") {
  auto data = phantom_slices(4, 2, 16);
  TrainingConfig cfg;
  cfg.adam.learning_rate = 1e-3;
  cfg.batch_size = 2;
  cfg.max_epochs = 3;
  cfg.val_fraction = 0.25;
  cfg.seed = 7;

  UNetModel<float> m1(ArchitectureKind::Residual, small_net(16), 7);
  UNetModel<float> m2(ArchitectureKind::Residual, small_net(16), 7);
  const auto r1 = fit(m1, data, cfg);
  const auto r2 = fit(m2, data, cfg);
  CHECK(format_curves(r1.records) == format_curves(r2.records));
  for (std::size_t i = 0; i < m1.parameters().size(); ++i) {
    CHECK(m1.parameters()[i].value.storage() == m2.parameters()[i].value.storage());
  }
  CHECK(r1.records.size() <= 3);
  CHECK(r1.updates == r1.records.size() * 3);
  for (const auto& g : r1.split.val_groups) CHECK(r1.trained_groups.count(g) == 0);
  for (const auto& r : r1.records) {
    CHECK(r.train_loss >= 0);
    CHECK(r.val_loss >= 0);
    CHECK(r.train_accuracy >= 0);
    CHECK(r.train_accuracy <= 1);
    CHECK(r.val_accuracy >= 0);
    CHECK(r.val_accuracy <= 1);
  }

  TrainingConfig big = cfg;
  big.batch_size = 7;
  UNetModel<float> m3(ArchitectureKind::Vanilla, small_net(16), 0);
  CHECK_THROWS_AS(fit(m3, data, big), DataError);
  InMemorySlices empty(16, 16);
  CHECK_THROWS_AS(fit(m3, empty, cfg), DataError);
}

TEST_CASE("fit stops on patience before max_epochs") {
  auto data = phantom_slices(4, 2, 16);
  TrainingConfig cfg;
  // A huge learning rate makes validation loss stall or rise quickly.
  cfg.adam.learning_rate = 0.5;
  cfg.batch_size = 2;
  cfg.max_epochs = 30;
  cfg.val_fraction = 0.25;
  cfg.patience = 2;
  UNetModel<float> m(ArchitectureKind::Vanilla, small_net(16), 1);
  const auto r = fit(m, data, cfg);
  CHECK(r.stopped_early);
  CHECK(r.records.size() < 30);
}
