#include <array>

#include "stripnet/gradcheck.hpp"
#include "stripnet/random.hpp"
#include "stripnet/unet.hpp"

namespace stripnet {

namespace {
using P = Parameter<double>;

Tensor<double> random_tensor(Rng& rng, Shape4 s, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(s);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

/// Magnitudes in [0.05, 1] with random signs, away from the ReLU kink.
Tensor<double> kink_free(Rng& rng, Shape4 s) {
  Tensor<double> t(s);
  for (auto& v : t.values()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.05, 1.0);
  return t;
}

/// Distinct values spaced 0.1 apart in random order, so no window has a near tie.
Tensor<double> tie_free(Rng& rng, Shape4 s) {
  std::vector<double> v(s.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.1 * static_cast<double>(i) - 0.05 * static_cast<double>(v.size());
  rng.shuffle(v);
  return Tensor<double>(s, std::move(v));
}

Tensor<double> binary(Rng& rng, Shape4 s) {
  Tensor<double> t(s);
  for (auto& v : t.values()) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
  return t;
}

/// sum(y * r) for a fixed random r, so the upstream gradient is not uniform.
Var weighted_sum(Tape<double>& tape, Var y, const Tensor<double>& r) {
  return ops::sum(tape, ops::mul(tape, y, tape.constant(r)));
}

GradcheckReport run(const LossBuilder& loss, std::vector<P*> params, const GradcheckOptions& o) {
  return gradcheck(loss, params, o);
}
}  // namespace

std::vector<GradcheckCase> gradcheck_suite(std::uint64_t first_seed, std::size_t seeds,
                                           const GradcheckOptions& options, double network_step) {
  std::vector<GradcheckCase> out;
  for (std::uint64_t seed = first_seed; seed < first_seed + seeds; ++seed) {
    Rng rng(mix_seed(seed, 0x6763ULL));
    GradcheckOptions o = options;
    o.seed = seed;

    {
      P x("input", random_tensor(rng, {2, 3, 6, 6}));
      P w("weight", random_tensor(rng, {2, 3, 3, 3}));
      P b("bias", random_tensor(rng, {2, 1, 1, 1}));
      const auto r = random_tensor(rng, {2, 2, 6, 6});
      auto loss = [&](Tape<double>& t) {
        return weighted_sum(t, ops::conv2d(t, t.parameter(x), t.parameter(w), t.parameter(b)), r);
      };
      out.push_back({"conv2d", seed, run(loss, {&x, &w, &b}, o)});
    }
    {
      P x("input", random_tensor(rng, {2, 3, 3, 3}));
      P w("weight", random_tensor(rng, {3, 2, 2, 2}));
      P b("bias", random_tensor(rng, {2, 1, 1, 1}));
      const auto r = random_tensor(rng, {2, 2, 6, 6});
      auto loss = [&](Tape<double>& t) {
        return weighted_sum(t, ops::conv2d_transpose(t, t.parameter(x), t.parameter(w), t.parameter(b)), r);
      };
      out.push_back({"conv2d_transpose", seed, run(loss, {&x, &w, &b}, o)});
    }
    {
      P x("input", tie_free(rng, {1, 2, 4, 4}));
      const auto r = random_tensor(rng, {1, 2, 2, 2});
      auto loss = [&](Tape<double>& t) { return weighted_sum(t, ops::maxpool2(t, t.parameter(x)), r); };
      out.push_back({"maxpool2", seed, run(loss, {&x}, o)});
    }
    {
      P a("a", random_tensor(rng, {1, 2, 3, 3}));
      P c("b", random_tensor(rng, {1, 3, 3, 3}));
      const auto r = random_tensor(rng, {1, 5, 3, 3});
      auto loss = [&](Tape<double>& t) {
        const std::array<Var, 2> parts{t.parameter(a), t.parameter(c)};
        return weighted_sum(t, ops::concat(t, std::span<const Var>(parts)), r);
      };
      out.push_back({"concat", seed, run(loss, {&a, &c}, o)});
    }
    {
      P x("x", kink_free(rng, {1, 2, 4, 4}));
      const auto r = random_tensor(rng, {1, 2, 4, 4});
      auto loss = [&](Tape<double>& t) { return weighted_sum(t, ops::relu(t, t.parameter(x)), r); };
      out.push_back({"relu", seed, run(loss, {&x}, o)});
    }
    {
      P x("x", random_tensor(rng, {1, 2, 4, 4}, -4.0, 4.0));
      const auto r = random_tensor(rng, {1, 2, 4, 4});
      auto loss = [&](Tape<double>& t) { return weighted_sum(t, ops::sigmoid(t, t.parameter(x)), r); };
      out.push_back({"sigmoid", seed, run(loss, {&x}, o)});
    }
    {
      P p("prob", random_tensor(rng, {1, 1, 4, 4}, 0.15, 0.85));
      const auto y = binary(rng, {1, 1, 4, 4});
      auto loss = [&](Tape<double>& t) { return ops::bce(t, t.parameter(p), t.constant(y)); };
      out.push_back({"bce", seed, run(loss, {&p}, o)});
    }
    {
      P z("logits", random_tensor(rng, {1, 1, 4, 4}, -5.0, 5.0));
      const auto y = binary(rng, {1, 1, 4, 4});
      auto loss = [&](Tape<double>& t) { return ops::bce_with_logits(t, t.parameter(z), t.constant(y)); };
      out.push_back({"bce_with_logits", seed, run(loss, {&z}, o)});
    }
    for (ArchitectureKind kind : {ArchitectureKind::Vanilla, ArchitectureKind::Residual, ArchitectureKind::Dense}) {
      UNetConfig cfg;
      cfg.base_filters = 2;
      cfg.depth = 2;
      cfg.height = 16;
      cfg.width = 16;
      UNetModel<double> model(kind, cfg, seed);
      const auto x = random_tensor(rng, {1, 1, 16, 16});
      const auto y = binary(rng, {1, 1, 16, 16});
      // Nonzero biases keep pre-activations off the ReLU kink where a
      // receptive field is all zero.
      std::vector<P*> params;
      for (auto& p : model.parameters()) {
        params.push_back(&p);
        if (p.name.ends_with(".bias")) p.value = random_tensor(rng, p.value.shape(), -0.1, 0.1);
      }
      auto loss = [&](Tape<double>& t) {
        return ops::bce_with_logits(t, model.forward_logits(t, t.constant(x)), t.constant(y));
      };
      GradcheckOptions on = o;
      on.step = network_step;
      out.push_back({"unet_" + std::string(to_string(kind)), seed, run(loss, params, on)});
    }
  }
  return out;
}

}  // namespace stripnet
