#include "stripnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "stripnet/errors.hpp"
#include "stripnet/random.hpp"

namespace stripnet {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

namespace {
double evaluate(const LossBuilder& loss) {
  Tape<double> tape(false);
  return tape.value(loss(tape)).item();
}
}  // namespace

GradcheckReport gradcheck(const LossBuilder& loss, std::span<Parameter<double>* const> params,
                          const GradcheckOptions& options) {
  if (params.empty() || options.samples_per_tensor == 0) {
    throw ContractViolation("gradcheck: degenerate request, nothing to sample");
  }
  if (!(options.step > 0.0)) throw ContractViolation("gradcheck: step must be positive");

  for (Parameter<double>* p : params) p->zero_grad();
  {
    Tape<double> tape;
    tape.backward(loss(tape));
  }

  Rng rng(options.seed);
  GradcheckReport report;
  for (Parameter<double>* p : params) {
    const std::size_t numel = p->value.numel();
    std::vector<std::size_t> coords(numel);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    rng.shuffle(coords);
    coords.resize(std::min(numel, options.samples_per_tensor));
    for (std::size_t idx : coords) {
      const double saved = p->value[idx];
      p->value[idx] = saved + options.step;
      const double up = evaluate(loss);
      p->value[idx] = saved - options.step;
      const double down = evaluate(loss);
      p->value[idx] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      double err = relative_error(p->grad[idx], numeric);
      if (std::isnan(err)) err = HUGE_VAL;
      ++report.checked;
      if (report.worst.empty() || err > report.max_rel_err) {
        report.max_rel_err = err;
        report.worst = p->name + "[" + std::to_string(idx) + "]";
      }
    }
  }
  report.pass = report.max_rel_err < options.tol;
  return report;
}

}  // namespace stripnet
