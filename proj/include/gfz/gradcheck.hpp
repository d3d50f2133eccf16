#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "gfz/autodiff.hpp"
#include "gfz/rng.hpp"

namespace gfz {

struct GradCheckOptions {
  double step = 1e-3;
  double tolerance = 1e-3;
  /// Denominator floor of the relative error, so that two near-zero values compare equal.
  double abs_floor = 1e-6;
  /// Above this many parameter elements a random subsample of this size is checked.
  std::size_t max_elements = 10000;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t failures = 0;
  bool passed = true;
};

/// Compares backpropagated gradients of `program` (Tape& -> scalar Var) with
/// central differences (f(w+h) - f(w-h)) / 2h for every element of `params`.
template <typename Scalar, typename Program>
GradCheckReport check_gradients(Program&& program, const std::vector<Tensor<Scalar>*>& params,
                                const GradCheckOptions& opts = {}) {
  if (!(opts.step > 0.0)) throw ConfigError("check_gradients: step must be > 0");
  if (!(opts.tolerance > 0.0)) throw ConfigError("check_gradients: tolerance must be > 0");

  for (auto* p : params) {
    p->drop_grad();
    p->ensure_grad();
  }
  {
    Tape<Scalar> tape;
    Var<Scalar> out = program(tape);
    tape.backward(out);
  }

  struct Element {
    std::size_t param, index;
  };
  std::vector<Element> elements;
  for (std::size_t p = 0; p < params.size(); ++p)
    for (std::size_t i = 0; i < params[p]->size(); ++i) elements.push_back({p, i});
  if (elements.size() > opts.max_elements) {
    Rng rng(opts.seed, "gradcheck");
    rng.shuffle(elements.begin(), elements.end());
    elements.resize(opts.max_elements);
  }

  auto evaluate = [&]() -> double {
    Tape<Scalar> tape;
    return static_cast<double>(program(tape).value()[0]);
  };

  GradCheckReport report;
  for (const auto& e : elements) {
    Tensor<Scalar>& t = *params[e.param];
    const Scalar original = t[e.index];
    t[e.index] = static_cast<Scalar>(original + opts.step);
    const double plus = evaluate();
    t[e.index] = static_cast<Scalar>(original - opts.step);
    const double minus = evaluate();
    t[e.index] = original;

    ++report.checked;
    const double analytic = t.grad()[e.index];
    double rel = std::numeric_limits<double>::infinity();
    if (std::isfinite(plus) && std::isfinite(minus)) {
      const double numeric = (plus - minus) / (2.0 * opts.step);
      rel = std::abs(numeric - analytic) /
            std::max({std::abs(numeric), std::abs(analytic), opts.abs_floor});
    }
    report.max_relative_error = std::max(report.max_relative_error, rel);
    if (!(rel < opts.tolerance)) ++report.failures;
  }
  report.passed = report.failures == 0;
  return report;
}

}  // namespace gfz
