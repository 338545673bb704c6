#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace ibpa {

struct AdamOptions {
  double learning_rate = 0.5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  friend bool operator==(const AdamOptions&, const AdamOptions&) = default;
};

// Bias-corrected first/second moment estimates, one pair per parameter.
struct AdamState {
  AdamOptions options;
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;

  AdamState() = default;
  AdamState(AdamOptions opts, std::size_t parameter_count)
      : options(opts), m(parameter_count, 0.0), v(parameter_count, 0.0) {}

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

// Updates params in place and advances the state by one step.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

}  // namespace ibpa
