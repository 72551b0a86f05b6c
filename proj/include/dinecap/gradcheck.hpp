// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "dinecap/nn.hpp"

namespace dinecap {

struct GradSuiteOptions {
  Index hidden = 4;
  Index steps = 5;
  Index batch = 3;
  std::uint64_t seed = 7;
  double step = 1e-5;
};

/// Finite-difference suites over small random instances.
///  - "nn":      dense layer, MLP and an LSTM unroll (parameters and inputs)
///  - "dine":    modified unroll + both DV objectives, and data gradients
///  - "ndt":     NDT unroll with the power layer, with and without feedback
///  - "rollout": NDT -> channel -> DINE estimate, AWGN and MA(1)-with-feedback
/// Throws ConfigError for an unknown selector.
GradCheckReport run_grad_suite(const std::string& selector, const GradSuiteOptions& options);

}  // namespace dinecap
