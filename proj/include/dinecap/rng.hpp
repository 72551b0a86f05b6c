// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include <Eigen/Dense>

namespace dinecap {

/// Seedable 64-bit generator with split-by-label streams.
///
/// A stream is identified by a 64-bit key derived from (seed, label path).
/// `split` derives a child key from the parent's key, never from the engine
/// state, so the child stream does not depend on how many numbers the parent
/// has already produced.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::string_view label = "root");

  [[nodiscard]] Rng split(std::string_view label) const;
  [[nodiscard]] std::uint64_t key() const { return key_; }

  double normal();
  double uniform(double lo, double hi);
  std::size_t index(std::size_t n);

  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols);

 private:
  struct FromKey {};
  Rng(FromKey, std::uint64_t key);

  std::uint64_t key_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t mix_label(std::uint64_t key, std::string_view label);

}  // namespace dinecap
