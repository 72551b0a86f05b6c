// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>

#include "dinecap/nn.hpp"
#include "dinecap/rng.hpp"

namespace dinecap {

enum class ChannelFamily { kAwgn, kMa1 };

/// Y_i = X_i + Z_i with Z i.i.d. N(0, sigma2) (AWGN) or
/// Z_i = alpha U_{i-1} + U_i, U i.i.d. N(0, 1) (MA(1)).
struct ChannelSpec {
  ChannelFamily family = ChannelFamily::kAwgn;
  double sigma2 = 1.0;
  double alpha = 0.0;

  static ChannelSpec awgn(double sigma2 = 1.0) { return {ChannelFamily::kAwgn, sigma2, 0.0}; }
  static ChannelSpec ma1(double alpha) { return {ChannelFamily::kMa1, 1.0, alpha}; }

  void validate() const;
  [[nodiscard]] std::string family_name() const;
};

ChannelFamily parse_family(const std::string& name);

/// Simulated channel contract: per-sequence state reset, one step for a batch
/// of sequences, and the pathwise derivative used to push gradients from the
/// output back to the input at the same step.
class Channel {
 public:
  virtual ~Channel() = default;

  virtual void reset(Index batch) = 0;
  /// Consumes exactly the same number of draws from `rng` regardless of x.
  virtual Mat step(const Mat& x, Rng& rng) = 0;

  [[nodiscard]] virtual bool has_pathwise_derivative() const { return true; }
  /// dL/dx_i contribution from dL/dy_i; outputs do not depend on past inputs.
  [[nodiscard]] virtual Mat pathwise_backward(const Mat& dy) const { return dy; }
};

class AwgnChannel final : public Channel {
 public:
  explicit AwgnChannel(double sigma2);
  void reset(Index batch) override;
  Mat step(const Mat& x, Rng& rng) override;

 private:
  double sigma_;
};

class Ma1Channel final : public Channel {
 public:
  explicit Ma1Channel(double alpha);
  void reset(Index batch) override;
  Mat step(const Mat& x, Rng& rng) override;
  [[nodiscard]] const Mat& previous_innovation() const { return u_prev_; }

 private:
  double alpha_;
  Mat u_prev_;
};

std::unique_ptr<Channel> make_channel(const ChannelSpec& spec);

}  // namespace dinecap
