// SPDX-License-Identifier: Apache-2.0
#include "dinecap/channel.hpp"

#include <cmath>

#include "dinecap/errors.hpp"

namespace dinecap {

void ChannelSpec::validate() const {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw ConfigError("channel noise variance must be > 0");
  if (!std::isfinite(alpha)) throw ConfigError("MA coefficient must be finite");
  if (family == ChannelFamily::kAwgn && alpha != 0.0) throw ConfigError("alpha applies to the ma1 family only");
  if (family == ChannelFamily::kMa1 && sigma2 != 1.0)
    throw ConfigError("ma1 innovations have unit variance; sigma2 must be 1");
}

std::string ChannelSpec::family_name() const { return family == ChannelFamily::kAwgn ? "awgn" : "ma1"; }

ChannelFamily parse_family(const std::string& name) {
  if (name == "awgn") return ChannelFamily::kAwgn;
  if (name == "ma1") return ChannelFamily::kMa1;
  throw ConfigError("unknown channel family '" + name + "' (expected awgn or ma1)");
}

AwgnChannel::AwgnChannel(double sigma2) : sigma_(std::sqrt(sigma2)) {}

void AwgnChannel::reset(Index) {}

Mat AwgnChannel::step(const Mat& x, Rng& rng) {
  Mat z = rng.normal_matrix(x.rows(), x.cols());
  return x + sigma_ * z;
}

Ma1Channel::Ma1Channel(double alpha) : alpha_(alpha) {}

void Ma1Channel::reset(Index batch) { u_prev_ = Mat::Zero(batch, 1); }

Mat Ma1Channel::step(const Mat& x, Rng& rng) {
  if (u_prev_.rows() != x.rows() || u_prev_.cols() != x.cols()) {
    if (u_prev_.size() != 0) throw DimensionError("Ma1Channel: batch changed without reset");
    reset(x.rows());
  }
  Mat u = rng.normal_matrix(x.rows(), x.cols());
  Mat y = x + (alpha_ * u_prev_ + u);
  u_prev_ = std::move(u);
  return y;
}

std::unique_ptr<Channel> make_channel(const ChannelSpec& spec) {
  spec.validate();
  if (spec.family == ChannelFamily::kAwgn) return std::make_unique<AwgnChannel>(spec.sigma2);
  return std::make_unique<Ma1Channel>(spec.alpha);
}

}  // namespace dinecap
