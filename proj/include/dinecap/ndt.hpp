// SPDX-License-Identifier: Apache-2.0
//
// Neural distribution transformer: a recurrent generator that shapes i.i.d.
// Gaussian noise (and, with feedback, the previous channel output) into
// channel inputs, followed by a power-constraint normalization layer.
#pragma once

#include <string>
#include <vector>

#include "dinecap/channel.hpp"
#include "dinecap/dine.hpp"
#include "dinecap/nn.hpp"

namespace dinecap {

struct NdtArch {
  Index noise_dim = 1;
  Index x_dim = 1;
  Index y_dim = 1;
  Index hidden = 64;
  std::vector<Index> head{64};
  bool feedback = false;
  double power = 1.0;
  double epsilon = 1e-12;
};

class NdtModel {
 public:
  struct StepCache {
    Mat h_prev;
    Lstm::StepCache cell;
    Mlp::Cache head;
  };

  NdtModel() = default;
  explicit NdtModel(const NdtArch& arch);

  void init(Rng& rng);

  /// One recurrent step. `feedback` must be non-null iff the feedback flag is
  /// set. Returns the raw (unnormalized) input sample.
  Mat step(const Mat& noise, const Mat* feedback, const Mat& h, const Mat& c, StepCache& cache) const;
  /// Backward through one step: accumulates parameter grads, updates the
  /// running state gradients in place and returns dL/d(feedback) (empty when
  /// feedback is off).
  Mat step_backward(const StepCache& cache, const Mat& d_raw, Mat& dh, Mat& dc);

  [[nodiscard]] const NdtArch& arch() const { return arch_; }
  [[nodiscard]] Index input_size() const { return arch_.noise_dim + (arch_.feedback ? arch_.y_dim : 0); }
  Lstm& lstm() { return lstm_; }
  Mlp& head() { return head_; }
  [[nodiscard]] const Lstm& lstm() const { return lstm_; }
  [[nodiscard]] const Mlp& head() const { return head_; }
  ParamRefs params();

  /// Flat little-endian parameter file: architecture header followed by
  /// named blocks (rows, cols, row-major float64 data).
  void save(const std::string& path) const;
  static NdtModel load(const std::string& path);

 private:
  NdtArch arch_;
  Lstm lstm_;
  Mlp head_;
};

struct NdtState {
  Mat h;
  Mat c;
};

/// Free-function form of NdtModel::step carrying the recurrent state.
std::pair<Mat, NdtState> ndt_step(const NdtModel& model, const Mat& noise, const Mat* feedback,
                                  const NdtState& state);

struct PowerScale {
  double mean_square = 0.0;
  double scale = 1.0;
};

/// x = raw * sqrt(P / (mean(raw^2) + eps)), mean over every entry of `raw`.
Mat power_normalize(const Mat& raw, double power, double epsilon, PowerScale* info = nullptr);
Mat power_normalize_backward(const Mat& raw, const PowerScale& info, double epsilon, const Mat& dx);

/// Closed-loop sample path NDT -> channel (-> NDT when feedback is on).
///
/// Without feedback the whole B x T raw batch is normalized at once. With
/// feedback the layer must run inside the time loop, so each step is
/// normalized over the B sequences of that step.
struct Rollout {
  bool feedback = false;
  Batch noise;
  Batch raw;
  Batch x;
  Batch y;
  std::vector<NdtModel::StepCache> ndt;
  std::vector<PowerScale> scales;
  double realized_power = 0.0;

  [[nodiscard]] Trajectories trajectories() const { return {x, y}; }
  [[nodiscard]] Index steps() const { return static_cast<Index>(x.size()); }
  [[nodiscard]] Index batch() const { return x.empty() ? 0 : x.front().rows(); }
};

Rollout rollout(const NdtModel& ndt, Channel& channel, Index batch, Index steps, Rng& noise_rng,
                Rng& channel_rng);

/// Backpropagates dL/dx and dL/dy (e.g. from DINE) through the channel
/// pathwise derivative, the feedback loop, the power layer and the NDT.
void rollout_backward(NdtModel& ndt, const Channel& channel, const Rollout& path, const Batch& dx,
                      const Batch& dy);

}  // namespace dinecap
