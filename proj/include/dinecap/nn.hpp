// SPDX-License-Identifier: Apache-2.0
//
// Numeric substrate: parameter blocks, dense/MLP/LSTM layers with explicit
// reverse-mode gradients, Adam (ascent convention) and finite-difference
// gradient checking.
#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dinecap/rng.hpp"

namespace dinecap {

using Index = Eigen::Index;
using Mat = Eigen::MatrixXd;

/// Time-major batch of sequences: element t is a (batch x dim) matrix.
using Batch = std::vector<Mat>;

/// A named trainable tensor and its accumulated gradient.
struct ParamBlock {
  ParamBlock() = default;
  ParamBlock(std::string block_name, Index rows, Index cols)
      : name(std::move(block_name)), value(Mat::Zero(rows, cols)), grad(Mat::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }

  std::string name;
  Mat value;
  Mat grad;
};

using ParamRefs = std::vector<ParamBlock*>;

void zero_grads(const ParamRefs& params);
/// Throws NumericError naming the first block holding a NaN/Inf value.
void require_finite(const Mat& m, const std::string& what);

enum class Activation { kIdentity, kTanh, kRelu };

/// y = act(x W + b) over a batch of row vectors.
class Dense {
 public:
  Dense() = default;
  Dense(const std::string& name, Index in, Index out, Activation act);

  /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for W, zero bias.
  void init(Rng& rng);

  [[nodiscard]] Mat forward(const Mat& x) const;
  /// Accumulates dW, db from the cached input/output; returns dL/dx.
  Mat backward(const Mat& x, const Mat& y, const Mat& dy);

  [[nodiscard]] Index in() const { return w_.value.rows(); }
  [[nodiscard]] Index out() const { return w_.value.cols(); }
  [[nodiscard]] Activation activation() const { return act_; }

  ParamBlock& weight() { return w_; }
  ParamBlock& bias() { return b_; }
  [[nodiscard]] const ParamBlock& weight() const { return w_; }
  [[nodiscard]] const ParamBlock& bias() const { return b_; }
  void collect(ParamRefs& out) { out.push_back(&w_); out.push_back(&b_); }

 private:
  ParamBlock w_;
  ParamBlock b_;
  Activation act_ = Activation::kIdentity;
};

/// Stack of tanh dense layers followed by a linear output layer.
class Mlp {
 public:
  struct Cache {
    std::vector<Mat> acts;  // acts[0] is the input, acts[k] the output of layer k
  };

  Mlp() = default;
  Mlp(const std::string& name, Index in, const std::vector<Index>& hidden, Index out);

  void init(Rng& rng);
  Mat forward(const Mat& x, Cache* cache) const;
  Mat backward(const Cache& cache, const Mat& dout);
  void collect(ParamRefs& out);

  [[nodiscard]] const std::vector<Dense>& layers() const { return layers_; }
  std::vector<Dense>& layers() { return layers_; }

 private:
  std::vector<Dense> layers_;
};

/// LSTM cell. Gate columns are laid out [input | forget | output | candidate].
///
/// The pre-activation is split into an input part (x Wx) and a recurrent
/// part (h Wh + b) so that several inputs can share one previous state
/// without recomputing h Wh.
class Lstm {
 public:
  struct StepCache {
    Mat x;
    Mat gates;  // activated gates, batch x 4H
    Mat c_prev;
    Mat c;
    Mat tanh_c;
    Mat h;
  };

  Lstm() = default;
  Lstm(const std::string& name, Index input, Index hidden);

  /// Uniform +-1/sqrt(fan_in) weights; zero biases except the forget gate.
  void init(Rng& rng, double forget_bias = 1.0);

  [[nodiscard]] Index input_size() const { return wx_.value.rows(); }
  [[nodiscard]] Index hidden_size() const { return wh_.value.rows(); }

  /// h_prev Wh + b, one row per batch element.
  [[nodiscard]] Mat recurrent(const Mat& h_prev) const;
  void step(const Mat& x, const Mat& recurrent, const Mat& c_prev, StepCache& out) const;
  /// Single cell application F(x, (h, c)) -> (h', c').
  [[nodiscard]] std::pair<Mat, Mat> cell(const Mat& x, const Mat& h, const Mat& c) const;

  /// Backward through the gate nonlinearities of one step. `dc_prev`
  /// receives dL/dc_prev; returns dL/d(pre-activation).
  [[nodiscard]] Mat step_backward(const StepCache& cache, const Mat& dh, const Mat& dc,
                                  Mat& dc_prev) const;
  /// Accumulates dWx and returns dL/dx for one branch.
  Mat input_backward(const Mat& x, const Mat& dpre);
  /// Accumulates dWh, db for the summed pre-activation gradient of all
  /// branches sharing h_prev; returns dL/dh_prev.
  Mat recurrent_backward(const Mat& h_prev, const Mat& dpre_sum);

  ParamBlock& wx() { return wx_; }
  ParamBlock& wh() { return wh_; }
  ParamBlock& bias() { return b_; }
  [[nodiscard]] const ParamBlock& wx() const { return wx_; }
  [[nodiscard]] const ParamBlock& wh() const { return wh_; }
  [[nodiscard]] const ParamBlock& bias() const { return b_; }
  void collect(ParamRefs& out) {
    out.push_back(&wx_);
    out.push_back(&wh_);
    out.push_back(&b_);
  }

 private:
  ParamBlock wx_;
  ParamBlock wh_;
  ParamBlock b_;
};

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Global gradient-norm clip; <= 0 disables clipping.
  double clip_norm = 1.0;
};

/// Adam with bias correction, stepping in the direction of the gradient
/// (ascent on the objective whose gradient is stored in the blocks).
class Adam {
 public:
  Adam() = default;
  Adam(ParamRefs params, AdamOptions options);

  /// Applies one update. Returns the global gradient norm before clipping.
  /// Throws NumericError naming the block if any gradient is non-finite.
  double step();

  [[nodiscard]] long steps() const { return steps_; }
  [[nodiscard]] const AdamOptions& options() const { return options_; }
  void set_learning_rate(double lr) { options_.learning_rate = lr; }

 private:
  ParamRefs params_;
  AdamOptions options_;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
  long steps_ = 0;
};

struct BlockCheck {
  std::string name;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<BlockCheck> blocks;
  [[nodiscard]] double worst() const;
  [[nodiscard]] bool passed(double tolerance) const { return worst() < tolerance; }
};

/// Compares the gradients already stored in `params` against central
/// differences of `objective`. The relative error of a block is the largest
/// elementwise deviation divided by the block's largest gradient magnitude
/// (floored at 1e-6).
GradCheckReport grad_check(const std::function<double()>& objective, const ParamRefs& params,
                           double step = 1e-5);

/// Central-difference check of an analytic gradient with respect to an
/// arbitrary input matrix (not a parameter).
BlockCheck grad_check_input(const std::function<double()>& objective, Mat& input,
                            const Mat& analytic, const std::string& name, double step = 1e-5);

}  // namespace dinecap
