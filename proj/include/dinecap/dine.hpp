// SPDX-License-Identifier: Apache-2.0
//
// Directed-information rate estimator built from two Donsker-Varadhan
// potentials. Each potential is an LSTM whose recursion is driven by the true
// samples only; at every step a second "reference" branch evaluates the same
// cell on a uniform reference draw from the same previous state.
#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dinecap/nn.hpp"
#include "dinecap/rng.hpp"

namespace dinecap {

/// Paired input/output sequences, time-major (see Batch).
struct Trajectories {
  Batch x;
  Batch y;

  [[nodiscard]] Index steps() const { return static_cast<Index>(y.size()); }
  [[nodiscard]] Index batch() const { return y.empty() ? 0 : y.front().rows(); }
};

/// Axis-aligned support box of the uniform reference measure.
struct ReferenceBox {
  std::vector<double> lo;
  std::vector<double> hi;

  [[nodiscard]] Index dim() const { return static_cast<Index>(lo.size()); }
  [[nodiscard]] bool empty() const { return lo.empty(); }
  [[nodiscard]] double log_volume() const;
  /// Same center, every side length multiplied by `factor`.
  [[nodiscard]] ReferenceBox scaled(double factor) const;
  [[nodiscard]] bool contains(const Batch& y) const;
  /// Grow to the union of both boxes.
  void absorb(const ReferenceBox& other);
};

/// Per-dimension [min, max] of `y`, widened by margin * range on each side;
/// a dimension with zero range is widened by `floor` instead.
ReferenceBox fit_reference(const Batch& y, double margin, double floor);

/// i.i.d. uniform draws with the same (steps x batch) layout as the data.
Batch sample_reference(const ReferenceBox& box, Index batch, Index steps, Rng& rng);

/// Per-step true-path states s_i and reference-branch states s~_i.
struct DualStateStream {
  std::vector<Lstm::StepCache> real;
  std::vector<Lstm::StepCache> reference;
  std::vector<Mat> h_prev;  // state entering step i, shared by both branches
};

/// s_i = F(d_i, s_{i-1}), s~_i = F(r_i, s_{i-1}) from a zero initial state.
DualStateStream modified_unroll(const Lstm& lstm, const Batch& driver, const Batch& reference);

/// BPTT through a DualStateStream. `dh_real[t]`/`dh_ref[t]` are the external
/// gradients on h_t and h~_t. Accumulates LSTM grads; optionally returns
/// gradients on both input sequences.
void modified_unroll_backward(Lstm& lstm, const DualStateStream& states, const Batch& dh_real,
                              const Batch& dh_ref, Batch* d_driver, Batch* d_reference);

/// One DV potential: modified LSTM followed by a dense head with scalar output.
class Potential {
 public:
  struct Trace {
    DualStateStream states;
    Mlp::Cache head_real;
    Mlp::Cache head_ref;
    Mat t_real;  // (steps*batch) x 1, row t*batch + b
    Mat t_ref;
  };

  Potential() = default;
  Potential(const std::string& name, Index input_dim, Index hidden, const std::vector<Index>& head);

  void init(Rng& rng);
  void forward(const Batch& driver, const Batch& reference, Trace& trace) const;
  void backward(const Trace& trace, const Mat& dt_real, const Mat& dt_ref, Batch* d_driver,
                Batch* d_reference);

  [[nodiscard]] Index input_dim() const { return lstm_.input_size(); }
  [[nodiscard]] Index hidden() const { return lstm_.hidden_size(); }
  Lstm& lstm() { return lstm_; }
  Mlp& head() { return head_; }
  [[nodiscard]] const Lstm& lstm() const { return lstm_; }
  [[nodiscard]] const Mlp& head() const { return head_; }
  ParamRefs params();

 private:
  Lstm lstm_;
  Mlp head_;
};

/// Empirical DV objective mean(T_real) - log mean(exp(T_ref)), pooled over all
/// batch*steps entries, evaluated with a max-shifted log-sum-exp.
struct DvTerm {
  double value = 0.0;
  double mean_real = 0.0;
  double log_mean_exp_ref = 0.0;
};
DvTerm dv_objective(const Mat& t_real, const Mat& t_ref);

/// Streaming version of dv_objective for evaluation over many chunks.
class DvAccumulator {
 public:
  void add(const Mat& t_real, const Mat& t_ref);
  [[nodiscard]] DvTerm result() const;
  [[nodiscard]] double count() const { return n_real_; }

 private:
  double n_real_ = 0.0;
  double shift_real_ = 0.0;
  double sum_real_ = 0.0;  // relative to shift_real_
  double n_ref_ = 0.0;
  double max_ref_ = -std::numeric_limits<double>::infinity();
  double sum_exp_ref_ = 0.0;  // relative to max_ref_
};

/// D_Y, D_{Y||X} in nats.
struct DvValues {
  double d_y = 0.0;
  double d_yx = 0.0;
  [[nodiscard]] double estimate() const { return d_yx - d_y; }
};

struct DineArch {
  Index x_dim = 1;
  Index y_dim = 1;
  Index hidden = 64;
  std::vector<Index> head{64};
};

/// The pair of potentials theta_Y (over y) and theta_{Y||X} (over (y, x)).
class DineModel {
 public:
  DineModel() = default;
  explicit DineModel(const DineArch& arch);

  void init(Rng& rng);

  [[nodiscard]] const DineArch& arch() const { return arch_; }
  Potential& y_potential() { return y_; }
  Potential& yx_potential() { return yx_; }
  [[nodiscard]] const Potential& y_potential() const { return y_; }
  [[nodiscard]] const Potential& yx_potential() const { return yx_; }

  /// Reference support accumulated during training; reused for evaluation.
  ReferenceBox box;

 private:
  DineArch arch_;
  Potential y_;
  Potential yx_;
};

/// Gradients of the estimate D_{Y||X} - D_Y with respect to the data.
struct DataGradients {
  Batch dx;
  Batch dy;
};

/// Optional per-potential moving average of E[exp(T_ref)] used in place of the
/// batch mean in the gradient of the log term (bias-corrected variant).
struct EmaDenominator {
  double rate = 0.01;
  std::optional<double> log_y;
  std::optional<double> log_yx;
};

/// Forward both potentials on `data` with reference draws `y_ref`.
///  - accumulate_params: add each potential's ascent gradient of its own
///    objective into its ParamBlocks.
///  - data_grads: if non-null, receives d(estimate)/dx and d(estimate)/dy.
DvValues dine_objectives(DineModel& model, const Trajectories& data, const Batch& y_ref,
                         bool accumulate_params, DataGradients* data_grads,
                         EmaDenominator* ema = nullptr);

/// Forward-only value of both objectives.
DvValues dine_values(const DineModel& model, const Trajectories& data, const Batch& y_ref);

struct DineTrainOptions {
  AdamOptions adam{};
  double margin = 0.05;
  double floor = 0.1;
  bool ema_denominator = false;
  double ema_rate = 0.01;
};

/// Holds the two optimizers; each step ascends both objectives on a batch.
class DineTrainer {
 public:
  DineTrainer(DineModel& model, const DineTrainOptions& options, Rng reference_rng);

  DvValues step(const Trajectories& batch);
  [[nodiscard]] long steps() const { return opt_y_.steps(); }
  DineModel& model() { return *model_; }

 private:
  DineModel* model_;
  DineTrainOptions options_;
  Rng rng_;
  Adam opt_y_;
  Adam opt_yx_;
  EmaDenominator ema_;
};

/// Chunked Monte-Carlo evaluation of a frozen model.
class DineEvaluator {
 public:
  DineEvaluator(const DineModel& model, ReferenceBox box, Rng reference_rng);
  void add(const Trajectories& chunk);
  [[nodiscard]] DvValues result() const;
  [[nodiscard]] double samples() const { return y_acc_.count(); }

 private:
  const DineModel* model_;
  ReferenceBox box_;
  Rng rng_;
  DvAccumulator y_acc_;
  DvAccumulator yx_acc_;
};

struct CurvePoint {
  long iteration = 0;
  double d_y = 0.0;
  double d_yx = 0.0;
  double estimate = 0.0;
};

/// Contiguous multi-channel realization (one row per time step).
struct Series {
  Mat x;  // N x dx
  Mat y;  // N x dy
  [[nodiscard]] Index length() const { return y.rows(); }
};

enum class WindowSampling { kDisjointBlocks, kRandomStarts };

/// Produces a fresh training batch each call.
using BatchSource = std::function<Trajectories(Rng&)>;

/// B windows of length T per call, drawn from `series`.
BatchSource window_source(const Series& series, Index batch, Index seq_len, WindowSampling mode);

/// Splits a realization into consecutive length-T windows (tail dropped) and
/// groups them into batches of at most `max_batch` sequences.
std::vector<Trajectories> series_windows(const Series& series, Index seq_len, Index max_batch);

struct DineTrainConfig {
  DineArch arch{};
  Index batch = 32;
  Index seq_len = 64;
  long iterations = 5000;
  DineTrainOptions options{};
  std::uint64_t seed = 0;
};

struct DineTrainResult {
  DineModel model;
  std::vector<CurvePoint> curve;
  bool failed = false;
  std::string failure;
};

/// Ascent on both DV objectives for a fixed iteration budget.
DineTrainResult dine_train(const BatchSource& source, const DineTrainConfig& config);

/// Estimate over a long realization split into windows of `seq_len`.
DvValues dine_estimate(const DineModel& model, const Series& series, Index seq_len,
                       const ReferenceBox& box, Rng& rng);

}  // namespace dinecap
