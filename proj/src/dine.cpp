// SPDX-License-Identifier: Apache-2.0
#include "dinecap/dine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dinecap/errors.hpp"

namespace dinecap {
namespace {

Mat stack(const Batch& seq) {
  if (seq.empty()) return {};
  const Index b = seq.front().rows();
  Mat out(b * static_cast<Index>(seq.size()), seq.front().cols());
  for (std::size_t t = 0; t < seq.size(); ++t) out.middleRows(static_cast<Index>(t) * b, b) = seq[t];
  return out;
}

Batch unstack(const Mat& m, Index steps) {
  Batch out(static_cast<std::size_t>(steps));
  const Index b = m.rows() / steps;
  for (Index t = 0; t < steps; ++t) out[static_cast<std::size_t>(t)] = m.middleRows(t * b, b);
  return out;
}

Batch concat_columns(const Batch& a, const Batch& b) {
  Batch out(a.size());
  for (std::size_t t = 0; t < a.size(); ++t) {
    out[t].resize(a[t].rows(), a[t].cols() + b[t].cols());
    out[t] << a[t], b[t];
  }
  return out;
}

void check_data(const DineArch& arch, const Trajectories& data, const Batch& y_ref) {
  if (data.y.empty()) throw DimensionError("DINE: empty batch");
  if (data.x.size() != data.y.size() || y_ref.size() != data.y.size())
    throw DimensionError("DINE: x, y and reference sequences must have equal lengths");
  for (std::size_t t = 0; t < data.y.size(); ++t) {
    if (data.y[t].cols() != arch.y_dim || data.x[t].cols() != arch.x_dim ||
        y_ref[t].cols() != arch.y_dim)
      throw DimensionError("DINE: data dimension does not match the model");
    if (data.x[t].rows() != data.y[t].rows() || y_ref[t].rows() != data.y[t].rows())
      throw DimensionError("DINE: batch size differs between x, y and reference");
  }
}

// Forward-only pass over one potential: no per-step caches are retained.
void forward_accumulate(const Potential& pot, const Batch& driver, const Batch& reference,
                        DvAccumulator& acc) {
  const Lstm& lstm = pot.lstm();
  const Index b = driver.front().rows();
  Mat h = Mat::Zero(b, lstm.hidden_size());
  Mat c = Mat::Zero(b, lstm.hidden_size());
  Lstm::StepCache real;
  Lstm::StepCache ref;
  for (std::size_t t = 0; t < driver.size(); ++t) {
    const Mat rec = lstm.recurrent(h);
    lstm.step(driver[t], rec, c, real);
    lstm.step(reference[t], rec, c, ref);
    acc.add(pot.head().forward(real.h, nullptr), pot.head().forward(ref.h, nullptr));
    h.swap(real.h);
    c.swap(real.c);
  }
}

// Gradient of the DV objective with respect to the per-step potentials.
std::pair<Mat, Mat> dv_weights(const Mat& t_real, const Mat& t_ref, const DvTerm& term,
                               std::optional<double>* log_ema, double ema_rate) {
  const auto n_real = static_cast<double>(t_real.rows());
  const auto n_ref = static_cast<double>(t_ref.rows());
  Mat d_real = Mat::Constant(t_real.rows(), 1, 1.0 / n_real);
  double log_denominator = term.log_mean_exp_ref;
  if (log_ema != nullptr) {
    if (!log_ema->has_value()) {
      *log_ema = term.log_mean_exp_ref;
    } else {
      const double a = std::log1p(-ema_rate) + **log_ema;
      const double b = std::log(ema_rate) + term.log_mean_exp_ref;
      const double m = std::max(a, b);
      *log_ema = m + std::log(std::exp(a - m) + std::exp(b - m));
    }
    log_denominator = **log_ema;
  }
  Mat d_ref = (-(t_ref.array() - log_denominator).exp() / n_ref).matrix();
  return {d_real, d_ref};
}

}  // namespace

// ---------------------------------------------------------------- reference measure

double ReferenceBox::log_volume() const {
  double v = 0.0;
  for (std::size_t d = 0; d < lo.size(); ++d) v += std::log(hi[d] - lo[d]);
  return v;
}

ReferenceBox ReferenceBox::scaled(double factor) const {
  ReferenceBox out = *this;
  for (std::size_t d = 0; d < lo.size(); ++d) {
    const double center = 0.5 * (lo[d] + hi[d]);
    const double half = 0.5 * (hi[d] - lo[d]) * factor;
    out.lo[d] = center - half;
    out.hi[d] = center + half;
  }
  return out;
}

bool ReferenceBox::contains(const Batch& y) const {
  for (const auto& step : y)
    for (Index r = 0; r < step.rows(); ++r)
      for (Index d = 0; d < step.cols(); ++d)
        if (step(r, d) < lo[static_cast<std::size_t>(d)] || step(r, d) > hi[static_cast<std::size_t>(d)])
          return false;
  return true;
}

void ReferenceBox::absorb(const ReferenceBox& other) {
  if (empty()) {
    *this = other;
    return;
  }
  if (other.dim() != dim()) throw DimensionError("reference box dimension mismatch");
  for (std::size_t d = 0; d < lo.size(); ++d) {
    lo[d] = std::min(lo[d], other.lo[d]);
    hi[d] = std::max(hi[d], other.hi[d]);
  }
}

ReferenceBox fit_reference(const Batch& y, double margin, double floor) {
  if (y.empty() || y.front().size() == 0) throw DimensionError("fit_reference: empty batch");
  if (margin < 0.0 || floor <= 0.0) throw ConfigError("fit_reference: margin >= 0 and floor > 0 required");
  const Index dim = y.front().cols();
  ReferenceBox box;
  box.lo.assign(static_cast<std::size_t>(dim), std::numeric_limits<double>::infinity());
  box.hi.assign(static_cast<std::size_t>(dim), -std::numeric_limits<double>::infinity());
  for (const auto& step : y) {
    if (step.cols() != dim) throw DimensionError("fit_reference: ragged batch");
    for (Index d = 0; d < dim; ++d) {
      box.lo[static_cast<std::size_t>(d)] = std::min(box.lo[static_cast<std::size_t>(d)], step.col(d).minCoeff());
      box.hi[static_cast<std::size_t>(d)] = std::max(box.hi[static_cast<std::size_t>(d)], step.col(d).maxCoeff());
    }
  }
  for (std::size_t d = 0; d < box.lo.size(); ++d) {
    if (!std::isfinite(box.lo[d]) || !std::isfinite(box.hi[d]))
      throw NumericError("fit_reference: non-finite output samples");
    const double range = box.hi[d] - box.lo[d];
    const double pad = range > 0.0 ? margin * range : floor;
    box.lo[d] -= pad;
    box.hi[d] += pad;
  }
  return box;
}

Batch sample_reference(const ReferenceBox& box, Index batch, Index steps, Rng& rng) {
  Batch out(static_cast<std::size_t>(steps));
  for (auto& step : out) {
    step.resize(batch, box.dim());
    for (Index r = 0; r < batch; ++r)
      for (Index d = 0; d < box.dim(); ++d)
        step(r, d) = rng.uniform(box.lo[static_cast<std::size_t>(d)], box.hi[static_cast<std::size_t>(d)]);
  }
  return out;
}

// ---------------------------------------------------------------- modified LSTM

DualStateStream modified_unroll(const Lstm& lstm, const Batch& driver, const Batch& reference) {
  if (driver.size() != reference.size())
    throw DimensionError("modified_unroll: driver and reference lengths differ");
  DualStateStream out;
  const std::size_t steps = driver.size();
  out.real.resize(steps);
  out.reference.resize(steps);
  out.h_prev.resize(steps);
  if (steps == 0) return out;
  const Index b = driver.front().rows();
  Mat h = Mat::Zero(b, lstm.hidden_size());
  Mat c = Mat::Zero(b, lstm.hidden_size());
  for (std::size_t t = 0; t < steps; ++t) {
    out.h_prev[t] = h;
    const Mat rec = lstm.recurrent(h);
    lstm.step(driver[t], rec, c, out.real[t]);
    lstm.step(reference[t], rec, c, out.reference[t]);
    h = out.real[t].h;
    c = out.real[t].c;
  }
  return out;
}

void modified_unroll_backward(Lstm& lstm, const DualStateStream& states, const Batch& dh_real,
                              const Batch& dh_ref, Batch* d_driver, Batch* d_reference) {
  const std::size_t steps = states.real.size();
  if (d_driver != nullptr) d_driver->assign(steps, Mat());
  if (d_reference != nullptr) d_reference->assign(steps, Mat());
  if (steps == 0) return;
  const Index b = states.real.front().h.rows();
  const Index hid = lstm.hidden_size();
  Mat dh_next = Mat::Zero(b, hid);
  Mat dc_next = Mat::Zero(b, hid);
  const Mat zero = Mat::Zero(b, hid);
  Mat dc_prev_real;
  Mat dc_prev_ref;
  for (std::size_t t = steps; t-- > 0;) {
    const Mat dh = dh_real[t] + dh_next;
    const Mat dpre_real = lstm.step_backward(states.real[t], dh, dc_next, dc_prev_real);
    const Mat dpre_ref = lstm.step_backward(states.reference[t], dh_ref[t], zero, dc_prev_ref);
    Mat dx_real = lstm.input_backward(states.real[t].x, dpre_real);
    Mat dx_ref = lstm.input_backward(states.reference[t].x, dpre_ref);
    if (d_driver != nullptr) (*d_driver)[t] = std::move(dx_real);
    if (d_reference != nullptr) (*d_reference)[t] = std::move(dx_ref);
    dh_next = lstm.recurrent_backward(states.h_prev[t], dpre_real + dpre_ref);
    dc_next = dc_prev_real + dc_prev_ref;
  }
}

// ---------------------------------------------------------------- potentials

Potential::Potential(const std::string& name, Index input_dim, Index hidden,
                     const std::vector<Index>& head)
    : lstm_(name + ".lstm", input_dim, hidden), head_(name + ".head", hidden, head, 1) {}

void Potential::init(Rng& rng) {
  lstm_.init(rng);
  head_.init(rng);
}

void Potential::forward(const Batch& driver, const Batch& reference, Trace& trace) const {
  trace.states = modified_unroll(lstm_, driver, reference);
  Batch h_real(driver.size());
  Batch h_ref(driver.size());
  for (std::size_t t = 0; t < driver.size(); ++t) {
    h_real[t] = trace.states.real[t].h;
    h_ref[t] = trace.states.reference[t].h;
  }
  trace.t_real = head_.forward(stack(h_real), &trace.head_real);
  trace.t_ref = head_.forward(stack(h_ref), &trace.head_ref);
}

void Potential::backward(const Trace& trace, const Mat& dt_real, const Mat& dt_ref, Batch* d_driver,
                         Batch* d_reference) {
  const auto steps = static_cast<Index>(trace.states.real.size());
  const Batch dh_real = unstack(head_.backward(trace.head_real, dt_real), steps);
  const Batch dh_ref = unstack(head_.backward(trace.head_ref, dt_ref), steps);
  modified_unroll_backward(lstm_, trace.states, dh_real, dh_ref, d_driver, d_reference);
}

ParamRefs Potential::params() {
  ParamRefs out;
  lstm_.collect(out);
  head_.collect(out);
  return out;
}

// ---------------------------------------------------------------- DV objective

DvTerm dv_objective(const Mat& t_real, const Mat& t_ref) {
  if (t_real.size() == 0 || t_ref.size() == 0) throw DimensionError("dv_objective: empty input");
  if (!t_real.allFinite() || !t_ref.allFinite()) throw NumericError("dv_objective: non-finite potential");
  DvTerm term;
  // Averaging deviations from one sample keeps a constant potential exact.
  const double shift = t_real(0, 0);
  term.mean_real = shift + (t_real.array() - shift).mean();
  const double m = t_ref.maxCoeff();
  term.log_mean_exp_ref = m + std::log((t_ref.array() - m).exp().mean());
  term.value = term.mean_real - term.log_mean_exp_ref;
  return term;
}

void DvAccumulator::add(const Mat& t_real, const Mat& t_ref) {
  if (!t_real.allFinite() || !t_ref.allFinite()) throw NumericError("DvAccumulator: non-finite potential");
  if (t_real.size() > 0 && n_real_ == 0.0) shift_real_ = t_real(0, 0);
  n_real_ += static_cast<double>(t_real.size());
  sum_real_ += (t_real.array() - shift_real_).sum();
  if (t_ref.size() == 0) return;
  const double m = t_ref.maxCoeff();
  if (m > max_ref_) {
    sum_exp_ref_ *= std::exp(max_ref_ - m);
    max_ref_ = m;
  }
  sum_exp_ref_ += (t_ref.array() - max_ref_).exp().sum();
  n_ref_ += static_cast<double>(t_ref.size());
}

DvTerm DvAccumulator::result() const {
  if (n_real_ == 0.0 || n_ref_ == 0.0) throw DimensionError("DvAccumulator: no samples");
  DvTerm term;
  term.mean_real = shift_real_ + sum_real_ / n_real_;
  term.log_mean_exp_ref = max_ref_ + std::log(sum_exp_ref_ / n_ref_);
  term.value = term.mean_real - term.log_mean_exp_ref;
  return term;
}

// ---------------------------------------------------------------- model

DineModel::DineModel(const DineArch& arch)
    : arch_(arch), y_("dine.y", arch.y_dim, arch.hidden, arch.head),
      yx_("dine.yx", arch.y_dim + arch.x_dim, arch.hidden, arch.head) {}

void DineModel::init(Rng& rng) {
  Rng ry = rng.split("y");
  Rng ryx = rng.split("yx");
  y_.init(ry);
  yx_.init(ryx);
}

DvValues dine_objectives(DineModel& model, const Trajectories& data, const Batch& y_ref,
                         bool accumulate_params, DataGradients* data_grads, EmaDenominator* ema) {
  check_data(model.arch(), data, y_ref);
  const Batch yx = concat_columns(data.y, data.x);
  const Batch yx_ref = concat_columns(y_ref, data.x);

  Potential::Trace tr_y;
  Potential::Trace tr_yx;
  model.y_potential().forward(data.y, y_ref, tr_y);
  model.yx_potential().forward(yx, yx_ref, tr_yx);
  const DvTerm term_y = dv_objective(tr_y.t_real, tr_y.t_ref);
  const DvTerm term_yx = dv_objective(tr_yx.t_real, tr_yx.t_ref);
  const DvValues values{term_y.value, term_yx.value};
  if (!accumulate_params && data_grads == nullptr) return values;

  ParamRefs params = model.y_potential().params();
  for (auto* p : model.yx_potential().params()) params.push_back(p);
  std::vector<Mat> saved;
  if (!accumulate_params)
    for (auto* p : params) saved.push_back(p->grad);

  const double rate = ema != nullptr ? ema->rate : 0.0;
  const auto [dr_y, df_y] = dv_weights(tr_y.t_real, tr_y.t_ref, term_y, ema ? &ema->log_y : nullptr, rate);
  const auto [dr_yx, df_yx] =
      dv_weights(tr_yx.t_real, tr_yx.t_ref, term_yx, ema ? &ema->log_yx : nullptr, rate);

  Batch d_y_real;
  Batch d_yx_real;
  Batch d_yx_ref;
  const bool want = data_grads != nullptr;
  model.y_potential().backward(tr_y, dr_y, df_y, want ? &d_y_real : nullptr, nullptr);
  model.yx_potential().backward(tr_yx, dr_yx, df_yx, want ? &d_yx_real : nullptr,
                                want ? &d_yx_ref : nullptr);

  if (!accumulate_params)
    for (std::size_t k = 0; k < params.size(); ++k) params[k]->grad = saved[k];

  if (want) {
    const Index dy = model.arch().y_dim;
    const Index dx = model.arch().x_dim;
    data_grads->dx.resize(data.y.size());
    data_grads->dy.resize(data.y.size());
    for (std::size_t t = 0; t < data.y.size(); ++t) {
      data_grads->dy[t] = d_yx_real[t].leftCols(dy) - d_y_real[t];
      data_grads->dx[t] = d_yx_real[t].rightCols(dx) + d_yx_ref[t].rightCols(dx);
    }
  }
  return values;
}

DvValues dine_values(const DineModel& model, const Trajectories& data, const Batch& y_ref) {
  check_data(model.arch(), data, y_ref);
  DvAccumulator acc_y;
  DvAccumulator acc_yx;
  forward_accumulate(model.y_potential(), data.y, y_ref, acc_y);
  forward_accumulate(model.yx_potential(), concat_columns(data.y, data.x), concat_columns(y_ref, data.x), acc_yx);
  return {acc_y.result().value, acc_yx.result().value};
}

// ---------------------------------------------------------------- training

DineTrainer::DineTrainer(DineModel& model, const DineTrainOptions& options, Rng reference_rng)
    : model_(&model), options_(options), rng_(std::move(reference_rng)),
      opt_y_(model.y_potential().params(), options.adam),
      opt_yx_(model.yx_potential().params(), options.adam) {
  ema_.rate = options.ema_rate;
}

DvValues DineTrainer::step(const Trajectories& batch) {
  model_->box.absorb(fit_reference(batch.y, options_.margin, options_.floor));
  const Batch y_ref = sample_reference(model_->box, batch.batch(), batch.steps(), rng_);
  zero_grads(model_->y_potential().params());
  zero_grads(model_->yx_potential().params());
  const DvValues values = dine_objectives(*model_, batch, y_ref, true, nullptr,
                                          options_.ema_denominator ? &ema_ : nullptr);
  opt_y_.step();
  opt_yx_.step();
  return values;
}

DineEvaluator::DineEvaluator(const DineModel& model, ReferenceBox box, Rng reference_rng)
    : model_(&model), box_(std::move(box)), rng_(std::move(reference_rng)) {
  if (box_.dim() != model.arch().y_dim) throw DimensionError("DineEvaluator: box dimension mismatch");
}

void DineEvaluator::add(const Trajectories& chunk) {
  const Batch y_ref = sample_reference(box_, chunk.batch(), chunk.steps(), rng_);
  check_data(model_->arch(), chunk, y_ref);
  forward_accumulate(model_->y_potential(), chunk.y, y_ref, y_acc_);
  forward_accumulate(model_->yx_potential(), concat_columns(chunk.y, chunk.x), concat_columns(y_ref, chunk.x), yx_acc_);
}

DvValues DineEvaluator::result() const { return {y_acc_.result().value, yx_acc_.result().value}; }

// ---------------------------------------------------------------- datasets

namespace {

Trajectories slice_windows(const Series& s, const std::vector<Index>& starts, Index seq_len) {
  Trajectories out;
  const auto b = static_cast<Index>(starts.size());
  out.x.assign(static_cast<std::size_t>(seq_len), Mat(b, s.x.cols()));
  out.y.assign(static_cast<std::size_t>(seq_len), Mat(b, s.y.cols()));
  for (Index t = 0; t < seq_len; ++t) {
    for (Index r = 0; r < b; ++r) {
      out.x[static_cast<std::size_t>(t)].row(r) = s.x.row(starts[static_cast<std::size_t>(r)] + t);
      out.y[static_cast<std::size_t>(t)].row(r) = s.y.row(starts[static_cast<std::size_t>(r)] + t);
    }
  }
  return out;
}

}  // namespace

BatchSource window_source(const Series& series, Index batch, Index seq_len, WindowSampling mode) {
  if (batch <= 0 || seq_len <= 0) throw ConfigError("window_source: batch and seq_len must be positive");
  if (series.x.rows() != series.y.rows()) throw DimensionError("window_source: x/y length mismatch");
  const Index blocks = series.length() / seq_len;
  if (series.length() < batch * seq_len)
    throw ConfigError("dataset has " + std::to_string(series.length()) + " rows; at least batch*seq_len = " +
                      std::to_string(batch * seq_len) + " required");
  return [series, batch, seq_len, mode, blocks](Rng& rng) {
    std::vector<Index> starts(static_cast<std::size_t>(batch));
    if (mode == WindowSampling::kDisjointBlocks) {
      std::vector<Index> ids(static_cast<std::size_t>(blocks));
      std::iota(ids.begin(), ids.end(), Index{0});
      for (Index k = 0; k < batch; ++k) {
        const auto j = static_cast<std::size_t>(k) +
                       rng.index(static_cast<std::size_t>(blocks - k));
        std::swap(ids[static_cast<std::size_t>(k)], ids[j]);
        starts[static_cast<std::size_t>(k)] = ids[static_cast<std::size_t>(k)] * seq_len;
      }
    } else {
      for (auto& s : starts) s = static_cast<Index>(rng.index(static_cast<std::size_t>(series.length() - seq_len + 1)));
    }
    return slice_windows(series, starts, seq_len);
  };
}

std::vector<Trajectories> series_windows(const Series& series, Index seq_len, Index max_batch) {
  if (seq_len <= 0 || max_batch <= 0) throw ConfigError("series_windows: sizes must be positive");
  const Index windows = series.length() / seq_len;
  std::vector<Trajectories> out;
  for (Index first = 0; first < windows; first += max_batch) {
    const Index count = std::min(max_batch, windows - first);
    std::vector<Index> starts(static_cast<std::size_t>(count));
    for (Index k = 0; k < count; ++k) starts[static_cast<std::size_t>(k)] = (first + k) * seq_len;
    out.push_back(slice_windows(series, starts, seq_len));
  }
  return out;
}

DineTrainResult dine_train(const BatchSource& source, const DineTrainConfig& config) {
  if (config.iterations < 0 || config.batch <= 0 || config.seq_len <= 0)
    throw ConfigError("dine_train: invalid budget or batch shape");
  const Rng root(config.seed, "dine");
  Rng init = root.split("init");
  Rng data = root.split("data");

  DineTrainResult result;
  result.model = DineModel(config.arch);
  result.model.init(init);
  DineTrainer trainer(result.model, config.options, root.split("reference"));
  for (long it = 1; it <= config.iterations; ++it) {
    try {
      const Trajectories batch = source(data);
      const DvValues v = trainer.step(batch);
      if (!std::isfinite(v.d_y) || !std::isfinite(v.d_yx)) throw NumericError("non-finite DV objective");
      result.curve.push_back({it, v.d_y, v.d_yx, v.estimate()});
    } catch (const NumericError& e) {
      result.failed = true;
      result.failure = "diverged at iteration " + std::to_string(it) + " (last finite iteration " +
                       std::to_string(it - 1) + "): " + e.what();
      break;
    }
  }
  return result;
}

DvValues dine_estimate(const DineModel& model, const Series& series, Index seq_len,
                       const ReferenceBox& box, Rng& rng) {
  DineEvaluator eval(model, box, rng.split("dine.estimate"));
  for (const auto& chunk : series_windows(series, seq_len, 256)) eval.add(chunk);
  return eval.result();
}

}  // namespace dinecap
