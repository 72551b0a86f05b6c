// SPDX-License-Identifier: Apache-2.0
#include "dinecap/nn.hpp"

#include <algorithm>
#include <cmath>

#include "dinecap/errors.hpp"

namespace dinecap {
namespace {

Mat sigmoid(const Mat& z) { return (1.0 / (1.0 + (-z.array()).exp())).matrix(); }

// Built on the vectorised exp; libm tanh is scalar and dominated step time.
template <typename Derived>
Mat fast_tanh(const Eigen::MatrixBase<Derived>& z) {
  const Eigen::ArrayXXd e = (-2.0 * z.array().abs()).exp();
  const Eigen::ArrayXXd t = (1.0 - e) / (1.0 + e);
  return (z.array() < 0.0).select(-t, t).matrix();
}

void uniform_fill(Mat& m, double k, Rng& rng) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-k, k);
}

}  // namespace

void zero_grads(const ParamRefs& params) {
  for (auto* p : params) p->zero_grad();
}

void require_finite(const Mat& m, const std::string& what) {
  if (!m.allFinite()) throw NumericError("non-finite values in " + what);
}

// ---------------------------------------------------------------- Dense

Dense::Dense(const std::string& name, Index in, Index out, Activation act)
    : w_(name + ".W", in, out), b_(name + ".b", 1, out), act_(act) {
  if (in <= 0 || out <= 0) throw DimensionError(name + ": layer sizes must be positive");
}

void Dense::init(Rng& rng) {
  uniform_fill(w_.value, 1.0 / std::sqrt(static_cast<double>(in())), rng);
  b_.value.setZero();
}

Mat Dense::forward(const Mat& x) const {
  if (x.cols() != in())
    throw DimensionError(w_.name + ": input has " + std::to_string(x.cols()) + " columns, expected " +
                         std::to_string(in()));
  Mat z = x * w_.value;
  z.rowwise() += b_.value.row(0);
  switch (act_) {
    case Activation::kIdentity:
      return z;
    case Activation::kTanh:
      return fast_tanh(z);
    case Activation::kRelu:
      return z.array().max(0.0).matrix();
  }
  return z;
}

Mat Dense::backward(const Mat& x, const Mat& y, const Mat& dy) {
  Mat dz;
  switch (act_) {
    case Activation::kIdentity:
      dz = dy;
      break;
    case Activation::kTanh:
      dz = (dy.array() * (1.0 - y.array().square())).matrix();
      break;
    case Activation::kRelu:
      dz = (dy.array() * (y.array() > 0.0).cast<double>()).matrix();
      break;
  }
  w_.grad.noalias() += x.transpose() * dz;
  b_.grad += dz.colwise().sum();
  return dz * w_.value.transpose();
}

// ---------------------------------------------------------------- Mlp

Mlp::Mlp(const std::string& name, Index in, const std::vector<Index>& hidden, Index out) {
  Index prev = in;
  for (std::size_t k = 0; k < hidden.size(); ++k) {
    layers_.emplace_back(name + ".dense" + std::to_string(k), prev, hidden[k], Activation::kTanh);
    prev = hidden[k];
  }
  layers_.emplace_back(name + ".out", prev, out, Activation::kIdentity);
}

void Mlp::init(Rng& rng) {
  for (auto& layer : layers_) layer.init(rng);
}

Mat Mlp::forward(const Mat& x, Cache* cache) const {
  if (cache != nullptr) {
    cache->acts.resize(layers_.size() + 1);
    cache->acts[0] = x;
    for (std::size_t k = 0; k < layers_.size(); ++k)
      cache->acts[k + 1] = layers_[k].forward(cache->acts[k]);
    return cache->acts.back();
  }
  Mat a = x;
  for (const auto& layer : layers_) a = layer.forward(a);
  return a;
}

Mat Mlp::backward(const Cache& cache, const Mat& dout) {
  Mat d = dout;
  for (std::size_t k = layers_.size(); k-- > 0;)
    d = layers_[k].backward(cache.acts[k], cache.acts[k + 1], d);
  return d;
}

void Mlp::collect(ParamRefs& out) {
  for (auto& layer : layers_) layer.collect(out);
}

// ---------------------------------------------------------------- Lstm

Lstm::Lstm(const std::string& name, Index input, Index hidden)
    : wx_(name + ".Wx", input, 4 * hidden), wh_(name + ".Wh", hidden, 4 * hidden),
      b_(name + ".b", 1, 4 * hidden) {
  if (input <= 0 || hidden <= 0) throw DimensionError(name + ": LSTM sizes must be positive");
}

void Lstm::init(Rng& rng, double forget_bias) {
  uniform_fill(wx_.value, 1.0 / std::sqrt(static_cast<double>(input_size())), rng);
  uniform_fill(wh_.value, 1.0 / std::sqrt(static_cast<double>(hidden_size())), rng);
  b_.value.setZero();
  const Index h = hidden_size();
  b_.value.middleCols(h, h).setConstant(forget_bias);
}

Mat Lstm::recurrent(const Mat& h_prev) const {
  if (h_prev.cols() != hidden_size()) throw DimensionError(wh_.name + ": state size mismatch");
  Mat r = h_prev * wh_.value;
  r.rowwise() += b_.value.row(0);
  return r;
}

void Lstm::step(const Mat& x, const Mat& recurrent, const Mat& c_prev, StepCache& out) const {
  if (x.cols() != input_size())
    throw DimensionError(wx_.name + ": input has " + std::to_string(x.cols()) +
                         " columns, expected " + std::to_string(input_size()));
  if (c_prev.cols() != hidden_size() || recurrent.rows() != x.rows())
    throw DimensionError(wx_.name + ": state shape mismatch");
  const Index h = hidden_size();
  Mat pre = x * wx_.value + recurrent;
  out.x = x;
  out.gates.resize(pre.rows(), pre.cols());
  out.gates.leftCols(3 * h) = sigmoid(pre.leftCols(3 * h));
  out.gates.rightCols(h) = fast_tanh(pre.rightCols(h));
  out.c_prev = c_prev;
  const auto i = out.gates.leftCols(h).array();
  const auto f = out.gates.middleCols(h, h).array();
  const auto o = out.gates.middleCols(2 * h, h).array();
  const auto g = out.gates.rightCols(h).array();
  out.c = (f * c_prev.array() + i * g).matrix();
  out.tanh_c = fast_tanh(out.c);
  out.h = (o * out.tanh_c.array()).matrix();
}

std::pair<Mat, Mat> Lstm::cell(const Mat& x, const Mat& h, const Mat& c) const {
  StepCache cache;
  step(x, recurrent(h), c, cache);
  return {cache.h, cache.c};
}

Mat Lstm::step_backward(const StepCache& cache, const Mat& dh, const Mat& dc, Mat& dc_prev) const {
  const Index h = hidden_size();
  const auto i = cache.gates.leftCols(h).array();
  const auto f = cache.gates.middleCols(h, h).array();
  const auto o = cache.gates.middleCols(2 * h, h).array();
  const auto g = cache.gates.rightCols(h).array();
  const auto tc = cache.tanh_c.array();

  const Eigen::ArrayXXd dc_total = dc.array() + dh.array() * o * (1.0 - tc.square());
  Mat dpre(cache.gates.rows(), 4 * h);
  dpre.leftCols(h) = (dc_total * g * i * (1.0 - i)).matrix();
  dpre.middleCols(h, h) = (dc_total * cache.c_prev.array() * f * (1.0 - f)).matrix();
  dpre.middleCols(2 * h, h) = (dh.array() * tc * o * (1.0 - o)).matrix();
  dpre.rightCols(h) = (dc_total * i * (1.0 - g.square())).matrix();
  dc_prev = (dc_total * f).matrix();
  return dpre;
}

Mat Lstm::input_backward(const Mat& x, const Mat& dpre) {
  wx_.grad.noalias() += x.transpose() * dpre;
  return dpre * wx_.value.transpose();
}

Mat Lstm::recurrent_backward(const Mat& h_prev, const Mat& dpre_sum) {
  wh_.grad.noalias() += h_prev.transpose() * dpre_sum;
  b_.grad += dpre_sum.colwise().sum();
  return dpre_sum * wh_.value.transpose();
}

// ---------------------------------------------------------------- Adam

Adam::Adam(ParamRefs params, AdamOptions options) : params_(std::move(params)), options_(options) {
  if (options_.learning_rate < 0.0) throw ConfigError("Adam: learning rate must be >= 0");
  for (const auto* p : params_) {
    m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
  }
}

double Adam::step() {
  double sq = 0.0;
  for (const auto* p : params_) {
    if (!p->grad.allFinite()) throw NumericError("non-finite gradient in block " + p->name);
    sq += p->grad.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  const double scale =
      (options_.clip_norm > 0.0 && norm > options_.clip_norm) ? options_.clip_norm / norm : 1.0;

  ++steps_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = *params_[k];
    const Mat g = p.grad * scale;
    m_[k] = b1 * m_[k] + (1.0 - b1) * g;
    v_[k] = b2 * v_[k] + (1.0 - b2) * g.cwiseAbs2();
    p.value.array() += options_.learning_rate * (m_[k].array() / corr1) /
                       ((v_[k].array() / corr2).sqrt() + options_.epsilon);
  }
  return norm;
}

// ---------------------------------------------------------------- gradient checks

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& b : blocks) w = std::max(w, b.max_rel_error);
  return w;
}

namespace {

// Blocks whose true gradient vanishes identically (e.g. the output bias of a
// DV potential) are compared against kAbsFloor instead of their own scale.
constexpr double kAbsFloor = 1e-6;

BlockCheck compare(const std::string& name, const Mat& analytic, const Mat& numeric) {
  BlockCheck out{name, 0.0, 0.0};
  const double scale = std::max({analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff(), kAbsFloor});
  out.max_abs_error = (analytic - numeric).cwiseAbs().maxCoeff();
  out.max_rel_error = out.max_abs_error / scale;
  if (!std::isfinite(out.max_rel_error)) out.max_rel_error = std::numeric_limits<double>::infinity();
  return out;
}

Mat central_differences(const std::function<double()>& objective, Mat& target, double step) {
  Mat numeric(target.rows(), target.cols());
  for (Index r = 0; r < target.rows(); ++r) {
    for (Index c = 0; c < target.cols(); ++c) {
      const double saved = target(r, c);
      target(r, c) = saved + step;
      const double up = objective();
      target(r, c) = saved - step;
      const double down = objective();
      target(r, c) = saved;
      numeric(r, c) = (up - down) / (2.0 * step);
    }
  }
  return numeric;
}

}  // namespace

GradCheckReport grad_check(const std::function<double()>& objective, const ParamRefs& params,
                           double step) {
  GradCheckReport report;
  for (auto* p : params) {
    const Mat analytic = p->grad;
    const Mat numeric = central_differences(objective, p->value, step);
    report.blocks.push_back(compare(p->name, analytic, numeric));
  }
  return report;
}

BlockCheck grad_check_input(const std::function<double()>& objective, Mat& input,
                            const Mat& analytic, const std::string& name, double step) {
  const Mat numeric = central_differences(objective, input, step);
  return compare(name, analytic, numeric);
}

}  // namespace dinecap
