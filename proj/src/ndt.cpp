// SPDX-License-Identifier: Apache-2.0
#include "dinecap/ndt.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "dinecap/errors.hpp"

namespace dinecap {

NdtModel::NdtModel(const NdtArch& arch)
    : arch_(arch),
      lstm_("ndt.lstm", arch.noise_dim + (arch.feedback ? arch.y_dim : 0), arch.hidden),
      head_("ndt.head", arch.hidden, arch.head, arch.x_dim) {
  if (!(arch.power > 0.0)) throw ConfigError("NDT power budget must be > 0");
  if (!(arch.epsilon > 0.0)) throw ConfigError("NDT epsilon must be > 0");
}

void NdtModel::init(Rng& rng) {
  lstm_.init(rng);
  head_.init(rng);
}

Mat NdtModel::step(const Mat& noise, const Mat* feedback, const Mat& h, const Mat& c,
                   StepCache& cache) const {
  if (noise.cols() != arch_.noise_dim) throw DimensionError("NDT: noise dimension mismatch");
  if (arch_.feedback != (feedback != nullptr))
    throw DimensionError(arch_.feedback ? "NDT: feedback value required" : "NDT: feedback given but flag is off");
  Mat input;
  if (feedback != nullptr) {
    if (feedback->cols() != arch_.y_dim || feedback->rows() != noise.rows())
      throw DimensionError("NDT: feedback shape mismatch");
    input.resize(noise.rows(), input_size());
    input << noise, *feedback;
  } else {
    input = noise;
  }
  cache.h_prev = h;
  lstm_.step(input, lstm_.recurrent(h), c, cache.cell);
  return head_.forward(cache.cell.h, &cache.head);
}

Mat NdtModel::step_backward(const StepCache& cache, const Mat& d_raw, Mat& dh, Mat& dc) {
  const Mat dh_total = head_.backward(cache.head, d_raw) + dh;
  Mat dc_prev;
  const Mat dpre = lstm_.step_backward(cache.cell, dh_total, dc, dc_prev);
  const Mat dinput = lstm_.input_backward(cache.cell.x, dpre);
  dh = lstm_.recurrent_backward(cache.h_prev, dpre);
  dc = std::move(dc_prev);
  if (!arch_.feedback) return {};
  return dinput.rightCols(arch_.y_dim);
}

ParamRefs NdtModel::params() {
  ParamRefs out;
  lstm_.collect(out);
  head_.collect(out);
  return out;
}

std::pair<Mat, NdtState> ndt_step(const NdtModel& model, const Mat& noise, const Mat* feedback,
                                  const NdtState& state) {
  NdtModel::StepCache cache;
  Mat raw = model.step(noise, feedback, state.h, state.c, cache);
  return {std::move(raw), NdtState{cache.cell.h, cache.cell.c}};
}

// ---------------------------------------------------------------- persistence

namespace {

constexpr char kMagic[8] = {'D', 'I', 'N', 'E', 'N', 'D', 'T', '1'};

template <typename T>
void put(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw ParseError("NDT file truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

void NdtModel::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("cannot open " + path + " for writing");
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, 1);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(arch_.noise_dim));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(arch_.x_dim));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(arch_.y_dim));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(arch_.hidden));
  put<std::uint8_t>(os, arch_.feedback ? 1 : 0);
  put<double>(os, arch_.power);
  put<double>(os, arch_.epsilon);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(arch_.head.size()));
  for (const Index w : arch_.head) put<std::uint32_t>(os, static_cast<std::uint32_t>(w));

  auto* self = const_cast<NdtModel*>(this);
  const ParamRefs blocks = self->params();
  put<std::uint32_t>(os, static_cast<std::uint32_t>(blocks.size()));
  for (const auto* b : blocks) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(b->name.size()));
    os.write(b->name.data(), static_cast<std::streamsize>(b->name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(b->value.rows()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(b->value.cols()));
    for (Index r = 0; r < b->value.rows(); ++r)
      for (Index c = 0; c < b->value.cols(); ++c) put<double>(os, b->value(r, c));
  }
  if (!os) throw ParseError("failed writing " + path);
}

NdtModel NdtModel::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open " + path);
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ParseError(path + ": not an NDT parameter file");
  if (get<std::uint32_t>(is) != 1) throw ParseError(path + ": unsupported NDT file version");
  NdtArch arch;
  arch.noise_dim = get<std::uint32_t>(is);
  arch.x_dim = get<std::uint32_t>(is);
  arch.y_dim = get<std::uint32_t>(is);
  arch.hidden = get<std::uint32_t>(is);
  arch.feedback = get<std::uint8_t>(is) != 0;
  arch.power = get<double>(is);
  arch.epsilon = get<double>(is);
  arch.head.resize(get<std::uint32_t>(is));
  for (auto& w : arch.head) w = get<std::uint32_t>(is);

  NdtModel model(arch);
  const ParamRefs blocks = model.params();
  if (get<std::uint32_t>(is) != blocks.size()) throw ParseError(path + ": block count mismatch");
  for (auto* b : blocks) {
    std::string name(get<std::uint32_t>(is), '\0');
    if (!is.read(name.data(), static_cast<std::streamsize>(name.size()))) throw ParseError("NDT file truncated");
    const auto rows = get<std::uint32_t>(is);
    const auto cols = get<std::uint32_t>(is);
    if (name != b->name || rows != b->value.rows() || cols != b->value.cols())
      throw ParseError(path + ": unexpected block " + name);
    for (Index r = 0; r < b->value.rows(); ++r)
      for (Index c = 0; c < b->value.cols(); ++c) b->value(r, c) = get<double>(is);
  }
  return model;
}

// ---------------------------------------------------------------- power layer

Mat power_normalize(const Mat& raw, double power, double epsilon, PowerScale* info) {
  if (!(power > 0.0)) throw ConfigError("power_normalize: P must be > 0");
  if (raw.size() == 0) throw DimensionError("power_normalize: empty batch");
  PowerScale s;
  s.mean_square = raw.squaredNorm() / static_cast<double>(raw.size());
  s.scale = std::sqrt(power / (s.mean_square + epsilon));
  if (info != nullptr) *info = s;
  return raw * s.scale;
}

Mat power_normalize_backward(const Mat& raw, const PowerScale& info, double epsilon, const Mat& dx) {
  const auto n = static_cast<double>(raw.size());
  const double inner = (dx.array() * raw.array()).sum();
  return info.scale * dx - raw * (info.scale * inner / ((info.mean_square + epsilon) * n));
}

// ---------------------------------------------------------------- rollout

namespace {

Mat stack_steps(const Batch& seq) {
  const Index b = seq.front().rows();
  Mat out(b * static_cast<Index>(seq.size()), seq.front().cols());
  for (std::size_t t = 0; t < seq.size(); ++t) out.middleRows(static_cast<Index>(t) * b, b) = seq[t];
  return out;
}

}  // namespace

Rollout rollout(const NdtModel& ndt, Channel& channel, Index batch, Index steps, Rng& noise_rng,
                Rng& channel_rng) {
  if (batch <= 0 || steps <= 0) throw ConfigError("rollout: batch and steps must be positive");
  const NdtArch& arch = ndt.arch();
  Rollout path;
  path.feedback = arch.feedback;
  const auto T = static_cast<std::size_t>(steps);
  path.noise.resize(T);
  path.raw.resize(T);
  path.x.resize(T);
  path.y.resize(T);
  path.ndt.resize(T);
  channel.reset(batch);

  Mat h = Mat::Zero(batch, arch.hidden);
  Mat c = Mat::Zero(batch, arch.hidden);
  if (!arch.feedback) {
    for (std::size_t t = 0; t < T; ++t) {
      path.noise[t] = noise_rng.normal_matrix(batch, arch.noise_dim);
      path.raw[t] = ndt.step(path.noise[t], nullptr, h, c, path.ndt[t]);
      h = path.ndt[t].cell.h;
      c = path.ndt[t].cell.c;
    }
    PowerScale s;
    power_normalize(stack_steps(path.raw), arch.power, arch.epsilon, &s);
    path.scales.assign(1, s);
    for (std::size_t t = 0; t < T; ++t) {
      path.x[t] = path.raw[t] * s.scale;
      path.y[t] = channel.step(path.x[t], channel_rng);
    }
  } else {
    path.scales.resize(T);
    Mat y_prev = Mat::Zero(batch, arch.y_dim);
    for (std::size_t t = 0; t < T; ++t) {
      path.noise[t] = noise_rng.normal_matrix(batch, arch.noise_dim);
      path.raw[t] = ndt.step(path.noise[t], &y_prev, h, c, path.ndt[t]);
      h = path.ndt[t].cell.h;
      c = path.ndt[t].cell.c;
      path.x[t] = power_normalize(path.raw[t], arch.power, arch.epsilon, &path.scales[t]);
      path.y[t] = channel.step(path.x[t], channel_rng);
      y_prev = path.y[t];
    }
  }
  double sq = 0.0;
  for (const auto& x : path.x) sq += x.squaredNorm();
  path.realized_power = sq / static_cast<double>(batch * steps * arch.x_dim);
  for (std::size_t t = 0; t < T; ++t) require_finite(path.y[t], "rollout output");
  return path;
}

void rollout_backward(NdtModel& ndt, const Channel& channel, const Rollout& path, const Batch& dx,
                      const Batch& dy) {
  if (!channel.has_pathwise_derivative())
    throw UnsupportedError("channel has no pathwise derivative; generator training is unsupported");
  const std::size_t T = path.x.size();
  if (dx.size() != T || dy.size() != T) throw DimensionError("rollout_backward: gradient length mismatch");
  const NdtArch& arch = ndt.arch();
  const Index b = path.batch();
  Mat dh = Mat::Zero(b, arch.hidden);
  Mat dc = Mat::Zero(b, arch.hidden);

  if (!path.feedback) {
    Batch dx_total(T);
    for (std::size_t t = 0; t < T; ++t) dx_total[t] = dx[t] + channel.pathwise_backward(dy[t]);
    const Mat draw_all =
        power_normalize_backward(stack_steps(path.raw), path.scales.front(), arch.epsilon, stack_steps(dx_total));
    for (std::size_t t = T; t-- > 0;) {
      const Mat draw = draw_all.middleRows(static_cast<Index>(t) * b, b);
      ndt.step_backward(path.ndt[t], draw, dh, dc);
    }
    return;
  }

  Mat dy_feedback = Mat::Zero(b, arch.y_dim);  // dL/dy_t arriving through step t+1
  for (std::size_t t = T; t-- > 0;) {
    const Mat dy_total = dy[t] + dy_feedback;
    const Mat dx_total = dx[t] + channel.pathwise_backward(dy_total);
    const Mat draw = power_normalize_backward(path.raw[t], path.scales[t], arch.epsilon, dx_total);
    dy_feedback = ndt.step_backward(path.ndt[t], draw, dh, dc);
  }
}

}  // namespace dinecap
