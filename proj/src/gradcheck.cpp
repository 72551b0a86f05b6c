// SPDX-License-Identifier: Apache-2.0
#include "dinecap/gradcheck.hpp"

#include "dinecap/channel.hpp"
#include "dinecap/dine.hpp"
#include "dinecap/errors.hpp"
#include "dinecap/ndt.hpp"

namespace dinecap {
namespace {

void append(GradCheckReport& into, const GradCheckReport& from, const std::string& prefix) {
  for (auto b : from.blocks) {
    b.name = prefix + b.name;
    into.blocks.push_back(b);
  }
}

Batch random_batch(Rng& rng, Index steps, Index batch, Index dim) {
  Batch out(static_cast<std::size_t>(steps));
  for (auto& m : out) m = rng.normal_matrix(batch, dim);
  return out;
}

GradCheckReport nn_suite(const GradSuiteOptions& o) {
  Rng rng(o.seed, "gradcheck.nn");
  GradCheckReport report;
  const Index in = 3;

  {
    Dense dense("dense", in, o.hidden, Activation::kTanh);
    dense.init(rng);
    dense.bias().value = rng.normal_matrix(1, o.hidden) * 0.1;
    Mat x = rng.normal_matrix(o.batch, in);
    const Mat w = rng.normal_matrix(o.batch, o.hidden);
    auto f = [&] { return (dense.forward(x).array() * w.array()).sum(); };
    ParamRefs ps;
    dense.collect(ps);
    zero_grads(ps);
    const Mat dx = dense.backward(x, dense.forward(x), w);
    append(report, grad_check(f, ps, o.step), "nn/");
    report.blocks.push_back(grad_check_input(f, x, dx, "nn/dense.input", o.step));
  }
  {
    Mlp mlp("mlp", in, {o.hidden, o.hidden}, 2);
    mlp.init(rng);
    Mat x = rng.normal_matrix(o.batch, in);
    const Mat w = rng.normal_matrix(o.batch, 2);
    auto f = [&] { return (mlp.forward(x, nullptr).array() * w.array()).sum(); };
    ParamRefs ps;
    mlp.collect(ps);
    zero_grads(ps);
    Mlp::Cache cache;
    mlp.forward(x, &cache);
    const Mat dx = mlp.backward(cache, w);
    append(report, grad_check(f, ps, o.step), "nn/");
    report.blocks.push_back(grad_check_input(f, x, dx, "nn/mlp.input", o.step));
  }
  {
    Lstm lstm("lstm", in, o.hidden);
    lstm.init(rng);
    lstm.bias().value += rng.normal_matrix(1, 4 * o.hidden) * 0.1;
    Batch xs = random_batch(rng, o.steps, o.batch, in);
    const Batch ws = random_batch(rng, o.steps, o.batch, o.hidden);
    auto f = [&] {
      Mat h = Mat::Zero(o.batch, o.hidden);
      Mat c = Mat::Zero(o.batch, o.hidden);
      double s = 0.0;
      for (std::size_t t = 0; t < xs.size(); ++t) {
        std::tie(h, c) = lstm.cell(xs[t], h, c);
        s += (h.array() * ws[t].array()).sum();
      }
      return s;
    };
    ParamRefs ps;
    lstm.collect(ps);
    zero_grads(ps);
    std::vector<Lstm::StepCache> caches(xs.size());
    std::vector<Mat> h_prev(xs.size());
    Mat h = Mat::Zero(o.batch, o.hidden);
    Mat c = Mat::Zero(o.batch, o.hidden);
    for (std::size_t t = 0; t < xs.size(); ++t) {
      h_prev[t] = h;
      lstm.step(xs[t], lstm.recurrent(h), c, caches[t]);
      h = caches[t].h;
      c = caches[t].c;
    }
    Mat dh_next = Mat::Zero(o.batch, o.hidden);
    Mat dc_next = Mat::Zero(o.batch, o.hidden);
    Batch dxs(xs.size());
    for (std::size_t t = xs.size(); t-- > 0;) {
      Mat dc_prev;
      const Mat dpre = lstm.step_backward(caches[t], ws[t] + dh_next, dc_next, dc_prev);
      dxs[t] = lstm.input_backward(xs[t], dpre);
      dh_next = lstm.recurrent_backward(h_prev[t], dpre);
      dc_next = dc_prev;
    }
    append(report, grad_check(f, ps, o.step), "nn/");
    report.blocks.push_back(grad_check_input(f, xs.front(), dxs.front(), "nn/lstm.input[0]", o.step));
  }
  return report;
}

GradCheckReport dine_suite(const GradSuiteOptions& o) {
  Rng rng(o.seed, "gradcheck.dine");
  GradCheckReport report;
  DineArch arch;
  arch.hidden = o.hidden;
  arch.head = {o.hidden};
  DineModel model(arch);
  model.init(rng);
  Trajectories data{random_batch(rng, o.steps, o.batch, 1), random_batch(rng, o.steps, o.batch, 1)};
  for (std::size_t t = 0; t < data.y.size(); ++t) data.y[t] += 0.8 * data.x[t];
  const ReferenceBox box = fit_reference(data.y, 0.05, 0.1);
  const Batch y_ref = sample_reference(box, o.batch, o.steps, rng);

  ParamRefs ps = model.y_potential().params();
  for (auto* p : model.yx_potential().params()) ps.push_back(p);
  zero_grads(ps);
  dine_objectives(model, data, y_ref, true, nullptr);
  auto sum_objectives = [&] {
    const DvValues v = dine_values(model, data, y_ref);
    return v.d_y + v.d_yx;
  };
  append(report, grad_check(sum_objectives, ps, o.step), "dine/");

  DataGradients g;
  dine_objectives(model, data, y_ref, false, &g);
  auto estimate = [&] { return dine_values(model, data, y_ref).estimate(); };
  for (std::size_t t = 0; t < data.x.size(); ++t) {
    report.blocks.push_back(grad_check_input(estimate, data.x[t], g.dx[t], "dine/dx[" + std::to_string(t) + "]", o.step));
    report.blocks.push_back(grad_check_input(estimate, data.y[t], g.dy[t], "dine/dy[" + std::to_string(t) + "]", o.step));
  }
  return report;
}

GradCheckReport ndt_suite(const GradSuiteOptions& o) {
  GradCheckReport report;
  for (const bool feedback : {false, true}) {
    Rng rng(o.seed, feedback ? "gradcheck.ndt.fb" : "gradcheck.ndt.ff");
    NdtArch arch;
    arch.hidden = o.hidden;
    arch.head = {o.hidden};
    arch.feedback = feedback;
    arch.power = 1.5;
    NdtModel ndt(arch);
    ndt.init(rng);
    const Batch noise = random_batch(rng, o.steps, o.batch, 1);
    const Batch fb = random_batch(rng, o.steps, o.batch, 1);
    const Batch w = random_batch(rng, o.steps, o.batch, 1);

    // Forward with the same normalization placement as the rollout; the
    // fed-back values are external constants here.
    struct Pass {
      std::vector<NdtModel::StepCache> caches;
      Batch raw;
      Batch x;
      std::vector<PowerScale> scales;
    };
    auto forward = [&](Pass& p) {
      p.caches.resize(noise.size());
      p.raw.resize(noise.size());
      p.x.resize(noise.size());
      Mat h = Mat::Zero(o.batch, arch.hidden);
      Mat c = Mat::Zero(o.batch, arch.hidden);
      for (std::size_t t = 0; t < noise.size(); ++t) {
        p.raw[t] = ndt.step(noise[t], feedback ? &fb[t] : nullptr, h, c, p.caches[t]);
        h = p.caches[t].cell.h;
        c = p.caches[t].cell.c;
      }
      if (feedback) {
        p.scales.resize(noise.size());
        for (std::size_t t = 0; t < noise.size(); ++t)
          p.x[t] = power_normalize(p.raw[t], arch.power, arch.epsilon, &p.scales[t]);
      } else {
        Mat all(o.batch * o.steps, 1);
        for (std::size_t t = 0; t < noise.size(); ++t) all.middleRows(static_cast<Index>(t) * o.batch, o.batch) = p.raw[t];
        p.scales.resize(1);
        const Mat x = power_normalize(all, arch.power, arch.epsilon, &p.scales[0]);
        for (std::size_t t = 0; t < noise.size(); ++t) p.x[t] = x.middleRows(static_cast<Index>(t) * o.batch, o.batch);
      }
    };
    auto f = [&] {
      Pass p;
      forward(p);
      double s = 0.0;
      for (std::size_t t = 0; t < p.x.size(); ++t) s += (p.x[t].array() * w[t].array()).sum();
      return s;
    };
    ParamRefs ps = ndt.params();
    zero_grads(ps);
    Pass p;
    forward(p);
    Batch draw(noise.size());
    if (feedback) {
      for (std::size_t t = 0; t < noise.size(); ++t)
        draw[t] = power_normalize_backward(p.raw[t], p.scales[t], arch.epsilon, w[t]);
    } else {
      Mat all(o.batch * o.steps, 1);
      Mat wall(o.batch * o.steps, 1);
      for (std::size_t t = 0; t < noise.size(); ++t) {
        all.middleRows(static_cast<Index>(t) * o.batch, o.batch) = p.raw[t];
        wall.middleRows(static_cast<Index>(t) * o.batch, o.batch) = w[t];
      }
      const Mat d = power_normalize_backward(all, p.scales[0], arch.epsilon, wall);
      for (std::size_t t = 0; t < noise.size(); ++t) draw[t] = d.middleRows(static_cast<Index>(t) * o.batch, o.batch);
    }
    Mat dh = Mat::Zero(o.batch, arch.hidden);
    Mat dc = Mat::Zero(o.batch, arch.hidden);
    for (std::size_t t = noise.size(); t-- > 0;) ndt.step_backward(p.caches[t], draw[t], dh, dc);
    append(report, grad_check(f, ps, o.step), feedback ? "ndt/fb/" : "ndt/ff/");
  }
  return report;
}

GradCheckReport rollout_suite(const GradSuiteOptions& o) {
  GradCheckReport report;
  const std::pair<ChannelSpec, bool> cases[] = {{ChannelSpec::awgn(1.0), false}, {ChannelSpec::ma1(0.5), true}};
  for (const auto& [spec, feedback] : cases) {
    Rng rng(o.seed, "gradcheck.rollout." + spec.family_name());
    DineArch darch;
    darch.hidden = o.hidden;
    darch.head = {o.hidden};
    DineModel dine(darch);
    dine.init(rng);
    NdtArch narch;
    narch.hidden = o.hidden;
    narch.head = {o.hidden};
    narch.feedback = feedback;
    NdtModel ndt(narch);
    ndt.init(rng);
    auto channel = make_channel(spec);
    const Rng noise0 = rng.split("noise");
    const Rng chan0 = rng.split("channel");

    Rng n1 = noise0;
    Rng c1 = chan0;
    const Rollout path = rollout(ndt, *channel, o.batch, o.steps, n1, c1);
    const ReferenceBox box = fit_reference(path.y, 0.05, 0.1);
    const Batch y_ref = sample_reference(box, o.batch, o.steps, rng);

    auto f = [&] {
      Rng n = noise0;
      Rng c = chan0;
      const Rollout p = rollout(ndt, *channel, o.batch, o.steps, n, c);
      return dine_values(dine, p.trajectories(), y_ref).estimate();
    };
    ParamRefs ps = ndt.params();
    zero_grads(ps);
    DataGradients g;
    dine_objectives(dine, path.trajectories(), y_ref, false, &g);
    rollout_backward(ndt, *channel, path, g.dx, g.dy);
    append(report, grad_check(f, ps, o.step), "rollout/" + spec.family_name() + (feedback ? "/fb/" : "/ff/"));
  }
  return report;
}

}  // namespace

GradCheckReport run_grad_suite(const std::string& selector, const GradSuiteOptions& options) {
  if (options.hidden <= 0 || options.steps <= 0 || options.batch <= 0)
    throw ConfigError("grad-check sizes must be positive");
  if (selector == "nn") return nn_suite(options);
  if (selector == "dine") return dine_suite(options);
  if (selector == "ndt") return ndt_suite(options);
  if (selector == "rollout") return rollout_suite(options);
  throw ConfigError("unknown grad-check selector '" + selector + "' (expected nn, dine, ndt or rollout)");
}

}  // namespace dinecap
