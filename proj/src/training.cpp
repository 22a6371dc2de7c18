#include "sepformer/training.hpp"

#include <chrono>
#include <cstdio>
#include <cmath>
#include <ostream>
#include <string>

#include "sepformer/errors.hpp"
#include "sepformer/objectives.hpp"

namespace sepformer {

TrainItem toy_item(const SepformerConfig& cfg, const ToyData& data) {
  auto pool = synth_sources(data.kind, cfg.sources, data.seconds, data.synth_seed,
                            cfg.sample_rate);
  MixSpec spec;
  spec.sources = cfg.sources;
  spec.seed = data.mix_seed;
  const Mixture mx = dynamic_mix(pool, spec);
  TrainItem item;
  item.mixture = NdArray({mx.mixture.size()}, mx.mixture.samples);
  for (const Signal& t : mx.targets) item.targets.push_back(NdArray({t.size()}, t.samples));
  return item;
}

double clip_grad_norm(std::vector<NdArray>& grads, double max_norm) {
  double sq = 0.0;
  for (const NdArray& g : grads)
    for (double v : g.data()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (NdArray& g : grads)
      for (double& v : g.data()) v *= s;
  }
  return norm;
}

void adam_step(std::vector<Var>& params, const std::vector<NdArray>& grads, AdamState& st) {
  if (params.size() != grads.size())
    throw DimensionError("adam_step: parameter and gradient counts differ");
  if (st.m.empty()) {
    for (const Var& p : params) {
      st.m.emplace_back(p.shape());
      st.v.emplace_back(p.shape());
    }
  }
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    NdArray& w = params[k].mutable_value();
    const NdArray& g = grads[k];
    NdArray& m = st.m[k];
    NdArray& v = st.v[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g[i];
      v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g[i] * g[i];
      w[i] -= st.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + st.eps);
    }
  }
}

bool PlateauScheduler::observe(double value, AdamState& st) {
  if (!have_best_ || value < best_) {
    have_best_ = true;
    best_ = value;
    bad_ = 0;
    return false;
  }
  if (++bad_ < patience_) return false;
  bad_ = 0;
  st.lr *= 0.5;
  ++halvings_;
  return true;
}

namespace {

std::vector<NdArray> to_arrays(const std::vector<Var>& vars) {
  std::vector<NdArray> out;
  for (const Var& v : vars) out.push_back(v.value());
  return out;
}

}  // namespace

StepResult train_step(SepformerModel& model, const TrainItem& item, AdamState& st,
                      double clip_norm) {
  std::vector<Var> params = model.parameters();
  for (Var& p : params) p.zero_grad();
  Tape tape;
  StepResult r;
  std::vector<NdArray> estimates;
  {
    TapeScope scope(tape);
    SeparationOutput out = separate(Var(item.mixture), model);
    PitLoss pl = pit_loss(out.estimates, item.targets);
    r.loss = pl.loss.value()[0];
    estimates = to_arrays(out.estimates);
    if (!std::isfinite(r.loss)) return r;
    tape.backward(pl.loss);
  }
  r.si_snri = improvement(estimates, item.targets, item.mixture).si_snri;
  std::vector<NdArray> grads;
  for (const Var& p : params) grads.push_back(p.grad());
  clip_grad_norm(grads, clip_norm);
  adam_step(params, grads, st);
  return r;
}

double evaluate_si_snri(const SepformerModel& model, const TrainItem& item) {
  SeparationOutput out = separate(Var(item.mixture), model);
  return improvement(to_arrays(out.estimates), item.targets, item.mixture).si_snri;
}

std::vector<TraceRow> train_toy(SepformerModel& model, const DataSource& data,
                                const TrainOptions& opt) {
  AdamState st;
  st.lr = opt.lr;
  PlateauScheduler plateau(opt.patience);
  std::vector<TraceRow> trace;
  double window_loss = 0.0;
  std::size_t window_n = 0;
  for (std::size_t step = 0; step < opt.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr_used = st.lr;
    StepResult r = train_step(model, data(step), st, opt.clip_norm);
    if (!std::isfinite(r.loss))
      throw NumericError("non-finite loss at step " + std::to_string(step));
    const auto t1 = std::chrono::steady_clock::now();
    trace.push_back({step, r.loss, lr_used, r.si_snri,
                     std::chrono::duration<double, std::milli>(t1 - t0).count()});
    window_loss += r.loss;
    if (++window_n == opt.eval_every) {
      plateau.observe(window_loss / static_cast<double>(window_n), st);
      window_loss = 0.0;
      window_n = 0;
    }
  }
  return trace;
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& rows) {
  out << "step,loss,lr,si_snri,wall_ms\n";
  char buf[160];
  for (const TraceRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.3f\n", r.step, r.loss, r.lr,
                  r.si_snri, r.wall_ms);
    out << buf;
  }
}

}  // namespace sepformer
