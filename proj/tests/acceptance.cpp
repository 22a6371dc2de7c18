// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Expected values come from the oracles below or from
// tests/oracles.hpp, never from the code under test.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "sepformer/datagen.hpp"
#include "sepformer/dualpath.hpp"
#include "sepformer/encoder.hpp"
#include "sepformer/gradsuite.hpp"
#include "sepformer/objectives.hpp"
#include "sepformer/ops.hpp"
#include "sepformer/profiler.hpp"
#include "sepformer/training.hpp"

namespace fs = std::filesystem;
using namespace sepformer;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path scratch_dir() {
  fs::path p = fs::temp_directory_path() / "sepformer_acceptance";
  fs::create_directories(p);
  return p;
}

// Reads the toy config shipped with the repository.
SepformerConfig toy_config() {
  return load_config(fs::path(SEPFORMER_SOURCE_DIR) / "configs" / "toy.cfg");
}

// 1 -------------------------------------------------------------------------
Outcome parameter_census_matches_paper() {
  const auto t0 = std::chrono::steady_clock::now();
  const SepformerConfig cfg;
  const std::uint64_t census = parameter_census(cfg);
  // Cross-check against the allocated model.
  std::uint64_t allocated = 0;
  for (const Var& p : make_model(cfg).parameters()) allocated += p.value().size();
  const double rel = static_cast<double>(census) / 25.7e6 - 1.0;
  const double secs = seconds_since(t0);
  return {std::abs(rel) <= 0.01 && census == allocated && secs < 1.0,
          fmt("%llu parameters (%+.2f%% vs 25.7M), allocated %llu, %.2f s",
              static_cast<unsigned long long>(census), 100.0 * rel,
              static_cast<unsigned long long>(allocated), secs)};
}

// 2 -------------------------------------------------------------------------
Outcome chunk_overlap_add_round_trip() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2);
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  double worst = 0.0;
  std::size_t shorter = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t f = pick(1, 8), c = 2 * pick(1, 60);
    // Every fourth case is shorter than one chunk.
    const std::size_t t = trial % 4 == 0 ? pick(1, c - 1) : pick(1, 400);
    shorter += t < c;
    const ChunkGeometry g = make_chunk_geometry(t, c);
    const NdArray h = random_array({f, t}, 1000 + trial);
    const NdArray back = overlap_add(chunk(Var(h), g), g).value();
    if (back.shape() != h.shape()) return {false, fmt("shape mismatch at case %d", trial)};
    worst = std::max(worst, oracle::max_abs_diff(back, h));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-12 && secs < 10.0,
          fmt("200 cases (%zu with T' < C), max error %.2e, %.2f s", shorter, worst, secs)};
}

// 3 -------------------------------------------------------------------------
Outcome residual_wiring_audit() {
  std::size_t checked = 0, mismatches = 0;
  for (auto variant : {AttentionVariant::kFull, AttentionVariant::kLongformer,
                       AttentionVariant::kLinformer, AttentionVariant::kReformer}) {
    AttentionSpec spec;
    spec.variant = variant;
    spec.heads = 2;
    spec.d_model = 8;
    spec.window = 5;
    spec.global_stride = 6;
    spec.proj_len = 6;
    spec.max_len = 32;
    spec.n_buckets = 4;
    spec.bucket_chunk = 4;
    std::mt19937_64 rng(3);
    TransformerLayerParams p = make_transformer_layer(spec, 8, 16, rng);
    p.ln2_gain.mutable_value() = random_array({8}, 4, 0.5, 1.5);
    p.b2.mutable_value() = random_array({8}, 5);
    const Var z(random_array({8, 20}, 6));
    LayerTrace tr;
    const Var out = transformer_layer(z, p, spec, &tr);
    // FFW branch recomputed from the exposed z' and z''.
    const NdArray ffw =
        feed_forward(ops::layer_norm(ops::add(tr.z_attn, tr.z_prime), p.ln2_gain, p.ln2_bias), p)
            .value();
    for (std::size_t i = 0; i < out.value().size(); ++i) {
      const double expect = (ffw[i] + tr.z_attn.value()[i]) + tr.z_prime.value()[i];
      const double got = out.value()[i];
      mismatches += std::memcmp(&expect, &got, sizeof(double)) != 0;
      const double branch = tr.ffw_branch.value()[i], recomputed = ffw[i];
      mismatches += std::memcmp(&recomputed, &branch, sizeof(double)) != 0;
      ++checked;
    }
  }
  return {mismatches == 0,
          fmt("%zu outputs over 4 attention variants, %zu bit mismatches", checked, mismatches)};
}

// 4 -------------------------------------------------------------------------
Outcome gradient_suite_passes() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string worst_op, failures;
  std::size_t n = 0;
  for (const GradSuiteEntry& e : gradient_suite("all")) {
    const GradcheckResult r = e.run();
    ++n;
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      worst_op = e.suite + "/" + e.op;
    }
    if (!r.passed(kGradTolerance)) failures += " " + e.op;
  }
  const double secs = seconds_since(t0);
  return {failures.empty() && secs < 300.0,
          fmt("%zu ops incl. end-to-end model, worst %.2e (%s), %.1f s%s%s", n, worst,
              worst_op.c_str(), secs, failures.empty() ? "" : ", failed:", failures.c_str())};
}

// 5 -------------------------------------------------------------------------
// Heap's algorithm over every permutation; keeps the first best mean.
void brute_force_pit(const std::vector<std::vector<double>>& m, std::vector<std::size_t>& best,
                     double& best_mean) {
  const std::size_t n = m.size();
  std::vector<std::vector<std::size_t>> all;
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  std::function<void(std::size_t)> heap = [&](std::size_t k) {
    if (k == 1) {
      all.push_back(p);
      return;
    }
    for (std::size_t i = 0; i < k; ++i) {
      heap(k - 1);
      std::swap(p[k % 2 == 0 ? i : 0], p[k - 1]);
    }
  };
  heap(n);
  best_mean = -INFINITY;
  for (const auto& perm : all) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += m[i][perm[i]];
    const double mean = s / static_cast<double>(n);
    if (mean > best_mean) {
      best_mean = mean;
      best = perm;
    }
  }
}

Outcome pit_matches_brute_force() {
  std::size_t perm_mismatch = 0, value_mismatch = 0;
  double worst_gap = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t ns = trial % 2 == 0 ? 2 : 3;
    std::vector<NdArray> targets;
    std::vector<Var> estimates;
    for (std::size_t k = 0; k < ns; ++k) {
      targets.push_back(random_array({64}, 5000 + 10 * trial + k));
      estimates.emplace_back(random_array({64}, 7000 + 10 * trial + k));
    }
    // Nudge each estimate towards a shuffled target so the optimum is clear.
    std::vector<std::size_t> truth(ns);
    std::iota(truth.begin(), truth.end(), 0);
    std::shuffle(truth.begin(), truth.end(), std::mt19937_64(trial));
    for (std::size_t k = 0; k < ns; ++k)
      for (std::size_t i = 0; i < 64; ++i)
        estimates[k].mutable_value()[i] += 0.8 * targets[truth[k]][i];

    std::vector<std::vector<double>> m(ns, std::vector<double>(ns));
    for (std::size_t i = 0; i < ns; ++i)
      for (std::size_t j = 0; j < ns; ++j)
        m[i][j] = si_snr(estimates[i].value().data(), targets[j].data());
    std::vector<std::size_t> best;
    double best_mean = 0.0;
    brute_force_pit(m, best, best_mean);

    const PitLoss got = pit_loss(estimates, targets);
    perm_mismatch += got.result.permutation != best;
    const double gap = std::abs(-got.loss.value()[0] - best_mean);
    worst_gap = std::max(worst_gap, gap);
    value_mismatch += gap > 1e-12;
  }
  return {perm_mismatch == 0 && value_mismatch == 0,
          fmt("100 instances (Ns=2,3): %zu permutation and %zu value mismatches, max gap %.1e dB",
              perm_mismatch, value_mismatch, worst_gap)};
}

// 6 -------------------------------------------------------------------------
Outcome si_snr_properties() {
  const NdArray s = random_array({4000}, 60);
  const double ceiling = si_snr(s.data(), s.data());

  const NdArray est = random_array({4000}, 61);
  const double base = si_snr(est.data(), s.data());
  double scale_gap = 0.0;
  for (double a : {1e-3, 0.37, 5.0, 1e3}) {
    NdArray scaled = est;
    for (double& v : scaled.data()) v *= a;
    scale_gap = std::max(scale_gap, std::abs(si_snr(scaled.data(), s.data()) - base));
  }

  // Zero-mean target and a zero-mean noise of equal energy orthogonal to it.
  std::vector<double> t(4000), n(4000);
  const NdArray r1 = random_array({4000}, 62), r2 = random_array({4000}, 63);
  auto center = [](std::vector<double>& v) {
    const double mu = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    for (double& x : v) x -= mu;
  };
  for (std::size_t i = 0; i < 4000; ++i) {
    t[i] = r1[i];
    n[i] = r2[i];
  }
  center(t);
  center(n);
  double tn = 0.0, tt = 0.0;
  for (std::size_t i = 0; i < 4000; ++i) {
    tn += t[i] * n[i];
    tt += t[i] * t[i];
  }
  for (std::size_t i = 0; i < 4000; ++i) n[i] -= tn / tt * t[i];
  double nn = 0.0;
  for (double v : n) nn += v * v;
  std::vector<double> noisy(4000);
  for (std::size_t i = 0; i < 4000; ++i) noisy[i] = t[i] + n[i] * std::sqrt(tt / nn);
  const double orth = si_snr(noisy, t);

  return {std::abs(ceiling - 30.0) <= 1e-12 && scale_gap <= 1e-9 && std::abs(orth) <= 0.01,
          fmt("ceiling %.15f dB, scale gap %.1e dB, orthogonal noise %+.4f dB", ceiling,
              scale_gap, orth)};
}

// 7 -------------------------------------------------------------------------
Outcome attention_equivalences() {
  auto spec_for = [](AttentionVariant v) {
    AttentionSpec s;
    s.variant = v;
    s.heads = 2;
    s.d_model = 6;
    return s;
  };
  // Longformer whose window covers the whole sequence.
  const std::size_t t_len = 9;
  AttentionSpec lf = spec_for(AttentionVariant::kLongformer);
  lf.window = 2 * t_len - 1;
  lf.global_stride = 0;
  std::mt19937_64 rng(70);
  AttentionWeights w = make_attention_weights(spec_for(AttentionVariant::kFull), 6, rng);
  const NdArray x = random_array({6, t_len}, 71);
  const NdArray full = full_attention(Var(x), w, spec_for(AttentionVariant::kFull)).value();
  const double lf_gap = oracle::max_abs_diff(longformer_attention(Var(x), w, lf).value(), full);

  // Linformer with identity projections.
  AttentionSpec lin = spec_for(AttentionVariant::kLinformer);
  lin.proj_len = lin.max_len = t_len;
  std::mt19937_64 rng_lin(72);
  AttentionWeights wl = make_attention_weights(lin, 6, rng_lin);
  wl.w_q = w.w_q;
  wl.w_k = w.w_k;
  wl.w_v = w.w_v;
  wl.w_o = w.w_o;
  NdArray eye({t_len, t_len});
  for (std::size_t i = 0; i < t_len; ++i) eye(i, i) = 1.0;
  wl.proj_k.mutable_value() = eye;
  wl.proj_v.mutable_value() = eye;
  const double lin_gap = oracle::max_abs_diff(linformer_attention(Var(x), wl, lin).value(), full);

  // Reformer degenerated to one bucket chunk spanning the sequence, against
  // brute-force shared-QK attention with self excluded.
  AttentionSpec rf = spec_for(AttentionVariant::kReformer);
  rf.d_model = 8;
  rf.n_buckets = 2;
  rf.bucket_chunk = 64;
  std::mt19937_64 rng_rf(73);
  AttentionWeights wr = make_attention_weights(rf, 8, rng_rf);
  const NdArray xr = random_array({8, 20}, 74);
  const double rf_gap = oracle::max_abs_diff(reformer_attention(Var(xr), wr, rf).value(),
                                             oracle::brute_force_attention(xr, wr, 2, true, true));

  // Full attention against the per-position loop on T=4.
  const NdArray x4 = random_array({6, 4}, 75);
  const double bf_gap =
      oracle::max_abs_diff(full_attention(Var(x4), w, spec_for(AttentionVariant::kFull)).value(),
                           oracle::brute_force_attention(x4, w, 2, false, false));

  return {lf_gap <= 1e-9 && lin_gap <= 1e-9 && rf_gap <= 1e-6 && bf_gap <= 1e-12,
          fmt("longformer %.1e, linformer %.1e, reformer %.1e, brute force T=4 %.1e", lf_gap,
              lin_gap, rf_gap, bf_gap)};
}

// 8 -------------------------------------------------------------------------
Outcome complexity_scaling() {
  const auto t0 = std::chrono::steady_clock::now();
  std::string detail;
  bool ok = true;
  for (auto v : {AttentionVariant::kFull, AttentionVariant::kLongformer,
                 AttentionVariant::kLinformer, AttentionVariant::kReformer}) {
    SepformerConfig cfg;
    cfg.chunk = 0;
    cfg.intra_attention = cfg.inter_attention = v;
    const MacBreakdown two = count_macs(cfg, 16000), four = count_macs(cfg, 32000);
    double ratio;
    if (v == AttentionVariant::kFull) {
      ratio = static_cast<double>(four.attention) / two.attention;
      ok = ok && ratio >= 3.6 && ratio <= 4.4;
    } else {
      ratio = static_cast<double>(four.total) / two.total;
      ok = ok && ratio >= 1.7 && ratio <= 2.3;
    }
    detail += fmt("%s %.3f, ", to_string(v).c_str(), ratio);
  }
  // The closed form must agree with the instrumented kernels.
  SepformerConfig small = toy_config();
  small.chunk = 0;
  small.intra_attention = small.inter_attention = AttentionVariant::kReformer;
  const NdArray x = bench_input(small, 0.25, 8);
  MacCounts counted;
  {
    MacCounterScope scope;
    SeparationOutput out = separate(Var(x), make_model(small));
    counted = scope.counts();
  }
  const bool same = counted.total() == count_macs(small, x.size()).total;
  const double secs = seconds_since(t0);
  return {ok && same && secs < 120.0,
          detail + fmt("closed form %s instrumented count, %.2f s", same ? "==" : "!=", secs)};
}

// 9 -------------------------------------------------------------------------
Outcome memory_ordering() {
  SepformerConfig cfg = toy_config();
  const NdArray x = bench_input(cfg, 4.0, 9);
  auto peak = [&](std::size_t chunk) {
    SepformerConfig c = cfg;
    c.chunk = chunk;
    return forward_peak_bytes(make_model(c), x);
  };
  const std::uint64_t none = peak(0), c1000 = peak(1000), c250 = peak(250);
  return {none > c1000 && c1000 > c250,
          fmt("toy width, 4 s: no chunking %.1f MB > C=1000 %.1f MB > C=250 %.1f MB",
              none / 1e6, c1000 / 1e6, c250 / 1e6)};
}

// 10 ------------------------------------------------------------------------
Outcome toy_overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  const SepformerConfig cfg = toy_config();
  const TrainItem item = toy_item(cfg);
  TrainOptions opt;
  opt.steps = 2000;
  auto run = [&] {
    SepformerModel m = make_model(cfg);
    train_toy(m, [&](std::size_t) { return item; }, opt);
    return m;
  };
  const SepformerModel a = run();
  const double si_snri = evaluate_si_snri(a, item);
  const SepformerModel b = run();
  bool identical = true;
  const auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i)
    identical = identical && std::memcmp(pa[i].value().ptr(), pb[i].value().ptr(),
                                         pa[i].value().size() * sizeof(double)) == 0;
  const double secs = seconds_since(t0);
  return {si_snri >= 10.0 && identical && secs < 900.0,
          fmt("SI-SNRi %.2f dB after 2000 steps, rerun %s, %.0f s for both runs", si_snri,
              identical ? "bit-identical" : "DIFFERS", secs)};
}

// 11 ------------------------------------------------------------------------
Outcome positional_encoding_closed_form() {
  const std::size_t t_len = 4000, d = 256;
  const NdArray pe = positional_encoding(t_len, d);
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const std::size_t pos = std::uniform_int_distribution<std::size_t>(0, t_len - 1)(rng);
    const std::size_t j = std::uniform_int_distribution<std::size_t>(0, d - 1)(rng);
    const long double angle = static_cast<long double>(pos) /
                              std::pow(10000.0L, static_cast<long double>(j - j % 2) / d);
    const long double expect = j % 2 == 0 ? std::sin(angle) : std::cos(angle);
    worst = std::max(worst, static_cast<double>(std::abs(expect - pe(pos, j))));
  }
  return {worst <= 1e-12, fmt("20 points, max error %.1e", worst)};
}

// 12 ------------------------------------------------------------------------
Outcome checkpoint_and_wav_round_trips() {
  const fs::path dir = scratch_dir();
  SepformerConfig cfg = toy_config();
  cfg.seed = 12;
  const SepformerModel m = make_model(cfg);
  save_checkpoint(dir / "a.ckpt", m);
  const SepformerModel back = load_checkpoint(dir / "a.ckpt");
  bool exact = back.config == m.config;
  const auto pa = m.named_parameters(), pb = back.named_parameters();
  exact = exact && pa.size() == pb.size();
  for (std::size_t i = 0; exact && i < pa.size(); ++i)
    exact = pa[i].first == pb[i].first && pa[i].second.shape() == pb[i].second.shape() &&
            std::memcmp(pa[i].second.value().ptr(), pb[i].second.value().ptr(),
                        pa[i].second.value().size() * sizeof(double)) == 0;
  save_checkpoint(dir / "b.ckpt", back);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  };
  const bool same_bytes = slurp(dir / "a.ckpt") == slurp(dir / "b.ckpt");

  Signal s;
  const NdArray r = random_array({8000}, 13, -1.0, 1.0);
  s.samples.assign(r.data().begin(), r.data().end());
  s.samples.front() = 1.0;
  s.samples.back() = -1.0;
  wav_write(dir / "r.wav", s);
  const Signal w = wav_read(dir / "r.wav");
  double worst = w.size() == s.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < std::min(w.size(), s.size()); ++i)
    worst = std::max(worst, std::abs(w.samples[i] - s.samples[i]));
  fs::remove_all(dir);
  return {exact && same_bytes && worst <= 1.0 / 32768,
          fmt("checkpoint %s (%zu tensors), re-save %s, WAV max error %.2f LSB",
              exact ? "bit-exact" : "DIFFERS", pa.size(), same_bytes ? "identical" : "DIFFERS",
              worst * 32768)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"parameter census", parameter_census_matches_paper},
      {"chunk/overlap-add round trip", chunk_overlap_add_round_trip},
      {"residual wiring audit", residual_wiring_audit},
      {"gradient suite", gradient_suite_passes},
      {"PIT oracle", pit_matches_brute_force},
      {"SI-SNR properties", si_snr_properties},
      {"attention equivalences", attention_equivalences},
      {"complexity scaling", complexity_scaling},
      {"memory ordering", memory_ordering},
      {"toy overfit", toy_overfit},
      {"positional encoding", positional_encoding_closed_form},
      {"checkpoint and WAV round trips", checkpoint_and_wav_round_trips},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2zu %-4s %s: %s\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first,
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
