#include "sepformer/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "sepformer/errors.hpp"
#include "sepformer/ops.hpp"

namespace sepformer {
namespace {

constexpr double kDbPerNeper = 10.0 / 2.302585092994046;  // 10 / ln 10

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b || a == 0)
    throw DimensionError(std::string(what) + ": estimate length " + std::to_string(a) +
                         " vs target length " + std::to_string(b));
}

std::vector<double> centered(std::span<const double> x) {
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  std::vector<double> out(x.begin(), x.end());
  for (double& v : out) v -= mean;
  return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

struct SiSnrParts {
  std::vector<double> est, tgt;  // zero-mean copies
  double alpha = 0.0;            // projection gain
  double a = 0.0;                // |s_t|^2
  double e = 0.0;                // |est - s_t|^2
  double value = 0.0;
};

SiSnrParts si_snr_parts(std::span<const double> estimate, std::span<const double> target) {
  require_same_length(estimate.size(), target.size(), "si_snr");
  SiSnrParts p;
  p.est = centered(estimate);
  p.tgt = centered(target);
  const double tt = dot(p.tgt, p.tgt);
  if (tt == 0.0) throw UndefinedTargetError("si_snr: target has zero energy");
  p.alpha = dot(p.est, p.tgt) / tt;
  p.a = p.alpha * p.alpha * tt;
  for (std::size_t i = 0; i < p.est.size(); ++i) {
    const double r = p.est[i] - p.alpha * p.tgt[i];
    p.e += r * r;
  }
  if (!std::isfinite(p.a) || !std::isfinite(p.e)) {
    p.value = std::numeric_limits<double>::quiet_NaN();
    return p;
  }
  p.value = p.a == 0.0 ? kSiSnrFloorDb
                       : std::max(kSiSnrFloorDb,
                                  10.0 * std::log10(p.a / (p.e + kSiSnrTau * p.a)));
  return p;
}

}  // namespace

double si_snr(std::span<const double> estimate, std::span<const double> target) {
  return si_snr_parts(estimate, target).value;
}

Var si_snr(const Var& estimate, const NdArray& target) {
  SiSnrParts p = si_snr_parts(estimate.value().data(), target.data());
  Var out(NdArray({1}, p.value));
  if (Tape* tape = tape_for(out, {&estimate})) {
    tape->record([en = estimate.node(), on = out.node(), p = std::move(p)] {
      if (on->grad.empty() || p.a == 0.0) return;
      // v = -10/ln10 * ln(E/A + tau) with E = |est|^2 - A, A = alpha^2 |s|^2:
      // d(E/A)/d est = (2 est - 2 |est|^2 / A * s_t) / A.
      const double ratio = p.e / p.a;
      const double ee = dot(p.est, p.est);
      const double outer = -kDbPerNeper / (ratio + kSiSnrTau) * on->grad[0];
      const std::size_t n = p.est.size();
      std::vector<double> g(n);
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double st = p.alpha * p.tgt[i];
        g[i] = outer * (2.0 * p.est[i] - 2.0 * ee / p.a * st) / p.a;
        mean += g[i];
      }
      mean /= static_cast<double>(n);
      // Mean removal is a projection; its adjoint is itself.
      NdArray& ge = en->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) ge[i] += g[i] - mean;
    });
  }
  return out;
}

double sdr_simple(std::span<const double> estimate, std::span<const double> target) {
  require_same_length(estimate.size(), target.size(), "sdr_simple");
  double tt = 0.0, et = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    tt += target[i] * target[i];
    et += estimate[i] * target[i];
  }
  if (tt == 0.0) throw UndefinedTargetError("sdr_simple: target has zero energy");
  const double beta = et / tt;
  double sig = 0.0, res = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double s = beta * target[i];
    sig += s * s;
    res += (estimate[i] - s) * (estimate[i] - s);
  }
  if (sig == 0.0) return kSiSnrFloorDb;
  if (res == 0.0) return kSdrCapDb;
  return std::clamp(10.0 * std::log10(sig / res), kSiSnrFloorDb, kSdrCapDb);
}

PitResult pit_from_matrix(const std::vector<std::vector<double>>& matrix) {
  const std::size_t n = matrix.size();
  if (n == 0 || n > 3)
    throw DimensionError("pit: supports 1 to 3 sources, got " + std::to_string(n));
  for (const auto& row : matrix)
    if (row.size() != n) throw DimensionError("pit: metric matrix must be square");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  PitResult r;
  r.matrix = matrix;
  r.permutation = perm;  // kept if every mean is NaN
  double best = -std::numeric_limits<double>::infinity();
  do {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += matrix[i][perm[i]];
    const double mean = sum / static_cast<double>(n);
    if (mean > best) {
      best = mean;
      r.permutation = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  r.mean_best = best;
  if (std::isinf(best)) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += matrix[i][i];
    r.mean_best = sum / static_cast<double>(n);
  }
  return r;
}

PitLoss pit_loss(const std::vector<Var>& estimates, const std::vector<NdArray>& targets) {
  if (estimates.size() != targets.size())
    throw DimensionError("pit_loss: " + std::to_string(estimates.size()) +
                         " estimates vs " + std::to_string(targets.size()) + " targets");
  const std::size_t n = estimates.size();
  std::vector<std::vector<double>> matrix(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      matrix[i][j] = si_snr(estimates[i].value().data(), targets[j].data());
  PitLoss out;
  out.result = pit_from_matrix(matrix);
  Var total;
  for (std::size_t i = 0; i < n; ++i) {
    Var term = si_snr(estimates[i], targets[out.result.permutation[i]]);
    total = i == 0 ? term : ops::add(total, term);
  }
  out.loss = ops::scale(total, -1.0 / static_cast<double>(n));
  return out;
}

Improvement improvement(const std::vector<NdArray>& estimates,
                        const std::vector<NdArray>& targets, const NdArray& mixture) {
  const std::size_t n = estimates.size();
  if (n != targets.size())
    throw DimensionError("improvement: estimate and target counts differ");
  std::vector<std::vector<double>> matrix(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      matrix[i][j] = si_snr(estimates[i].data(), targets[j].data());
  Improvement imp;
  imp.permutation = pit_from_matrix(matrix).permutation;
  for (std::size_t i = 0; i < n; ++i) {
    const NdArray& t = targets[imp.permutation[i]];
    imp.si_snri += matrix[i][imp.permutation[i]] - si_snr(mixture.data(), t.data());
    imp.sdri += sdr_simple(estimates[i].data(), t.data()) - sdr_simple(mixture.data(), t.data());
  }
  imp.si_snri /= static_cast<double>(n);
  imp.sdri /= static_cast<double>(n);
  return imp;
}

}  // namespace sepformer
