#pragma once

// Separation metrics and the permutation-invariant loss.
//
// SI-SNR uses a soft ceiling: with s_t the projection of the zero-mean
// estimate onto the zero-mean target,
//   si_snr = 10 log10(|s_t|^2 / (|est - s_t|^2 + tau |s_t|^2)),  tau = 1e-3
// so a perfect estimate scores exactly 10 log10(1 / tau) = 30 dB.

#include <span>
#include <vector>

#include "sepformer/autodiff.hpp"

namespace sepformer {

inline constexpr double kSiSnrTau = 1e-3;
// Reported when the estimate has no component along the target.
inline constexpr double kSiSnrFloorDb = -300.0;
// Reporting cap for sdr_simple with a zero residual.
inline constexpr double kSdrCapDb = 60.0;

double si_snr(std::span<const double> estimate, std::span<const double> target);
// Differentiable in the estimate; returns a [1] value in dB.
Var si_snr(const Var& estimate, const NdArray& target);

// Scaled-SNR form with a least-squares gain; no mean removal.
double sdr_simple(std::span<const double> estimate, std::span<const double> target);

struct PitResult {
  std::vector<std::size_t> permutation;        // estimate i -> target permutation[i]
  std::vector<std::vector<double>> matrix;     // [i][j] = metric(est_i, target_j)
  double mean_best = 0.0;
};

// Exhaustive search; ties go to the lexicographically smallest permutation.
PitResult pit_from_matrix(const std::vector<std::vector<double>>& matrix);

struct PitLoss {
  Var loss;  // -mean SI-SNR under the best permutation
  PitResult result;
};

PitLoss pit_loss(const std::vector<Var>& estimates,
                 const std::vector<NdArray>& targets);

struct Improvement {
  double si_snri = 0.0;
  double sdri = 0.0;
  std::vector<std::size_t> permutation;
};

// Metric gain of the estimates over the mixture used as every estimate,
// averaged over sources under the SI-SNR PIT assignment.
Improvement improvement(const std::vector<NdArray>& estimates,
                        const std::vector<NdArray>& targets,
                        const NdArray& mixture);

}  // namespace sepformer
