#pragma once

// Forward-pass cost model: closed-form MAC counts that mirror the
// instrumented kernels, wall-clock medians, and arena peak bytes.

#include <cstdint>
#include <string>
#include <vector>

#include "sepformer/baseline.hpp"
#include "sepformer/sepmodel.hpp"

namespace sepformer {

struct MacBreakdown {
  std::uint64_t attention = 0;  // per-head attention kernels and LSH hashing
  std::uint64_t total = 0;
};

// MACs of one multi-head attention call on a length-`length` sequence.
MacBreakdown attention_macs(const AttentionSpec& spec, std::size_t features,
                            std::size_t length);

// MACs of separate() on a `samples`-long input.
MacBreakdown count_macs(const SepformerConfig& cfg, std::size_t samples);

struct CostReport {
  std::string label;
  double seconds = 0.0;
  std::uint64_t macs = 0;
  double wall_ms = 0.0;
  std::uint64_t peak_bytes = 0;

  bool operator==(const CostReport&) const = default;
};

struct BenchOptions {
  std::size_t repeats = 5;  // median over these, after one warm-up
  std::uint64_t input_seed = 1234;
};

// Deterministic noise input of `seconds` at the model's sample rate.
NdArray bench_input(const SepformerConfig& cfg, double seconds, std::uint64_t seed);

std::vector<CostReport> bench_forward(const SepformerModel& model,
                                      const std::string& label,
                                      const std::vector<double>& seconds,
                                      const BenchOptions& opt = {});

// Same rows for the convolutional reference model; MACs come from the
// instrumented counter since the baseline has no closed form here.
std::vector<CostReport> bench_baseline(const ConvBaseline& model, const std::string& label,
                                       const std::vector<double>& seconds,
                                       std::uint32_t sample_rate, const BenchOptions& opt = {});

// Arena peak of one forward pass without a tape.
std::uint64_t forward_peak_bytes(const SepformerModel& model, const NdArray& input);

// Stable order: (label, seconds).
void sort_reports(std::vector<CostReport>& reports);
std::string reports_to_csv(std::vector<CostReport> reports);
std::string reports_to_markdown(std::vector<CostReport> reports);
std::string reports_to_json(std::vector<CostReport> reports);
std::vector<CostReport> reports_from_csv(const std::string& csv);

}  // namespace sepformer
