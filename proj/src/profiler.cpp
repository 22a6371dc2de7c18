#include "sepformer/profiler.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <random>
#include <sstream>

#include "json.hpp"
#include "sepformer/errors.hpp"
#include "sepformer/instrument.hpp"

namespace sepformer {
namespace {

using u64 = std::uint64_t;

u64 longformer_pairs(u64 len, u64 window, u64 stride) {
  const u64 radius = (window - 1) / 2;
  const u64 n_global = stride == 0 ? 0 : (len + stride - 1) / stride;
  // Globals inside [lo, hi]: multiples of stride in that range.
  auto globals_in = [&](u64 lo, u64 hi) -> u64 {
    if (stride == 0) return 0;
    const u64 first = (lo + stride - 1) / stride;
    const u64 last = hi / stride;
    return last >= first ? last - first + 1 : 0;
  };
  u64 pairs = 0;
  for (u64 t = 0; t < len; ++t) {
    if (stride != 0 && t % stride == 0) {
      pairs += len;
      continue;
    }
    const u64 lo = t >= radius ? t - radius : 0;
    const u64 hi = std::min(len - 1, t + radius);
    pairs += (hi - lo + 1) + n_global - globals_in(lo, hi);
  }
  return pairs;
}

u64 reformer_pairs(u64 len, u64 chunk) {
  u64 pairs = 0;
  for (u64 i = 0; i < len; ++i) {
    const u64 c = i / chunk;
    const u64 lo = c > 0 ? (c - 1) * chunk : 0;
    const u64 hi = std::min(len, (c + 1) * chunk);
    pairs += std::max<u64>(1, hi - lo - 1);
  }
  return pairs;
}

// One K-layer stack over `count` sequences of length `len`.
void add_stack(const SepformerConfig& cfg, const AttentionSpec& spec, u64 layers, u64 count,
               u64 len, MacBreakdown& m) {
  const MacBreakdown a = attention_macs(spec, cfg.features, len);
  const u64 ffw = 2 * cfg.d_ff * cfg.features * len;
  m.attention += count * layers * a.attention;
  m.total += count * layers * (a.total + ffw);
}

}  // namespace

MacBreakdown attention_macs(const AttentionSpec& spec, std::size_t features,
                            std::size_t length) {
  const u64 d = spec.d_model, f = features, len = length, dk = spec.head_dim();
  const bool reformer = spec.variant == AttentionVariant::kReformer;
  MacBreakdown m;
  const u64 projections = (reformer ? 2 : 3) * d * f * len + f * d * len;
  u64 per_head = 0;
  switch (spec.variant) {
    case AttentionVariant::kFull:
      per_head = 2 * len * len * dk;
      break;
    case AttentionVariant::kLongformer:
      per_head = 2 * dk * longformer_pairs(len, spec.window, spec.global_stride);
      break;
    case AttentionVariant::kLinformer:
      per_head = 4 * dk * len * spec.proj_len;
      break;
    case AttentionVariant::kReformer:
      per_head = spec.n_rounds * (spec.n_buckets / 2 * dk * len +
                                  2 * dk * reformer_pairs(len, spec.bucket_chunk));
      break;
  }
  m.attention = spec.heads * per_head;
  m.total = m.attention + projections;
  return m;
}

MacBreakdown count_macs(const SepformerConfig& cfg, std::size_t samples) {
  if (samples < cfg.kernel)
    throw InputTooShortError("count_macs: " + std::to_string(samples) +
                             " samples is shorter than the kernel");
  const u64 f = cfg.features, ns = cfg.sources;
  const u64 t_lat = (samples - cfg.kernel) / cfg.stride + 1;
  const ChunkGeometry g = geometry_for(cfg, t_lat);
  MacBreakdown m;
  m.total = f * cfg.kernel * t_lat;  // encoder
  m.total += f * f * t_lat;          // input linear
  for (std::size_t r = 0; r < cfg.repeats; ++r) {
    add_stack(cfg, cfg.intra_spec(), cfg.intra_layers, g.n_chunks, g.chunk, m);
    add_stack(cfg, cfg.inter_spec(), active_inter_layers(cfg), g.chunk, g.n_chunks, m);
  }
  m.total += f * ns * f * g.chunk * g.n_chunks;                 // output linear
  m.total += ns * (2 * f * f * t_lat + f * cfg.kernel * t_lat);  // mask FFW pair, decoder
  return m;
}

NdArray bench_input(const SepformerConfig& cfg, double seconds, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(std::llround(seconds * cfg.sample_rate));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.1);
  NdArray x({n});
  for (double& v : x.data()) v = noise(rng);
  return x;
}

std::uint64_t forward_peak_bytes(const SepformerModel& model, const NdArray& input) {
  ArenaScope arena;
  { SeparationOutput out = separate(Var(input), model); }
  return arena.peak_bytes();
}

namespace {

template <class Forward>
double median_wall_ms(std::size_t repeats, const Forward& forward) {
  std::vector<double> times;
  for (std::size_t i = 0; i < std::max<std::size_t>(1, repeats); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    forward();
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  const std::size_t mid = times.size() / 2;
  return times.size() % 2 ? times[mid] : 0.5 * (times[mid - 1] + times[mid]);
}

}  // namespace

std::vector<CostReport> bench_forward(const SepformerModel& model, const std::string& label,
                                      const std::vector<double>& seconds,
                                      const BenchOptions& opt) {
  std::vector<CostReport> out;
  for (double s : seconds) {
    const NdArray x = bench_input(model.config, s, opt.input_seed);
    CostReport r;
    r.label = label;
    r.seconds = s;
    r.macs = count_macs(model.config, x.size()).total;
    // The warm-up pass doubles as the memory measurement.
    r.peak_bytes = forward_peak_bytes(model, x);
    r.wall_ms = median_wall_ms(opt.repeats, [&] { SeparationOutput o = separate(Var(x), model); });
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<CostReport> bench_baseline(const ConvBaseline& model, const std::string& label,
                                       const std::vector<double>& seconds,
                                       std::uint32_t sample_rate, const BenchOptions& opt) {
  SepformerConfig rate_only;
  rate_only.sample_rate = sample_rate;
  std::vector<CostReport> out;
  for (double s : seconds) {
    const NdArray x = bench_input(rate_only, s, opt.input_seed);
    CostReport r;
    r.label = label;
    r.seconds = s;
    {
      ArenaScope arena;
      MacCounterScope macs;
      { auto o = model.separate(x); }
      r.peak_bytes = arena.peak_bytes();
      r.macs = macs.counts().total();
    }
    r.wall_ms = median_wall_ms(opt.repeats, [&] { auto o = model.separate(x); });
    out.push_back(std::move(r));
  }
  return out;
}

void sort_reports(std::vector<CostReport>& reports) {
  std::stable_sort(reports.begin(), reports.end(), [](const CostReport& a, const CostReport& b) {
    return a.label != b.label ? a.label < b.label : a.seconds < b.seconds;
  });
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string reports_to_csv(std::vector<CostReport> reports) {
  sort_reports(reports);
  std::ostringstream o;
  o << "label,seconds,macs,wall_ms,peak_bytes\n";
  for (const CostReport& r : reports) {
    if (r.label.find_first_of(",\n\"") != std::string::npos)
      throw FormatError("report label '" + r.label + "' contains a CSV delimiter");
    o << r.label << ',' << fmt_double(r.seconds) << ',' << r.macs << ','
      << fmt_double(r.wall_ms) << ',' << r.peak_bytes << '\n';
  }
  return o.str();
}

std::string reports_to_markdown(std::vector<CostReport> reports) {
  sort_reports(reports);
  std::ostringstream o;
  o << "| label | seconds | macs | wall_ms | peak_bytes |\n"
    << "|---|---:|---:|---:|---:|\n";
  char buf[64];
  for (const CostReport& r : reports) {
    std::snprintf(buf, sizeof buf, "%.3f", r.wall_ms);
    o << "| " << r.label << " | " << fmt_double(r.seconds) << " | " << r.macs << " | " << buf
      << " | " << r.peak_bytes << " |\n";
  }
  return o.str();
}

std::string reports_to_json(std::vector<CostReport> reports) {
  sort_reports(reports);
  nlohmann::json arr = nlohmann::json::array();
  for (const CostReport& r : reports)
    arr.push_back({{"label", r.label},
                   {"seconds", r.seconds},
                   {"macs", r.macs},
                   {"wall_ms", r.wall_ms},
                   {"peak_bytes", r.peak_bytes}});
  return arr.dump(2) + "\n";
}

std::vector<CostReport> reports_from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != "label,seconds,macs,wall_ms,peak_bytes")
    throw FormatError("cost report CSV: unexpected header '" + line + "'");
  std::vector<CostReport> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 5)
      throw FormatError("cost report CSV line " + std::to_string(row) + ": expected 5 fields");
    try {
      CostReport r;
      r.label = cells[0];
      r.seconds = std::stod(cells[1]);
      r.macs = std::stoull(cells[2]);
      r.wall_ms = std::stod(cells[3]);
      r.peak_bytes = std::stoull(cells[4]);
      out.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw FormatError("cost report CSV line " + std::to_string(row) + ": bad number");
    }
  }
  return out;
}

}  // namespace sepformer
