#include "sepformer/datagen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "sepformer/errors.hpp"

namespace sepformer {
namespace {

template <typename T>
void put_le(std::ostream& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.put(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
}

template <typename T>
T read_le(const std::vector<unsigned char>& b, std::size_t at) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(b[at + i]) << (8 * i);
  return static_cast<T>(v);
}

void peak_normalise(std::vector<double>& x, double peak) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  if (m > 0.0)
    for (double& v : x) v *= peak / m;
}

std::mt19937_64 item_rng(std::uint64_t seed, std::uint64_t item) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(item), static_cast<std::uint32_t>(item >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

double Signal::rms() const {
  if (samples.empty()) return 0.0;
  double e = 0.0;
  for (double v : samples) e += v * v;
  return std::sqrt(e / static_cast<double>(samples.size()));
}

void wav_write(const std::filesystem::path& path, const Signal& s) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(s.size() * 2);
  out.write("RIFF", 4);
  put_le<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put_le<std::uint32_t>(out, 16);
  put_le<std::uint16_t>(out, 1);  // PCM
  put_le<std::uint16_t>(out, 1);  // mono
  put_le<std::uint32_t>(out, s.sample_rate);
  put_le<std::uint32_t>(out, s.sample_rate * 2);
  put_le<std::uint16_t>(out, 2);
  put_le<std::uint16_t>(out, 16);
  out.write("data", 4);
  put_le<std::uint32_t>(out, data_bytes);
  for (double x : s.samples) {
    const double q = std::round(std::clamp(x, -1.0, 1.0) * 32768.0);
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(
                                   static_cast<std::int16_t>(std::clamp(q, -32768.0, 32767.0))));
  }
  if (!out) throw FormatError("write failed for " + path.string());
}

Signal wav_read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<unsigned char> b((std::istreambuf_iterator<char>(in)), {});
  auto tag = [&](std::size_t at, const char* t) {
    return at + 4 <= b.size() && std::equal(t, t + 4, b.begin() + static_cast<long>(at));
  };
  if (!tag(0, "RIFF")) throw FormatError(path.string() + ": missing RIFF header (ChunkID)");
  if (!tag(8, "WAVE")) throw FormatError(path.string() + ": not a WAVE file (Format)");
  Signal s;
  bool have_fmt = false;
  std::size_t at = 12;
  while (at + 8 <= b.size()) {
    const auto size = read_le<std::uint32_t>(b, at + 4);
    const std::size_t body = at + 8;
    if (body + size > b.size()) throw FormatError(path.string() + ": truncated chunk");
    if (tag(at, "fmt ")) {
      if (size < 16) throw FormatError(path.string() + ": short fmt chunk (Subchunk1Size)");
      const auto format = read_le<std::uint16_t>(b, body);
      const auto channels = read_le<std::uint16_t>(b, body + 2);
      const auto bits = read_le<std::uint16_t>(b, body + 14);
      if (format != 1)
        throw FormatError(path.string() + ": unsupported AudioFormat " + std::to_string(format) +
                          " (PCM only)");
      if (channels != 1)
        throw FormatError(path.string() + ": unsupported channel count " +
                          std::to_string(channels) + " (NumChannels, mono only)");
      if (bits != 16)
        throw FormatError(path.string() + ": unsupported BitsPerSample " +
                          std::to_string(bits) + " (16 only)");
      s.sample_rate = read_le<std::uint32_t>(b, body + 4);
      if (s.sample_rate == 0) throw FormatError(path.string() + ": zero SampleRate");
      have_fmt = true;
    } else if (tag(at, "data")) {
      if (!have_fmt) throw FormatError(path.string() + ": data chunk before fmt chunk");
      s.samples.resize(size / 2);
      for (std::size_t i = 0; i < s.samples.size(); ++i)
        s.samples[i] = static_cast<std::int16_t>(read_le<std::uint16_t>(b, body + 2 * i)) / 32768.0;
      return s;
    }
    at = body + size + (size & 1);
  }
  throw FormatError(path.string() + ": no data chunk");
}

SourceKind parse_source_kind(const std::string& name) {
  if (name == "multi-sine") return SourceKind::kMultiSine;
  if (name == "filtered-noise") return SourceKind::kFilteredNoise;
  if (name == "chirp") return SourceKind::kChirp;
  throw ConfigError("unknown source kind '" + name +
                    "' (expected multi-sine, filtered-noise or chirp)");
}

std::string to_string(SourceKind kind) {
  switch (kind) {
    case SourceKind::kMultiSine: return "multi-sine";
    case SourceKind::kFilteredNoise: return "filtered-noise";
    case SourceKind::kChirp: return "chirp";
  }
  return "?";
}

std::vector<Signal> synth_sources(SourceKind kind, std::size_t count, double seconds,
                                  std::uint64_t seed, std::uint32_t sample_rate) {
  const auto n = static_cast<std::size_t>(std::llround(seconds * sample_rate));
  const double fs = sample_rate;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;

  constexpr std::size_t kTones = 4;
  std::vector<int> freq_pool;
  if (kind == SourceKind::kMultiSine) {
    const int hi = static_cast<int>(sample_rate / 2) - 400;
    for (int f = 100; f <= hi; ++f) freq_pool.push_back(f);
    if (freq_pool.size() < count * kTones)
      throw ConfigError("sample rate too low for the requested multi-sine pool");
    std::shuffle(freq_pool.begin(), freq_pool.end(), rng);
  }

  std::vector<Signal> pool;
  for (std::size_t k = 0; k < count; ++k) {
    Signal s;
    s.sample_rate = sample_rate;
    s.samples.assign(n, 0.0);
    switch (kind) {
      case SourceKind::kMultiSine:
        for (std::size_t j = 0; j < kTones; ++j) {
          const double f = freq_pool[k * kTones + j];
          const double amp = 0.3 + 0.7 * unit(rng), phase = two_pi * unit(rng);
          for (std::size_t t = 0; t < n; ++t)
            s.samples[t] += amp * std::sin(two_pi * f * static_cast<double>(t) / fs + phase);
        }
        break;
      case SourceKind::kFilteredNoise: {
        // Two-pole resonator around a random centre frequency.
        std::normal_distribution<double> white(0.0, 1.0);
        const double fc = 200.0 + unit(rng) * (fs / 2 - 600.0);
        const double radius = 0.97, w = two_pi * fc / fs;
        const double a1 = 2.0 * radius * std::cos(w), a2 = -radius * radius;
        double y1 = 0.0, y2 = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
          const double y = white(rng) + a1 * y1 + a2 * y2;
          s.samples[t] = y;
          y2 = y1;
          y1 = y;
        }
        break;
      }
      case SourceKind::kChirp: {
        const double f0 = 100.0 + unit(rng) * 1500.0, f1 = 100.0 + unit(rng) * 3000.0;
        const double phase0 = two_pi * unit(rng), dur = std::max(1.0, static_cast<double>(n)) / fs;
        for (std::size_t t = 0; t < n; ++t) {
          const double time = static_cast<double>(t) / fs;
          const double phase = two_pi * (f0 * time + 0.5 * (f1 - f0) / dur * time * time);
          s.samples[t] = std::sin(phase + phase0);
        }
        break;
      }
    }
    peak_normalise(s.samples, 0.9);
    pool.push_back(std::move(s));
  }
  return pool;
}

Signal speed_perturb(const Signal& x, double r) {
  if (!(r >= 0.95 && r <= 1.05))
    throw ConfigError("speed factor " + std::to_string(r) + " outside [0.95, 1.05]");
  Signal y;
  y.sample_rate = x.sample_rate;
  if (x.samples.empty()) return y;
  const auto len = static_cast<std::size_t>(std::llround(static_cast<double>(x.size()) / r));
  y.samples.resize(len);
  const std::size_t last = x.size() - 1;
  for (std::size_t n = 0; n < len; ++n) {
    const double pos = static_cast<double>(n) * r;
    const auto i = static_cast<std::size_t>(pos);
    if (i >= last) {
      y.samples[n] = x.samples[last];
      continue;
    }
    const double frac = pos - static_cast<double>(i);
    y.samples[n] = frac == 0.0 ? x.samples[i]
                               : (1.0 - frac) * x.samples[i] + frac * x.samples[i + 1];
  }
  return y;
}

Mixture dynamic_mix(const std::vector<Signal>& pool, const MixSpec& spec, std::uint64_t item,
                    const Signal* noise) {
  const std::size_t ns = spec.sources;
  if (ns < 1 || ns > 3) throw ConfigError("mix sources must be 1, 2 or 3");
  if (pool.size() < ns)
    throw ConfigError("pool has " + std::to_string(pool.size()) + " signals, need " +
                      std::to_string(ns));
  for (const Signal& s : pool)
    if (s.sample_rate != pool.front().sample_rate)
      throw ConfigError("pool mixes sample rates " + std::to_string(pool.front().sample_rate) +
                        " and " + std::to_string(s.sample_rate));
  std::mt19937_64 rng = item_rng(spec.seed, item);

  Mixture mix;
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t k = 0; k < ns; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, idx.size() - 1);
    std::swap(idx[k], idx[pick(rng)]);
    mix.picked.push_back(idx[k]);
  }

  std::uniform_real_distribution<double> speed(spec.speed_lo, spec.speed_hi);
  std::uniform_real_distribution<double> level(spec.level_lo_db, spec.level_hi_db);
  std::size_t len = std::numeric_limits<std::size_t>::max();
  for (std::size_t k = 0; k < ns; ++k) {
    Signal s = pool[mix.picked[k]];
    if (spec.perturb_speed) s = speed_perturb(s, speed(rng));
    len = std::min(len, s.size());
    mix.targets.push_back(std::move(s));
  }
  if (len == 0) throw ConfigError("dynamic_mix: picked an empty source");

  const double ref_rms = [&] {
    Signal& s0 = mix.targets[0];
    s0.samples.resize(len);
    return s0.rms();
  }();
  mix.relative_levels_db.push_back(0.0);
  for (std::size_t k = 1; k < ns; ++k) {
    Signal& s = mix.targets[k];
    s.samples.resize(len);
    const double db = level(rng);
    const double rms = s.rms();
    const double gain = rms > 0.0 ? ref_rms / rms * std::pow(10.0, -db / 20.0) : 0.0;
    for (double& v : s.samples) v *= gain;
    mix.relative_levels_db.push_back(db);
  }

  mix.mixture.sample_rate = pool.front().sample_rate;
  mix.mixture.samples.assign(len, 0.0);
  for (const Signal& s : mix.targets)
    for (std::size_t t = 0; t < len; ++t) mix.mixture.samples[t] += s.samples[t];
  if (noise) {
    if (noise->size() < len) throw ConfigError("noise signal shorter than the mixture");
    for (std::size_t t = 0; t < len; ++t) mix.mixture.samples[t] += noise->samples[t];
  }

  // Keep the mixture in [-1, 1]; targets follow so the sum still holds.
  double peak = 0.0;
  for (double v : mix.mixture.samples) peak = std::max(peak, std::abs(v));
  if (peak > 1.0) {
    const double g = 0.99 / peak;
    for (Signal& s : mix.targets)
      for (double& v : s.samples) v *= g;
    std::fill(mix.mixture.samples.begin(), mix.mixture.samples.end(), 0.0);
    for (const Signal& s : mix.targets)
      for (std::size_t t = 0; t < len; ++t) mix.mixture.samples[t] += s.samples[t];
    if (noise)
      for (std::size_t t = 0; t < len; ++t) mix.mixture.samples[t] += g * noise->samples[t];
  }
  return mix;
}

std::vector<Signal> load_pool(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw FormatError("cannot open manifest " + manifest.string());
  std::vector<Signal> pool;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty()) continue;
    pool.push_back(wav_read(line));
  }
  return pool;
}

}  // namespace sepformer
