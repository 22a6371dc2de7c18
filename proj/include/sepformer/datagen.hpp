#pragma once

// Mono waveforms, PCM16 WAV I/O, synthetic sources, speed perturbation and
// dynamic mixing. All randomness comes from explicit seeds.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sepformer {

struct Signal {
  std::vector<double> samples;
  std::uint32_t sample_rate = 8000;

  std::size_t size() const { return samples.size(); }
  double rms() const;
};

// PCM16 mono only. Writing clips to [-1, 1] and maps x -> round(32768 x),
// saturating at 32767; reading divides by 32768.
void wav_write(const std::filesystem::path& path, const Signal& s);
Signal wav_read(const std::filesystem::path& path);

enum class SourceKind { kMultiSine, kFilteredNoise, kChirp };
SourceKind parse_source_kind(const std::string& name);
std::string to_string(SourceKind kind);

// `count` sources of `seconds` each, peak-normalised to 0.9. Multi-sine
// sources use integer-Hz tones drawn without replacement across the pool,
// so their frequency sets are disjoint.
std::vector<Signal> synth_sources(SourceKind kind, std::size_t count,
                                  double seconds, std::uint64_t seed,
                                  std::uint32_t sample_rate = 8000);

// Resamples by linear interpolation: y[n] = x(n * r), length round(T / r).
// r < 1 slows down (longer, lower pitch); r > 1 speeds up.
Signal speed_perturb(const Signal& x, double r);

struct MixSpec {
  std::size_t sources = 2;
  double level_lo_db = 0.0;
  double level_hi_db = 5.0;
  double speed_lo = 0.95;
  double speed_hi = 1.05;
  bool perturb_speed = true;
  std::uint64_t seed = 0;
};

struct Mixture {
  Signal mixture;
  std::vector<Signal> targets;
  // Level of source 0 over source k in dB; entry 0 is always 0.
  std::vector<double> relative_levels_db;
  std::vector<std::size_t> picked;  // pool indices
};

// Draws spec.sources distinct pool entries, speed-perturbs, cuts to the
// shortest, and sets source k to sit relative_levels_db[k] below source 0.
// `item` selects an independent draw under the same seed. An optional
// noise signal is added to the mixture only.
Mixture dynamic_mix(const std::vector<Signal>& pool, const MixSpec& spec,
                    std::uint64_t item = 0, const Signal* noise = nullptr);

// Newline-separated WAV paths; blank lines skipped.
std::vector<Signal> load_pool(const std::filesystem::path& manifest);

}  // namespace sepformer
