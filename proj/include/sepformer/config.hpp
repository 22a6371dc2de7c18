#pragma once

// Model configuration and the flat key=value text format shared by config
// files and checkpoint headers.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sepformer/attention.hpp"

namespace sepformer {

struct KeyValueLine {
  std::size_t line = 0;  // 1-based
  std::string key;
  std::string value;
};

// Splits `text` into key=value entries. Blank lines and `#` comments are
// skipped; anything else without '=' throws ConfigError with the line number.
std::vector<KeyValueLine> parse_key_values(const std::string& text);

struct SepformerConfig {
  std::size_t features = 256;  // F
  std::size_t kernel = 16;     // Kw
  std::size_t stride = 8;
  std::size_t chunk = 250;     // 0 disables chunking (one chunk spans T')
  std::size_t repeats = 2;     // N
  std::size_t intra_layers = 8;
  std::size_t inter_layers = 8;
  std::size_t heads = 8;
  std::size_t d_ff = 1024;
  std::size_t sources = 2;     // Ns
  bool positional_encoding = true;
  std::uint32_t sample_rate = 8000;
  std::uint64_t seed = 0;

  AttentionVariant intra_attention = AttentionVariant::kFull;
  AttentionVariant inter_attention = AttentionVariant::kFull;
  // Variant hyperparameters shared by both paths.
  std::size_t window = 101;
  std::size_t global_stride = 100;
  std::size_t proj_len = 128;
  std::size_t max_len = 4000;
  std::size_t n_buckets = 16;
  std::size_t n_rounds = 2;
  std::size_t bucket_chunk = 64;

  AttentionSpec intra_spec() const;
  AttentionSpec inter_spec() const;

  // Returns false for an unknown key; throws ConfigError for a bad value.
  bool set(const std::string& key, const std::string& value);
  // Every key, one per line, in a fixed order.
  std::string to_text() const;
  void validate() const;

  bool operator==(const SepformerConfig&) const = default;
};

// Applies every entry of `text` on top of `base`; unknown keys throw
// ConfigError naming the line.
SepformerConfig parse_config(const std::string& text,
                             SepformerConfig base = SepformerConfig{});

// parse_config on a file's contents; errors are prefixed with the path.
SepformerConfig load_config(const std::filesystem::path& path,
                            SepformerConfig base = SepformerConfig{});

}  // namespace sepformer
