#include "sepformer/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "sepformer/errors.hpp"

namespace sepformer {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_unsigned(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw ConfigError("bad value '" + value + "' for " + key +
                      ": expected a non-negative integer");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("bad value '" + value + "' for " + key + ": expected true|false");
}

}  // namespace

std::vector<KeyValueLine> parse_key_values(const std::string& text) {
  std::vector<KeyValueLine> out;
  std::istringstream in(text);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line) + ": expected key=value");
    out.push_back({line, trim(body.substr(0, eq)), trim(body.substr(eq + 1))});
  }
  return out;
}

AttentionSpec SepformerConfig::intra_spec() const {
  AttentionSpec s;
  s.variant = intra_attention;
  s.heads = heads;
  s.d_model = features;
  s.window = window;
  s.global_stride = global_stride;
  s.proj_len = proj_len;
  s.max_len = max_len;
  s.n_buckets = n_buckets;
  s.n_rounds = n_rounds;
  s.bucket_chunk = bucket_chunk;
  s.seed = seed;
  return s;
}

AttentionSpec SepformerConfig::inter_spec() const {
  AttentionSpec s = intra_spec();
  s.variant = inter_attention;
  s.seed = seed + 1;
  return s;
}

bool SepformerConfig::set(const std::string& key, const std::string& value) {
  auto size = [&](std::size_t& field) {
    field = parse_unsigned<std::size_t>(key, value);
  };
  if (key == "features") size(features);
  else if (key == "kernel") size(kernel);
  else if (key == "stride") size(stride);
  else if (key == "chunk") {
    chunk = value == "none" ? 0 : parse_unsigned<std::size_t>(key, value);
  }
  else if (key == "repeats") size(repeats);
  else if (key == "intra_layers") size(intra_layers);
  else if (key == "inter_layers") size(inter_layers);
  else if (key == "heads") size(heads);
  else if (key == "d_ff") size(d_ff);
  else if (key == "sources") size(sources);
  else if (key == "positional_encoding") positional_encoding = parse_bool(key, value);
  else if (key == "sample_rate") sample_rate = parse_unsigned<std::uint32_t>(key, value);
  else if (key == "seed") seed = parse_unsigned<std::uint64_t>(key, value);
  else if (key == "intra_attention") intra_attention = parse_attention_variant(value);
  else if (key == "inter_attention") inter_attention = parse_attention_variant(value);
  else if (key == "window") size(window);
  else if (key == "global_stride") size(global_stride);
  else if (key == "proj_len") size(proj_len);
  else if (key == "max_len") size(max_len);
  else if (key == "n_buckets") size(n_buckets);
  else if (key == "n_rounds") size(n_rounds);
  else if (key == "bucket_chunk") size(bucket_chunk);
  else return false;
  return true;
}

std::string SepformerConfig::to_text() const {
  std::ostringstream o;
  o << "features=" << features << "\n"
    << "kernel=" << kernel << "\n"
    << "stride=" << stride << "\n"
    << "chunk=" << chunk << "\n"
    << "repeats=" << repeats << "\n"
    << "intra_layers=" << intra_layers << "\n"
    << "inter_layers=" << inter_layers << "\n"
    << "heads=" << heads << "\n"
    << "d_ff=" << d_ff << "\n"
    << "sources=" << sources << "\n"
    << "positional_encoding=" << (positional_encoding ? "true" : "false") << "\n"
    << "sample_rate=" << sample_rate << "\n"
    << "seed=" << seed << "\n"
    << "intra_attention=" << to_string(intra_attention) << "\n"
    << "inter_attention=" << to_string(inter_attention) << "\n"
    << "window=" << window << "\n"
    << "global_stride=" << global_stride << "\n"
    << "proj_len=" << proj_len << "\n"
    << "max_len=" << max_len << "\n"
    << "n_buckets=" << n_buckets << "\n"
    << "n_rounds=" << n_rounds << "\n"
    << "bucket_chunk=" << bucket_chunk << "\n";
  return o.str();
}

void SepformerConfig::validate() const {
  if (features == 0 || kernel == 0 || stride == 0)
    throw ConfigError("features, kernel and stride must be positive");
  if (chunk != 0 && (chunk < 2 || chunk % 2 != 0))
    throw ConfigError("invalid chunk size " + std::to_string(chunk) +
                      ": must be even and at least 2");
  if (repeats == 0 || intra_layers == 0 || inter_layers == 0)
    throw ConfigError("repeats and layer counts must be at least 1");
  if (d_ff == 0) throw ConfigError("d_ff must be positive");
  if (sources < 1 || sources > 3)
    throw ConfigError("sources must be 1, 2 or 3, got " + std::to_string(sources));
  if (sample_rate == 0) throw ConfigError("sample_rate must be positive");
  intra_spec().validate();
  inter_spec().validate();
}

SepformerConfig parse_config(const std::string& text, SepformerConfig base) {
  for (const auto& kv : parse_key_values(text)) {
    try {
      if (!base.set(kv.key, kv.value))
        throw ConfigError("unknown key '" + kv.key + "'");
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(kv.line) + ": " + e.what());
    }
  }
  return base;
}

SepformerConfig load_config(const std::filesystem::path& path, SepformerConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse_config(text.str(), base);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace sepformer
