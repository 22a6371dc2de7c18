#include "sepformer/sepmodel.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <map>

#include "sepformer/errors.hpp"
#include "sepformer/ops.hpp"

namespace sepformer {

NamedParameters MaskNetParams::named_parameters() const {
  NamedParameters out = {{"mask.norm.gain", norm_gain},
                         {"mask.norm.bias", norm_bias},
                         {"mask.in.w", in_w},
                         {"mask.in.b", in_b}};
  append_named(out, "mask.", block.named_parameters());
  out.emplace_back("mask.prelu.slope", prelu_slope);
  out.emplace_back("mask.out.w", out_w);
  out.emplace_back("mask.out.b", out_b);
  out.emplace_back("mask.ffw1.w", ffw1_w);
  out.emplace_back("mask.ffw1.b", ffw1_b);
  out.emplace_back("mask.ffw2.w", ffw2_w);
  out.emplace_back("mask.ffw2.b", ffw2_b);
  return out;
}

NamedParameters SepformerModel::named_parameters() const {
  NamedParameters out = {{"encoder", encoder}};
  append_named(out, "", mask_net.named_parameters());
  out.emplace_back("decoder", decoder);
  return out;
}

std::vector<Var> SepformerModel::parameters() const {
  return values_of(named_parameters());
}

SepformerModel make_model(const SepformerConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const std::size_t f = cfg.features, ns = cfg.sources;
  auto param = [](NdArray a) { return Var(std::move(a), true); };
  SepformerModel m;
  m.config = cfg;
  m.encoder = param(init_uniform({f, 1, cfg.kernel}, cfg.kernel, rng));
  MaskNetParams& p = m.mask_net;
  p.norm_gain = param(NdArray({f}, 1.0));
  p.norm_bias = param(NdArray({f}));
  p.in_w = param(init_uniform({f, f}, f, rng));
  p.in_b = param(NdArray({f}));
  // Without chunking there is a single chunk and no inter path.
  p.block = make_sepformer_block(cfg.intra_spec(), cfg.inter_spec(), f, cfg.d_ff,
                                 cfg.repeats, cfg.intra_layers, active_inter_layers(cfg),
                                 rng);
  for (auto& rep : p.block.repeats) {
    rep.intra.use_positional_encoding = cfg.positional_encoding;
    rep.inter.use_positional_encoding = cfg.positional_encoding;
  }
  p.prelu_slope = param(NdArray({f}, 0.25));
  p.out_w = param(init_uniform({f * ns, f}, f, rng));
  p.out_b = param(NdArray({f * ns}));
  p.ffw1_w = param(init_uniform({f, f}, f, rng));
  p.ffw1_b = param(NdArray({f}));
  p.ffw2_w = param(init_uniform({f, f}, f, rng));
  p.ffw2_b = param(NdArray({f}));
  // Decoder fan-in is the number of latent channels feeding each sample tap.
  m.decoder = param(init_uniform({f, 1, cfg.kernel}, f, rng));
  return m;
}

ChunkGeometry geometry_for(const SepformerConfig& cfg, std::size_t latent_length) {
  const std::size_t c =
      cfg.chunk != 0 ? cfg.chunk : std::max<std::size_t>(2, latent_length + latent_length % 2);
  return make_chunk_geometry(latent_length, c);
}

Var encode(const Var& x, const SepformerModel& m) {
  return ops::relu(ops::conv1d(x, m.encoder, m.config.stride));
}

std::vector<Var> mask_net(const Var& h, const SepformerModel& m, ShapeTrace* trace) {
  const SepformerConfig& cfg = m.config;
  const MaskNetParams& p = m.mask_net;
  const std::size_t f = cfg.features, ns = cfg.sources, t_lat = h.shape()[1];
  const ChunkGeometry g = geometry_for(cfg, t_lat);

  // Scoped so the chunked intermediates are released before the wide output layer.
  Shape h1_shape, h2_shape;
  Var h3;
  {
    Var flat;
    {
      Var h1 = chunk(ops::linear(p.in_w, ops::layer_norm(h, p.norm_gain, p.norm_bias), p.in_b), g);
      h1_shape = h1.shape();
      Var h2 = sepformer_block(h1, p.block, cfg.intra_spec(), cfg.inter_spec());
      h2_shape = h2.shape();
      h1 = Var();
      flat = ops::reshape(h2, {f, g.chunk * g.n_chunks});
    }
    h3 = ops::linear(p.out_w, ops::prelu(flat, p.prelu_slope), p.out_b);
  }

  std::vector<Var> merged, masks;
  for (std::size_t k = 0; k < ns; ++k) {
    Var part = ops::reshape(ops::slice_rows(h3, k * f, f), {f, g.chunk, g.n_chunks});
    merged.push_back(overlap_add(part, g));
    Var hidden = ops::relu(ops::linear(p.ffw1_w, merged.back(), p.ffw1_b));
    masks.push_back(ops::relu(ops::linear(p.ffw2_w, hidden, p.ffw2_b)));
  }
  if (trace) {
    trace->h = h.shape();
    trace->h_prime = h1_shape;
    trace->h_second = h2_shape;
    trace->h_third = {f * ns, g.chunk, g.n_chunks};
    trace->h_fourth = {f, ns, t_lat};
    trace->masks.clear();
    for (const Var& mk : masks) trace->masks.push_back(mk.shape());
  }
  return masks;
}

Var decode(const Var& masked, const SepformerModel& m, std::size_t length) {
  return ops::pad_or_trim(ops::conv1d_transpose(masked, m.decoder, m.config.stride),
                          length);
}

SeparationOutput separate(const Var& x, const SepformerModel& m, ShapeTrace* trace) {
  const std::size_t length = x.shape()[0];
  Var h = encode(x, m);
  SeparationOutput out;
  out.masks = mask_net(h, m, trace);
  for (const Var& mk : out.masks) out.estimates.push_back(decode(ops::mul(mk, h), m, length));
  if (trace) {
    trace->estimates.clear();
    for (const Var& e : out.estimates) trace->estimates.push_back(e.shape());
  }
  return out;
}

std::uint64_t parameter_census(const SepformerConfig& cfg) {
  const std::uint64_t f = cfg.features, ns = cfg.sources, dff = cfg.d_ff;
  auto layer = [&](AttentionVariant v) {
    std::uint64_t n = 4 * f * f;  // W_Q, W_K, W_V, W^O with d_model = F
    if (v == AttentionVariant::kLinformer) n += 2 * cfg.max_len * cfg.proj_len;
    n += 4 * f;                    // two LayerNorms
    n += 2 * f * dff + dff + f;    // FFW
    return n;
  };
  std::uint64_t total = 2 * f * cfg.kernel;  // encoder and decoder
  total += 2 * f + f * f + f;                // norm + input linear
  total += cfg.repeats * (cfg.intra_layers * layer(cfg.intra_attention) +
                          active_inter_layers(cfg) * layer(cfg.inter_attention));
  total += f;                                // PReLU
  total += f * ns * f + f * ns;              // output linear
  total += 2 * (f * f + f);                  // final FFW pair
  return total;
}

// Checkpoint container, all integers little-endian:
//   "SPFK" | u32 version | u32 n | n bytes of key=value config text
//   per parameter until EOF:
//     u32 name_len | name | u32 rank | u64 dims[rank] | f64 values
namespace {

constexpr std::array<char, 4> kMagic = {'S', 'P', 'F', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::ostream& out, T v) {
  std::array<char, sizeof(T)> b;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b.data(), b.size());
}

template <typename T>
bool get_le(std::istream& in, T& v) {
  std::array<unsigned char, sizeof(T)> b;
  if (!in.read(reinterpret_cast<char*>(b.data()), b.size())) return false;
  v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b[i]) << (8 * i);
  return true;
}

template <typename T>
T require_le(std::istream& in, const std::string& what) {
  T v;
  if (!get_le(in, v)) throw FormatError("truncated checkpoint while reading " + what);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const SepformerModel& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kVersion);
  const std::string text = m.config.to_text();
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, var] : m.named_parameters()) {
    const NdArray& v = var.value();
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(v.rank()));
    for (std::size_t d : v.shape()) put_le<std::uint64_t>(out, d);
    for (double x : v.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(x));
  }
  if (!out) throw FormatError("write failed for " + path.string());
}

SepformerModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic)
    throw FormatError("bad checkpoint magic in " + path.string());
  const auto version = require_le<std::uint32_t>(in, "version");
  if (version != kVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto text_len = require_le<std::uint32_t>(in, "config length");
  std::string text(text_len, '\0');
  if (!in.read(text.data(), text_len)) throw FormatError("truncated checkpoint config");

  SepformerModel m = make_model(parse_config(text));
  std::map<std::string, Var> by_name;
  for (auto& [name, var] : m.named_parameters()) by_name.emplace(name, var);
  std::size_t loaded = 0;

  std::uint32_t name_len;
  while (get_le(in, name_len)) {
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw FormatError("truncated parameter name");
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("unexpected parameter '" + name + "'");
    const auto rank = require_le<std::uint32_t>(in, name + " rank");
    Shape shape(rank);
    for (auto& d : shape) d = require_le<std::uint64_t>(in, name + " dims");
    NdArray& dst = it->second.mutable_value();
    if (shape != dst.shape())
      throw FormatError("parameter '" + name + "' has shape " + shape_string(shape) +
                        ", config expects " + shape_string(dst.shape()));
    for (double& x : dst.data())
      x = std::bit_cast<double>(require_le<std::uint64_t>(in, name + " values"));
    ++loaded;
  }
  if (loaded != by_name.size())
    throw FormatError("checkpoint has " + std::to_string(loaded) + " of " +
                      std::to_string(by_name.size()) + " parameters");
  return m;
}

}  // namespace sepformer
