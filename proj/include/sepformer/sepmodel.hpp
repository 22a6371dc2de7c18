#pragma once

// Full separator: conv encoder, masking network, conv decoder.
//
//   h     = ReLU(conv1d(x))                       [F x T']
//   h'    = chunk(W LN(h) + b)                    [F x C x Nc]
//   h''   = SepFormer block(h')                   [F x C x Nc]
//   h'''  = W' PReLU(h'') + b'                    [(F*Ns) x C x Nc]
//   h'''' = overlap_add per source                [F x Ns x T']
//   m_k   = ReLU(FFW(h''''_k))                    [F x T']
//   s_k   = conv1d_transpose(m_k * h), cut to T

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "sepformer/config.hpp"
#include "sepformer/dualpath.hpp"

namespace sepformer {

struct MaskNetParams {
  Var norm_gain, norm_bias;  // [F]
  Var in_w, in_b;            // [F x F], [F]
  SepformerBlockParams block;
  Var prelu_slope;           // [F]
  Var out_w, out_b;          // [F*Ns x F], [F*Ns]
  Var ffw1_w, ffw1_b;        // [F x F], [F]
  Var ffw2_w, ffw2_b;        // [F x F], [F]

  NamedParameters named_parameters() const;
};

struct SepformerModel {
  SepformerConfig config;
  Var encoder;  // [F x 1 x Kw]
  Var decoder;  // [F x 1 x Kw]
  MaskNetParams mask_net;

  NamedParameters named_parameters() const;
  std::vector<Var> parameters() const;
};

// Initialises every parameter from config.seed.
SepformerModel make_model(const SepformerConfig& cfg);

// Shapes of each intermediate of one forward pass.
struct ShapeTrace {
  Shape h, h_prime, h_second, h_third, h_fourth;
  std::vector<Shape> masks, estimates;
};

struct SeparationOutput {
  std::vector<Var> estimates;  // Ns signals of length T
  std::vector<Var> masks;      // Ns maps [F x T']
};

ChunkGeometry geometry_for(const SepformerConfig& cfg, std::size_t latent_length);

// chunk == 0 runs the intra stacks over the whole sequence only.
inline std::size_t active_inter_layers(const SepformerConfig& cfg) {
  return cfg.chunk == 0 ? 0 : cfg.inter_layers;
}

Var encode(const Var& x, const SepformerModel& m);
std::vector<Var> mask_net(const Var& h, const SepformerModel& m,
                          ShapeTrace* trace = nullptr);
// conv1d_transpose(mask * h), zero padded or truncated to `length`.
Var decode(const Var& masked, const SepformerModel& m, std::size_t length);
SeparationOutput separate(const Var& x, const SepformerModel& m,
                          ShapeTrace* trace = nullptr);

// Closed-form count of learnable scalars.
std::uint64_t parameter_census(const SepformerConfig& cfg);

void save_checkpoint(const std::filesystem::path& path, const SepformerModel& m);
SepformerModel load_checkpoint(const std::filesystem::path& path);

}  // namespace sepformer
