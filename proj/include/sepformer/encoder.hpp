#pragma once

// Pre-LN transformer layer and the K-layer stack used by both the intra-
// and inter-chunk paths.
//
//   z''  = MHA(LN(z'))
//   out  = FFW(LN(z'' + z')) + z'' + z'
//   f(z) = g^K(z + e) + z

#include <random>
#include <vector>

#include "sepformer/attention.hpp"
#include "sepformer/params.hpp"

namespace sepformer {

struct TransformerLayerParams {
  AttentionWeights attention;
  Var ln1_gain, ln1_bias;  // [F]
  Var ln2_gain, ln2_bias;  // [F]
  Var w1, b1;              // [d_ff x F], [d_ff]
  Var w2, b2;              // [F x d_ff], [F]

  NamedParameters named_parameters() const;
};

struct TransformerStackParams {
  std::vector<TransformerLayerParams> layers;
  bool use_positional_encoding = true;

  NamedParameters named_parameters() const;
};

TransformerLayerParams make_transformer_layer(const AttentionSpec& spec,
                                              std::size_t features,
                                              std::size_t d_ff,
                                              std::mt19937_64& rng);

TransformerStackParams make_transformer_stack(const AttentionSpec& spec,
                                              std::size_t features,
                                              std::size_t d_ff,
                                              std::size_t layers,
                                              std::mt19937_64& rng);

// Intermediates of one layer, kept for wiring audits.
struct LayerTrace {
  Var z_prime;      // input
  Var z_attn;       // z''
  Var ffw_branch;   // FFW(LN(z'' + z'))
  Var output;
};

// Position-wise W2 ReLU(W1 x + b1) + b2.
Var feed_forward(const Var& x, const TransformerLayerParams& p);

Var transformer_layer(const Var& z, const TransformerLayerParams& p,
                      const AttentionSpec& spec, LayerTrace* trace = nullptr,
                      AttentionProbe* probe = nullptr);

Var transformer_stack(const Var& z, const TransformerStackParams& p,
                      const AttentionSpec& spec);

}  // namespace sepformer
