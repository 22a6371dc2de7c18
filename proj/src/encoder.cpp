#include "sepformer/encoder.hpp"

#include <string>

#include "sepformer/errors.hpp"
#include "sepformer/ops.hpp"

namespace sepformer {

NamedParameters TransformerLayerParams::named_parameters() const {
  NamedParameters out = {{"attn.w_q", attention.w_q},
                         {"attn.w_k", attention.w_k},
                         {"attn.w_v", attention.w_v},
                         {"attn.w_o", attention.w_o}};
  if (!attention.proj_k.value().empty()) {
    out.emplace_back("attn.proj_k", attention.proj_k);
    out.emplace_back("attn.proj_v", attention.proj_v);
  }
  out.emplace_back("ln1.gain", ln1_gain);
  out.emplace_back("ln1.bias", ln1_bias);
  out.emplace_back("ln2.gain", ln2_gain);
  out.emplace_back("ln2.bias", ln2_bias);
  out.emplace_back("ffw.w1", w1);
  out.emplace_back("ffw.b1", b1);
  out.emplace_back("ffw.w2", w2);
  out.emplace_back("ffw.b2", b2);
  return out;
}

NamedParameters TransformerStackParams::named_parameters() const {
  NamedParameters out;
  for (std::size_t i = 0; i < layers.size(); ++i)
    append_named(out, "layer" + std::to_string(i) + ".",
                 layers[i].named_parameters());
  return out;
}

TransformerLayerParams make_transformer_layer(const AttentionSpec& spec,
                                              std::size_t features,
                                              std::size_t d_ff,
                                              std::mt19937_64& rng) {
  if (spec.d_model != features)
    throw ConfigError("d_model (" + std::to_string(spec.d_model) +
                      ") must equal the feature count (" +
                      std::to_string(features) + ")");
  TransformerLayerParams p;
  p.attention = make_attention_weights(spec, features, rng);
  p.ln1_gain = Var(NdArray({features}, 1.0), true);
  p.ln1_bias = Var(NdArray({features}), true);
  p.ln2_gain = Var(NdArray({features}, 1.0), true);
  p.ln2_bias = Var(NdArray({features}), true);
  p.w1 = Var(init_uniform({d_ff, features}, features, rng), true);
  p.b1 = Var(NdArray({d_ff}), true);
  p.w2 = Var(init_uniform({features, d_ff}, d_ff, rng), true);
  p.b2 = Var(NdArray({features}), true);
  return p;
}

TransformerStackParams make_transformer_stack(const AttentionSpec& spec,
                                              std::size_t features,
                                              std::size_t d_ff,
                                              std::size_t layers,
                                              std::mt19937_64& rng) {
  if (layers == 0) throw ConfigError("transformer stack needs at least one layer");
  TransformerStackParams s;
  for (std::size_t i = 0; i < layers; ++i)
    s.layers.push_back(make_transformer_layer(spec, features, d_ff, rng));
  return s;
}

Var feed_forward(const Var& x, const TransformerLayerParams& p) {
  // Separate statements let the pre-activation buffer go before the second
  // projection when no tape holds it.
  Var hidden = ops::relu(ops::linear(p.w1, x, p.b1));
  return ops::linear(p.w2, hidden, p.b2);
}

Var transformer_layer(const Var& z, const TransformerLayerParams& p,
                      const AttentionSpec& spec, LayerTrace* trace,
                      AttentionProbe* probe) {
  Var z_attn = multi_head_attention(ops::layer_norm(z, p.ln1_gain, p.ln1_bias),
                                    p.attention, spec, probe);
  Var ffw;
  {
    Var normed = ops::layer_norm(ops::add(z_attn, z), p.ln2_gain, p.ln2_bias);
    ffw = feed_forward(normed, p);
  }
  // Both residuals land after the feed-forward branch.
  Var out = ops::add(ops::add(ffw, z_attn), z);
  if (trace) *trace = {z, z_attn, ffw, out};
  return out;
}

Var transformer_stack(const Var& z, const TransformerStackParams& p,
                      const AttentionSpec& spec) {
  Var h = z;
  if (p.use_positional_encoding) {
    const NdArray pe = positional_encoding(z.shape()[1], z.shape()[0]);
    h = ops::add(z, ops::transpose(Var(pe)));
  }
  for (const auto& layer : p.layers) h = transformer_layer(h, layer, spec);
  return ops::add(h, z);
}

}  // namespace sepformer
