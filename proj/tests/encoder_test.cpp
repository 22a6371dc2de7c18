#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sepformer/encoder.hpp"
#include "sepformer/gradcheck.hpp"

using namespace sepformer;

namespace {

AttentionSpec spec_for(std::size_t f, std::size_t heads) {
  AttentionSpec s;
  s.d_model = f;
  s.heads = heads;
  return s;
}

void zero_all(const NamedParameters& params) {
  for (const auto& entry : params) {
    Var v = entry.second;
    v.mutable_value().fill(0.0);
  }
}

}  // namespace

TEST(TransformerLayer, ZeroWeightsPassInputThrough) {
  std::mt19937_64 rng(1);
  AttentionSpec spec = spec_for(4, 2);
  TransformerLayerParams p = make_transformer_layer(spec, 4, 8, rng);
  zero_all(p.named_parameters());
  NdArray z = random_array({4, 5}, 2);
  Var out = transformer_layer(Var(z), p, spec);
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_EQ(out.value()[i], z[i]);
}

TEST(TransformerLayer, ResidualWiringIsBitExact) {
  std::mt19937_64 rng(3);
  AttentionSpec spec = spec_for(8, 2);
  TransformerLayerParams p = make_transformer_layer(spec, 8, 16, rng);
  LayerTrace trace;
  Var out = transformer_layer(Var(random_array({8, 7}, 4)), p, spec, &trace);
  const NdArray& o = out.value();
  const NdArray& ffw = trace.ffw_branch.value();
  const NdArray& z2 = trace.z_attn.value();
  const NdArray& z1 = trace.z_prime.value();
  for (std::size_t i = 0; i < o.size(); ++i) EXPECT_EQ(o[i], (ffw[i] + z2[i]) + z1[i]);
}

TEST(TransformerLayer, ZeroFeedForwardLeavesBothResiduals) {
  std::mt19937_64 rng(5);
  AttentionSpec spec = spec_for(8, 2);
  TransformerLayerParams p = make_transformer_layer(spec, 8, 16, rng);
  p.w2.mutable_value().fill(0.0);
  LayerTrace trace;
  Var out = transformer_layer(Var(random_array({8, 6}, 6)), p, spec, &trace);
  for (std::size_t i = 0; i < out.value().size(); ++i) {
    EXPECT_EQ(trace.ffw_branch.value()[i], 0.0);
    EXPECT_EQ(out.value()[i], trace.z_attn.value()[i] + trace.z_prime.value()[i]);
  }
}

TEST(TransformerLayer, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  AttentionSpec spec = spec_for(8, 2);
  TransformerLayerParams p0 = make_transformer_layer(spec, 8, 16, rng);
  // Non-trivial LayerNorm affine so every parameter matters.
  p0.ln1_gain.mutable_value() = random_array({8}, 8, 0.5, 1.5);
  p0.ln2_bias.mutable_value() = random_array({8}, 9, -0.2, 0.2);
  const NamedParameters named = p0.named_parameters();
  std::vector<NdArray> inputs = {random_array({8, 6}, 10)};
  for (const auto& e : named) inputs.push_back(e.second.value());
  auto fn = [spec, p0](const std::vector<Var>& in) {
    TransformerLayerParams p = p0;
    p.attention.w_q = in[1];
    p.attention.w_k = in[2];
    p.attention.w_v = in[3];
    p.attention.w_o = in[4];
    p.ln1_gain = in[5];
    p.ln1_bias = in[6];
    p.ln2_gain = in[7];
    p.ln2_bias = in[8];
    p.w1 = in[9];
    p.b1 = in[10];
    p.w2 = in[11];
    p.b2 = in[12];
    return project_to_scalar(transformer_layer(in[0], p, spec), 11);
  };
  auto r = check_gradients("transformer_layer", fn, inputs);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(TransformerStack, PositionalEncodingAddedOnceWithOuterResidual) {
  std::mt19937_64 rng(12);
  AttentionSpec spec = spec_for(4, 2);
  TransformerStackParams p = make_transformer_stack(spec, 4, 8, 3, rng);
  zero_all(p.named_parameters());
  NdArray z = random_array({4, 5}, 13);
  NdArray y = transformer_stack(Var(z), p, spec).value();
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t t = 0; t < 5; ++t) {
      const double angle = t / std::pow(10000.0, static_cast<double>(c - c % 2) / 4);
      const double e = c % 2 == 0 ? std::sin(angle) : std::cos(angle);
      EXPECT_EQ(y(c, t), (z(c, t) + e) + z(c, t));
    }
}

TEST(TransformerStack, DisabledPositionalEncodingDoublesInput) {
  std::mt19937_64 rng(14);
  AttentionSpec spec = spec_for(4, 2);
  TransformerStackParams p = make_transformer_stack(spec, 4, 8, 2, rng);
  zero_all(p.named_parameters());
  p.use_positional_encoding = false;
  NdArray z = random_array({4, 5}, 15);
  NdArray y = transformer_stack(Var(z), p, spec).value();
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_EQ(y[i], z[i] + z[i]);
}

TEST(TransformerStack, ShapePreservedForDepths) {
  AttentionSpec spec = spec_for(8, 2);
  for (std::size_t k : {1u, 4u, 8u}) {
    std::mt19937_64 rng(16);
    TransformerStackParams p = make_transformer_stack(spec, 8, 16, k, rng);
    EXPECT_EQ(p.layers.size(), k);
    EXPECT_EQ(transformer_stack(Var(random_array({8, 9}, 17)), p, spec).shape(),
              (Shape{8, 9}));
  }
}

TEST(TransformerStack, ParameterCountPerPaperLayer) {
  std::mt19937_64 rng(18);
  AttentionSpec spec;  // 8 heads, d_model 256
  TransformerLayerParams p = make_transformer_layer(spec, 256, 1024, rng);
  std::size_t n = 0;
  for (const auto& e : p.named_parameters()) n += e.second.value().size();
  // 4 attention matrices, two LayerNorms, 256->1024->256 with biases.
  EXPECT_EQ(n, 4u * 256 * 256 + 4 * 256 + 256 * 1024 + 1024 + 1024 * 256 + 256);
}
