#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sepformer/dualpath.hpp"
#include "sepformer/errors.hpp"
#include "sepformer/gradcheck.hpp"
#include "sepformer/ops.hpp"

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

TEST(ChunkGeometry, ExactFit) {
  ChunkGeometry g = make_chunk_geometry(1000, 250);
  EXPECT_EQ(g.hop, 125u);
  EXPECT_EQ(g.n_chunks, 7u);
  EXPECT_EQ(g.padded, 1000u);
}

TEST(ChunkGeometry, ShortInputPadsToOneChunk) {
  ChunkGeometry g = make_chunk_geometry(100, 250);
  EXPECT_EQ(g.padded, 250u);
  EXPECT_EQ(g.n_chunks, 1u);
}

TEST(ChunkGeometry, OneOverPadsToNextHop) {
  ChunkGeometry g = make_chunk_geometry(251, 250);
  EXPECT_EQ(g.padded, 375u);
  EXPECT_EQ(g.n_chunks, 2u);
}

TEST(ChunkGeometry, OddChunkRejected) {
  EXPECT_THROW(make_chunk_geometry(100, 251), ConfigError);
  EXPECT_THROW(make_chunk_geometry(100, 0), ConfigError);
}

TEST(ChunkGeometry, CoverageIsOneAtEdgesTwoInside) {
  ChunkGeometry g = make_chunk_geometry(1000, 250);
  EXPECT_EQ(g.coverage(0), 1u);
  EXPECT_EQ(g.coverage(124), 1u);
  EXPECT_EQ(g.coverage(125), 2u);
  EXPECT_EQ(g.coverage(874), 2u);
  EXPECT_EQ(g.coverage(875), 1u);
  EXPECT_EQ(g.coverage(999), 1u);
}

TEST(Chunk, FramesSitAtHopOffsets) {
  NdArray h({1, 6}, {1, 2, 3, 4, 5, 6});
  ChunkGeometry g = make_chunk_geometry(6, 4);
  NdArray c = chunk(Var(h), g).value();
  EXPECT_EQ(c.shape(), (Shape{1, 4, 2}));
  const double frame0[] = {1, 2, 3, 4}, frame1[] = {3, 4, 5, 6};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(c(0, i, 0), frame0[i]);
    EXPECT_EQ(c(0, i, 1), frame1[i]);
  }
}

TEST(OverlapAdd, AllOnesChunksGiveOnes) {
  ChunkGeometry g = make_chunk_geometry(6, 4);
  NdArray y = overlap_add(Var(NdArray({1, 4, 2}, 1.0)), g).value();
  for (double v : y.to_vector()) EXPECT_EQ(v, 1.0);
}

TEST(OverlapAdd, ZeroInZeroOut) {
  ChunkGeometry g = make_chunk_geometry(37, 10);
  NdArray y = overlap_add(Var(NdArray({3, 10, g.n_chunks})), g).value();
  for (double v : y.to_vector()) EXPECT_EQ(v, 0.0);
}

TEST(OverlapAdd, RoundTripOverRandomGeometries) {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<std::size_t> fdist(1, 5), cdist(1, 40),
      tdist(1, 300);
  for (int n = 0; n < 200; ++n) {
    const std::size_t f = fdist(rng), c = 2 * cdist(rng);
    std::size_t t = tdist(rng);
    if (n % 4 == 1) t = c;
    if (n % 4 == 2) t = c + 1;
    if (n % 4 == 3) t = std::max<std::size_t>(1, c / 3);
    ChunkGeometry g = make_chunk_geometry(t, c);
    NdArray h = random_array({f, t}, 1000 + n);
    NdArray back = overlap_add(chunk(Var(h), g), g).value();
    ASSERT_EQ(back.shape(), h.shape());
    for (std::size_t i = 0; i < h.size(); ++i)
      ASSERT_NEAR(back[i], h[i], 1e-12) << "F=" << f << " T'=" << t << " C=" << c;
  }
}

TEST(OverlapAdd, ChunkAndOverlapAddGradients) {
  ChunkGeometry g = make_chunk_geometry(11, 4);
  auto r1 = check_gradients(
      "chunk",
      [g](const std::vector<Var>& in) { return project_to_scalar(chunk(in[0], g), 1); },
      {random_array({2, 11}, 22)});
  EXPECT_LT(r1.max_rel_error, 1e-4);
  auto r2 = check_gradients(
      "overlap_add",
      [g](const std::vector<Var>& in) {
        return project_to_scalar(overlap_add(in[0], g), 2);
      },
      {random_array({2, 4, g.n_chunks}, 23)});
  EXPECT_LT(r2.max_rel_error, 1e-4);
}

TEST(SepformerBlock, HandTraceWithZeroStacks) {
  // F=2, C=4, Nc=2. Each stack reduces to f(z) = (z + e) + z, with
  // e[0, t] = sin t, e[1, t] = cos t for d_model = 2.
  std::mt19937_64 rng(24);
  AttentionSpec spec = spec_for(2, 1);
  SepformerBlockParams p = make_sepformer_block(spec, spec, 2, 4, 1, 1, 1, rng);
  zero_all(p.named_parameters());
  NdArray x = random_array({2, 4, 2}, 25);
  NdArray y = sepformer_block(Var(x), p, spec, spec).value();
  auto pe = [](std::size_t c, std::size_t t) {
    return c == 0 ? std::sin(static_cast<double>(t)) : std::cos(static_cast<double>(t));
  };
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t k = 0; k < 2; ++k) {
        const double intra = (x(c, i, k) + pe(c, i)) + x(c, i, k);
        const double inter = (intra + pe(c, k)) + intra;
        EXPECT_EQ(y(c, i, k), inter);
      }
}

TEST(SepformerBlock, SingleChunkStillRuns) {
  std::mt19937_64 rng(26);
  AttentionSpec spec = spec_for(4, 2);
  SepformerBlockParams p = make_sepformer_block(spec, spec, 4, 8, 2, 1, 1, rng);
  Var y = sepformer_block(Var(random_array({4, 6, 1}, 27)), p, spec, spec);
  EXPECT_EQ(y.shape(), (Shape{4, 6, 1}));
  EXPECT_TRUE(y.value().all_finite());
}

TEST(SepformerBlock, IntraAndInterVariantsMayDiffer) {
  std::mt19937_64 rng(28);
  AttentionSpec intra = spec_for(4, 2), inter = spec_for(4, 2);
  intra.variant = AttentionVariant::kReformer;
  intra.n_buckets = 2;
  intra.bucket_chunk = 2;
  SepformerBlockParams p = make_sepformer_block(intra, inter, 4, 8, 1, 1, 1, rng);
  Var y = sepformer_block(Var(random_array({4, 8, 3}, 29)), p, intra, inter);
  EXPECT_EQ(y.shape(), (Shape{4, 8, 3}));
}

TEST(SepformerBlock, IntraPassTouchesOnlyPerturbedChunk) {
  std::mt19937_64 rng(30);
  AttentionSpec spec = spec_for(4, 2);
  TransformerStackParams p = make_transformer_stack(spec, 4, 8, 1, rng);
  NdArray x = random_array({4, 6, 3}, 31);
  NdArray base = intra_pass(Var(x), p, spec).value();
  x(2, 3, 1) += 0.5;
  NdArray moved = intra_pass(Var(x), p, spec).value();
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t k = 0; k < 3; ++k) {
        if (k == 1) continue;
        EXPECT_EQ(moved(c, i, k), base(c, i, k));
      }
  EXPECT_NE(moved(0, 0, 1), base(0, 0, 1));
}

TEST(SepformerBlock, InterPassTouchesOnlyPerturbedPosition) {
  std::mt19937_64 rng(32);
  AttentionSpec spec = spec_for(4, 2);
  TransformerStackParams p = make_transformer_stack(spec, 4, 8, 1, rng);
  NdArray x = random_array({4, 6, 3}, 33);
  NdArray base = inter_pass(Var(x), p, spec).value();
  x(1, 4, 0) += 0.5;
  NdArray moved = inter_pass(Var(x), p, spec).value();
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t k = 0; k < 3; ++k) {
        if (i == 4) continue;
        EXPECT_EQ(moved(c, i, k), base(c, i, k));
      }
  EXPECT_NE(moved(0, 4, 2), base(0, 4, 2));
}
