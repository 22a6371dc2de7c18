#pragma once

// Multi-head self-attention with four interchangeable kernels:
//   Full       softmax(q^T k / sqrt(d_k)) over every position
//   Longformer sliding window of `window` positions plus evenly spaced
//              global positions that see, and are seen by, everything
//   Linformer  keys and values projected along time to `proj_len` slots
//   Reformer   shared-QK LSH bucketing, attention within sorted chunks
//
// Sequences are [features x time]; heads split the d_model rows evenly.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sepformer/autodiff.hpp"
#include "sepformer/instrument.hpp"

namespace sepformer {

enum class AttentionVariant { kFull, kLongformer, kLinformer, kReformer };

std::string to_string(AttentionVariant v);
AttentionVariant parse_attention_variant(const std::string& name);

struct AttentionSpec {
  AttentionVariant variant = AttentionVariant::kFull;
  std::size_t heads = 8;
  std::size_t d_model = 256;

  // Longformer. global_stride == 0 disables global positions.
  std::size_t window = 101;
  std::size_t global_stride = 100;

  // Linformer.
  std::size_t proj_len = 128;
  std::size_t max_len = 4000;

  // Reformer.
  std::size_t n_buckets = 16;
  std::size_t n_rounds = 2;
  std::size_t bucket_chunk = 64;
  std::uint64_t seed = 0;

  std::size_t head_dim() const { return d_model / heads; }
  // Throws ConfigError naming the violated constraint.
  void validate() const;
};

struct AttentionWeights {
  Var w_q, w_k, w_v;  // [d_model x F]
  Var w_o;            // [F x d_model]
  Var proj_k, proj_v; // [max_len x proj_len], Linformer only

  std::vector<Var> parameters() const;
};

// Uniform(+-1/sqrt(fan_in)) initialisation.
NdArray init_uniform(const Shape& shape, std::size_t fan_in,
                     std::mt19937_64& rng);

AttentionWeights make_attention_weights(const AttentionSpec& spec,
                                        std::size_t features,
                                        std::mt19937_64& rng);

// Optional capture of realised attention maps, one entry per head (per head
// and round for Reformer). Sparse variants store dense [T x T] maps with
// zeros outside the attended set; Linformer stores [T x proj_len].
struct AttentionProbe {
  std::vector<NdArray> maps;
};

// Sinusoidal encoding, [T x d_model]:
//   PE[t, 2i]   = sin(t / 10000^(2i / d_model))
//   PE[t, 2i+1] = cos(t / 10000^(2i / d_model))
NdArray positional_encoding(std::size_t length, std::size_t d_model);

// Per-query attended positions; allocations are tracked by the arena.
using NeighborList = std::vector<std::uint32_t, CountingAllocator<std::uint32_t>>;
using NeighborLists = std::vector<NeighborList, CountingAllocator<NeighborList>>;

struct SparseAttentionResult {
  Var out;  // [d_k x T]
  Var lse;  // [T], log-sum-exp of each query's scaled logits
};

// out[:, t] = sum_j softmax_j(scale * q_t . k_{n_j}) v_{n_j} over
// n_j in neighbors[t]. Differentiable in q, k, v and through lse.
SparseAttentionResult sparse_attention(const Var& q, const Var& k,
                                       const Var& v,
                                       const NeighborLists& neighbors,
                                       double scale,
                                       AttentionProbe* probe = nullptr);

NeighborLists longformer_neighbors(std::size_t length, std::size_t window,
                                   std::size_t global_stride);

// Angular LSH: bucket = argmax([R^T x; -R^T x]) with R ~ N(0, 1) of shape
// [dim x n_buckets/2] drawn from `seed`. One bucket per column of `x`.
std::vector<std::uint32_t> lsh_buckets(const NdArray& x, std::size_t n_buckets,
                                       std::uint64_t seed);

// Stable sort by (bucket, position); each position attends to its sorted
// chunk and the one before it, never to itself unless nothing else is left.
NeighborLists reformer_neighbors(const std::vector<std::uint32_t>& buckets,
                                 std::size_t bucket_chunk);

// Single-head kernels on [d_k x T] projections.
Var full_head(const Var& q, const Var& k, const Var& v,
              AttentionProbe* probe = nullptr);
Var longformer_head(const Var& q, const Var& k, const Var& v,
                    const AttentionSpec& spec, AttentionProbe* probe = nullptr);
Var linformer_head(const Var& q, const Var& k, const Var& v,
                   const Var& proj_k, const Var& proj_v,
                   const AttentionSpec& spec, AttentionProbe* probe = nullptr);
Var reformer_head(const Var& q, const Var& v, const AttentionSpec& spec,
                  std::size_t head, AttentionProbe* probe = nullptr);

// Concat(head_1..head_h) combined by W^O; routes every head to the
// variant selected by `spec`. x: [F x T] -> [F x T].
Var multi_head_attention(const Var& x, const AttentionWeights& w,
                         const AttentionSpec& spec,
                         AttentionProbe* probe = nullptr);

Var full_attention(const Var& x, const AttentionWeights& w,
                   AttentionSpec spec, AttentionProbe* probe = nullptr);
Var longformer_attention(const Var& x, const AttentionWeights& w,
                         AttentionSpec spec, AttentionProbe* probe = nullptr);
Var linformer_attention(const Var& x, const AttentionWeights& w,
                        AttentionSpec spec, AttentionProbe* probe = nullptr);
Var reformer_attention(const Var& x, const AttentionWeights& w,
                       AttentionSpec spec, AttentionProbe* probe = nullptr);

}  // namespace sepformer
