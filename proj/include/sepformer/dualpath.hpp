#pragma once

// 50%-overlap chunking, overlap-add, and the repeated intra/inter block.
// Chunk tensors are [F x C x Nc].

#include <random>
#include <vector>

#include "sepformer/encoder.hpp"

namespace sepformer {

struct ChunkGeometry {
  std::size_t length = 0;    // T' before padding
  std::size_t chunk = 0;     // C
  std::size_t hop = 0;       // C / 2
  std::size_t padded = 0;    // smallest L >= max(T', C) with (L - C) % hop == 0
  std::size_t n_chunks = 0;  // 1 + (L - C) / hop

  // Number of frames covering padded position t (1 or 2).
  std::size_t coverage(std::size_t t) const;
};

// Throws ConfigError for odd or < 2 chunk sizes.
ChunkGeometry make_chunk_geometry(std::size_t length, std::size_t chunk);

// h: [F x T'] -> [F x C x Nc], zero padded.
Var chunk(const Var& h, const ChunkGeometry& g);

// x: [F x C x Nc] -> [F x T']; frames summed at their offsets, divided by
// coverage and truncated to g.length.
Var overlap_add(const Var& x, const ChunkGeometry& g);

struct DualPathRepeat {
  TransformerStackParams intra;
  TransformerStackParams inter;
};

struct SepformerBlockParams {
  std::vector<DualPathRepeat> repeats;

  NamedParameters named_parameters() const;
};

SepformerBlockParams make_sepformer_block(const AttentionSpec& intra_spec,
                                          const AttentionSpec& inter_spec,
                                          std::size_t features,
                                          std::size_t d_ff, std::size_t repeats,
                                          std::size_t intra_layers,
                                          std::size_t inter_layers,
                                          std::mt19937_64& rng);

// IntraT on each chunk (sequence length C).
Var intra_pass(const Var& x, const TransformerStackParams& p,
               const AttentionSpec& spec);
// InterT on each intra-chunk position (sequence length Nc).
Var inter_pass(const Var& x, const TransformerStackParams& p,
               const AttentionSpec& spec);

Var sepformer_block(const Var& x, const SepformerBlockParams& p,
                    const AttentionSpec& intra_spec,
                    const AttentionSpec& inter_spec);

}  // namespace sepformer
