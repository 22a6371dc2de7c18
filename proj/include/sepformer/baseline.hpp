#pragma once

// Forward-only temporal-convolution separator used as a memory reference
// point: conv encoder, bottleneck, R x X dilated depthwise blocks, mask
// head, conv decoder. Inference only; no gradients.

#include <cstdint>
#include <vector>

#include "sepformer/ndarray.hpp"

namespace sepformer {

struct ConvBaselineConfig {
  std::size_t filters = 512;     // N
  std::size_t kernel = 16;       // L
  std::size_t stride = 8;
  std::size_t bottleneck = 128;  // B
  std::size_t hidden = 512;      // H
  std::size_t conv_kernel = 3;   // P
  std::size_t blocks = 8;        // X
  std::size_t repeats = 3;       // R
  std::size_t sources = 2;
  std::uint64_t seed = 0;
};

class ConvBaseline {
 public:
  explicit ConvBaseline(const ConvBaselineConfig& cfg);

  std::vector<NdArray> separate(const NdArray& x) const;
  std::size_t parameter_count() const;

 private:
  struct Block {
    NdArray in_w, in_b;    // [H x B], [H]
    NdArray dw, dw_b;      // [H x P], [H]
    NdArray out_w, out_b;  // [B x H], [B]
    std::size_t dilation = 1;
  };
  ConvBaselineConfig cfg_;
  NdArray encoder_, decoder_;       // [N x Kw]
  NdArray bottleneck_w_;            // [B x N]
  std::vector<Block> blocks_;
  NdArray mask_w_;                  // [N*Ns x B]
};

}  // namespace sepformer
