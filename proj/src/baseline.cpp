#include "sepformer/baseline.hpp"

#include <cmath>
#include <random>

#include "sepformer/attention.hpp"
#include "sepformer/errors.hpp"
#include "sepformer/instrument.hpp"
#include "sepformer/ops.hpp"

namespace sepformer {
namespace {

NdArray matmul(const NdArray& a, const NdArray& b) { return ops::matmul_values(a, b); }

void prelu_inplace(NdArray& x, double slope) {
  for (double& v : x.data())
    if (v < 0.0) v *= slope;
}

// Layer norm over every element, unit gain and zero bias.
void global_norm_inplace(NdArray& x) {
  double mean = 0.0;
  for (double v : x.data()) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x.data()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  const double inv = 1.0 / std::sqrt(var + 1e-8);
  for (double& v : x.data()) v = (v - mean) * inv;
}

void add_bias_inplace(NdArray& x, const NdArray& b) {
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t t = 0; t < x.cols(); ++t) x(i, t) += b[i];
}

}  // namespace

ConvBaseline::ConvBaseline(const ConvBaselineConfig& cfg) : cfg_(cfg) {
  std::mt19937_64 rng(cfg.seed);
  const std::size_t n = cfg.filters, b = cfg.bottleneck, h = cfg.hidden;
  encoder_ = init_uniform({n, cfg.kernel}, cfg.kernel, rng);
  bottleneck_w_ = init_uniform({b, n}, n, rng);
  for (std::size_t r = 0; r < cfg.repeats; ++r)
    for (std::size_t x = 0; x < cfg.blocks; ++x) {
      Block blk;
      blk.in_w = init_uniform({h, b}, b, rng);
      blk.in_b = NdArray({h});
      blk.dw = init_uniform({h, cfg.conv_kernel}, cfg.conv_kernel, rng);
      blk.dw_b = NdArray({h});
      blk.out_w = init_uniform({b, h}, h, rng);
      blk.out_b = NdArray({b});
      blk.dilation = std::size_t{1} << x;
      blocks_.push_back(std::move(blk));
    }
  mask_w_ = init_uniform({n * cfg.sources, b}, b, rng);
  decoder_ = init_uniform({n, cfg.kernel}, n, rng);
}

std::size_t ConvBaseline::parameter_count() const {
  std::size_t total = encoder_.size() + decoder_.size() + bottleneck_w_.size() + mask_w_.size();
  for (const Block& blk : blocks_)
    total += blk.in_w.size() + blk.in_b.size() + blk.dw.size() + blk.dw_b.size() +
             blk.out_w.size() + blk.out_b.size();
  return total;
}

std::vector<NdArray> ConvBaseline::separate(const NdArray& x) const {
  const std::size_t n = cfg_.filters, len = x.size();
  Var filters(encoder_.reshaped({n, 1, cfg_.kernel}));
  NdArray h = std::move(ops::relu(ops::conv1d(Var(x), filters, cfg_.stride)).mutable_value());
  const std::size_t t_lat = h.cols();

  NdArray y = matmul(bottleneck_w_, h);
  for (const Block& blk : blocks_) {
    NdArray z = matmul(blk.in_w, y);
    add_bias_inplace(z, blk.in_b);
    prelu_inplace(z, 0.25);
    global_norm_inplace(z);
    // Depthwise dilated conv with "same" zero padding.
    NdArray d({z.rows(), t_lat});
    const std::size_t p = cfg_.conv_kernel;
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>((p - 1) / 2 * blk.dilation);
    for (std::size_t c = 0; c < z.rows(); ++c)
      for (std::size_t t = 0; t < t_lat; ++t) {
        double acc = blk.dw_b[c];
        for (std::size_t j = 0; j < p; ++j) {
          const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t) - half +
                                   static_cast<std::ptrdiff_t>(j * blk.dilation);
          if (s >= 0 && s < static_cast<std::ptrdiff_t>(t_lat)) acc += blk.dw(c, j) * z(c, s);
        }
        d(c, t) = acc;
      }
    add_macs(static_cast<std::uint64_t>(z.rows()) * p * t_lat);
    prelu_inplace(d, 0.25);
    global_norm_inplace(d);
    NdArray res = matmul(blk.out_w, d);
    add_bias_inplace(res, blk.out_b);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += res[i];
  }

  NdArray masks = matmul(mask_w_, y);
  std::vector<NdArray> out;
  Var dec(decoder_.reshaped({n, 1, cfg_.kernel}));
  for (std::size_t k = 0; k < cfg_.sources; ++k) {
    NdArray masked({n, t_lat});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t t = 0; t < t_lat; ++t)
        masked(i, t) = std::max(0.0, masks(k * n + i, t)) * h(i, t);
    out.push_back(ops::pad_or_trim(ops::conv1d_transpose(Var(masked), dec, cfg_.stride), len)
                      .value());
  }
  return out;
}

}  // namespace sepformer
