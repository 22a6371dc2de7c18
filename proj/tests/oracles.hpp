#pragma once

// Independent reference implementations shared by the unit tests and the
// acceptance runner. Plain loops only; nothing here calls the kernels under
// test.

#include <algorithm>
#include <cmath>
#include <vector>

#include "sepformer/attention.hpp"

namespace sepformer::oracle {

// Brute-force multi-head attention: explicit loops over heads, query and key
// positions. Keys are either W_K x (standard) or unit-normalised queries
// (shared-QK); `exclude_self` masks the diagonal unless a row has one entry.
inline NdArray brute_force_attention(const NdArray& x, const AttentionWeights& w,
                              std::size_t heads, bool shared_qk,
                              bool exclude_self) {
  const std::size_t f = x.rows(), t_len = x.cols();
  const NdArray& wq = w.w_q.value();
  const NdArray& wk = w.w_k.value();
  const NdArray& wv = w.w_v.value();
  const NdArray& wo = w.w_o.value();
  const std::size_t d = wq.rows(), dk = d / heads;
  auto project = [&](const NdArray& m, std::size_t row, std::size_t t) {
    double s = 0.0;
    for (std::size_t c = 0; c < f; ++c) s += m(row, c) * x(c, t);
    return s;
  };
  NdArray concat({d, t_len});
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t t = 0; t < t_len; ++t) {
      std::vector<double> logits(t_len, 0.0);
      std::vector<bool> allowed(t_len, true);
      if (exclude_self && t_len > 1) allowed[t] = false;
      for (std::size_t s = 0; s < t_len; ++s) {
        double knorm = 0.0;
        if (shared_qk) {
          for (std::size_t c = 0; c < dk; ++c) {
            const double kv = project(wq, h * dk + c, s);
            knorm += kv * kv;
          }
          knorm = std::sqrt(knorm);
        }
        double dot = 0.0;
        for (std::size_t c = 0; c < dk; ++c) {
          const double qv = project(wq, h * dk + c, t);
          const double kv = shared_qk ? project(wq, h * dk + c, s) / knorm
                                      : project(wk, h * dk + c, s);
          dot += qv * kv;
        }
        logits[s] = dot / std::sqrt(static_cast<double>(dk));
      }
      double mx = -1e300;
      for (std::size_t s = 0; s < t_len; ++s)
        if (allowed[s]) mx = std::max(mx, logits[s]);
      double z = 0.0;
      for (std::size_t s = 0; s < t_len; ++s)
        if (allowed[s]) z += std::exp(logits[s] - mx);
      for (std::size_t c = 0; c < dk; ++c) {
        double acc = 0.0;
        for (std::size_t s = 0; s < t_len; ++s)
          if (allowed[s])
            acc += std::exp(logits[s] - mx) / z * project(wv, h * dk + c, s);
        concat(h * dk + c, t) = acc;
      }
    }
  }
  NdArray out({wo.rows(), t_len});
  for (std::size_t i = 0; i < wo.rows(); ++i)
    for (std::size_t t = 0; t < t_len; ++t)
      for (std::size_t c = 0; c < d; ++c) out(i, t) += wo(i, c) * concat(c, t);
  return out;
}

inline double max_abs_diff(const NdArray& a, const NdArray& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace sepformer::oracle
