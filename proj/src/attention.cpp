#include "sepformer/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "sepformer/errors.hpp"
#include "sepformer/instrument.hpp"
#include "sepformer/ops.hpp"

namespace sepformer {

std::string to_string(AttentionVariant v) {
  switch (v) {
    case AttentionVariant::kFull: return "full";
    case AttentionVariant::kLongformer: return "longformer";
    case AttentionVariant::kLinformer: return "linformer";
    case AttentionVariant::kReformer: return "reformer";
  }
  return "unknown";
}

AttentionVariant parse_attention_variant(const std::string& name) {
  if (name == "full") return AttentionVariant::kFull;
  if (name == "longformer") return AttentionVariant::kLongformer;
  if (name == "linformer") return AttentionVariant::kLinformer;
  if (name == "reformer") return AttentionVariant::kReformer;
  throw ConfigError("unknown attention variant '" + name +
                    "' (expected full, longformer, linformer or reformer)");
}

void AttentionSpec::validate() const {
  if (heads == 0 || d_model == 0 || d_model % heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) +
                      " must be a positive multiple of heads " +
                      std::to_string(heads));
  }
  switch (variant) {
    case AttentionVariant::kFull:
      break;
    case AttentionVariant::kLongformer:
      if (window % 2 == 0) {
        throw ConfigError("longformer window must be odd, got " +
                          std::to_string(window));
      }
      break;
    case AttentionVariant::kLinformer:
      if (proj_len == 0 || proj_len > max_len) {
        throw ConfigError("linformer projected length " +
                          std::to_string(proj_len) + " must be in [1, " +
                          std::to_string(max_len) + "]");
      }
      break;
    case AttentionVariant::kReformer:
      if (n_buckets < 2 || (n_buckets & (n_buckets - 1)) != 0) {
        throw ConfigError("reformer bucket count must be a power of two >= 2, got " +
                          std::to_string(n_buckets));
      }
      if (n_rounds == 0 || bucket_chunk == 0) {
        throw ConfigError("reformer rounds and chunk size must be positive");
      }
      break;
  }
}

std::vector<Var> AttentionWeights::parameters() const {
  std::vector<Var> p = {w_q, w_k, w_v, w_o};
  if (!proj_k.value().empty()) {
    p.push_back(proj_k);
    p.push_back(proj_v);
  }
  return p;
}

NdArray init_uniform(const Shape& shape, std::size_t fan_in,
                     std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  NdArray a(shape);
  for (double& v : a.data()) v = dist(rng);
  return a;
}

AttentionWeights make_attention_weights(const AttentionSpec& spec,
                                        std::size_t features,
                                        std::mt19937_64& rng) {
  spec.validate();
  AttentionWeights w;
  w.w_q = Var(init_uniform({spec.d_model, features}, features, rng), true);
  w.w_k = Var(init_uniform({spec.d_model, features}, features, rng), true);
  w.w_v = Var(init_uniform({spec.d_model, features}, features, rng), true);
  w.w_o = Var(init_uniform({features, spec.d_model}, spec.d_model, rng), true);
  if (spec.variant == AttentionVariant::kLinformer) {
    w.proj_k = Var(init_uniform({spec.max_len, spec.proj_len}, spec.max_len, rng),
                   true);
    w.proj_v = Var(init_uniform({spec.max_len, spec.proj_len}, spec.max_len, rng),
                   true);
  }
  return w;
}

NdArray positional_encoding(std::size_t length, std::size_t d_model) {
  NdArray pe({length, d_model});
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t c = 0; c < d_model; ++c) {
      const std::size_t two_i = c - c % 2;
      const double rate = std::pow(10000.0, static_cast<double>(two_i) /
                                                static_cast<double>(d_model));
      const double angle = static_cast<double>(t) / rate;
      pe(t, c) = c % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

namespace {

NdArray transposed(const NdArray& a) {
  NdArray t({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

}  // namespace

SparseAttentionResult sparse_attention(const Var& q, const Var& k,
                                       const Var& v,
                                       const NeighborLists& neighbors,
                                       double scale, AttentionProbe* probe) {
  const std::size_t dk = q.value().rows(), t_len = q.value().cols();
  if (k.shape() != q.shape() || v.value().cols() != t_len ||
      neighbors.size() != t_len) {
    throw DimensionError("sparse_attention: q " + shape_string(q.shape()) +
                         ", k " + shape_string(k.shape()) + ", v " +
                         shape_string(v.shape()) + " with " +
                         std::to_string(neighbors.size()) + " neighbor lists");
  }
  const std::size_t dv = v.value().rows();
  // Time-major copies keep each position's vector contiguous.
  const NdArray qt = transposed(q.value());
  const NdArray kt = transposed(k.value());
  const NdArray vt = transposed(v.value());

  std::vector<std::size_t, CountingAllocator<std::size_t>> offsets(t_len + 1, 0);
  for (std::size_t t = 0; t < t_len; ++t) {
    if (neighbors[t].empty()) {
      throw DimensionError("sparse_attention: position " + std::to_string(t) +
                           " attends to nothing");
    }
    offsets[t + 1] = offsets[t] + neighbors[t].size();
  }
  Buffer probs(offsets.back());
  NdArray out_t({t_len, dv});
  NdArray lse({t_len});
  std::uint64_t pairs = 0;
  for (std::size_t t = 0; t < t_len; ++t) {
    const double* qv = qt.ptr() + t * dk;
    const auto& nb = neighbors[t];
    double* p = probs.data() + offsets[t];
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < nb.size(); ++j) {
      const double* kv = kt.ptr() + nb[j] * dk;
      double s = 0.0;
      for (std::size_t c = 0; c < dk; ++c) s += qv[c] * kv[c];
      p[j] = s * scale;
      mx = std::max(mx, p[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < nb.size(); ++j) {
      p[j] = std::exp(p[j] - mx);
      z += p[j];
    }
    double* o = out_t.ptr() + t * dv;
    for (std::size_t j = 0; j < nb.size(); ++j) {
      p[j] /= z;
      const double* vv = vt.ptr() + nb[j] * dv;
      for (std::size_t c = 0; c < dv; ++c) o[c] += p[j] * vv[c];
    }
    lse[t] = mx + std::log(z);
    pairs += nb.size();
  }
  add_macs(pairs * (dk + dv));

  if (probe != nullptr) {
    NdArray map({t_len, t_len});
    for (std::size_t t = 0; t < t_len; ++t)
      for (std::size_t j = 0; j < neighbors[t].size(); ++j)
        map(t, neighbors[t][j]) = probs[offsets[t] + j];
    probe->maps.push_back(std::move(map));
  }

  SparseAttentionResult result{Var(transposed(out_t)), Var(std::move(lse))};
  Var& out = result.out;
  Tape* tape = tape_for(out, {&q, &k, &v});
  if (tape != nullptr) {
    result.lse.node()->requires_grad = true;
    tape->record([qn = q.node(), kn = k.node(), vn = v.node(),
                  on = out.node(), ln = result.lse.node(), neighbors,
                  probs = std::move(probs), offsets = std::move(offsets),
                  out_t = std::move(out_t), dk, dv, t_len, scale] {
      if (on->grad.empty() && ln->grad.empty()) return;
      const NdArray d_out = on->grad.empty() ? NdArray({dv, t_len})
                                             : transposed(on->grad);
      const NdArray qt = transposed(qn->value);
      const NdArray kt = transposed(kn->value);
      const NdArray vt = transposed(vn->value);
      NdArray dq({t_len, dk}), dkk({t_len, dk}), dvv({t_len, dv});
      std::vector<double> ds;
      for (std::size_t t = 0; t < t_len; ++t) {
        const auto& nb = neighbors[t];
        const double* p = probs.data() + offsets[t];
        const double* go = d_out.ptr() + t * dv;
        const double* o = out_t.ptr() + t * dv;
        const double dl = ln->grad.empty() ? 0.0 : ln->grad[t];
        double go_dot_o = 0.0;
        for (std::size_t c = 0; c < dv; ++c) go_dot_o += go[c] * o[c];
        ds.assign(nb.size(), 0.0);
        for (std::size_t j = 0; j < nb.size(); ++j) {
          const double* vv = vt.ptr() + nb[j] * dv;
          double dp = 0.0;
          for (std::size_t c = 0; c < dv; ++c) dp += go[c] * vv[c];
          ds[j] = p[j] * (dp - go_dot_o + dl) * scale;
          double* gv = dvv.ptr() + nb[j] * dv;
          for (std::size_t c = 0; c < dv; ++c) gv[c] += p[j] * go[c];
        }
        const double* qv = qt.ptr() + t * dk;
        double* gq = dq.ptr() + t * dk;
        for (std::size_t j = 0; j < nb.size(); ++j) {
          const double* kv = kt.ptr() + nb[j] * dk;
          double* gk = dkk.ptr() + nb[j] * dk;
          for (std::size_t c = 0; c < dk; ++c) {
            gq[c] += ds[j] * kv[c];
            gk[c] += ds[j] * qv[c];
          }
        }
      }
      auto accumulate = [](Node& n, const NdArray& g_time_major) {
        if (!n.requires_grad) return;
        NdArray& g = n.grad_buffer();
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j)
            g(i, j) += g_time_major(j, i);
      };
      accumulate(*qn, dq);
      accumulate(*kn, dkk);
      accumulate(*vn, dvv);
    });
  }
  return result;
}

NeighborLists longformer_neighbors(std::size_t length, std::size_t window,
                                   std::size_t global_stride) {
  const std::size_t radius = (window - 1) / 2;
  std::vector<bool> is_global(length, false);
  std::vector<std::uint32_t> globals;
  if (global_stride > 0) {
    for (std::size_t g = 0; g < length; g += global_stride) {
      is_global[g] = true;
      globals.push_back(static_cast<std::uint32_t>(g));
    }
  }
  NeighborLists lists(length);
  for (std::size_t t = 0; t < length; ++t) {
    auto& nb = lists[t];
    if (is_global[t]) {
      nb.resize(length);
      std::iota(nb.begin(), nb.end(), 0u);
      continue;
    }
    const std::size_t lo = t >= radius ? t - radius : 0;
    const std::size_t hi = std::min(length - 1, t + radius);
    auto g = globals.begin();
    for (; g != globals.end() && *g < lo; ++g) nb.push_back(*g);
    for (std::size_t s = lo; s <= hi; ++s) nb.push_back(static_cast<std::uint32_t>(s));
    for (; g != globals.end(); ++g)
      if (*g > hi) nb.push_back(*g);
  }
  return lists;
}

std::vector<std::uint32_t> lsh_buckets(const NdArray& x, std::size_t n_buckets,
                                       std::uint64_t seed) {
  const std::size_t dim = x.rows(), len = x.cols(), half = n_buckets / 2;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  NdArray rot({dim, half});
  for (double& r : rot.data()) r = normal(rng);
  // [half x T] projections; counted as attention work.
  const NdArray proj = ops::matmul_tn(Var(rot), Var(x)).value();
  std::vector<std::uint32_t> buckets(len);
  for (std::size_t t = 0; t < len; ++t) {
    double best = -std::numeric_limits<double>::infinity();
    std::uint32_t arg = 0;
    for (std::size_t b = 0; b < half; ++b) {
      const double p = proj(b, t);
      if (p > best) {
        best = p;
        arg = static_cast<std::uint32_t>(b);
      }
      if (-p > best) {
        best = -p;
        arg = static_cast<std::uint32_t>(b + half);
      }
    }
    buckets[t] = arg;
  }
  return buckets;
}

NeighborLists reformer_neighbors(const std::vector<std::uint32_t>& buckets,
                                 std::size_t bucket_chunk) {
  const std::size_t len = buckets.size();
  std::vector<std::uint32_t> order(len);
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) {
                     return buckets[a] < buckets[b];
                   });
  NeighborLists lists(len);
  for (std::size_t i = 0; i < len; ++i) {
    const std::size_t chunk = i / bucket_chunk;
    const std::size_t lo = chunk > 0 ? (chunk - 1) * bucket_chunk : 0;
    const std::size_t hi = std::min(len, (chunk + 1) * bucket_chunk);
    auto& nb = lists[order[i]];
    for (std::size_t j = lo; j < hi; ++j)
      if (j != i) nb.push_back(order[j]);
    if (nb.empty()) nb.push_back(order[i]);
  }
  return lists;
}

Var full_head(const Var& q, const Var& k, const Var& v, AttentionProbe* probe) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.value().rows()));
  Var scores = ops::scale(ops::matmul_tn(q, k), scale);
  Var attn = ops::softmax_rows(scores);
  if (probe != nullptr) probe->maps.push_back(attn.value());
  return ops::matmul_nt(v, attn);
}

Var longformer_head(const Var& q, const Var& k, const Var& v,
                    const AttentionSpec& spec, AttentionProbe* probe) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.value().rows()));
  const NeighborLists nb =
      longformer_neighbors(q.value().cols(), spec.window, spec.global_stride);
  return sparse_attention(q, k, v, nb, scale, probe).out;
}

Var linformer_head(const Var& q, const Var& k, const Var& v, const Var& proj_k,
                   const Var& proj_v, const AttentionSpec& spec,
                   AttentionProbe* probe) {
  const std::size_t len = q.value().cols();
  if (len > spec.max_len) {
    throw SequenceTooLongError("linformer: sequence length " +
                               std::to_string(len) + " exceeds max_len " +
                               std::to_string(spec.max_len));
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.value().rows()));
  Var pk = len == proj_k.value().rows() ? proj_k : ops::slice_rows(proj_k, 0, len);
  Var pv = len == proj_v.value().rows() ? proj_v : ops::slice_rows(proj_v, 0, len);
  Var kp = ops::matmul(k, pk);  // [d_k x proj_len]
  Var vp = ops::matmul(v, pv);
  Var attn = ops::softmax_rows(ops::scale(ops::matmul_tn(q, kp), scale));
  if (probe != nullptr) probe->maps.push_back(attn.value());
  return ops::matmul_nt(vp, attn);
}

Var reformer_head(const Var& q, const Var& v, const AttentionSpec& spec,
                  std::size_t head, AttentionProbe* probe) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.value().rows()));
  Var keys = ops::normalize_columns(q);
  std::vector<Var> outs, lses;
  for (std::size_t r = 0; r < spec.n_rounds; ++r) {
    std::seed_seq seq{spec.seed, static_cast<std::uint64_t>(head),
                      static_cast<std::uint64_t>(r)};
    std::uint64_t round_seed = 0;
    seq.generate(reinterpret_cast<std::uint32_t*>(&round_seed),
                 reinterpret_cast<std::uint32_t*>(&round_seed) + 2);
    const auto buckets = lsh_buckets(keys.value(), spec.n_buckets, round_seed);
    const NeighborLists nb = reformer_neighbors(buckets, spec.bucket_chunk);
    SparseAttentionResult res = sparse_attention(q, keys, v, nb, scale, probe);
    outs.push_back(res.out);
    lses.push_back(ops::reshape(res.lse, {1, q.value().cols()}));
  }
  if (outs.size() == 1) return outs.front();
  // Each round weighted by its share of the total softmax mass.
  Var weights = ops::transpose(
      ops::softmax_rows(ops::transpose(ops::concat_rows(lses))));
  Var acc = ops::scale_columns(outs[0], ops::slice_rows(weights, 0, 1));
  for (std::size_t r = 1; r < outs.size(); ++r)
    acc = ops::add(acc, ops::scale_columns(outs[r], ops::slice_rows(weights, r, 1)));
  return acc;
}

Var multi_head_attention(const Var& x, const AttentionWeights& w,
                         const AttentionSpec& spec, AttentionProbe* probe) {
  spec.validate();
  if (x.value().rank() != 2 || x.value().rows() != w.w_q.value().cols()) {
    throw DimensionError("attention: input " + shape_string(x.shape()) +
                         " does not match W_Q " + shape_string(w.w_q.shape()));
  }
  const bool reformer = spec.variant == AttentionVariant::kReformer;
  Var q = ops::matmul(w.w_q, x);
  Var k = reformer ? Var() : ops::matmul(w.w_k, x);
  Var v = ops::matmul(w.w_v, x);
  const std::size_t dk = spec.head_dim();
  std::vector<Var> heads;
  heads.reserve(spec.heads);
  {
    MacCategoryScope attention_macs(MacCategory::kAttention);
    for (std::size_t h = 0; h < spec.heads; ++h) {
      Var qh = ops::slice_rows(q, h * dk, dk);
      Var vh = ops::slice_rows(v, h * dk, dk);
      switch (spec.variant) {
        case AttentionVariant::kFull:
          heads.push_back(full_head(qh, ops::slice_rows(k, h * dk, dk), vh, probe));
          break;
        case AttentionVariant::kLongformer:
          heads.push_back(longformer_head(qh, ops::slice_rows(k, h * dk, dk), vh,
                                          spec, probe));
          break;
        case AttentionVariant::kLinformer:
          heads.push_back(linformer_head(qh, ops::slice_rows(k, h * dk, dk), vh,
                                         w.proj_k, w.proj_v, spec, probe));
          break;
        case AttentionVariant::kReformer:
          heads.push_back(reformer_head(qh, vh, spec, h, probe));
          break;
      }
    }
  }
  Var concat = heads.size() == 1 ? heads.front() : ops::concat_rows(heads);
  return ops::matmul(w.w_o, concat);
}

namespace {

Var with_variant(const Var& x, const AttentionWeights& w, AttentionSpec spec,
                 AttentionVariant variant, AttentionProbe* probe) {
  spec.variant = variant;
  return multi_head_attention(x, w, spec, probe);
}

}  // namespace

Var full_attention(const Var& x, const AttentionWeights& w, AttentionSpec spec,
                   AttentionProbe* probe) {
  return with_variant(x, w, spec, AttentionVariant::kFull, probe);
}

Var longformer_attention(const Var& x, const AttentionWeights& w,
                         AttentionSpec spec, AttentionProbe* probe) {
  return with_variant(x, w, spec, AttentionVariant::kLongformer, probe);
}

Var linformer_attention(const Var& x, const AttentionWeights& w,
                        AttentionSpec spec, AttentionProbe* probe) {
  if (w.proj_k.value().empty()) {
    throw ConfigError("linformer attention needs projection weights");
  }
  return with_variant(x, w, spec, AttentionVariant::kLinformer, probe);
}

Var reformer_attention(const Var& x, const AttentionWeights& w,
                       AttentionSpec spec, AttentionProbe* probe) {
  return with_variant(x, w, spec, AttentionVariant::kReformer, probe);
}

}  // namespace sepformer
