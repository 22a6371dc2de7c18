#include "sepformer/dualpath.hpp"

#include <string>

#include "sepformer/errors.hpp"
#include "sepformer/ops.hpp"

namespace sepformer {

std::size_t ChunkGeometry::coverage(std::size_t t) const {
  // Frames k with k*hop <= t < k*hop + chunk.
  const std::size_t last = std::min(t / hop, n_chunks - 1);
  const std::size_t first = t < chunk ? 0 : (t - chunk) / hop + 1;
  return last - first + 1;
}

ChunkGeometry make_chunk_geometry(std::size_t length, std::size_t chunk) {
  if (chunk < 2 || chunk % 2 != 0)
    throw ConfigError("invalid chunk size " + std::to_string(chunk) +
                      ": must be even and at least 2");
  if (length == 0) throw DimensionError("cannot chunk an empty sequence");
  ChunkGeometry g;
  g.length = length;
  g.chunk = chunk;
  g.hop = chunk / 2;
  g.padded = chunk;
  if (length > chunk) g.padded += (length - chunk + g.hop - 1) / g.hop * g.hop;
  g.n_chunks = 1 + (g.padded - chunk) / g.hop;
  return g;
}

Var chunk(const Var& h, const ChunkGeometry& g) {
  const NdArray& hv = h.value();
  if (hv.rank() != 2 || hv.cols() != g.length)
    throw DimensionError("chunk: expected [F x " + std::to_string(g.length) +
                         "], got " + shape_string(hv.shape()));
  const std::size_t f = hv.rows();
  NdArray y({f, g.chunk, g.n_chunks});
  for (std::size_t i = 0; i < f; ++i)
    for (std::size_t k = 0; k < g.n_chunks; ++k)
      for (std::size_t c = 0; c < g.chunk; ++c) {
        const std::size_t t = k * g.hop + c;
        if (t < g.length) y(i, c, k) = hv(i, t);
      }
  Var out(std::move(y));
  if (Tape* tape = tape_for(out, {&h})) {
    tape->record([hn = h.node(), on = out.node(), g, f] {
      if (on->grad.empty()) return;
      NdArray& gh = hn->grad_buffer();
      for (std::size_t i = 0; i < f; ++i)
        for (std::size_t k = 0; k < g.n_chunks; ++k)
          for (std::size_t c = 0; c < g.chunk; ++c) {
            const std::size_t t = k * g.hop + c;
            if (t < g.length) gh(i, t) += on->grad(i, c, k);
          }
    });
  }
  return out;
}

Var overlap_add(const Var& x, const ChunkGeometry& g) {
  const NdArray& xv = x.value();
  if (xv.rank() != 3 || xv.dim(1) != g.chunk || xv.dim(2) != g.n_chunks)
    throw DimensionError("overlap_add: expected [F x " + std::to_string(g.chunk) +
                         " x " + std::to_string(g.n_chunks) + "], got " +
                         shape_string(xv.shape()));
  const std::size_t f = xv.dim(0);
  std::vector<double> inv(g.length);
  for (std::size_t t = 0; t < g.length; ++t)
    inv[t] = 1.0 / static_cast<double>(g.coverage(t));
  NdArray y({f, g.length});
  for (std::size_t i = 0; i < f; ++i)
    for (std::size_t k = 0; k < g.n_chunks; ++k)
      for (std::size_t c = 0; c < g.chunk; ++c) {
        const std::size_t t = k * g.hop + c;
        if (t < g.length) y(i, t) += xv(i, c, k);
      }
  for (std::size_t i = 0; i < f; ++i)
    for (std::size_t t = 0; t < g.length; ++t) y(i, t) *= inv[t];
  Var out(std::move(y));
  if (Tape* tape = tape_for(out, {&x})) {
    tape->record([xn = x.node(), on = out.node(), g, f, inv] {
      if (on->grad.empty()) return;
      NdArray& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < f; ++i)
        for (std::size_t k = 0; k < g.n_chunks; ++k)
          for (std::size_t c = 0; c < g.chunk; ++c) {
            const std::size_t t = k * g.hop + c;
            if (t < g.length) gx(i, c, k) += on->grad(i, t) * inv[t];
          }
    });
  }
  return out;
}

NamedParameters SepformerBlockParams::named_parameters() const {
  NamedParameters out;
  for (std::size_t r = 0; r < repeats.size(); ++r) {
    const std::string base = "block" + std::to_string(r) + ".";
    append_named(out, base + "intra.", repeats[r].intra.named_parameters());
    append_named(out, base + "inter.", repeats[r].inter.named_parameters());
  }
  return out;
}

SepformerBlockParams make_sepformer_block(const AttentionSpec& intra_spec,
                                          const AttentionSpec& inter_spec,
                                          std::size_t features,
                                          std::size_t d_ff, std::size_t repeats,
                                          std::size_t intra_layers,
                                          std::size_t inter_layers,
                                          std::mt19937_64& rng) {
  if (repeats == 0) throw ConfigError("N must be at least 1");
  SepformerBlockParams p;
  for (std::size_t r = 0; r < repeats; ++r) {
    DualPathRepeat rep;
    rep.intra = make_transformer_stack(intra_spec, features, d_ff, intra_layers, rng);
    // Zero inter layers leaves an intra-only block.
    if (inter_layers > 0)
      rep.inter = make_transformer_stack(inter_spec, features, d_ff, inter_layers, rng);
    p.repeats.push_back(std::move(rep));
  }
  return p;
}

Var intra_pass(const Var& x, const TransformerStackParams& p,
               const AttentionSpec& spec) {
  const std::size_t n = x.shape()[2];
  std::vector<Var> parts;
  parts.reserve(n);
  for (std::size_t k = 0; k < n; ++k)
    parts.push_back(transformer_stack(ops::select(x, 2, k), p, spec));
  return ops::stack(parts, 2);
}

Var inter_pass(const Var& x, const TransformerStackParams& p,
               const AttentionSpec& spec) {
  const std::size_t c = x.shape()[1];
  std::vector<Var> parts;
  parts.reserve(c);
  for (std::size_t j = 0; j < c; ++j)
    parts.push_back(transformer_stack(ops::select(x, 1, j), p, spec));
  return ops::stack(parts, 1);
}

Var sepformer_block(const Var& x, const SepformerBlockParams& p,
                    const AttentionSpec& intra_spec,
                    const AttentionSpec& inter_spec) {
  Var h = x;
  for (const auto& rep : p.repeats) {
    h = intra_pass(h, rep.intra, intra_spec);
    if (!rep.inter.layers.empty()) h = inter_pass(h, rep.inter, inter_spec);
  }
  return h;
}

}  // namespace sepformer
