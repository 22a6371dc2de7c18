#pragma once

// Forward ops over Var with reverse-mode rules. Every op is a pure function
// of its inputs; when a Tape is active and an input requires a gradient,
// the op records its backward closure on that tape.
//
// Layout convention: feature maps are rank-2 [features x time]. Only the
// contractions (matmul family and the two convolutions) report MACs.

#include <cstddef>
#include <vector>

#include "sepformer/autodiff.hpp"

namespace sepformer::ops {

// [M x K] . [K x N] -> [M x N]
Var matmul(const Var& a, const Var& b);
// Forward-only product of plain arrays through the same counted kernel.
NdArray matmul_values(const NdArray& a, const NdArray& b);
// a^T . b for a: [K x M], b: [K x N] -> [M x N]
Var matmul_tn(const Var& a, const Var& b);
// a . b^T for a: [M x K], b: [N x K] -> [M x N]
Var matmul_nt(const Var& a, const Var& b);
Var transpose(const Var& a);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var sum(const Var& a);

// x: [R x C], bias: [R]
Var add_bias(const Var& x, const Var& bias);
// w: [out x in], x: [in x T], bias: [out] or a default-constructed Var
Var linear(const Var& w, const Var& x, const Var& bias);

Var relu(const Var& x);
// Reuses the buffer of a sole-owner temporary when nothing is recording.
Var relu(Var&& x);
// x: [R x C]; slope: [R], one learned slope per feature row.
Var prelu(const Var& x, const Var& slope);

// Row-wise softmax with max subtraction.
Var softmax_rows(const Var& x);

// Normalises each column of x: [F x T] over its F entries, then applies
// per-feature gain and bias.
Var layer_norm(const Var& x, const Var& gain, const Var& bias,
               double eps = 1e-5);

// Valid 1-D convolution. x: [T], filters: [F x 1 x Kw] -> [F x T'] with
// T' = floor((T - Kw) / stride) + 1.
Var conv1d(const Var& x, const Var& filters, std::size_t stride);
// Adjoint of conv1d. x: [F x T'] -> [(T' - 1) * stride + Kw]
Var conv1d_transpose(const Var& x, const Var& filters, std::size_t stride);

Var reshape(const Var& a, Shape shape);
Var slice_rows(const Var& a, std::size_t start, std::size_t count);
Var concat_rows(const std::vector<Var>& parts);

// Unit-length columns (norm floored at 1e-12).
Var normalize_columns(const Var& a);
// a: [R x C], w: [1 x C] -> a[r, c] * w[c]
Var scale_columns(const Var& a, const Var& w);

// Rank-3 [F x C x N] helpers: axis 1 fixes an index along C, axis 2 along N.
Var select(const Var& a, std::size_t axis, std::size_t index);
Var stack(const std::vector<Var>& parts, std::size_t axis);

// Rank-1 zero pad or truncate to `length`.
Var pad_or_trim(const Var& a, std::size_t length);

}  // namespace sepformer::ops
