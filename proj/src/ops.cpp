#include "sepformer/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sepformer/errors.hpp"

namespace sepformer::ops {
namespace {

void require_rank(const Var& a, std::size_t rank, const char* op) {
  if (a.value().rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " +
                         std::to_string(rank) + ", got shape " +
                         shape_string(a.shape()));
  }
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

// c[M x N] += a[M x K] . b[K x N]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = ai[p];
      if (s == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += s * bp[j];
    }
  }
}

// c[M x N] += a[K x M]^T . b[K x N]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double s = ap[i];
      if (s == 0.0) continue;
      double* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += s * bp[j];
    }
  }
}

// c[M x N] += a[M x K] . b[N x K]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.value().rows(), k = a.value().cols(),
                    n = b.value().cols();
  if (b.value().rows() != k) {
    throw DimensionError("matmul: inner dimensions differ for " +
                         shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  NdArray c({m, n});
  gemm_nn(a.value().ptr(), b.value().ptr(), c.ptr(), m, k, n);
  add_macs(static_cast<std::uint64_t>(m) * k * n);
  Var out(std::move(c));
  if (Tape* tape = tape_for(out, {&a, &b})) {
    tape->record([an = a.node(), bn = b.node(), on = out.node(), m, k, n] {
      if (on->grad.empty()) return;
      const double* dc = on->grad.ptr();
      if (an->requires_grad)
        gemm_nt(dc, bn->value.ptr(), an->grad_buffer().ptr(), m, n, k);
      if (bn->requires_grad)
        gemm_tn(an->value.ptr(), dc, bn->grad_buffer().ptr(), k, m, n);
    });
  }
  return out;
}

NdArray matmul_values(const NdArray& a, const NdArray& b) {
  if (a.rank() != 2 || b.rank() != 2 || b.rows() != a.cols()) {
    throw DimensionError("matmul_values: cannot multiply " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  NdArray c({m, n});
  gemm_nn(a.ptr(), b.ptr(), c.ptr(), m, k, n);
  add_macs(static_cast<std::uint64_t>(m) * k * n);
  return c;
}

Var matmul_tn(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul_tn");
  require_rank(b, 2, "matmul_tn");
  const std::size_t k = a.value().rows(), m = a.value().cols(),
                    n = b.value().cols();
  if (b.value().rows() != k) {
    throw DimensionError("matmul_tn: inner dimensions differ for " +
                         shape_string(a.shape()) + "^T x " +
                         shape_string(b.shape()));
  }
  NdArray c({m, n});
  gemm_tn(a.value().ptr(), b.value().ptr(), c.ptr(), m, k, n);
  add_macs(static_cast<std::uint64_t>(m) * k * n);
  Var out(std::move(c));
  if (Tape* tape = tape_for(out, {&a, &b})) {
    tape->record([an = a.node(), bn = b.node(), on = out.node(), m, k, n] {
      if (on->grad.empty()) return;
      const double* dc = on->grad.ptr();
      // dA[K x M] = B . dC^T ; dB[K x N] = A . dC
      if (an->requires_grad)
        gemm_nt(bn->value.ptr(), dc, an->grad_buffer().ptr(), k, n, m);
      if (bn->requires_grad)
        gemm_nn(an->value.ptr(), dc, bn->grad_buffer().ptr(), k, m, n);
    });
  }
  return out;
}

Var matmul_nt(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  const std::size_t m = a.value().rows(), k = a.value().cols(),
                    n = b.value().rows();
  if (b.value().cols() != k) {
    throw DimensionError("matmul_nt: inner dimensions differ for " +
                         shape_string(a.shape()) + " x " +
                         shape_string(b.shape()) + "^T");
  }
  NdArray c({m, n});
  gemm_nt(a.value().ptr(), b.value().ptr(), c.ptr(), m, k, n);
  add_macs(static_cast<std::uint64_t>(m) * k * n);
  Var out(std::move(c));
  if (Tape* tape = tape_for(out, {&a, &b})) {
    tape->record([an = a.node(), bn = b.node(), on = out.node(), m, k, n] {
      if (on->grad.empty()) return;
      const double* dc = on->grad.ptr();
      // dA[M x K] = dC . B ; dB[N x K] = dC^T . A
      if (an->requires_grad)
        gemm_nn(dc, bn->value.ptr(), an->grad_buffer().ptr(), m, n, k);
      if (bn->requires_grad)
        gemm_tn(dc, an->value.ptr(), bn->grad_buffer().ptr(), n, m, k);
    });
  }
  return out;
}

Var transpose(const Var& a) {
  require_rank(a, 2, "transpose");
  const std::size_t r = a.value().rows(), c = a.value().cols();
  NdArray t({c, r});
  const NdArray& av = a.value();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) t(j, i) = av(i, j);
  Var out(std::move(t));
  if (Tape* tape = tape_for(out, {&a})) {
    tape->record([an = a.node(), on = out.node(), r, c] {
      if (on->grad.empty()) return;
      NdArray& ga = an->grad_buffer();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga(i, j) += on->grad(j, i);
    });
  }
  return out;
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  NdArray c = a.value();
  const double* bp = b.value().ptr();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += bp[i];
  Var out(std::move(c));
  if (Tape* tape = tape_for(out, {&a, &b})) {
    tape->record([an = a.node(), bn = b.node(), on = out.node()] {
      if (on->grad.empty()) return;
      for (Node* n : {an.get(), bn.get()}) {
        if (!n->requires_grad) continue;
        NdArray& g = n->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i];
      }
    });
  }
  return out;
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  NdArray c = a.value();
  const double* bp = b.value().ptr();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] -= bp[i];
  Var out(std::move(c));
  if (Tape* tape = tape_for(out, {&a, &b})) {
    tape->record([an = a.node(), bn = b.node(), on = out.node()] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        NdArray& g = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        NdArray& g = bn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= on->grad[i];
      }
    });
  }
  return out;
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  NdArray c = a.value();
  const double* bp = b.value().ptr();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= bp[i];
  Var out(std::move(c));
  if (Tape* tape = tape_for(out, {&a, &b})) {
    tape->record([an = a.node(), bn = b.node(), on = out.node()] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        NdArray& g = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i)
          g[i] += on->grad[i] * bn->value[i];
      }
      if (bn->requires_grad) {
        NdArray& g = bn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i)
          g[i] += on->grad[i] * an->value[i];
      }
    });
  }
  return out;
}

Var scale(const Var& a, double factor) {
  NdArray c = a.value();
  for (double& v : c.data()) v *= factor;
  Var out(std::move(c));
  if (Tape* tape = tape_for(out, {&a})) {
    tape->record([an = a.node(), on = out.node(), factor] {
      if (on->grad.empty()) return;
      NdArray& g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * on->grad[i];
    });
  }
  return out;
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  Var out(NdArray({1}, {s}));
  if (Tape* tape = tape_for(out, {&a})) {
    tape->record([an = a.node(), on = out.node()] {
      if (on->grad.empty()) return;
      NdArray& g = an->grad_buffer();
      for (double& v : g.data()) v += on->grad[0];
    });
  }
  return out;
}

Var add_bias(const Var& x, const Var& bias) {
  require_rank(x, 2, "add_bias");
  const std::size_t r = x.value().rows(), c = x.value().cols();
  if (bias.value().size() != r) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) +
                         " does not match rows of " + shape_string(x.shape()));
  }
  NdArray y = x.value();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y(i, j) += bias.value()[i];
  Var out(std::move(y));
  if (Tape* tape = tape_for(out, {&x, &bias})) {
    tape->record([xn = x.node(), bn = bias.node(), on = out.node(), r, c] {
      if (on->grad.empty()) return;
      if (xn->requires_grad) {
        NdArray& g = xn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        NdArray& g = bn->grad_buffer();
        for (std::size_t i = 0; i < r; ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < c; ++j) s += on->grad(i, j);
          g[i] += s;
        }
      }
    });
  }
  return out;
}

Var linear(const Var& w, const Var& x, const Var& bias) {
  if (bias.value().empty()) return matmul(w, x);
  require_rank(w, 2, "linear");
  require_rank(x, 2, "linear");
  const std::size_t m = w.value().rows(), k = w.value().cols(), n = x.value().cols();
  if (x.value().rows() != k) {
    throw DimensionError("linear: inner dimensions differ for " + shape_string(w.shape()) +
                         " x " + shape_string(x.shape()));
  }
  if (bias.value().size() != m) {
    throw DimensionError("linear: bias " + shape_string(bias.shape()) +
                         " does not match rows of " + shape_string(w.shape()));
  }
  // Fused: the bias seeds the output buffer and the product accumulates
  // into it, so no separate pre-bias array is allocated.
  NdArray y({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y(i, j) = bias.value()[i];
  gemm_nn(w.value().ptr(), x.value().ptr(), y.ptr(), m, k, n);
  add_macs(static_cast<std::uint64_t>(m) * k * n);
  Var out(std::move(y));
  if (Tape* tape = tape_for(out, {&w, &x, &bias})) {
    tape->record([wn = w.node(), xn = x.node(), bn = bias.node(), on = out.node(), m, k, n] {
      if (on->grad.empty()) return;
      const double* dy = on->grad.ptr();
      if (wn->requires_grad) gemm_nt(dy, xn->value.ptr(), wn->grad_buffer().ptr(), m, n, k);
      if (xn->requires_grad) gemm_tn(wn->value.ptr(), dy, xn->grad_buffer().ptr(), k, m, n);
      if (bn->requires_grad) {
        NdArray& g = bn->grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += dy[i * n + j];
          g[i] += acc;
        }
      }
    });
  }
  return out;
}

Var relu(const Var& x) {
  NdArray y = x.value();
  for (double& v : y.data()) v = v < 0.0 ? 0.0 : v;  // NaN propagates
  Var out(std::move(y));
  if (Tape* tape = tape_for(out, {&x})) {
    tape->record([xn = x.node(), on = out.node()] {
      if (on->grad.empty()) return;
      NdArray& g = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xn->value[i] > 0.0) g[i] += on->grad[i];
    });
  }
  return out;
}

Var relu(Var&& x) {
  const bool recording = active_tape() != nullptr && x.requires_grad();
  if (recording || x.node().use_count() != 1) return relu(static_cast<const Var&>(x));
  for (double& v : x.mutable_value().data()) v = v < 0.0 ? 0.0 : v;
  return std::move(x);
}

Var prelu(const Var& x, const Var& slope) {
  require_rank(x, 2, "prelu");
  const std::size_t r = x.value().rows(), c = x.value().cols();
  if (slope.value().size() != r) {
    throw DimensionError("prelu: slope " + shape_string(slope.shape()) +
                         " does not match rows of " + shape_string(x.shape()));
  }
  NdArray y = x.value();
  for (std::size_t i = 0; i < r; ++i) {
    const double a = slope.value()[i];
    for (std::size_t j = 0; j < c; ++j)
      if (y(i, j) <= 0.0) y(i, j) *= a;
  }
  Var out(std::move(y));
  if (Tape* tape = tape_for(out, {&x, &slope})) {
    tape->record([xn = x.node(), sn = slope.node(), on = out.node(), r, c] {
      if (on->grad.empty()) return;
      const NdArray& xv = xn->value;
      const NdArray& dy = on->grad;
      if (xn->requires_grad) {
        NdArray& g = xn->grad_buffer();
        for (std::size_t i = 0; i < r; ++i) {
          const double a = sn->value[i];
          for (std::size_t j = 0; j < c; ++j)
            g(i, j) += xv(i, j) > 0.0 ? dy(i, j) : a * dy(i, j);
        }
      }
      if (sn->requires_grad) {
        NdArray& g = sn->grad_buffer();
        for (std::size_t i = 0; i < r; ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < c; ++j)
            if (xv(i, j) <= 0.0) s += dy(i, j) * xv(i, j);
          g[i] += s;
        }
      }
    });
  }
  return out;
}

Var softmax_rows(const Var& x) {
  require_rank(x, 2, "softmax_rows");
  const std::size_t r = x.value().rows(), c = x.value().cols();
  NdArray y = x.value();
  for (std::size_t i = 0; i < r; ++i) {
    double* row = y.ptr() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      row[j] = std::exp(row[j] - mx);
      z += row[j];
    }
    for (std::size_t j = 0; j < c; ++j) row[j] /= z;
  }
  Var out(std::move(y));
  if (Tape* tape = tape_for(out, {&x})) {
    tape->record([xn = x.node(), on = out.node(), r, c] {
      if (on->grad.empty()) return;
      NdArray& g = xn->grad_buffer();
      for (std::size_t i = 0; i < r; ++i) {
        const double* yr = on->value.ptr() + i * c;
        const double* dr = on->grad.ptr() + i * c;
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += yr[j] * dr[j];
        double* gr = g.ptr() + i * c;
        for (std::size_t j = 0; j < c; ++j) gr[j] += yr[j] * (dr[j] - dot);
      }
    });
  }
  return out;
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  require_rank(x, 2, "layer_norm");
  const std::size_t f = x.value().rows(), t = x.value().cols();
  if (gain.value().size() != f || bias.value().size() != f) {
    throw DimensionError("layer_norm: gain/bias must have " +
                         std::to_string(f) + " entries for input " +
                         shape_string(x.shape()));
  }
  NdArray xhat({f, t});
  std::vector<double> inv_std(t);
  const NdArray& xv = x.value();
  for (std::size_t j = 0; j < t; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < f; ++i) mean += xv(i, j);
    mean /= static_cast<double>(f);
    double var = 0.0;
    for (std::size_t i = 0; i < f; ++i) {
      const double d = xv(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(f);
    inv_std[j] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < f; ++i)
      xhat(i, j) = (xv(i, j) - mean) * inv_std[j];
  }
  NdArray y({f, t});
  for (std::size_t i = 0; i < f; ++i)
    for (std::size_t j = 0; j < t; ++j)
      y(i, j) = gain.value()[i] * xhat(i, j) + bias.value()[i];
  Var out(std::move(y));
  if (Tape* tape = tape_for(out, {&x, &gain, &bias})) {
    tape->record([xn = x.node(), gn = gain.node(), bn = bias.node(),
                  on = out.node(), xhat = std::move(xhat),
                  inv_std = std::move(inv_std), f, t] {
      if (on->grad.empty()) return;
      const NdArray& dy = on->grad;
      if (gn->requires_grad || bn->requires_grad) {
        for (std::size_t i = 0; i < f; ++i) {
          double sg = 0.0, sb = 0.0;
          for (std::size_t j = 0; j < t; ++j) {
            sg += dy(i, j) * xhat(i, j);
            sb += dy(i, j);
          }
          if (gn->requires_grad) gn->grad_buffer()[i] += sg;
          if (bn->requires_grad) bn->grad_buffer()[i] += sb;
        }
      }
      if (!xn->requires_grad) return;
      NdArray& g = xn->grad_buffer();
      const double nf = static_cast<double>(f);
      for (std::size_t j = 0; j < t; ++j) {
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t i = 0; i < f; ++i) {
          const double dxh = dy(i, j) * gn->value[i];
          s1 += dxh;
          s2 += dxh * xhat(i, j);
        }
        for (std::size_t i = 0; i < f; ++i) {
          const double dxh = dy(i, j) * gn->value[i];
          g(i, j) += inv_std[j] / nf * (nf * dxh - s1 - xhat(i, j) * s2);
        }
      }
    });
  }
  return out;
}

Var conv1d(const Var& x, const Var& filters, std::size_t stride) {
  require_rank(x, 1, "conv1d");
  require_rank(filters, 3, "conv1d");
  if (filters.value().dim(1) != 1) {
    throw DimensionError("conv1d: filters must be [F x 1 x Kw], got " +
                         shape_string(filters.shape()));
  }
  if (stride == 0) throw DimensionError("conv1d: stride must be positive");
  const std::size_t f = filters.value().dim(0), kw = filters.value().dim(2);
  const std::size_t t = x.value().size();
  if (t < kw) {
    throw InputTooShortError("conv1d: input of " + std::to_string(t) +
                             " samples is shorter than kernel " +
                             std::to_string(kw));
  }
  const std::size_t t_out = (t - kw) / stride + 1;
  NdArray y({f, t_out});
  const double* xp = x.value().ptr();
  const double* wp = filters.value().ptr();
  for (std::size_t i = 0; i < f; ++i) {
    const double* wi = wp + i * kw;
    for (std::size_t j = 0; j < t_out; ++j) {
      const double* xj = xp + j * stride;
      double acc = 0.0;
      for (std::size_t k = 0; k < kw; ++k) acc += wi[k] * xj[k];
      y(i, j) = acc;
    }
  }
  add_macs(static_cast<std::uint64_t>(f) * kw * t_out);
  Var out(std::move(y));
  if (Tape* tape = tape_for(out, {&x, &filters})) {
    tape->record([xn = x.node(), wn = filters.node(), on = out.node(), f, kw,
                  t_out, stride] {
      if (on->grad.empty()) return;
      const NdArray& dy = on->grad;
      if (wn->requires_grad) {
        double* gw = wn->grad_buffer().ptr();
        const double* xp = xn->value.ptr();
        for (std::size_t i = 0; i < f; ++i)
          for (std::size_t j = 0; j < t_out; ++j) {
            const double d = dy(i, j);
            for (std::size_t k = 0; k < kw; ++k)
              gw[i * kw + k] += d * xp[j * stride + k];
          }
      }
      if (xn->requires_grad) {
        double* gx = xn->grad_buffer().ptr();
        const double* wp = wn->value.ptr();
        for (std::size_t i = 0; i < f; ++i)
          for (std::size_t j = 0; j < t_out; ++j) {
            const double d = dy(i, j);
            for (std::size_t k = 0; k < kw; ++k)
              gx[j * stride + k] += d * wp[i * kw + k];
          }
      }
    });
  }
  return out;
}

Var conv1d_transpose(const Var& x, const Var& filters, std::size_t stride) {
  require_rank(x, 2, "conv1d_transpose");
  require_rank(filters, 3, "conv1d_transpose");
  if (stride == 0) {
    throw DimensionError("conv1d_transpose: stride must be positive");
  }
  const std::size_t f = filters.value().dim(0), kw = filters.value().dim(2);
  if (filters.value().dim(1) != 1 || x.value().rows() != f) {
    throw DimensionError("conv1d_transpose: input " + shape_string(x.shape()) +
                         " incompatible with filters " +
                         shape_string(filters.shape()));
  }
  const std::size_t t_in = x.value().cols();
  const std::size_t t_out = (t_in - 1) * stride + kw;
  NdArray y({t_out});
  const NdArray& xv = x.value();
  const double* wp = filters.value().ptr();
  for (std::size_t i = 0; i < f; ++i) {
    const double* wi = wp + i * kw;
    for (std::size_t j = 0; j < t_in; ++j) {
      const double v = xv(i, j);
      double* yj = y.ptr() + j * stride;
      for (std::size_t k = 0; k < kw; ++k) yj[k] += v * wi[k];
    }
  }
  add_macs(static_cast<std::uint64_t>(f) * kw * t_in);
  Var out(std::move(y));
  if (Tape* tape = tape_for(out, {&x, &filters})) {
    tape->record([xn = x.node(), wn = filters.node(), on = out.node(), f, kw,
                  t_in, stride] {
      if (on->grad.empty()) return;
      const double* dy = on->grad.ptr();
      if (xn->requires_grad) {
        NdArray& gx = xn->grad_buffer();
        const double* wp = wn->value.ptr();
        for (std::size_t i = 0; i < f; ++i)
          for (std::size_t j = 0; j < t_in; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < kw; ++k)
              acc += dy[j * stride + k] * wp[i * kw + k];
            gx(i, j) += acc;
          }
      }
      if (wn->requires_grad) {
        double* gw = wn->grad_buffer().ptr();
        const NdArray& xv = xn->value;
        for (std::size_t i = 0; i < f; ++i)
          for (std::size_t j = 0; j < t_in; ++j) {
            const double v = xv(i, j);
            for (std::size_t k = 0; k < kw; ++k)
              gw[i * kw + k] += v * dy[j * stride + k];
          }
      }
    });
  }
  return out;
}

Var reshape(const Var& a, Shape shape) {
  Var out(a.value().reshaped(std::move(shape)));
  if (Tape* tape = tape_for(out, {&a})) {
    tape->record([an = a.node(), on = out.node()] {
      if (on->grad.empty()) return;
      NdArray& g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i];
    });
  }
  return out;
}

Var slice_rows(const Var& a, std::size_t start, std::size_t count) {
  require_rank(a, 2, "slice_rows");
  const std::size_t c = a.value().cols();
  if (count == 0 || start + count > a.value().rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of range for " +
                         shape_string(a.shape()));
  }
  const double* src = a.value().ptr() + start * c;
  Var out(NdArray({count, c}, std::span<const double>(src, count * c)));
  if (Tape* tape = tape_for(out, {&a})) {
    tape->record([an = a.node(), on = out.node(), start, count, c] {
      if (on->grad.empty()) return;
      double* g = an->grad_buffer().ptr() + start * c;
      for (std::size_t i = 0; i < count * c; ++i) g[i] += on->grad[i];
    });
  }
  return out;
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t c = parts.front().value().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    require_rank(p, 2, "concat_rows");
    if (p.value().cols() != c) {
      throw DimensionError("concat_rows: column mismatch " +
                           shape_string(parts.front().shape()) + " vs " +
                           shape_string(p.shape()));
    }
    rows += p.value().rows();
  }
  NdArray y({rows, c});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(),
              y.ptr() + offset);
    offset += p.value().size();
  }
  Var out(std::move(y));
  if (Tape* tape = tape_for(out, parts)) {
    std::vector<std::shared_ptr<Node>> nodes;
    for (const Var& p : parts) nodes.push_back(p.node());
    tape->record([nodes = std::move(nodes), on = out.node()] {
      if (on->grad.empty()) return;
      std::size_t offset = 0;
      for (const auto& n : nodes) {
        if (n->requires_grad) {
          NdArray& g = n->grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i)
            g[i] += on->grad[offset + i];
        }
        offset += n->value.size();
      }
    });
  }
  return out;
}

Var normalize_columns(const Var& a) {
  require_rank(a, 2, "normalize_columns");
  const std::size_t r = a.value().rows(), c = a.value().cols();
  NdArray y = a.value();
  std::vector<double> norms(c);
  for (std::size_t j = 0; j < c; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < r; ++i) s += y(i, j) * y(i, j);
    norms[j] = std::max(std::sqrt(s), 1e-12);
    for (std::size_t i = 0; i < r; ++i) y(i, j) /= norms[j];
  }
  Var out(std::move(y));
  if (Tape* tape = tape_for(out, {&a})) {
    tape->record([an = a.node(), on = out.node(), norms = std::move(norms), r,
                  c] {
      if (on->grad.empty()) return;
      NdArray& g = an->grad_buffer();
      const NdArray& yv = on->value;
      const NdArray& dy = on->grad;
      for (std::size_t j = 0; j < c; ++j) {
        double dot = 0.0;
        for (std::size_t i = 0; i < r; ++i) dot += yv(i, j) * dy(i, j);
        for (std::size_t i = 0; i < r; ++i)
          g(i, j) += (dy(i, j) - yv(i, j) * dot) / norms[j];
      }
    });
  }
  return out;
}

Var scale_columns(const Var& a, const Var& w) {
  require_rank(a, 2, "scale_columns");
  const std::size_t r = a.value().rows(), c = a.value().cols();
  if (w.value().size() != c) {
    throw DimensionError("scale_columns: weights " + shape_string(w.shape()) +
                         " do not match columns of " +
                         shape_string(a.shape()));
  }
  NdArray y = a.value();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y(i, j) *= w.value()[j];
  Var out(std::move(y));
  if (Tape* tape = tape_for(out, {&a, &w})) {
    tape->record([an = a.node(), wn = w.node(), on = out.node(), r, c] {
      if (on->grad.empty()) return;
      const NdArray& dy = on->grad;
      if (an->requires_grad) {
        NdArray& g = an->grad_buffer();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) g(i, j) += dy(i, j) * wn->value[j];
      }
      if (wn->requires_grad) {
        NdArray& g = wn->grad_buffer();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j)
            g[j] += dy(i, j) * an->value(i, j);
      }
    });
  }
  return out;
}

Var select(const Var& a, std::size_t axis, std::size_t index) {
  require_rank(a, 3, "select");
  const std::size_t f = a.value().dim(0), c = a.value().dim(1),
                    n = a.value().dim(2);
  if ((axis != 1 && axis != 2) || index >= a.value().dim(axis)) {
    throw DimensionError("select: index " + std::to_string(index) +
                         " on axis " + std::to_string(axis) +
                         " out of range for " + shape_string(a.shape()));
  }
  const std::size_t cols = axis == 1 ? n : c;
  NdArray y({f, cols});
  const NdArray& av = a.value();
  for (std::size_t i = 0; i < f; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      y(i, j) = axis == 1 ? av(i, index, j) : av(i, j, index);
  Var out(std::move(y));
  if (Tape* tape = tape_for(out, {&a})) {
    tape->record([an = a.node(), on = out.node(), axis, index, f, cols] {
      if (on->grad.empty()) return;
      NdArray& g = an->grad_buffer();
      for (std::size_t i = 0; i < f; ++i)
        for (std::size_t j = 0; j < cols; ++j) {
          double& dst = axis == 1 ? g(i, index, j) : g(i, j, index);
          dst += on->grad(i, j);
        }
    });
  }
  return out;
}

Var stack(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("stack: no inputs");
  if (axis != 1 && axis != 2) {
    throw DimensionError("stack: axis must be 1 or 2");
  }
  const Shape& s0 = parts.front().shape();
  for (const Var& p : parts) {
    require_rank(p, 2, "stack");
    if (p.shape() != s0) {
      throw DimensionError("stack: shape mismatch " + shape_string(s0) +
                           " vs " + shape_string(p.shape()));
    }
  }
  const std::size_t f = s0[0], inner = s0[1], count = parts.size();
  const Shape shape =
      axis == 1 ? Shape{f, count, inner} : Shape{f, inner, count};
  NdArray y(shape);
  for (std::size_t p = 0; p < count; ++p) {
    const NdArray& pv = parts[p].value();
    for (std::size_t i = 0; i < f; ++i)
      for (std::size_t j = 0; j < inner; ++j) {
        if (axis == 1) {
          y(i, p, j) = pv(i, j);
        } else {
          y(i, j, p) = pv(i, j);
        }
      }
  }
  Var out(std::move(y));
  if (Tape* tape = tape_for(out, parts)) {
    std::vector<std::shared_ptr<Node>> nodes;
    for (const Var& p : parts) nodes.push_back(p.node());
    tape->record([nodes = std::move(nodes), on = out.node(), axis, f, inner] {
      if (on->grad.empty()) return;
      for (std::size_t p = 0; p < nodes.size(); ++p) {
        if (!nodes[p]->requires_grad) continue;
        NdArray& g = nodes[p]->grad_buffer();
        for (std::size_t i = 0; i < f; ++i)
          for (std::size_t j = 0; j < inner; ++j)
            g(i, j) += axis == 1 ? on->grad(i, p, j) : on->grad(i, j, p);
      }
    });
  }
  return out;
}

Var pad_or_trim(const Var& a, std::size_t length) {
  require_rank(a, 1, "pad_or_trim");
  if (length == 0) throw DimensionError("pad_or_trim: zero length");
  NdArray y({length});
  const std::size_t n = std::min(length, a.value().size());
  std::copy_n(a.value().ptr(), n, y.ptr());
  Var out(std::move(y));
  if (Tape* tape = tape_for(out, {&a})) {
    tape->record([an = a.node(), on = out.node(), n] {
      if (on->grad.empty()) return;
      double* g = an->grad_buffer().ptr();
      for (std::size_t i = 0; i < n; ++i) g[i] += on->grad[i];
    });
  }
  return out;
}

}  // namespace sepformer::ops
