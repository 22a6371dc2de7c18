#include "sepformer/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "sepformer/ops.hpp"

namespace sepformer {

double relative_error(const NdArray& analytic, const NdArray& numeric) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double d = analytic[i] - numeric[i];
    diff += d * d;
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double denom = std::sqrt(std::max(na, nn));
  if (denom == 0.0) return 0.0;
  return std::sqrt(diff) / denom;
}

GradcheckResult check_gradients(const std::string& name, const ScalarFn& fn,
                                const std::vector<NdArray>& inputs,
                                double step) {
  GradcheckResult result;
  result.name = name;

  std::vector<Var> vars;
  for (const NdArray& a : inputs) vars.emplace_back(a, true);
  {
    Tape tape;
    TapeScope scope(tape);
    Var loss = fn(vars);
    tape.backward(loss);
  }

  for (std::size_t v = 0; v < vars.size(); ++v) {
    const NdArray analytic = vars[v].grad();
    NdArray numeric(inputs[v].shape());
    std::vector<Var> probe;
    for (const NdArray& a : inputs) probe.emplace_back(a, false);
    NdArray& x = probe[v].mutable_value();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double orig = x[i];
      x[i] = orig + step;
      const double up = fn(probe).value()[0];
      x[i] = orig - step;
      const double down = fn(probe).value()[0];
      x[i] = orig;
      numeric[i] = (up - down) / (2.0 * step);
    }
    const double err = relative_error(analytic, numeric);
    result.per_input.push_back(err);
    result.max_rel_error = std::max(result.max_rel_error, err);
  }
  return result;
}

GradcheckResult check_leaf_gradients(const std::string& name,
                                     const std::function<Var()>& fn,
                                     const std::vector<Var>& leaves, double step) {
  GradcheckResult result;
  result.name = name;
  std::vector<Var> handles = leaves;
  for (Var& v : handles) v.zero_grad();
  {
    Tape tape;
    TapeScope scope(tape);
    Var loss = fn();
    tape.backward(loss);
  }
  for (Var& leaf : handles) {
    const NdArray analytic = leaf.grad();
    leaf.zero_grad();
    NdArray numeric(leaf.shape());
    NdArray& x = leaf.mutable_value();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double orig = x[i];
      x[i] = orig + step;
      const double up = fn().value()[0];
      x[i] = orig - step;
      const double down = fn().value()[0];
      x[i] = orig;
      numeric[i] = (up - down) / (2.0 * step);
    }
    const double err = relative_error(analytic, numeric);
    result.per_input.push_back(err);
    result.max_rel_error = std::max(result.max_rel_error, err);
  }
  return result;
}

NdArray random_array(const Shape& shape, std::uint64_t seed, double lo,
                     double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  NdArray a(shape);
  for (double& v : a.data()) v = dist(rng);
  return a;
}

Var project_to_scalar(const Var& out, std::uint64_t seed) {
  Var r(random_array(out.shape(), seed));
  return ops::sum(ops::mul(out, r));
}

}  // namespace sepformer
