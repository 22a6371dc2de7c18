#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sepformer/autodiff.hpp"

namespace sepformer {

// Scalar-valued function of the differentiable inputs under test.
using ScalarFn = std::function<Var(const std::vector<Var>&)>;

struct GradcheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::vector<double> per_input;
  bool passed(double tolerance = 1e-4) const {
    return max_rel_error < tolerance;
  }
};

// Norm-wise relative error ||a - n|| / max(||a||, ||n||); 0 when both vanish.
double relative_error(const NdArray& analytic, const NdArray& numeric);

// Compares tape gradients of `fn` against central differences with the given
// step, perturbing every entry of every input.
GradcheckResult check_gradients(const std::string& name, const ScalarFn& fn,
                                const std::vector<NdArray>& inputs,
                                double step = 1e-6);

// Same comparison for functions that close over existing leaves, such as a
// model's parameters. `leaves` must require gradients; their values are
// perturbed in place and restored.
GradcheckResult check_leaf_gradients(const std::string& name,
                                     const std::function<Var()>& fn,
                                     const std::vector<Var>& leaves,
                                     double step = 1e-6);

// sum(out * R) with R drawn from `seed`; turns any op output into a scalar
// whose gradient exercises every output entry.
Var project_to_scalar(const Var& out, std::uint64_t seed);

NdArray random_array(const Shape& shape, std::uint64_t seed, double lo = -1.0,
                     double hi = 1.0);

}  // namespace sepformer
