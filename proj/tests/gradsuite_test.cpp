#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "sepformer/errors.hpp"
#include "sepformer/gradsuite.hpp"
#include "sepformer/ops.hpp"

using namespace sepformer;

namespace {

// y = 3x with the backward deliberately negated.
Var broken_triple(const Var& x) {
  NdArray y = x.value();
  for (double& v : y.data()) v *= 3.0;
  Var out(std::move(y));
  if (Tape* tape = tape_for(out, {&x})) {
    tape->record([xn = x.node(), on = out.node()] {
      if (on->grad.empty()) return;
      NdArray& g = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= 3.0 * on->grad[i];
    });
  }
  return out;
}

}  // namespace

TEST(GradSuite, EveryOpListedExactlyOnce) {
  const auto entries = gradient_suite("all");
  std::multiset<std::string> ops;
  for (const auto& e : entries) ops.insert(e.op);
  for (const auto& op : ops) EXPECT_EQ(ops.count(op), 1u) << op;
  const char* required[] = {
      "matmul", "matmul_tn", "matmul_nt", "transpose", "add", "sub", "mul", "scale", "sum",
      "add_bias", "linear", "relu", "prelu", "softmax_rows", "layer_norm", "conv1d",
      "conv1d_transpose", "reshape", "slice_rows", "concat_rows", "normalize_columns",
      "scale_columns", "select", "stack", "pad_or_trim", "sparse_attention", "full_head",
      "longformer_head", "linformer_head", "reformer_head", "multi_head_attention/full",
      "multi_head_attention/longformer", "multi_head_attention/linformer",
      "multi_head_attention/reformer", "chunk", "overlap_add", "feed_forward",
      "transformer_layer", "transformer_stack", "sepformer_block", "encode", "decode", "si_snr",
      "pit_loss", "separate"};
  for (const char* op : required) EXPECT_EQ(ops.count(op), 1u) << op;
  EXPECT_EQ(ops.size(), std::size(required));
}

TEST(GradSuite, SuitesPartitionAll) {
  std::size_t total = 0;
  for (const auto& name : gradient_suite_names()) {
    const auto part = gradient_suite(name);
    EXPECT_FALSE(part.empty()) << name;
    for (const auto& e : part) EXPECT_EQ(e.suite, name);
    total += part.size();
  }
  EXPECT_EQ(total, gradient_suite("all").size());
  EXPECT_THROW(gradient_suite("kernels"), ConfigError);
}

TEST(GradSuite, AllOpsPassAtTolerance) {
  for (const auto& e : gradient_suite("all")) {
    const GradcheckResult r = e.run();
    EXPECT_LT(r.max_rel_error, kGradTolerance) << e.suite << "/" << e.op;
  }
}

TEST(GradSuite, SignBugInBackwardIsDetected) {
  const auto r = check_gradients(
      "broken_triple",
      [](const std::vector<Var>& in) { return project_to_scalar(broken_triple(in[0]), 1); },
      {random_array({3, 4}, 2)});
  EXPECT_FALSE(r.passed(kGradTolerance));
  EXPECT_NEAR(r.max_rel_error, 2.0, 1e-6);
}

TEST(GradSuite, LeafCheckRestoresValues) {
  Var w(random_array({2, 3}, 3), true);
  const NdArray before = w.value();
  auto r = check_leaf_gradients(
      "leaf", [&] { return ops::sum(ops::mul(w, w)); }, {w});
  EXPECT_LT(r.max_rel_error, kGradTolerance);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(w.value()[i], before[i]);
}
