#include "sepformer/gradsuite.hpp"

#include <random>

#include "sepformer/attention.hpp"
#include "sepformer/dualpath.hpp"
#include "sepformer/encoder.hpp"
#include "sepformer/errors.hpp"
#include "sepformer/objectives.hpp"
#include "sepformer/ops.hpp"
#include "sepformer/sepmodel.hpp"

namespace sepformer {
namespace {

using Inputs = std::vector<Var>;

GradSuiteEntry op_entry(std::string suite, std::string op, ScalarFn fn,
                        std::vector<NdArray> inputs) {
  auto run = [op, fn = std::move(fn), inputs = std::move(inputs)] {
    return check_gradients(op, fn, inputs);
  };
  return {std::move(suite), std::move(op), std::move(run)};
}

// Output of a unary op projected to a scalar with a fixed random weight.
ScalarFn projected(std::function<Var(const Inputs&)> f, std::uint64_t seed) {
  return [f = std::move(f), seed](const Inputs& in) { return project_to_scalar(f(in), seed); };
}

std::vector<GradSuiteEntry> ndkernel_entries() {
  const std::string s = "ndkernel";
  std::vector<GradSuiteEntry> e;
  e.push_back(op_entry(s, "matmul", projected([](const Inputs& v) { return ops::matmul(v[0], v[1]); }, 1),
                       {random_array({3, 4}, 2), random_array({4, 5}, 3)}));
  e.push_back(op_entry(s, "matmul_tn", projected([](const Inputs& v) { return ops::matmul_tn(v[0], v[1]); }, 4),
                       {random_array({4, 3}, 5), random_array({4, 5}, 6)}));
  e.push_back(op_entry(s, "matmul_nt", projected([](const Inputs& v) { return ops::matmul_nt(v[0], v[1]); }, 7),
                       {random_array({3, 4}, 8), random_array({5, 4}, 9)}));
  e.push_back(op_entry(s, "transpose", projected([](const Inputs& v) { return ops::transpose(v[0]); }, 10),
                       {random_array({3, 5}, 11)}));
  e.push_back(op_entry(s, "add", projected([](const Inputs& v) { return ops::add(v[0], v[1]); }, 12),
                       {random_array({3, 4}, 13), random_array({3, 4}, 14)}));
  e.push_back(op_entry(s, "sub", projected([](const Inputs& v) { return ops::sub(v[0], v[1]); }, 15),
                       {random_array({3, 4}, 16), random_array({3, 4}, 17)}));
  e.push_back(op_entry(s, "mul", projected([](const Inputs& v) { return ops::mul(v[0], v[1]); }, 18),
                       {random_array({3, 4}, 19), random_array({3, 4}, 20)}));
  e.push_back(op_entry(s, "scale", projected([](const Inputs& v) { return ops::scale(v[0], -1.7); }, 21),
                       {random_array({2, 5}, 22)}));
  e.push_back(op_entry(s, "sum", [](const Inputs& v) { return ops::sum(ops::mul(v[0], v[0])); },
                       {random_array({4, 3}, 23)}));
  e.push_back(op_entry(s, "add_bias", projected([](const Inputs& v) { return ops::add_bias(v[0], v[1]); }, 24),
                       {random_array({4, 6}, 25), random_array({4}, 26)}));
  e.push_back(op_entry(s, "linear",
                       projected([](const Inputs& v) { return ops::linear(v[0], v[1], v[2]); }, 27),
                       {random_array({3, 4}, 28), random_array({4, 5}, 29), random_array({3}, 30)}));
  e.push_back(op_entry(s, "relu", projected([](const Inputs& v) { return ops::relu(v[0]); }, 31),
                       {random_array({4, 6}, 32)}));
  e.push_back(op_entry(s, "prelu", projected([](const Inputs& v) { return ops::prelu(v[0], v[1]); }, 33),
                       {random_array({4, 7}, 34), random_array({4}, 35, 0.1, 0.4)}));
  e.push_back(op_entry(s, "softmax_rows", projected([](const Inputs& v) { return ops::softmax_rows(v[0]); }, 36),
                       {random_array({3, 5}, 37)}));
  e.push_back(op_entry(s, "layer_norm",
                       projected([](const Inputs& v) { return ops::layer_norm(v[0], v[1], v[2]); }, 38),
                       {random_array({5, 4}, 39), random_array({5}, 40), random_array({5}, 41)}));
  e.push_back(op_entry(s, "conv1d", projected([](const Inputs& v) { return ops::conv1d(v[0], v[1], 3); }, 42),
                       {random_array({29}, 43), random_array({4, 1, 5}, 44)}));
  e.push_back(op_entry(s, "conv1d_transpose",
                       projected([](const Inputs& v) { return ops::conv1d_transpose(v[0], v[1], 2); }, 45),
                       {random_array({3, 6}, 46), random_array({3, 1, 4}, 47)}));
  e.push_back(op_entry(s, "reshape", projected([](const Inputs& v) { return ops::reshape(v[0], {2, 3, 2}); }, 48),
                       {random_array({4, 3}, 49)}));
  e.push_back(op_entry(s, "slice_rows", projected([](const Inputs& v) { return ops::slice_rows(v[0], 1, 2); }, 50),
                       {random_array({4, 3}, 51)}));
  e.push_back(op_entry(s, "concat_rows",
                       projected([](const Inputs& v) { return ops::concat_rows({v[0], v[1]}); }, 52),
                       {random_array({2, 3}, 53), random_array({3, 3}, 54)}));
  e.push_back(op_entry(s, "normalize_columns",
                       projected([](const Inputs& v) { return ops::normalize_columns(v[0]); }, 55),
                       {random_array({4, 3}, 56)}));
  e.push_back(op_entry(s, "scale_columns",
                       projected([](const Inputs& v) { return ops::scale_columns(v[0], v[1]); }, 57),
                       {random_array({4, 3}, 58), random_array({1, 3}, 59)}));
  e.push_back(op_entry(s, "select", projected([](const Inputs& v) {
                         return ops::concat_rows({ops::select(v[0], 1, 2), ops::select(v[0], 2, 1)});
                       }, 60),
                       {random_array({2, 3, 3}, 61)}));
  e.push_back(op_entry(s, "stack", projected([](const Inputs& v) {
                         return ops::add(ops::stack({v[0], v[1]}, 1), ops::stack({v[1], v[0]}, 2));
                       }, 62),
                       {random_array({2, 2}, 63), random_array({2, 2}, 64)}));
  e.push_back(op_entry(s, "pad_or_trim",
                       [](const Inputs& v) {
                         return ops::add(project_to_scalar(ops::pad_or_trim(v[0], 9), 65),
                                         project_to_scalar(ops::pad_or_trim(v[0], 4), 66));
                       },
                       {random_array({7}, 67)}));
  return e;
}

AttentionSpec tiny_spec(AttentionVariant variant) {
  AttentionSpec spec;
  spec.variant = variant;
  spec.heads = 2;
  spec.d_model = 4;
  spec.window = 3;
  spec.global_stride = 4;
  spec.proj_len = 5;
  spec.max_len = 16;
  spec.n_buckets = 4;
  spec.bucket_chunk = 3;
  return spec;
}

std::vector<GradSuiteEntry> attention_entries() {
  const std::string s = "attention";
  std::vector<GradSuiteEntry> e;
  const NeighborLists nb = longformer_neighbors(6, 3, 3);
  e.push_back(op_entry(s, "sparse_attention",
                       [nb](const Inputs& v) {
                         auto res = sparse_attention(v[0], v[1], v[2], nb, 0.7);
                         return ops::add(project_to_scalar(res.out, 70), project_to_scalar(res.lse, 71));
                       },
                       {random_array({3, 6}, 72), random_array({3, 6}, 73), random_array({2, 6}, 74)}));
  e.push_back(op_entry(s, "full_head",
                       projected([](const Inputs& v) { return full_head(v[0], v[1], v[2]); }, 75),
                       {random_array({2, 5}, 76), random_array({2, 5}, 77), random_array({2, 5}, 78)}));
  const AttentionSpec lf = tiny_spec(AttentionVariant::kLongformer);
  e.push_back(op_entry(s, "longformer_head",
                       projected([lf](const Inputs& v) { return longformer_head(v[0], v[1], v[2], lf); }, 79),
                       {random_array({2, 9}, 80), random_array({2, 9}, 81), random_array({2, 9}, 82)}));
  const AttentionSpec lin = tiny_spec(AttentionVariant::kLinformer);
  e.push_back(op_entry(s, "linformer_head",
                       projected([lin](const Inputs& v) {
                         return linformer_head(v[0], v[1], v[2], v[3], v[4], lin);
                       }, 83),
                       {random_array({2, 7}, 84), random_array({2, 7}, 85), random_array({2, 7}, 86),
                        random_array({16, 5}, 87), random_array({16, 5}, 88)}));
  const AttentionSpec rf = tiny_spec(AttentionVariant::kReformer);
  e.push_back(op_entry(s, "reformer_head",
                       projected([rf](const Inputs& v) { return reformer_head(v[0], v[1], rf, 0); }, 89),
                       {random_array({2, 10}, 90), random_array({2, 10}, 91)}));
  for (auto variant : {AttentionVariant::kFull, AttentionVariant::kLongformer,
                       AttentionVariant::kLinformer, AttentionVariant::kReformer}) {
    const AttentionSpec spec = tiny_spec(variant);
    auto run = [spec] {
      std::mt19937_64 rng(37);
      AttentionWeights w = make_attention_weights(spec, 4, rng);
      Var x(random_array({4, 12}, 38), true);
      std::vector<Var> leaves = {x};
      for (const Var& p : w.parameters()) leaves.push_back(p);
      return check_leaf_gradients(
          "multi_head_attention/" + to_string(spec.variant),
          [&] { return project_to_scalar(multi_head_attention(x, w, spec), 39); }, leaves);
    };
    e.push_back({s, "multi_head_attention/" + to_string(variant), run});
  }
  return e;
}

SepformerConfig tiny_model_config() {
  SepformerConfig c;
  c.features = 4;
  c.kernel = 4;
  c.stride = 2;
  c.chunk = 6;
  c.repeats = 1;
  c.intra_layers = 1;
  c.inter_layers = 1;
  c.heads = 2;
  c.d_ff = 6;
  c.sources = 2;
  c.seed = 3;
  return c;
}

std::vector<Var> leaves_of(const NamedParameters& named) {
  std::vector<Var> out;
  for (const auto& e : named) out.push_back(e.second);
  return out;
}

// Nontrivial LayerNorm affine so every parameter affects the output.
void perturb_norms(TransformerStackParams& p, std::uint64_t seed) {
  for (auto& layer : p.layers) {
    layer.ln1_gain.mutable_value() = random_array(layer.ln1_gain.shape(), seed++, 0.5, 1.5);
    layer.ln2_bias.mutable_value() = random_array(layer.ln2_bias.shape(), seed++, -0.2, 0.2);
  }
}

std::vector<GradSuiteEntry> model_entries() {
  const std::string s = "model";
  std::vector<GradSuiteEntry> e;
  const ChunkGeometry g = make_chunk_geometry(11, 4);
  e.push_back(op_entry(s, "chunk", projected([g](const Inputs& v) { return chunk(v[0], g); }, 100),
                       {random_array({2, 11}, 101)}));
  e.push_back(op_entry(s, "overlap_add",
                       projected([g](const Inputs& v) { return overlap_add(v[0], g); }, 102),
                       {random_array({2, 4, g.n_chunks}, 103)}));
  const AttentionSpec spec = tiny_spec(AttentionVariant::kFull);
  e.push_back({s, "feed_forward", [spec] {
                 std::mt19937_64 rng(104);
                 TransformerLayerParams p = make_transformer_layer(spec, 4, 6, rng);
                 Var x(random_array({4, 5}, 105), true);
                 std::vector<Var> leaves = {x, p.w1, p.b1, p.w2, p.b2};
                 return check_leaf_gradients(
                     "feed_forward", [&] { return project_to_scalar(feed_forward(x, p), 106); },
                     leaves);
               }});
  e.push_back({s, "transformer_layer", [spec] {
                 std::mt19937_64 rng(107);
                 TransformerStackParams st = make_transformer_stack(spec, 4, 6, 1, rng);
                 perturb_norms(st, 108);
                 TransformerLayerParams& p = st.layers.front();
                 Var x(random_array({4, 6}, 109), true);
                 std::vector<Var> leaves = leaves_of(p.named_parameters());
                 leaves.insert(leaves.begin(), x);
                 return check_leaf_gradients(
                     "transformer_layer",
                     [&] { return project_to_scalar(transformer_layer(x, p, spec), 110); }, leaves);
               }});
  e.push_back({s, "transformer_stack", [spec] {
                 std::mt19937_64 rng(111);
                 TransformerStackParams p = make_transformer_stack(spec, 4, 6, 2, rng);
                 perturb_norms(p, 112);
                 Var x(random_array({4, 5}, 113), true);
                 std::vector<Var> leaves = leaves_of(p.named_parameters());
                 leaves.insert(leaves.begin(), x);
                 return check_leaf_gradients(
                     "transformer_stack",
                     [&] { return project_to_scalar(transformer_stack(x, p, spec), 114); }, leaves);
               }});
  e.push_back({s, "sepformer_block", [spec] {
                 std::mt19937_64 rng(115);
                 SepformerBlockParams p = make_sepformer_block(spec, spec, 4, 6, 1, 1, 1, rng);
                 perturb_norms(p.repeats[0].intra, 116);
                 perturb_norms(p.repeats[0].inter, 118);
                 Var x(random_array({4, 4, 3}, 120), true);
                 std::vector<Var> leaves = leaves_of(p.named_parameters());
                 leaves.insert(leaves.begin(), x);
                 return check_leaf_gradients(
                     "sepformer_block",
                     [&] { return project_to_scalar(sepformer_block(x, p, spec, spec), 121); },
                     leaves);
               }});
  e.push_back({s, "encode", [] {
                 SepformerModel m = make_model(tiny_model_config());
                 Var x(random_array({30}, 122), true);
                 return check_leaf_gradients(
                     "encode", [&] { return project_to_scalar(encode(x, m), 123); }, {x, m.encoder});
               }});
  e.push_back({s, "decode", [] {
                 SepformerModel m = make_model(tiny_model_config());
                 Var h(random_array({4, 14}, 124), true);
                 return check_leaf_gradients(
                     "decode", [&] { return project_to_scalar(decode(h, m, 30), 125); },
                     {h, m.decoder});
               }});
  e.push_back(op_entry(s, "si_snr",
                       [](const Inputs& v) { return si_snr(v[0], random_array({40}, 126)); },
                       {random_array({40}, 127)}));
  e.push_back(op_entry(s, "pit_loss",
                       [](const Inputs& v) {
                         // Targets lean towards the swapped estimates so the
                         // best permutation is strict.
                         NdArray t0 = random_array({30}, 128), t1 = random_array({30}, 129);
                         const NdArray e0 = random_array({30}, 130), e1 = random_array({30}, 131);
                         for (std::size_t i = 0; i < 30; ++i) {
                           t0[i] += 2.0 * e1[i];
                           t1[i] += 2.0 * e0[i];
                         }
                         return pit_loss({v[0], v[1]}, {t0, t1}).loss;
                       },
                       {random_array({30}, 130), random_array({30}, 131)}));
  e.push_back({s, "separate", [] {
                 // Every parameter of a tiny model through the uPIT objective.
                 SepformerModel m = make_model(tiny_model_config());
                 for (auto& rep : m.mask_net.block.repeats) {
                   perturb_norms(rep.intra, 132);
                   perturb_norms(rep.inter, 134);
                 }
                 // Zero-initialised biases would put dead hidden columns exactly
                 // on the mask ReLU kink.
                 m.mask_net.ffw1_b.mutable_value() = random_array({4}, 139, 0.05, 0.2);
                 m.mask_net.ffw2_b.mutable_value() = random_array({4}, 140, 0.05, 0.2);
                 const NdArray x = random_array({30}, 136);
                 const std::vector<NdArray> targets = {random_array({30}, 137),
                                                       random_array({30}, 138)};
                 return check_leaf_gradients(
                     "separate",
                     [&] { return pit_loss(separate(Var(x), m).estimates, targets).loss; },
                     m.parameters());
               }});
  return e;
}

}  // namespace

const std::vector<std::string>& gradient_suite_names() {
  static const std::vector<std::string> names = {"ndkernel", "attention", "model"};
  return names;
}

std::vector<GradSuiteEntry> gradient_suite(const std::string& which) {
  std::vector<GradSuiteEntry> out;
  auto take = [&out](std::vector<GradSuiteEntry> more) {
    for (auto& e : more) out.push_back(std::move(e));
  };
  if (which == "all" || which == "ndkernel") take(ndkernel_entries());
  if (which == "all" || which == "attention") take(attention_entries());
  if (which == "all" || which == "model") take(model_entries());
  if (out.empty())
    throw ConfigError("unknown gradient suite '" + which + "' (expected all|ndkernel|attention|model)");
  return out;
}

}  // namespace sepformer
