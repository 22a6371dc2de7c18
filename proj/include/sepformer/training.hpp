#pragma once

// Adam with global-norm clipping, plateau halving, and a single-item
// training loop for toy-scale runs.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "sepformer/datagen.hpp"
#include "sepformer/sepmodel.hpp"

namespace sepformer {

struct AdamState {
  double lr = 1.5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<NdArray> m, v;  // lazily sized to the parameters
};

// Rescales grads in place so their joint l2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(std::vector<NdArray>& grads, double max_norm);

void adam_step(std::vector<Var>& params, const std::vector<NdArray>& grads,
               AdamState& st);

// Halves the learning rate after `patience` evaluations without a new best.
class PlateauScheduler {
 public:
  explicit PlateauScheduler(std::size_t patience = 3) : patience_(patience) {}
  // Lower is better. Returns true when the rate was halved.
  bool observe(double value, AdamState& st);
  std::size_t halvings() const { return halvings_; }

 private:
  std::size_t patience_;
  std::size_t bad_ = 0;
  std::size_t halvings_ = 0;
  bool have_best_ = false;
  double best_ = 0.0;
};

struct TrainItem {
  NdArray mixture;               // [T]
  std::vector<NdArray> targets;  // Ns x [T]
};

// The fixed item used for toy overfitting: one dynamic mix of synthetic
// sources.
struct ToyData {
  double seconds = 0.5;
  SourceKind kind = SourceKind::kMultiSine;
  std::uint64_t synth_seed = 7;
  std::uint64_t mix_seed = 1;
};
TrainItem toy_item(const SepformerConfig& cfg, const ToyData& data = {});

struct TrainOptions {
  std::size_t steps = 2000;
  double lr = 1e-3;
  double clip_norm = 5.0;
  std::size_t eval_every = 50;  // steps per plateau evaluation
  std::size_t patience = 3;
};

struct TraceRow {
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double si_snri = 0.0;
  double wall_ms = 0.0;
};

// One forward/backward/update on `item`; returns the pre-update loss and
// SI-SNRi of the estimates that produced it.
struct StepResult {
  double loss = 0.0;
  double si_snri = 0.0;
};
StepResult train_step(SepformerModel& model, const TrainItem& item,
                      AdamState& st, double clip_norm);

using DataSource = std::function<TrainItem(std::size_t step)>;

// Throws NumericError naming the step on a non-finite loss.
std::vector<TraceRow> train_toy(SepformerModel& model, const DataSource& data,
                                const TrainOptions& opt);

// Header: step,loss,lr,si_snri,wall_ms
void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& rows);

// SI-SNRi of the current model on one item.
double evaluate_si_snri(const SepformerModel& model, const TrainItem& item);

}  // namespace sepformer
