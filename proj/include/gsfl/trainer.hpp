#pragma once

// Mini-batch training of the decomposition head (and an optional small
// built-in extractor ahead of it), with Adam/SGD, learning-rate schedules,
// per-iteration center updates and head-then-finetune phases.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gsfl/centers.hpp"
#include "gsfl/decompnet.hpp"
#include "gsfl/featureio.hpp"
#include "gsfl/grouping.hpp"
#include "gsfl/losses.hpp"

namespace gsfl {

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam update; `step` is the 1-based update count.
void adam_step(std::span<double> params, std::span<const double> grads, std::span<double> m,
               std::span<double> v, double lr, const AdamParams& p, std::uint64_t step);

// Heavy-ball SGD: v <- momentum v + g; params -= lr v.
void sgd_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity,
              double lr, double momentum);

struct OptimizerConfig {
  enum class Kind : std::uint8_t { kAdam, kSgd } kind = Kind::kAdam;
  AdamParams adam{};
  double momentum = 0.9;
};

struct LrSchedule {
  enum class Kind : std::uint8_t { kConstant, kStepDecay, kPlateau } kind = Kind::kConstant;
  double factor = 0.6;
  int every = 10;    // step decay period, epochs
  int after = 20;    // first step-decay epoch
  int patience = 6;  // plateau: epochs without improvement before decaying

  // Step-decay learning rate for a 0-based epoch index (epochs completed).
  double step_lr(double base_lr, int epoch) const;
  void validate() const;
};

struct ExtractorConfig {
  std::uint32_t out_dim = 0;  // 0 disables the built-in extractor
  std::vector<std::uint32_t> hidden_dims{};
  Activation activation = Activation::kRectifier;

  bool enabled() const noexcept { return out_dim > 0; }
};

struct TrainConfig {
  std::size_t batch_size = 32;
  int epochs = 50;
  double lr = 1e-3;
  LrSchedule schedule{};
  OptimizerConfig optimizer{};
  LossWeights loss_weights{};
  double eta = 0.01;
  std::uint64_t seed = 0;
  DivisorMode divisor_mode = DivisorMode::kGroupSize;
  CenterReduction reduction = CenterReduction::kSum;

  // Architecture; input_dim, num_classes and init_seed are filled from the data
  // and the seed at train time.
  NetConfig net{};
  ExtractorConfig extractor{};

  // Phase 1 trains only the head for `freeze_epochs`; phase 2 unfreezes the
  // extractor and restarts the schedule from `finetune_lr`.
  bool freeze_extractor_phase = false;
  int freeze_epochs = 0;
  double finetune_lr = 1e-4;

  // Convergence epoch: first epoch within this absolute accuracy margin of the best.
  double convergence_margin = 0.0025;

  void validate() const;
};

struct OptimizerState {
  std::uint64_t step = 0;
  NetParams m;  // Adam first moment, or SGD velocity
  NetParams v;  // Adam second moment
  std::uint64_t ext_step = 0;  // extractor may start training late
  LayerStack ext_m;
  LayerStack ext_v;

  bool operator==(const OptimizerState&) const = default;
};

struct Extractor {
  LayerStack layers;
  Activation activation = Activation::kRectifier;

  bool operator==(const Extractor&) const = default;
};

struct TrainState {
  DecompositionNet net;
  std::optional<Extractor> extractor;
  bool extractor_frozen = false;
  CenterState centers;
  OptimizerState opt;
  Rng rng;
  int epoch = 0;  // completed epochs
  double lr = 0.0;
  int plateau_wait = 0;
  double best_eval = -1.0;
  int best_epoch = 0;
  int convergence_epoch = 0;

  bool operator==(const TrainState&) const = default;
};

TrainState init_train_state(const TrainConfig& config, std::uint32_t input_dim,
                            std::uint32_t num_classes, std::uint32_t num_groups);

// Head input for raw features: the extractor output, or the features themselves.
Matrix head_input(const TrainState& state, const Matrix& x);

// Argmax of classifier(Encoder.D(head_input(x))); ties go to the lowest class.
std::vector<int> predict(const TrainState& state, const Matrix& x);
double accuracy(const TrainState& state, const FeatureDataset& dataset);

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, LossBreakdown breakdown)
      : Error(ErrorKind::kDivergence, what), breakdown_(breakdown) {}
  const LossBreakdown& breakdown() const noexcept { return breakdown_; }

 private:
  LossBreakdown breakdown_;
};

// Forward, total loss, backward, optimizer step (extractor too when unfrozen),
// class-center update, shared-center update. The state is untouched when the
// loss is non-finite.
LossBreakdown train_step(TrainState& state, const Matrix& x, std::span<const int> labels,
                         const GroupAssignment& groups, const TrainConfig& config);

struct StepLog {
  int epoch = 0;  // 1-based
  std::size_t step = 0;
  double lr = 0.0;
  LossBreakdown breakdown;
};

struct EpochLog {
  int epoch = 0;  // 1-based
  double lr = 0.0;
  double eval_acc = 0.0;
  double mean_total = 0.0;
};

struct TrainLog {
  std::vector<StepLog> steps;
  std::vector<EpochLog> epochs;

  // step,epoch,lr,l_cf,l_recon,l_cls,l_shd,l_wd,total,eval_acc
  std::string to_csv() const;
};

struct TrainResult {
  TrainState state;
  TrainLog log;
};

// Thrown by train(); carries the last state that produced a finite loss.
class TrainingDiverged : public DivergenceError {
 public:
  TrainingDiverged(const DivergenceError& cause, TrainState last_state, TrainLog log)
      : DivergenceError(cause.what(), cause.breakdown()),
        last_state(std::move(last_state)),
        log(std::move(log)) {}
  TrainState last_state;
  TrainLog log;
};

TrainResult train(const TrainConfig& config, const FeatureDataset& train_set,
                  const FeatureDataset& eval_set, const GroupAssignment& groups);

// Full training checkpoint, magic "GSFT".
std::vector<unsigned char> encode_train_state(const TrainState& state);
TrainState decode_train_state(std::span<const unsigned char> bytes, const std::string& source);
void save_train_state(const TrainState& state, const std::string& path);
TrainState load_train_state(const std::string& path);

}  // namespace gsfl
