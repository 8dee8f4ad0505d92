#pragma once

// Training objective: cross-entropy classification loss plus the three-term
// feature expression loss (reconstruction, class-specific, shared) plus L2
// weight decay. Centers are constants here; they move only through the update
// rules in centers.hpp.

#include <span>
#include <string>

#include "gsfl/centers.hpp"
#include "gsfl/decompnet.hpp"
#include "gsfl/grouping.hpp"

namespace gsfl {

struct LossWeights {
  double alpha1 = 0.01;  // reconstruction
  double alpha2 = 0.01;  // class-specific
  double alpha3 = 0.01;  // shared
  double weight_decay = 1e-4;

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

// Floor applied to the true-class probability inside the log.
inline constexpr double kProbabilityFloor = 1e-12;

// How the class-specific and shared terms aggregate over a batch. kSum is the
// literal per-sample sum; kMean divides those two terms by the batch size.
enum class CenterReduction : std::uint8_t { kSum = 0, kMean = 1 };

struct ClassificationLoss {
  double value = 0.0;
  Matrix grad_logits;    // (probs - onehot) / B
  bool clamped = false;  // some true-class probability hit the floor
};

ClassificationLoss classification_loss(const Matrix& probs, std::span<const int> labels);

struct FeatureExpressionLoss {
  double recon = 0.0;           // ||y - y_hat||_F^2
  double class_specific = 0.0;  // sum_n ||y_dis_n - m_{l_n}||^2
  double shared = 0.0;          // sum_n ||y_shd_n - s_{g(l_n)}||^2
  double value = 0.0;           // weighted sum
  Matrix grad_y_hat;
  Matrix grad_y_dis;
  Matrix grad_y_shd;
  Matrix grad_y;  // direct partial through the reconstruction target
};

FeatureExpressionLoss feature_expression_loss(const ForwardRecord& record,
                                              std::span<const int> labels,
                                              const CenterState& centers,
                                              const GroupAssignment& groups,
                                              const LossWeights& weights,
                                              CenterReduction reduction = CenterReduction::kSum);

// Sum of squared weights over every weight matrix; biases excluded.
struct WeightDecayLoss {
  double value = 0.0;
  NetParams grads;  // 2 W for weights, zero for biases (unscaled by lambda)
};

WeightDecayLoss weight_decay_loss(const DecompositionNet& net);
double weight_decay_value(const LayerStack& stack);

struct LossBreakdown {
  double l_cf = 0.0;
  double l_recon = 0.0;
  double l_class_specific = 0.0;
  double l_shared = 0.0;
  double l_wd = 0.0;
  double total = 0.0;
  bool clamped = false;

  // l_cf + a1 l_recon + a2 l_cls + a3 l_shd + lambda l_wd
  double recompose(const LossWeights& w) const noexcept;
  bool finite() const noexcept;
};

struct TotalLoss {
  LossBreakdown breakdown;
  Matrix grad_logits;
  Matrix grad_y_dis;
  Matrix grad_y_shd;
  Matrix grad_y_hat;
  Matrix grad_y;
  NetParams wd_grads;  // lambda * 2 W
};

// `extra_wd` adds the squared weights of additional stacks (a trainable
// extractor) to l_wd; their gradients are the caller's responsibility.
TotalLoss total_loss(const DecompositionNet& net, const ForwardRecord& record,
                     std::span<const int> labels, const CenterState& centers,
                     const GroupAssignment& groups, const LossWeights& weights,
                     CenterReduction reduction = CenterReduction::kSum, double extra_wd = 0.0);

}  // namespace gsfl
