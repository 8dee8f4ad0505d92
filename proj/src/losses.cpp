#include "gsfl/losses.hpp"

#include <cmath>

namespace gsfl {

void LossWeights::validate() const {
  for (double v : {alpha1, alpha2, alpha3, weight_decay}) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      fail(ErrorKind::kParameter, "loss weights must be finite and nonnegative");
    }
  }
}

namespace {

void check_labels(std::span<const int> labels, std::size_t batch, std::size_t num_classes,
                  const char* who) {
  if (labels.size() != batch) {
    fail(ErrorKind::kShape, std::string(who) + ": " + std::to_string(labels.size()) +
                                " labels for a batch of " + std::to_string(batch));
  }
  for (int l : labels) {
    if (l < 1 || static_cast<std::size_t>(l) > num_classes) {
      fail(ErrorKind::kData, std::string(who) + ": label " + std::to_string(l) + " out of range");
    }
  }
}

}  // namespace

ClassificationLoss classification_loss(const Matrix& probs, std::span<const int> labels) {
  const std::size_t batch = probs.rows();
  check_labels(labels, batch, probs.cols(), "classification_loss");
  ClassificationLoss out;
  out.grad_logits = Matrix(batch, probs.cols());
  if (batch == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(batch);
  double acc = 0.0;
  for (std::size_t n = 0; n < batch; ++n) {
    const auto t = static_cast<std::size_t>(labels[n] - 1);
    double p = probs(n, t);
    if (p < kProbabilityFloor) {
      p = kProbabilityFloor;
      out.clamped = true;
    }
    acc -= std::log(p);
    for (std::size_t c = 0; c < probs.cols(); ++c) {
      out.grad_logits(n, c) = (probs(n, c) - (c == t ? 1.0 : 0.0)) * inv_n;
    }
  }
  out.value = acc * inv_n;
  return out;
}

FeatureExpressionLoss feature_expression_loss(const ForwardRecord& rec,
                                              std::span<const int> labels,
                                              const CenterState& centers,
                                              const GroupAssignment& groups,
                                              const LossWeights& w, CenterReduction reduction) {
  const std::size_t batch = rec.y_dis.rows();
  const std::size_t df = rec.y_dis.cols();
  check_labels(labels, batch, centers.num_classes(), "feature_expression_loss");
  if (centers.dim() != df) {
    fail(ErrorKind::kShape, "feature_expression_loss: centers have width " +
                                std::to_string(centers.dim()) + ", codes " + std::to_string(df));
  }
  const bool shared_path = !rec.y_shd.empty();
  FeatureExpressionLoss out;
  out.grad_y_dis = Matrix(batch, df);
  out.grad_y = Matrix(batch, rec.y.cols());
  if (shared_path) {
    out.grad_y_shd = Matrix(batch, df);
    out.grad_y_hat = Matrix(batch, rec.y_hat.cols());
  }
  const double scale =
      reduction == CenterReduction::kMean && batch > 0 ? 1.0 / static_cast<double>(batch) : 1.0;

  for (std::size_t n = 0; n < batch; ++n) {
    const auto c = static_cast<std::size_t>(labels[n] - 1);
    const auto m = centers.m.row(c);
    const auto yd = rec.y_dis.row(n);
    double cls = 0.0;
    for (std::size_t k = 0; k < df; ++k) {
      const double diff = yd[k] - m[k];
      cls += diff * diff;
      if (w.alpha2 != 0.0) out.grad_y_dis(n, k) = 2.0 * w.alpha2 * scale * diff;
    }
    out.class_specific += cls;

    if (!shared_path) continue;

    const int g = groups.group_of(labels[n]);
    if (static_cast<std::size_t>(g) > centers.num_groups()) {
      fail(ErrorKind::kConfig, "feature_expression_loss: group " + std::to_string(g) +
                                   " of class " + std::to_string(labels[n]) + " has no center");
    }
    const auto s = centers.s.row(static_cast<std::size_t>(g - 1));
    const auto ys = rec.y_shd.row(n);
    double shd = 0.0;
    for (std::size_t k = 0; k < df; ++k) {
      const double diff = ys[k] - s[k];
      shd += diff * diff;
      if (w.alpha3 != 0.0) out.grad_y_shd(n, k) = 2.0 * w.alpha3 * scale * diff;
    }
    out.shared += shd;

    const auto y = rec.y.row(n);
    const auto yh = rec.y_hat.row(n);
    double rec_err = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) {
      const double diff = yh[k] - y[k];
      rec_err += diff * diff;
      if (w.alpha1 != 0.0) {
        out.grad_y_hat(n, k) = 2.0 * w.alpha1 * diff;
        out.grad_y(n, k) = -2.0 * w.alpha1 * diff;
      }
    }
    out.recon += rec_err;
  }
  out.class_specific *= scale;
  out.shared *= scale;
  out.value = w.alpha1 * out.recon + w.alpha2 * out.class_specific + w.alpha3 * out.shared;
  return out;
}

double weight_decay_value(const LayerStack& stack) {
  double acc = 0.0;
  for (const auto& l : stack) acc += squared_norm(l.weight.flat());
  return acc;
}

WeightDecayLoss weight_decay_loss(const DecompositionNet& net) {
  WeightDecayLoss out;
  out.grads = zeros_like(net.params);
  const auto& p = net.params;
  out.value = weight_decay_value(p.encoder_s) + weight_decay_value(p.encoder_d) +
              weight_decay_value(p.decoder) + weight_decay_value(p.classifier);
  auto grad_part = [](const LayerStack& src, LayerStack& dst) {
    for (std::size_t i = 0; i < src.size(); ++i) {
      const auto wsrc = src[i].weight.flat();
      auto wdst = dst[i].weight.flat();
      for (std::size_t k = 0; k < wsrc.size(); ++k) wdst[k] = 2.0 * wsrc[k];
    }
  };
  grad_part(p.encoder_s, out.grads.encoder_s);
  grad_part(p.encoder_d, out.grads.encoder_d);
  grad_part(p.decoder, out.grads.decoder);
  grad_part(p.classifier, out.grads.classifier);
  return out;
}

double LossBreakdown::recompose(const LossWeights& w) const noexcept {
  return l_cf + w.alpha1 * l_recon + w.alpha2 * l_class_specific + w.alpha3 * l_shared +
         w.weight_decay * l_wd;
}

bool LossBreakdown::finite() const noexcept {
  for (double v : {l_cf, l_recon, l_class_specific, l_shared, l_wd, total}) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

TotalLoss total_loss(const DecompositionNet& net, const ForwardRecord& record,
                     std::span<const int> labels, const CenterState& centers,
                     const GroupAssignment& groups, const LossWeights& weights,
                     CenterReduction reduction, double extra_wd) {
  weights.validate();
  auto cf = classification_loss(record.probs, labels);
  auto fe = feature_expression_loss(record, labels, centers, groups, weights, reduction);
  auto wd = weight_decay_loss(net);

  TotalLoss out;
  auto& b = out.breakdown;
  b.l_cf = cf.value;
  b.clamped = cf.clamped;
  b.l_recon = fe.recon;
  b.l_class_specific = fe.class_specific;
  b.l_shared = fe.shared;
  b.l_wd = wd.value + extra_wd;
  b.total = b.recompose(weights);

  out.grad_logits = std::move(cf.grad_logits);
  out.grad_y_dis = std::move(fe.grad_y_dis);
  out.grad_y_shd = std::move(fe.grad_y_shd);
  out.grad_y_hat = std::move(fe.grad_y_hat);
  out.grad_y = std::move(fe.grad_y);
  out.wd_grads = std::move(wd.grads);
  if (weights.weight_decay != 0.0) {
    for (auto& blk : param_blocks(out.wd_grads)) {
      for (double& v : blk.values) v *= weights.weight_decay;
    }
  } else {
    out.wd_grads = zeros_like(net.params);
  }
  return out;
}

}  // namespace gsfl
