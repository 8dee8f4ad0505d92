#include "gsfl/trainer.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "gsfl/binio.hpp"

namespace gsfl {

void adam_step(std::span<double> params, std::span<const double> grads, std::span<double> m,
               std::span<double> v, double lr, const AdamParams& p, std::uint64_t step) {
  if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size()) {
    fail(ErrorKind::kShape, "adam_step: buffer sizes disagree");
  }
  const double t = static_cast<double>(step);
  const double c1 = 1.0 - std::pow(p.beta1, t);
  const double c2 = 1.0 - std::pow(p.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m[i] = p.beta1 * m[i] + (1.0 - p.beta1) * g;
    v[i] = p.beta2 * v[i] + (1.0 - p.beta2) * g * g;
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + p.eps);
  }
}

void sgd_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity,
              double lr, double momentum) {
  if (grads.size() != params.size() || velocity.size() != params.size()) {
    fail(ErrorKind::kShape, "sgd_step: buffer sizes disagree");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grads[i];
    params[i] -= lr * velocity[i];
  }
}

double LrSchedule::step_lr(double base_lr, int epoch) const {
  if (kind != Kind::kStepDecay || epoch < after) return base_lr;
  const int decays = (epoch - after) / every + 1;
  return base_lr * std::pow(factor, decays);
}

void LrSchedule::validate() const {
  if (kind == Kind::kConstant) return;
  if (!(factor > 0.0 && factor < 1.0)) fail(ErrorKind::kParameter, "schedule factor must be in (0,1)");
  if (kind == Kind::kStepDecay && (every < 1 || after < 0)) {
    fail(ErrorKind::kParameter, "step decay needs every >= 1 and after >= 0");
  }
  if (kind == Kind::kPlateau && patience < 1) {
    fail(ErrorKind::kParameter, "plateau patience must be >= 1");
  }
}

void TrainConfig::validate() const {
  if (batch_size < 1) fail(ErrorKind::kParameter, "batch_size must be >= 1");
  if (epochs < 0) fail(ErrorKind::kParameter, "epochs must be >= 0");
  if (!(lr > 0.0) || !std::isfinite(lr)) fail(ErrorKind::kParameter, "lr must be positive");
  if (!(eta >= 0.0) || !std::isfinite(eta)) fail(ErrorKind::kParameter, "eta must be >= 0");
  schedule.validate();
  loss_weights.validate();
  if (freeze_extractor_phase && (freeze_epochs < 0 || !(finetune_lr > 0.0))) {
    fail(ErrorKind::kParameter, "freeze phase needs freeze_epochs >= 0 and finetune_lr > 0");
  }
  if (!(convergence_margin >= 0.0)) fail(ErrorKind::kParameter, "convergence_margin must be >= 0");
}

TrainState init_train_state(const TrainConfig& config, std::uint32_t input_dim,
                            std::uint32_t num_classes, std::uint32_t num_groups) {
  config.validate();
  TrainState st;
  NetConfig nc = config.net;
  nc.input_dim = config.extractor.enabled() ? config.extractor.out_dim : input_dim;
  nc.num_classes = num_classes;
  nc.init_seed = derive_seed(config.seed, "trainer.init");
  st.net = init_net(nc);
  if (config.extractor.enabled()) {
    std::vector<std::uint32_t> widths{input_dim};
    widths.insert(widths.end(), config.extractor.hidden_dims.begin(),
                  config.extractor.hidden_dims.end());
    widths.push_back(config.extractor.out_dim);
    auto rng = make_rng(config.seed, "trainer.extractor");
    st.extractor = Extractor{init_stack(widths, config.extractor.activation, rng),
                             config.extractor.activation};
    st.extractor_frozen = config.freeze_extractor_phase;
    st.opt.ext_m = zeros_like(st.extractor->layers);
    st.opt.ext_v = zeros_like(st.extractor->layers);
  }
  st.centers = init_centers(num_classes, num_groups, nc.resolved_code_dim(), config.eta);
  st.opt.m = zeros_like(st.net.params);
  st.opt.v = zeros_like(st.net.params);
  st.rng = make_rng(config.seed, "trainer.shuffle");
  st.lr = config.lr;
  return st;
}

Matrix head_input(const TrainState& state, const Matrix& x) {
  if (!state.extractor) return x;
  if (x.cols() != state.extractor->layers.front().weight.cols()) {
    fail(ErrorKind::kShape, "extractor expects width " +
                                std::to_string(state.extractor->layers.front().weight.cols()) +
                                ", got " + std::to_string(x.cols()));
  }
  return stack_forward(state.extractor->layers, state.extractor->activation, x, nullptr);
}

std::vector<int> predict(const TrainState& state, const Matrix& x) {
  const Matrix logits = discriminative_logits(state.net, head_input(state, x));
  std::vector<int> out(logits.rows());
  for (std::size_t b = 0; b < logits.rows(); ++b) {
    const auto r = logits.row(b);
    out[b] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin()) + 1;
  }
  return out;
}

double accuracy(const TrainState& state, const FeatureDataset& dataset) {
  if (dataset.size() == 0) return 0.0;
  const auto pred = predict(state, dataset.features());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == dataset.samples[i].label;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

namespace {

void apply_update(std::vector<ParamBlock> params, std::vector<ParamBlock> grads,
                  std::vector<ParamBlock> m, std::vector<ParamBlock> v,
                  const OptimizerConfig& opt, double lr, std::uint64_t step) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (opt.kind == OptimizerConfig::Kind::kAdam) {
      adam_step(params[i].values, grads[i].values, m[i].values, v[i].values, lr, opt.adam, step);
    } else {
      sgd_step(params[i].values, grads[i].values, m[i].values, lr, opt.momentum);
    }
  }
}

void add_blocks(std::vector<ParamBlock> dst, std::vector<ParamBlock> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) {
    for (std::size_t k = 0; k < dst[i].values.size(); ++k) dst[i].values[k] += src[i].values[k];
  }
}

std::string describe(const LossBreakdown& b) {
  std::ostringstream s;
  s << "l_cf=" << b.l_cf << " l_recon=" << b.l_recon << " l_cls=" << b.l_class_specific
    << " l_shd=" << b.l_shared << " l_wd=" << b.l_wd << " total=" << b.total;
  return s.str();
}

}  // namespace

LossBreakdown train_step(TrainState& state, const Matrix& x, std::span<const int> labels,
                         const GroupAssignment& groups, const TrainConfig& config) {
  if (x.rows() == 0) fail(ErrorKind::kParameter, "train_step: empty batch");
  if (groups.num_classes() < state.net.config.num_classes) {
    fail(ErrorKind::kConfig, "train_step: grouping covers " + std::to_string(groups.num_classes()) +
                                 " of " + std::to_string(state.net.config.num_classes) +
                                 " classes");
  }
  StackCache ext_cache;
  const bool train_extractor = state.extractor && !state.extractor_frozen;
  const Matrix y = state.extractor
                       ? stack_forward(state.extractor->layers, state.extractor->activation, x,
                                       train_extractor ? &ext_cache : nullptr)
                       : x;
  const ForwardRecord rec = forward(state.net, y);
  const double ext_wd = state.extractor ? weight_decay_value(state.extractor->layers) : 0.0;
  TotalLoss tl = total_loss(state.net, rec, labels, state.centers, groups, config.loss_weights,
                            config.reduction, ext_wd);
  if (!tl.breakdown.finite()) {
    throw DivergenceError("non-finite loss: " + describe(tl.breakdown), tl.breakdown);
  }

  BackwardResult br = backward(state.net, rec, tl.grad_y_shd, tl.grad_y_dis, tl.grad_y_hat,
                               tl.grad_logits);
  add_blocks(param_blocks(br.grads), param_blocks(tl.wd_grads));

  LayerStack ext_grads;
  if (train_extractor) {
    Matrix g_y = br.grad_input;
    auto gy = g_y.flat();
    const auto direct = tl.grad_y.flat();
    for (std::size_t i = 0; i < gy.size(); ++i) gy[i] += direct[i];
    ext_grads = zeros_like(state.extractor->layers);
    stack_backward(state.extractor->layers, state.extractor->activation, ext_cache, g_y,
                   ext_grads);
    const double lambda = config.loss_weights.weight_decay;
    for (std::size_t i = 0; i < ext_grads.size(); ++i) {
      auto g = ext_grads[i].weight.flat();
      const auto w = state.extractor->layers[i].weight.flat();
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += lambda * (2.0 * w[k]);
    }
  }

  ++state.opt.step;
  apply_update(param_blocks(state.net.params), param_blocks(br.grads), param_blocks(state.opt.m),
               param_blocks(state.opt.v), config.optimizer, state.lr, state.opt.step);
  if (train_extractor) {
    ++state.opt.ext_step;
    apply_update(param_blocks(state.extractor->layers, "extractor"),
                 param_blocks(ext_grads, "extractor"), param_blocks(state.opt.ext_m, "extractor"),
                 param_blocks(state.opt.ext_v, "extractor"), config.optimizer, state.lr,
                 state.opt.ext_step);
  }

  state.centers = update_class_centers(state.centers, rec.y_dis, labels);
  state.centers = update_shared_centers(state.centers, groups, config.divisor_mode);
  return tl.breakdown;
}

std::string TrainLog::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "step,epoch,lr,l_cf,l_recon,l_cls,l_shd,l_wd,total,eval_acc\n";
  for (const auto& s : steps) {
    const auto& b = s.breakdown;
    out << s.step << "," << s.epoch << "," << s.lr << "," << b.l_cf << "," << b.l_recon << ","
        << b.l_class_specific << "," << b.l_shared << "," << b.l_wd << "," << b.total << ",";
    const auto idx = static_cast<std::size_t>(s.epoch - 1);
    if (idx < epochs.size()) out << epochs[idx].eval_acc;
    out << "\n";
  }
  return out.str();
}

TrainResult train(const TrainConfig& config, const FeatureDataset& train_set,
                  const FeatureDataset& eval_set, const GroupAssignment& groups) {
  config.validate();
  train_set.validate();
  eval_set.validate();
  groups.validate();
  if (eval_set.dim != train_set.dim) {
    fail(ErrorKind::kConfig, "train/eval feature dimensions differ (" +
                                 std::to_string(train_set.dim) + " vs " +
                                 std::to_string(eval_set.dim) + ")");
  }
  if (eval_set.num_classes != train_set.num_classes) {
    fail(ErrorKind::kConfig, "train/eval class counts differ");
  }
  if (groups.num_classes() != train_set.num_classes) {
    fail(ErrorKind::kConfig, "grouping covers " + std::to_string(groups.num_classes()) +
                                 " classes, data has " + std::to_string(train_set.num_classes));
  }

  TrainResult res{init_train_state(config, train_set.dim, train_set.num_classes,
                                   groups.num_groups),
                   {}};
  if (config.epochs == 0) return res;
  train_set.require_all_classes();

  TrainState& st = res.state;
  const bool two_phase = st.extractor && config.freeze_extractor_phase;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double base_lr = config.lr;
  int phase_start = 0;
  std::size_t global_step = 0;

  for (int e = 0; e < config.epochs; ++e) {
    if (two_phase && st.extractor_frozen && e >= config.freeze_epochs) {
      // Phase 2: everything trains, starting from the phase-1 weights.
      st.extractor_frozen = false;
      base_lr = config.finetune_lr;
      st.lr = base_lr;
      st.plateau_wait = 0;
      phase_start = e;
    }
    if (config.schedule.kind == LrSchedule::Kind::kStepDecay) {
      st.lr = config.schedule.step_lr(base_lr, e - phase_start);
    }

    shuffle_in_place(order, st.rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const Matrix x = train_set.rows(idx);
      std::vector<int> labels(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = train_set.samples[idx[i]].label;
      LossBreakdown b;
      try {
        b = train_step(st, x, labels, groups, config);
      } catch (const DivergenceError& err) {
        throw TrainingDiverged(err, st, res.log);
      }
      ++global_step;
      res.log.steps.push_back({e + 1, global_step, st.lr, b});
      loss_sum += b.total;
      ++batches;
    }

    st.epoch = e + 1;
    const double acc = accuracy(st, eval_set);
    res.log.epochs.push_back({e + 1, st.lr, acc, loss_sum / static_cast<double>(batches)});
    if (acc > st.best_eval) {
      st.best_eval = acc;
      st.best_epoch = e + 1;
      st.plateau_wait = 0;
    } else if (config.schedule.kind == LrSchedule::Kind::kPlateau) {
      if (++st.plateau_wait >= config.schedule.patience) {
        st.lr *= config.schedule.factor;
        st.plateau_wait = 0;
      }
    }
  }

  for (const auto& ep : res.log.epochs) {
    if (ep.eval_acc >= st.best_eval - config.convergence_margin) {
      st.convergence_epoch = ep.epoch;
      break;
    }
  }
  return res;
}

namespace {

constexpr std::uint16_t kTrainStateVersion = 1;

void write_opt_stacks(binio::Writer& w, const NetParams& p) {
  write_stack(w, p.encoder_s);
  write_stack(w, p.encoder_d);
  write_stack(w, p.decoder);
  write_stack(w, p.classifier);
}

NetParams read_opt_stacks(binio::Reader& r) {
  NetParams p;
  p.encoder_s = read_stack(r);
  p.encoder_d = read_stack(r);
  p.decoder = read_stack(r);
  p.classifier = read_stack(r);
  return p;
}

bool same_shapes(const LayerStack& a, const LayerStack& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].weight.rows() != b[i].weight.rows() || a[i].weight.cols() != b[i].weight.cols()) {
      return false;
    }
  }
  return true;
}

bool same_shapes(const NetParams& a, const NetParams& b) {
  return same_shapes(a.encoder_s, b.encoder_s) && same_shapes(a.encoder_d, b.encoder_d) &&
         same_shapes(a.decoder, b.decoder) && same_shapes(a.classifier, b.classifier);
}

}  // namespace

std::vector<unsigned char> encode_train_state(const TrainState& st) {
  binio::Writer w;
  w.magic("GSFT");
  w.u16(kTrainStateVersion);
  write_net(w, st.net);
  w.u8(st.extractor ? 1 : 0);
  if (st.extractor) {
    w.u8(static_cast<std::uint8_t>(st.extractor->activation));
    w.u8(st.extractor_frozen ? 1 : 0);
    write_stack(w, st.extractor->layers);
  }
  write_centers(w, st.centers);
  w.u64(st.opt.step);
  write_opt_stacks(w, st.opt.m);
  write_opt_stacks(w, st.opt.v);
  w.u64(st.opt.ext_step);
  write_stack(w, st.opt.ext_m);
  write_stack(w, st.opt.ext_v);
  std::ostringstream rng_text;
  rng_text << st.rng;
  w.str(rng_text.str());
  w.u32(static_cast<std::uint32_t>(st.epoch));
  w.f64(st.lr);
  w.u32(static_cast<std::uint32_t>(st.plateau_wait));
  w.f64(st.best_eval);
  w.u32(static_cast<std::uint32_t>(st.best_epoch));
  w.u32(static_cast<std::uint32_t>(st.convergence_epoch));
  return w.buffer();
}

TrainState decode_train_state(std::span<const unsigned char> bytes, const std::string& source) {
  binio::Reader r(bytes, source);
  r.expect_magic("GSFT");
  const std::size_t at = r.offset();
  if (r.u16() != kTrainStateVersion) r.error_at(at, "unsupported checkpoint version");
  TrainState st;
  st.net = read_net(r);
  const std::size_t ext_at = r.offset();
  const auto has_ext = r.u8();
  if (has_ext > 1) r.error_at(ext_at, "bad extractor flag");
  if (has_ext) {
    Extractor ex;
    const std::size_t act_at = r.offset();
    const auto act = r.u8();
    if (act > 1) r.error_at(act_at, "unknown activation code");
    ex.activation = static_cast<Activation>(act);
    st.extractor_frozen = r.u8() != 0;
    ex.layers = read_stack(r);
    st.extractor = std::move(ex);
  }
  st.centers = read_centers(r);
  st.opt.step = r.u64();
  const std::size_t opt_at = r.offset();
  st.opt.m = read_opt_stacks(r);
  st.opt.v = read_opt_stacks(r);
  st.opt.ext_step = r.u64();
  st.opt.ext_m = read_stack(r);
  st.opt.ext_v = read_stack(r);
  if (!same_shapes(st.opt.m, st.net.params) || !same_shapes(st.opt.v, st.net.params)) {
    r.error_at(opt_at, "optimizer moments do not match parameter shapes");
  }
  std::istringstream rng_text(r.str());
  rng_text >> st.rng;
  if (!rng_text) r.error_at(r.offset(), "corrupt rng state");
  st.epoch = static_cast<int>(r.u32());
  st.lr = r.f64();
  st.plateau_wait = static_cast<int>(r.u32());
  st.best_eval = r.f64();
  st.best_epoch = static_cast<int>(r.u32());
  st.convergence_epoch = static_cast<int>(r.u32());
  r.expect_end();
  return st;
}

void save_train_state(const TrainState& state, const std::string& path) {
  binio::write_file_atomic(path, encode_train_state(state));
}

TrainState load_train_state(const std::string& path) {
  const auto bytes = binio::read_file(path);
  return decode_train_state(bytes, path);
}

}  // namespace gsfl
