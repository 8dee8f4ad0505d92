#include "gsfl/evalab.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "gsfl/binio.hpp"

namespace gsfl {

double evaluate(const TrainState& state, const FeatureDataset& dataset) {
  if (dataset.num_classes != state.net.config.num_classes) {
    fail(ErrorKind::kConfig, "evaluate: dataset has " + std::to_string(dataset.num_classes) +
                                 " classes, model has " +
                                 std::to_string(state.net.config.num_classes));
  }
  return accuracy(state, dataset);
}

InferenceModel InferenceModel::from_state(const TrainState& state) {
  InferenceModel m;
  m.extractor_ = state.extractor;
  m.activation_ = state.net.config.activation;
  m.encoder_d_ = state.net.params.encoder_d;
  m.classifier_ = state.net.params.classifier;
  m.num_classes_ = state.net.config.num_classes;
  return m;
}

std::uint32_t InferenceModel::input_dim() const noexcept {
  const auto& first = extractor_ ? extractor_->layers.front() : encoder_d_.front();
  return static_cast<std::uint32_t>(first.weight.cols());
}

std::size_t InferenceModel::parameter_count() const noexcept {
  std::size_t n = 0;
  auto add = [&n](const LayerStack& s) {
    for (const auto& l : s) n += l.weight.size() + l.bias.size();
  };
  if (extractor_) add(extractor_->layers);
  add(encoder_d_);
  add(classifier_);
  return n;
}

Matrix InferenceModel::logits(const Matrix& x) const {
  if (x.cols() != input_dim()) {
    fail(ErrorKind::kShape, "input width " + std::to_string(x.cols()) + ", expected " +
                                std::to_string(input_dim()));
  }
  // Same calls, in the same order, as head_input + discriminative_logits.
  const Matrix y =
      extractor_ ? stack_forward(extractor_->layers, extractor_->activation, x, nullptr) : x;
  return stack_forward(classifier_, activation_, stack_forward(encoder_d_, activation_, y, nullptr),
                       nullptr);
}

std::vector<int> InferenceModel::predict(const Matrix& x) const {
  const Matrix z = logits(x);
  std::vector<int> out(z.rows());
  for (std::size_t b = 0; b < z.rows(); ++b) {
    const auto r = z.row(b);
    out[b] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin()) + 1;
  }
  return out;
}

double InferenceModel::evaluate(const FeatureDataset& dataset) const {
  if (dataset.num_classes != num_classes_) {
    fail(ErrorKind::kConfig, "evaluate: dataset has " + std::to_string(dataset.num_classes) +
                                 " classes, model has " + std::to_string(num_classes_));
  }
  if (dataset.size() == 0) return 0.0;
  const auto pred = predict(dataset.features());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == dataset.samples[i].label;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

Matrix InferenceModel::reconstruct(const Matrix&) const {
  fail(ErrorKind::kCapability,
       "exported inference model has no decoder; reconstruction needs the full checkpoint");
}

namespace {
constexpr std::uint16_t kInferenceVersion = 1;
}

std::vector<unsigned char> InferenceModel::encode() const {
  binio::Writer w;
  w.magic("GSFI");
  w.u16(kInferenceVersion);
  w.u32(num_classes_);
  w.u8(static_cast<std::uint8_t>(activation_));
  w.u8(extractor_ ? 1 : 0);
  if (extractor_) {
    w.u8(static_cast<std::uint8_t>(extractor_->activation));
    write_stack(w, extractor_->layers);
  }
  write_stack(w, encoder_d_);
  write_stack(w, classifier_);
  return w.buffer();
}

InferenceModel InferenceModel::decode(std::span<const unsigned char> bytes,
                                      const std::string& source) {
  binio::Reader r(bytes, source);
  r.expect_magic("GSFI");
  const std::size_t at = r.offset();
  if (r.u16() != kInferenceVersion) r.error_at(at, "unsupported inference model version");
  InferenceModel m;
  m.num_classes_ = r.u32();
  const std::size_t act_at = r.offset();
  const auto act = r.u8();
  if (act > 1) r.error_at(act_at, "unknown activation code");
  m.activation_ = static_cast<Activation>(act);
  const std::size_t ext_at = r.offset();
  const auto has_ext = r.u8();
  if (has_ext > 1) r.error_at(ext_at, "bad extractor flag");
  if (has_ext) {
    Extractor ex;
    const auto eact = r.u8();
    if (eact > 1) r.error_at(r.offset() - 1, "unknown activation code");
    ex.activation = static_cast<Activation>(eact);
    ex.layers = read_stack(r);
    m.extractor_ = std::move(ex);
  }
  const std::size_t enc_at = r.offset();
  m.encoder_d_ = read_stack(r);
  m.classifier_ = read_stack(r);
  if (m.encoder_d_.empty() || m.classifier_.empty()) r.error_at(enc_at, "empty layer stack");
  if (m.classifier_.back().weight.rows() != m.num_classes_) {
    r.error_at(enc_at, "classifier width disagrees with class count");
  }
  r.expect_end();
  return m;
}

void export_inference(const TrainState& state, const std::string& path) {
  binio::write_file_atomic(path, InferenceModel::from_state(state).encode());
}

InferenceModel load_inference(const std::string& path) {
  const auto bytes = binio::read_file(path);
  return InferenceModel::decode(bytes, path);
}

const char* to_string(Variant v) noexcept {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kDisOnly: return "dis_only";
    case Variant::kPlain: return "plain";
  }
  return "?";
}

const char* to_string(GroupSource g) noexcept {
  switch (g) {
    case GroupSource::kKmeans: return "kmeans";
    case GroupSource::kRandom: return "random";
    case GroupSource::kSingle: return "single";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "full") return Variant::kFull;
  if (s == "dis_only") return Variant::kDisOnly;
  if (s == "plain") return Variant::kPlain;
  fail(ErrorKind::kUsage, "unknown variant \"" + s + "\" (full|dis_only|plain)");
}

GroupSource parse_group_source(const std::string& s) {
  if (s == "kmeans") return GroupSource::kKmeans;
  if (s == "random") return GroupSource::kRandom;
  if (s == "single") return GroupSource::kSingle;
  fail(ErrorKind::kUsage, "unknown group source \"" + s + "\" (kmeans|random|single)");
}

void AblationSpec::validate() const {
  if (seeds.empty()) fail(ErrorKind::kParameter, "ablation " + name + ": no seeds");
  if (num_groups == 0) fail(ErrorKind::kParameter, "ablation " + name + ": num_groups must be >= 1");
  if (group_source == GroupSource::kSingle && num_groups != 1) {
    fail(ErrorKind::kParameter, "ablation " + name + ": single grouping requires num_groups = 1");
  }
  if (kmeans_max_iters < 1) fail(ErrorKind::kParameter, "ablation " + name + ": kmeans_max_iters");
}

VariantSetup variant_setup(const AblationSpec& spec, const TrainConfig& base) {
  VariantSetup out;
  const auto& w = base.loss_weights;
  out.weights.weight_decay = w.weight_decay;
  out.eta = base.eta;
  switch (spec.variant) {
    case Variant::kFull:
      out.topology = Topology::kFull;
      out.weights.alpha1 = spec.loss_toggles[0] ? w.alpha1 : 0.0;
      out.weights.alpha2 = spec.loss_toggles[1] ? w.alpha2 : 0.0;
      out.weights.alpha3 = spec.loss_toggles[2] ? w.alpha3 : 0.0;
      break;
    case Variant::kDisOnly:
      // No Encoder.S or Decoder, so the reconstruction and shared terms go too.
      out.topology = Topology::kDiscriminativeOnly;
      out.weights.alpha1 = 0.0;
      out.weights.alpha2 = spec.loss_toggles[1] ? w.alpha2 : 0.0;
      out.weights.alpha3 = 0.0;
      break;
    case Variant::kPlain:
      out.topology = Topology::kDiscriminativeOnly;
      out.weights.alpha1 = out.weights.alpha2 = out.weights.alpha3 = 0.0;
      out.eta = 0.0;
      break;
  }
  return out;
}

FeatureDataset restrict_classes(const FeatureDataset& dataset, std::span<const int> subset) {
  std::vector<int> remap(dataset.num_classes + 1, 0);
  for (std::size_t i = 0; i < subset.size(); ++i) {
    const int c = subset[i];
    if (c < 1 || static_cast<std::uint32_t>(c) > dataset.num_classes) {
      fail(ErrorKind::kParameter, "class subset entry " + std::to_string(c) + " out of range");
    }
    if (remap[static_cast<std::size_t>(c)] != 0) {
      fail(ErrorKind::kParameter, "class subset lists " + std::to_string(c) + " twice");
    }
    remap[static_cast<std::size_t>(c)] = static_cast<int>(i) + 1;
  }
  FeatureDataset out;
  out.dim = dataset.dim;
  out.num_classes = static_cast<std::uint32_t>(subset.size());
  out.split = dataset.split;
  for (const auto& s : dataset.samples) {
    const int nl = remap[static_cast<std::size_t>(s.label)];
    if (nl == 0) continue;
    out.samples.push_back({s.values, nl});
  }
  return out;
}

std::vector<std::vector<int>> class_growth_subsets(std::uint32_t num_classes,
                                                   std::span<const std::uint32_t> sizes,
                                                   std::uint64_t seed) {
  std::vector<int> order(num_classes);
  std::iota(order.begin(), order.end(), 1);
  auto rng = make_rng(seed, "evalab.class_order");
  shuffle_in_place(order, rng);
  std::vector<std::vector<int>> out;
  for (auto n : sizes) {
    if (n == 0 || n > num_classes) {
      fail(ErrorKind::kParameter, "class growth size " + std::to_string(n) + " out of range");
    }
    out.emplace_back(order.begin(), order.begin() + n);
  }
  return out;
}

GroupAssignment make_groups(const AblationSpec& spec, const FeatureDataset& train_set,
                            std::uint64_t seed) {
  // Variants without a shared path never read s_j; one group keeps them cheap.
  if (spec.variant != Variant::kFull || spec.group_source == GroupSource::kSingle) {
    return single_group(train_set.num_classes);
  }
  if (spec.group_source == GroupSource::kRandom) {
    return random_groups(train_set.num_classes, spec.num_groups,
                         derive_seed(seed, "evalab.random_groups"));
  }
  const auto cluster = kmeans(train_set, spec.num_groups, derive_seed(seed, "evalab.kmeans"),
                              spec.kmeans_max_iters);
  return assign_groups(cluster, train_set.labels(), train_set.num_classes);
}

bool EvalReport::operator==(const EvalReport& o) const {
  if (seeds.size() != o.seeds.size() || mean_accuracy != o.mean_accuracy ||
      stddev_accuracy != o.stddev_accuracy || mean_convergence_epoch != o.mean_convergence_epoch) {
    return false;
  }
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const auto& a = seeds[i];
    const auto& b = o.seeds[i];
    if (a.seed != b.seed || a.accuracy != b.accuracy || a.convergence_epoch != b.convergence_epoch ||
        a.best_eval != b.best_eval || a.first_epoch_loss != b.first_epoch_loss ||
        a.final_epoch_loss != b.final_epoch_loss || a.num_groups != b.num_groups) {
      return false;
    }
  }
  return true;
}

EvalReport run_ablation(const AblationSpec& spec, const TrainConfig& base,
                        const FeatureDataset& train_set, const FeatureDataset& test_set) {
  spec.validate();
  const FeatureDataset train_data =
      spec.class_subset.empty() ? train_set : restrict_classes(train_set, spec.class_subset);
  const FeatureDataset test_data =
      spec.class_subset.empty() ? test_set : restrict_classes(test_set, spec.class_subset);
  const VariantSetup setup = variant_setup(spec, base);

  EvalReport report;
  report.spec = spec;
  for (const auto seed : spec.seeds) {
    const GroupAssignment groups = make_groups(spec, train_data, seed);
    TrainConfig cfg = base;
    cfg.seed = seed;
    cfg.loss_weights = setup.weights;
    cfg.eta = setup.eta;
    cfg.net.topology = setup.topology;
    const TrainResult res = train(cfg, train_data, test_data, groups);

    SeedResult r;
    r.seed = seed;
    r.accuracy = evaluate(res.state, test_data);
    r.convergence_epoch = res.state.convergence_epoch;
    r.best_eval = res.state.best_eval;
    r.num_groups = groups.num_groups;
    if (!res.log.epochs.empty()) {
      r.first_epoch_loss = res.log.epochs.front().mean_total;
      r.final_epoch_loss = res.log.epochs.back().mean_total;
    }
    report.seeds.push_back(r);
  }

  const double n = static_cast<double>(report.seeds.size());
  double acc_sum = 0.0;
  double conv_sum = 0.0;
  for (const auto& r : report.seeds) {
    acc_sum += r.accuracy;
    conv_sum += r.convergence_epoch;
  }
  report.mean_accuracy = acc_sum / n;
  report.mean_convergence_epoch = conv_sum / n;
  if (report.seeds.size() > 1) {
    double ss = 0.0;
    for (const auto& r : report.seeds) {
      ss += (r.accuracy - report.mean_accuracy) * (r.accuracy - report.mean_accuracy);
    }
    report.stddev_accuracy = std::sqrt(ss / (n - 1.0));
  }
  return report;
}

namespace {

GroupSource effective_source(const AblationSpec& s) {
  return s.variant == Variant::kFull ? s.group_source : GroupSource::kSingle;
}

}  // namespace

std::string reports_to_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  out.precision(17);
  out << "run,variant,groups,N_g,a1,a2,a3,classes,seed,accuracy,convergence_epoch,first_loss,"
         "final_loss\n";
  for (const auto& rep : reports) {
    const auto& s = rep.spec;
    for (const auto& r : rep.seeds) {
      out << s.name << "," << to_string(s.variant) << "," << to_string(effective_source(s)) << ","
          << r.num_groups << "," << s.loss_toggles[0] << "," << s.loss_toggles[1] << ","
          << s.loss_toggles[2] << ","
          << (s.class_subset.empty() ? std::string("all") : std::to_string(s.class_subset.size()))
          << "," << r.seed << "," << r.accuracy << "," << r.convergence_epoch << ","
          << r.first_epoch_loss << "," << r.final_epoch_loss << "\n";
    }
  }
  return out.str();
}

std::string reports_to_table(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-20s %-9s %-7s %4s %-6s %6s %10s %8s %6s\n", "run", "variant",
                "groups", "N_g", "terms", "seeds", "acc(%)", "std(%)", "conv");
  out << line;
  for (const auto& rep : reports) {
    const auto& s = rep.spec;
    std::string terms;
    for (bool t : s.loss_toggles) terms += t ? '1' : '0';
    std::snprintf(line, sizeof line, "%-20s %-9s %-7s %4u %-6s %6zu %10.2f %8.2f %6.1f\n",
                  s.name.c_str(), to_string(s.variant), to_string(effective_source(s)),
                  rep.seeds.empty() ? s.num_groups : rep.seeds.front().num_groups,
                  terms.c_str(), rep.seeds.size(), 100.0 * rep.mean_accuracy,
                  100.0 * rep.stddev_accuracy, rep.mean_convergence_epoch);
    out << line;
  }
  return out.str();
}

}  // namespace gsfl
