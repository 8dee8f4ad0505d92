#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "gsfl/evalab.hpp"
#include "test_support.hpp"

using namespace gsfl;

namespace {

template <class F>
ErrorKind kind_of(F&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no gsfl::Error thrown";
  return ErrorKind::kUsage;
}

SyntheticSpec spec_for(std::uint64_t seed) {
  SyntheticSpec s;
  s.num_classes = 6;
  s.num_groups = 2;
  s.dim = 8;
  s.per_class_count = 15;
  s.noise_scale = 1.0;
  s.seed = seed;
  return s;
}

TrainConfig base_config() {
  TrainConfig c;
  c.batch_size = 16;
  c.epochs = 6;
  c.lr = 5e-3;
  c.net.hidden_dims = {12};
  return c;
}

TrainState trained_state(std::uint64_t seed, bool with_extractor = false) {
  auto cfg = base_config();
  cfg.seed = seed;
  if (with_extractor) cfg.extractor.out_dim = 5;
  const auto ds = generate_synthetic(spec_for(seed));
  GroupAssignment g;
  g.num_groups = 2;
  for (int c = 1; c <= 6; ++c) g.class_to_group.push_back(synthetic_group_of(c, 2));
  return train(cfg, ds, ds, g).state;
}

// Reference prediction through the whole network, not the inference shortcut.
std::vector<int> full_forward_argmax(const TrainState& st, const Matrix& x) {
  const auto rec = forward(st.net, head_input(st, x));
  std::vector<int> out;
  for (std::size_t b = 0; b < rec.logits.rows(); ++b) {
    int best = 0;
    for (std::size_t c = 1; c < rec.logits.cols(); ++c) {
      if (rec.logits(b, c) > rec.logits(b, static_cast<std::size_t>(best))) best = static_cast<int>(c);
    }
    out.push_back(best + 1);
  }
  return out;
}

}  // namespace

TEST(Evaluate, PerfectAndZero) {
  const auto st = trained_state(1);
  auto ds = generate_synthetic(spec_for(1), Split::kTest);
  const auto pred = predict(st, ds.features());
  for (std::size_t i = 0; i < ds.size(); ++i) ds.samples[i].label = pred[i];
  EXPECT_EQ(evaluate(st, ds), 1.0);
  for (std::size_t i = 0; i < ds.size(); ++i) ds.samples[i].label = pred[i] % 6 + 1;
  EXPECT_EQ(evaluate(st, ds), 0.0);
}

TEST(Evaluate, MatchesFullForwardArgmax) {
  const auto st = trained_state(2);
  std::mt19937_64 gen(2);
  const auto ds = testutil::random_dataset(1000, 8, 6, gen);
  const auto ref = full_forward_argmax(st, ds.features());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) hits += ref[i] == ds.samples[i].label;
  EXPECT_EQ(evaluate(st, ds), static_cast<double>(hits) / 1000.0);
  EXPECT_EQ(predict(st, ds.features()), ref);
}

TEST(Evaluate, ClassCountMismatchIsConfigError) {
  const auto st = trained_state(3);
  auto s = spec_for(3);
  s.num_classes = 5;
  const auto ds = generate_synthetic(s);
  EXPECT_EQ(kind_of([&] { evaluate(st, ds); }), ErrorKind::kConfig);
  EXPECT_EQ(kind_of([&] { InferenceModel::from_state(st).evaluate(ds); }), ErrorKind::kConfig);
}

TEST(Evaluate, OrderInvariant) {
  const auto st = trained_state(4);
  auto ds = generate_synthetic(spec_for(4), Split::kTest);
  const double a = evaluate(st, ds);
  std::mt19937_64 gen(4);
  std::shuffle(ds.samples.begin(), ds.samples.end(), gen);
  EXPECT_EQ(evaluate(st, ds), a);
}

TEST(Export, LogitsBitIdentical) {
  for (bool ext : {false, true}) {
    const auto st = trained_state(5, ext);
    testutil::TempDir dir;
    save_train_state(st, dir.file("full.ckpt"));
    export_inference(st, dir.file("model.gsfi"));
    const auto model = load_inference(dir.file("model.gsfi"));
    std::mt19937_64 gen(5);
    const Matrix x = testutil::random_matrix(100, 8, gen, 3.0);
    const Matrix ref = discriminative_logits(st.net, head_input(st, x));
    EXPECT_EQ(model.logits(x), ref);
    EXPECT_EQ(model.predict(x), predict(st, x));
    EXPECT_LT(std::filesystem::file_size(dir.file("model.gsfi")),
              std::filesystem::file_size(dir.file("full.ckpt")));
    std::size_t kept = 0;
    for (const auto* stack : {&st.net.params.encoder_d, &st.net.params.classifier}) {
      for (const auto& l : *stack) kept += l.weight.size() + l.bias.size();
    }
    if (ext) {
      for (const auto& l : st.extractor->layers) kept += l.weight.size() + l.bias.size();
    }
    EXPECT_EQ(model.parameter_count(), kept);
  }
}

TEST(Export, NoReconstruction) {
  const auto model = InferenceModel::from_state(trained_state(6));
  EXPECT_EQ(kind_of([&] { model.reconstruct(Matrix(1, 8)); }), ErrorKind::kCapability);
  EXPECT_EQ(kind_of([&] { model.logits(Matrix(1, 7)); }), ErrorKind::kShape);
}

TEST(Export, DecodeRejectsGarbage) {
  auto bytes = InferenceModel::from_state(trained_state(7)).encode();
  EXPECT_EQ(InferenceModel::decode(bytes, "m").encode(), bytes);
  auto bad = bytes;
  bad[1] = 'Z';
  EXPECT_EQ(kind_of([&] { InferenceModel::decode(bad, "m"); }), ErrorKind::kFormat);
  bytes.push_back(0);
  EXPECT_EQ(kind_of([&] { InferenceModel::decode(bytes, "m"); }), ErrorKind::kFormat);
}

TEST(Variants, Setup) {
  TrainConfig base;
  base.loss_weights = {0.1, 0.2, 0.3, 1e-3};
  base.eta = 0.05;
  AblationSpec s;
  s.loss_toggles = {true, false, true};
  auto v = variant_setup(s, base);
  EXPECT_EQ(v.topology, Topology::kFull);
  EXPECT_EQ(v.weights, (LossWeights{0.1, 0.0, 0.3, 1e-3}));
  EXPECT_EQ(v.eta, 0.05);

  s.variant = Variant::kDisOnly;
  s.loss_toggles = {true, true, true};
  v = variant_setup(s, base);
  EXPECT_EQ(v.topology, Topology::kDiscriminativeOnly);
  EXPECT_EQ(v.weights, (LossWeights{0.0, 0.2, 0.0, 1e-3}));
  EXPECT_EQ(v.eta, 0.05);

  s.variant = Variant::kPlain;
  v = variant_setup(s, base);
  EXPECT_EQ(v.topology, Topology::kDiscriminativeOnly);
  EXPECT_EQ(v.weights, (LossWeights{0.0, 0.0, 0.0, 1e-3}));
  EXPECT_EQ(v.eta, 0.0);
}

TEST(Variants, DisOnlyHasNoSharedPath) {
  NetConfig nc;
  nc.input_dim = 8;
  nc.num_classes = 4;
  nc.hidden_dims = {6};
  const auto full = init_net(nc);
  nc.topology = Topology::kDiscriminativeOnly;
  const auto dis = init_net(nc);
  EXPECT_TRUE(dis.params.encoder_s.empty());
  EXPECT_TRUE(dis.params.decoder.empty());
  EXPECT_EQ(dis.params.encoder_d, full.params.encoder_d);
  EXPECT_EQ(dis.params.classifier, full.params.classifier);
  EXPECT_LT(parameter_count(dis.params), parameter_count(full.params));
}

TEST(Variants, ParseNames) {
  EXPECT_EQ(parse_variant("dis_only"), Variant::kDisOnly);
  EXPECT_EQ(parse_group_source("random"), GroupSource::kRandom);
  EXPECT_EQ(kind_of([] { parse_variant("full "); }), ErrorKind::kUsage);
  EXPECT_EQ(kind_of([] { parse_group_source("kmean"); }), ErrorKind::kUsage);
}

TEST(Classes, RestrictRelabelsInListOrder) {
  const auto ds = generate_synthetic(spec_for(8));
  const std::vector<int> subset{5, 2};
  const auto r = restrict_classes(ds, subset);
  EXPECT_EQ(r.num_classes, 2u);
  EXPECT_EQ(r.size(), 30u);
  std::size_t k = 0;
  for (const auto& s : ds.samples) {
    if (s.label != 5 && s.label != 2) continue;
    EXPECT_EQ(r.samples[k].values, s.values);
    EXPECT_EQ(r.samples[k].label, s.label == 5 ? 1 : 2);
    ++k;
  }
  const std::vector<int> dup{1, 1};
  EXPECT_EQ(kind_of([&] { restrict_classes(ds, dup); }), ErrorKind::kParameter);
  const std::vector<int> out{7};
  EXPECT_EQ(kind_of([&] { restrict_classes(ds, out); }), ErrorKind::kParameter);
}

TEST(Classes, GrowthSubsetsAreNested) {
  const std::vector<std::uint32_t> sizes{2, 4, 7, 10};
  const auto subsets = class_growth_subsets(10, sizes, 3);
  ASSERT_EQ(subsets.size(), 4u);
  for (std::size_t i = 0; i < subsets.size(); ++i) {
    EXPECT_EQ(subsets[i].size(), sizes[i]);
    EXPECT_EQ(std::set<int>(subsets[i].begin(), subsets[i].end()).size(), sizes[i]);
    if (i > 0) {
      EXPECT_TRUE(std::equal(subsets[i - 1].begin(), subsets[i - 1].end(), subsets[i].begin()));
    }
  }
  EXPECT_EQ(class_growth_subsets(10, sizes, 3), subsets);
  const std::vector<std::uint32_t> bad{11};
  EXPECT_EQ(kind_of([&] { class_growth_subsets(10, bad, 3); }), ErrorKind::kParameter);
}

TEST(Ablation, Deterministic) {
  const auto tr = generate_synthetic(spec_for(9));
  const auto te = generate_synthetic(spec_for(9), Split::kTest);
  AblationSpec s;
  s.num_groups = 2;
  s.seeds = {1, 2};
  const auto a = run_ablation(s, base_config(), tr, te);
  const auto b = run_ablation(s, base_config(), tr, te);
  EXPECT_EQ(a, b);
  EXPECT_EQ(reports_to_csv({a}), reports_to_csv({b}));
  EXPECT_EQ(a.seeds.size(), 2u);
  EXPECT_EQ(a.seeds[0].num_groups, 2u);
}

TEST(Ablation, SummaryStatistics) {
  const auto tr = generate_synthetic(spec_for(10));
  AblationSpec s;
  s.variant = Variant::kPlain;
  s.seeds = {1, 2, 3};
  const auto r = run_ablation(s, base_config(), tr, tr);
  double mean = 0.0;
  for (const auto& x : r.seeds) mean += x.accuracy;
  mean /= 3.0;
  double ss = 0.0;
  for (const auto& x : r.seeds) ss += (x.accuracy - mean) * (x.accuracy - mean);
  EXPECT_NEAR(r.mean_accuracy, mean, 1e-15);
  EXPECT_NEAR(r.stddev_accuracy, std::sqrt(ss / 2.0), 1e-15);
  EXPECT_EQ(r.seeds[0].num_groups, 1u);
}

TEST(Ablation, FullWithTermsOffMatchesPlain) {
  // With every auxiliary weight and eta at zero the extra branches only see
  // weight decay, which never reaches Encoder.D or the classifier.
  const auto tr = generate_synthetic(spec_for(11));
  const auto te = generate_synthetic(spec_for(11), Split::kTest);
  auto base = base_config();
  base.eta = 0.0;
  AblationSpec full;
  full.num_groups = 2;
  full.loss_toggles = {false, false, false};
  full.seeds = {4, 5};
  AblationSpec plain = full;
  plain.variant = Variant::kPlain;
  const auto a = run_ablation(full, base, tr, te);
  const auto b = run_ablation(plain, base, tr, te);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(a.seeds[i].accuracy, b.seeds[i].accuracy, 0.02);
  }
}

TEST(Ablation, ClassSubsetAndCsv) {
  const auto tr = generate_synthetic(spec_for(12));
  AblationSpec s;
  s.name = "sub";
  s.variant = Variant::kDisOnly;
  s.class_subset = {1, 3, 5};
  s.seeds = {7, 8};
  auto base = base_config();
  base.epochs = 2;
  const auto r = run_ablation(s, base, tr, tr);
  const std::string csv = reports_to_csv({r, r});
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 4);
  EXPECT_NE(csv.find("sub,dis_only,single,1,1,1,1,3,7,"), std::string::npos);
  const std::string table = reports_to_table({r});
  EXPECT_NE(table.find("dis_only"), std::string::npos);
}

TEST(Ablation, SpecValidation) {
  const auto tr = generate_synthetic(spec_for(13));
  AblationSpec s;
  s.seeds.clear();
  EXPECT_EQ(kind_of([&] { run_ablation(s, base_config(), tr, tr); }), ErrorKind::kParameter);
  s.seeds = {1};
  s.group_source = GroupSource::kSingle;
  s.num_groups = 3;
  EXPECT_EQ(kind_of([&] { run_ablation(s, base_config(), tr, tr); }), ErrorKind::kParameter);
}
