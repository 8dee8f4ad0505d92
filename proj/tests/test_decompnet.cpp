#include <gtest/gtest.h>

#include <cmath>

#include "gsfl/decompnet.hpp"
#include "gsfl/losses.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace gsfl;

namespace {

NetConfig small_config(Activation act = Activation::kRectifier) {
  NetConfig c;
  c.input_dim = 6;
  c.code_dim = 4;
  c.hidden_dims = {8};
  c.num_classes = 3;
  c.activation = act;
  c.init_seed = 17;
  return c;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::kUsage;
}

bool all_zero(const LayerStack& s) {
  for (const auto& l : s) {
    for (double v : l.weight.flat()) {
      if (v != 0.0) return false;
    }
    for (double v : l.bias) {
      if (v != 0.0) return false;
    }
  }
  return true;
}

// Random centers and a net nudged off its init so biases are nonzero.
struct Fixture {
  DecompositionNet net;
  Matrix y;
  std::vector<int> labels;
  CenterState centers;
  GroupAssignment groups;
};

Fixture make_fixture(std::uint64_t seed, Activation act = Activation::kRectifier,
                     Topology topo = Topology::kFull) {
  Fixture f;
  auto cfg = small_config(act);
  cfg.init_seed = seed;
  cfg.topology = topo;
  f.net = init_net(cfg);
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd(0.0, 0.1);
  for (auto& b : param_blocks(f.net.params)) {
    if (!b.is_weight) {
      for (double& v : b.values) v = nd(gen);
    }
  }
  f.y = testutil::random_matrix(5, 6, gen);
  f.labels = {1, 2, 3, 1, 2};
  f.centers = init_centers(3, 2, 4, 0.01);
  f.centers.m = testutil::random_matrix(3, 4, gen);
  f.centers.s = testutil::random_matrix(2, 4, gen);
  f.groups = parse_groups("groups 2\n1 1\n2 2\n3 1\n", "t");
  return f;
}

}  // namespace

TEST(Init, DeterministicPerSeed) {
  EXPECT_EQ(init_net(small_config()), init_net(small_config()));
  auto other = small_config();
  other.init_seed = 18;
  EXPECT_FALSE(init_net(small_config()) == init_net(other));
}

TEST(Init, EmptyHiddenGivesSingleAffineLayers) {
  auto c = small_config();
  c.hidden_dims = {};
  const auto net = init_net(c);
  EXPECT_EQ(net.params.encoder_s.size(), 1u);
  EXPECT_EQ(net.params.encoder_d.size(), 1u);
  EXPECT_EQ(net.params.decoder.size(), 1u);
  EXPECT_EQ(net.params.classifier.size(), 1u);
}

TEST(Init, ShapesChain) {
  const auto net = init_net(small_config());
  EXPECT_EQ(net.params.encoder_d[0].weight.cols(), 6u);
  EXPECT_EQ(net.params.encoder_d[0].weight.rows(), 8u);
  EXPECT_EQ(net.params.encoder_d[1].weight.rows(), 4u);
  // Decoder reads d_f wide codes (the sum), not 2*d_f.
  EXPECT_EQ(net.params.decoder[0].weight.cols(), 4u);
  EXPECT_EQ(net.params.decoder.back().weight.rows(), 6u);
  EXPECT_EQ(net.params.classifier[0].weight.cols(), 4u);
  EXPECT_EQ(net.params.classifier[0].weight.rows(), 3u);
  for (const auto& b : param_blocks(const_cast<NetParams&>(net.params))) {
    if (!b.is_weight) {
      for (double v : b.values) EXPECT_EQ(v, 0.0);
    }
  }
}

TEST(Init, CodeDimDefaultsToInput) {
  auto c = small_config();
  c.code_dim = 0;
  const auto net = init_net(c);
  EXPECT_EQ(net.params.encoder_d.back().weight.rows(), 6u);
}

TEST(Init, VarianceMatchesScalingRule) {
  for (auto act : {Activation::kRectifier, Activation::kTanh}) {
    Rng rng = make_rng(5, "init-test");
    const std::vector<std::uint32_t> widths{512, 512};
    const auto stack = init_stack(widths, act, rng);
    const auto w = stack[0].weight.flat();
    double mean = 0.0;
    for (double v : w) mean += v;
    mean /= static_cast<double>(w.size());
    double var = 0.0;
    for (double v : w) var += (v - mean) * (v - mean);
    var /= static_cast<double>(w.size() - 1);
    const double target = act == Activation::kRectifier ? 2.0 / 512.0 : 2.0 / (512.0 + 512.0);
    EXPECT_DOUBLE_EQ(init_weight_variance(act, 512, 512), target);
    EXPECT_NEAR(var, target, 0.2 * target);
  }
}

TEST(Init, ZeroDimensionRejected) {
  auto c = small_config();
  c.hidden_dims = {0};
  EXPECT_EQ(kind_of([&] { init_net(c); }), ErrorKind::kParameter);
  c = small_config();
  c.num_classes = 0;
  EXPECT_EQ(kind_of([&] { init_net(c); }), ErrorKind::kParameter);
}

TEST(Forward, ZeroInputGivesUniformProbs) {
  const auto net = init_net(small_config());
  const auto rec = forward(net, Matrix(2, 6));
  for (double p : rec.probs.flat()) EXPECT_DOUBLE_EQ(p, 1.0 / 3.0);
}

TEST(Forward, RowsAreBatchIndependent) {
  const auto f = make_fixture(3);
  std::mt19937_64 gen(1);
  const auto big = testutil::random_matrix(32, 6, gen);
  const auto all = forward(f.net, big);
  Matrix one(1, 6);
  std::copy(big.row(17).begin(), big.row(17).end(), one.row(0).begin());
  const auto single = forward(f.net, one);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(single.logits(0, c), all.logits(17, c));
  for (std::size_t k = 0; k < 6; ++k) EXPECT_EQ(single.y_hat(0, k), all.y_hat(17, k));
}

TEST(Forward, ProbsNormalizedAndDecodedFromSum) {
  const auto f = make_fixture(4);
  const auto rec = forward(f.net, f.y);
  for (std::size_t b = 0; b < rec.probs.rows(); ++b) {
    double s = 0.0;
    for (double p : rec.probs.row(b)) {
      EXPECT_GE(p, 0.0);
      s += p;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  Matrix z = rec.y_shd;
  for (std::size_t i = 0; i < z.size(); ++i) z.flat()[i] += rec.y_dis.flat()[i];
  EXPECT_EQ(stack_forward(f.net.params.decoder, f.net.config.activation, z, nullptr), rec.y_hat);
}

TEST(Forward, SoftmaxStableForHugeLogits) {
  const auto p = softmax_rows(testutil::matrix_of(2, 3, {1e4, -1e4, 0.0, -1e4, -1e4, -1e4}));
  EXPECT_TRUE(all_finite(p.flat()));
  EXPECT_DOUBLE_EQ(p(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(p(1, 0), 1.0 / 3.0);
}

TEST(Forward, WidthMismatch) {
  const auto net = init_net(small_config());
  EXPECT_EQ(kind_of([&] { forward(net, Matrix(1, 5)); }), ErrorKind::kShape);
}

TEST(Forward, DiscriminativeLogitsMatchFullForward) {
  const auto f = make_fixture(6);
  EXPECT_EQ(discriminative_logits(f.net, f.y), forward(f.net, f.y).logits);
}

TEST(Backward, ZeroCotangentsGiveZeroGradients) {
  const auto f = make_fixture(7);
  const auto rec = forward(f.net, f.y);
  const auto br = backward(f.net, rec, Matrix(5, 4), Matrix(5, 4), Matrix(5, 6), Matrix(5, 3));
  EXPECT_TRUE(all_zero(br.grads.encoder_s));
  EXPECT_TRUE(all_zero(br.grads.encoder_d));
  EXPECT_TRUE(all_zero(br.grads.decoder));
  EXPECT_TRUE(all_zero(br.grads.classifier));
}

TEST(Backward, LogitsOnlyLeavesSharedPathUntouched) {
  const auto f = make_fixture(8);
  const auto rec = forward(f.net, f.y);
  std::mt19937_64 gen(2);
  const auto g = testutil::random_matrix(5, 3, gen);
  const auto br = backward(f.net, rec, Matrix(5, 4), Matrix(5, 4), Matrix(5, 6), g);
  EXPECT_TRUE(all_zero(br.grads.encoder_s));
  EXPECT_TRUE(all_zero(br.grads.decoder));
  EXPECT_FALSE(all_zero(br.grads.encoder_d));
  EXPECT_FALSE(all_zero(br.grads.classifier));
}

TEST(Backward, MissingCacheIsStateError) {
  const auto f = make_fixture(9);
  const auto rec = forward(f.net, f.y, false);
  EXPECT_EQ(kind_of([&] {
              backward(f.net, rec, Matrix(5, 4), Matrix(5, 4), Matrix(5, 6), Matrix(5, 3));
            }),
            ErrorKind::kState);
}

TEST(Backward, CotangentShapeChecked) {
  const auto f = make_fixture(9);
  const auto rec = forward(f.net, f.y);
  EXPECT_EQ(kind_of([&] {
              backward(f.net, rec, Matrix(5, 4), Matrix(5, 3), Matrix(5, 6), Matrix(5, 3));
            }),
            ErrorKind::kShape);
}

TEST(Backward, FiniteDifferencesAgreeAcrossSeedsAndActivations) {
  LossWeights w{0.01, 0.01, 0.01, 1e-4};
  for (auto act : {Activation::kRectifier, Activation::kTanh}) {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
      const auto f = make_fixture(seed, act);
      const auto r =
          oracle::finite_difference_check(f.net, f.y, f.labels, f.centers, f.groups, w);
      EXPECT_LE(r.max_rel_error, 1e-4) << "seed " << seed;
      EXPECT_EQ(r.checked, parameter_count(f.net.params));
    }
  }
}

TEST(Backward, FiniteDifferencesWithLargeWeightsAndMeanReduction) {
  LossWeights w{0.5, 0.7, 0.3, 1e-2};
  const auto f = make_fixture(11, Activation::kTanh);
  const auto r = oracle::finite_difference_check(f.net, f.y, f.labels, f.centers, f.groups, w,
                                                 1e-5, CenterReduction::kMean);
  EXPECT_LE(r.max_rel_error, 1e-4);
}

TEST(Backward, FiniteDifferencesDiscriminativeOnly) {
  LossWeights w{0.0, 0.01, 0.0, 1e-4};
  const auto f = make_fixture(12, Activation::kRectifier, Topology::kDiscriminativeOnly);
  EXPECT_TRUE(f.net.params.encoder_s.empty());
  EXPECT_TRUE(f.net.params.decoder.empty());
  const auto r = oracle::finite_difference_check(f.net, f.y, f.labels, f.centers, f.groups, w);
  EXPECT_LE(r.max_rel_error, 1e-4);
}

TEST(Backward, InputGradientMatchesFiniteDifferences) {
  LossWeights w{0.01, 0.01, 0.01, 0.0};
  auto f = make_fixture(13, Activation::kTanh);
  const auto rec = forward(f.net, f.y);
  const auto tl = total_loss(f.net, rec, f.labels, f.centers, f.groups, w);
  const auto br = backward(f.net, rec, tl.grad_y_shd, tl.grad_y_dis, tl.grad_y_hat, tl.grad_logits);
  const double h = 1e-5;
  for (std::size_t i = 0; i < f.y.size(); ++i) {
    Matrix up = f.y, down = f.y;
    up.flat()[i] += h;
    down.flat()[i] -= h;
    const double lu = total_loss(f.net, forward(f.net, up, false), f.labels, f.centers, f.groups, w)
                          .breakdown.total;
    const double ld =
        total_loss(f.net, forward(f.net, down, false), f.labels, f.centers, f.groups, w)
            .breakdown.total;
    const double analytic = br.grad_input.flat()[i] + tl.grad_y.flat()[i];
    EXPECT_LE(oracle::relative_error(analytic, (lu - ld) / (2 * h)), 1e-4);
  }
}

TEST(Serialization, NetRoundTrip) {
  testutil::TempDir dir;
  const auto f = make_fixture(14, Activation::kTanh);
  save_net(f.net, dir.file("n.gsfn"));
  EXPECT_EQ(load_net(dir.file("n.gsfn")), f.net);
  const auto bytes = binio::read_file(dir.file("n.gsfn"));
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "GSFN");
}

TEST(Serialization, TruncatedNetIsFormatError) {
  const auto f = make_fixture(15);
  binio::Writer w;
  write_net(w, f.net);
  auto bytes = w.buffer();
  bytes.resize(bytes.size() / 2);
  binio::Reader r(bytes, "n");
  EXPECT_EQ(kind_of([&] { read_net(r); }), ErrorKind::kFormat);
}

TEST(Params, BlockOrderAndCount) {
  auto net = init_net(small_config());
  const auto blocks = param_blocks(net.params);
  ASSERT_EQ(blocks.size(), 14u);
  EXPECT_EQ(blocks.front().name, "encoder_s.0.weight");
  EXPECT_EQ(blocks.back().name, "classifier.0.bias");
  // 6*8+8 + 8*4+4 twice, 4*8+8 + 8*6+6, 4*3+3
  EXPECT_EQ(parameter_count(net.params), 2 * (56 + 36) + (40 + 54) + 15u);
}
