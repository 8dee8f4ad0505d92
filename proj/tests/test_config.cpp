#include <gtest/gtest.h>

#include "gsfl/config.hpp"
#include "test_support.hpp"

using namespace gsfl;

namespace {

template <class F>
ErrorKind kind_of(F&& fn, std::string* msg = nullptr) {
  try {
    fn();
  } catch (const Error& e) {
    if (msg) *msg = e.what();
    return e.kind();
  }
  ADD_FAILURE() << "no gsfl::Error thrown";
  return ErrorKind::kIo;
}

}  // namespace

TEST(KeyValue, SectionsCommentsAndQuotes) {
  const auto cfg = KeyValueConfig::parse(R"(
top = 1   # trailing comment
[train]
lr = 0.5
  epochs=7
[output]
log = "with spaces.csv"
)",
                                         "t.cfg");
  EXPECT_EQ(cfg.get_string("top", ""), "1");
  EXPECT_EQ(cfg.get_double("train.lr", 0.0), 0.5);
  EXPECT_EQ(cfg.get_int("train.epochs", 0), 7);
  EXPECT_EQ(cfg.get_string("output.log", ""), "with spaces.csv");
  EXPECT_EQ(cfg.get_int("train.missing", 42), 42);
  EXPECT_EQ(cfg.entries().size(), 4u);
}

TEST(KeyValue, MalformedLinesNameTheLine) {
  std::string msg;
  EXPECT_EQ(kind_of([] { KeyValueConfig::parse("a = 1\nnot a pair\n", "x.cfg"); }, &msg),
            ErrorKind::kUsage);
  EXPECT_NE(msg.find("x.cfg:2"), std::string::npos);
  EXPECT_EQ(kind_of([] { KeyValueConfig::parse("[open\n", "x.cfg"); }), ErrorKind::kUsage);
  EXPECT_EQ(kind_of([] { KeyValueConfig::parse(" = 3\n", "x.cfg"); }), ErrorKind::kUsage);
}

TEST(KeyValue, DuplicateKeyRejected) {
  std::string msg;
  EXPECT_EQ(kind_of([] { KeyValueConfig::parse("[a]\nk=1\n[b]\nk=2\n[a]\nk=3\n", "d"); }, &msg),
            ErrorKind::kUsage);
  EXPECT_NE(msg.find("a.k"), std::string::npos);
}

TEST(KeyValue, TypedGettersRejectBadValues) {
  const auto cfg = KeyValueConfig::parse("n = 1.5x\ni = -3\nb = maybe\nl = 1,2,,3\n", "v");
  EXPECT_EQ(kind_of([&] { cfg.get_double("n", 0); }), ErrorKind::kUsage);
  EXPECT_EQ(cfg.get_int("i", 0), -3);
  EXPECT_EQ(kind_of([&] { cfg.get_u64("i", 0); }), ErrorKind::kUsage);
  EXPECT_EQ(kind_of([&] { cfg.get_bool("b", false); }), ErrorKind::kUsage);
  EXPECT_EQ(kind_of([&] { cfg.get_u32_list("l", {}); }), ErrorKind::kUsage);
}

TEST(KeyValue, ListsAndBooleans) {
  const auto cfg = KeyValueConfig::parse("l = 3, 1 ,2\nt = on\nf = 0\n", "v");
  EXPECT_EQ(cfg.get_u32_list("l", {}), (std::vector<std::uint32_t>{3, 1, 2}));
  EXPECT_EQ(cfg.get_u64_list("l", {}), (std::vector<std::uint64_t>{3, 1, 2}));
  EXPECT_TRUE(cfg.get_bool("t", false));
  EXPECT_FALSE(cfg.get_bool("f", true));
}

TEST(KeyValue, OverridesWin) {
  auto cfg = KeyValueConfig::parse("[train]\nlr = 0.1\n", "o");
  cfg.apply_override("train.lr=0.25");
  cfg.apply_override(" train.epochs = 9 ");
  EXPECT_EQ(cfg.get_double("train.lr", 0), 0.25);
  EXPECT_EQ(cfg.get_int("train.epochs", 0), 9);
  EXPECT_EQ(kind_of([&] { cfg.apply_override("train.lr"); }), ErrorKind::kUsage);
  EXPECT_EQ(kind_of([&] { cfg.apply_override("=1"); }), ErrorKind::kUsage);
}

TEST(KeyValue, UnknownKeysRejected) {
  const auto cfg = KeyValueConfig::parse("[train]\nlr = 1\nlearning_rate = 2\n", "u");
  std::string msg;
  EXPECT_EQ(kind_of([&] { cfg.require_known(train_config_keys()); }, &msg), ErrorKind::kUsage);
  EXPECT_NE(msg.find("train.learning_rate"), std::string::npos);
  const auto dyn = KeyValueConfig::parse("[run.a]\nanything = 1\n", "u");
  EXPECT_NO_THROW(dyn.require_known(train_config_keys(), {"run."}));
  EXPECT_EQ(kind_of([&] { dyn.require_known(train_config_keys()); }), ErrorKind::kUsage);
}

TEST(KeyValue, SectionsWithPrefixInOrder) {
  const auto cfg = KeyValueConfig::parse("[run.b]\nx=1\n[train]\nlr=1\n[run.a]\nx=1\ny=2\n", "s");
  EXPECT_EQ(cfg.sections_with_prefix("run."), (std::vector<std::string>{"run.b", "run.a"}));
}

TEST(KeyValue, LoadMissingFileIsIoError) {
  testutil::TempDir dir;
  EXPECT_EQ(kind_of([&] { KeyValueConfig::load(dir.file("nope.cfg")); }), ErrorKind::kIo);
  testutil::spit(dir.file("ok.cfg"), "[train]\nepochs = 3\n");
  EXPECT_EQ(KeyValueConfig::load(dir.file("ok.cfg")).get_int("train.epochs", 0), 3);
}

TEST(TrainConfigFrom, Defaults) {
  const auto tc = train_config_from(KeyValueConfig::parse("", "e"));
  EXPECT_EQ(tc.loss_weights, (LossWeights{0.01, 0.01, 0.01, 1e-4}));
  EXPECT_EQ(tc.batch_size, 32u);
  EXPECT_EQ(tc.epochs, 50);
  EXPECT_EQ(tc.lr, 1e-3);
  EXPECT_EQ(tc.eta, 0.01);
  EXPECT_EQ(tc.optimizer.kind, OptimizerConfig::Kind::kAdam);
  EXPECT_EQ(tc.schedule.kind, LrSchedule::Kind::kConstant);
  EXPECT_EQ(tc.reduction, CenterReduction::kSum);
  EXPECT_EQ(tc.divisor_mode, DivisorMode::kGroupSize);
  EXPECT_FALSE(tc.extractor.enabled());
}

TEST(TrainConfigFrom, PresetThenExplicitWeights) {
  auto cfg = KeyValueConfig::parse("[loss]\npreset = external_backbone\n", "p");
  EXPECT_EQ(train_config_from(cfg).loss_weights, (LossWeights{0.01, 0.1, 0.1, 1e-5}));
  cfg.set("loss.alpha3", "0.5");
  EXPECT_EQ(train_config_from(cfg).loss_weights.alpha3, 0.5);
  cfg.set("loss.preset", "other");
  EXPECT_EQ(kind_of([&] { train_config_from(cfg); }), ErrorKind::kUsage);
}

TEST(TrainConfigFrom, AllSections) {
  const auto tc = train_config_from(KeyValueConfig::parse(R"(
[net]
hidden = 16,8
activation = tanh
code_dim = 4
[loss]
reduction = mean
[centers]
eta = 0.2
divisor_mode = class_count
[train]
optimizer = sgd
momentum = 0.5
schedule = step
decay_factor = 0.5
decay_every = 3
decay_after = 4
batch_size = 7
seed = 99
[extractor]
out_dim = 6
hidden = 9
)",
                                                          "all"));
  EXPECT_EQ(tc.net.hidden_dims, (std::vector<std::uint32_t>{16, 8}));
  EXPECT_EQ(tc.net.activation, Activation::kTanh);
  EXPECT_EQ(tc.net.code_dim, 4u);
  EXPECT_EQ(tc.reduction, CenterReduction::kMean);
  EXPECT_EQ(tc.eta, 0.2);
  EXPECT_EQ(tc.divisor_mode, DivisorMode::kClassCount);
  EXPECT_EQ(tc.optimizer.kind, OptimizerConfig::Kind::kSgd);
  EXPECT_EQ(tc.optimizer.momentum, 0.5);
  EXPECT_EQ(tc.schedule.kind, LrSchedule::Kind::kStepDecay);
  EXPECT_EQ(tc.schedule.every, 3);
  EXPECT_EQ(tc.schedule.after, 4);
  EXPECT_EQ(tc.batch_size, 7u);
  EXPECT_EQ(tc.seed, 99u);
  EXPECT_EQ(tc.extractor.out_dim, 6u);
  EXPECT_EQ(tc.extractor.hidden_dims, (std::vector<std::uint32_t>{9}));
}

TEST(TrainConfigFrom, InvalidValuesAreUsageErrors) {
  for (const char* text : {"[train]\nbatch_size = 0\n", "[train]\nlr = -1\n",
                           "[train]\noptimizer = rmsprop\n", "[train]\nschedule = cosine\n",
                           "[net]\ntopology = star\n", "[loss]\nalpha1 = -0.1\n",
                           "[centers]\neta = -1\n", "[train]\nschedule = step\ndecay_factor = 2\n"}) {
    EXPECT_EQ(kind_of([&] { train_config_from(KeyValueConfig::parse(text, "bad")); }),
              ErrorKind::kUsage)
        << text;
  }
}

TEST(AblationPlan, RunsInOrderWithDefaults) {
  const auto plan = ablation_plan_from(KeyValueConfig::parse(R"(
[train]
epochs = 4
[run.full]
num_groups = 3
seeds = 1,2
[run.base]
variant = plain
[run.one]
groups = single
toggles = 1,0,1
)",
                                                             "a"),
                                       8);
  ASSERT_EQ(plan.size(), 3u);
  EXPECT_EQ(plan[0].name, "full");
  EXPECT_EQ(plan[0].num_groups, 3u);
  EXPECT_EQ(plan[0].seeds, (std::vector<std::uint64_t>{1, 2}));
  EXPECT_EQ(plan[1].variant, Variant::kPlain);
  EXPECT_EQ(plan[1].num_groups, 5u);
  EXPECT_EQ(plan[1].seeds, (std::vector<std::uint64_t>{0}));
  EXPECT_EQ(plan[2].group_source, GroupSource::kSingle);
  EXPECT_EQ(plan[2].num_groups, 1u);
  EXPECT_EQ(plan[2].loss_toggles, (std::array<bool, 3>{true, false, true}));
}

TEST(AblationPlan, ClassGrowthExpands) {
  const auto plan = ablation_plan_from(
      KeyValueConfig::parse("[run.g]\nclass_growth = 2,4,6\nclass_order_seed = 3\n", "g"), 6);
  ASSERT_EQ(plan.size(), 3u);
  EXPECT_EQ(plan[0].name, "g/c2");
  EXPECT_EQ(plan[2].name, "g/c6");
  EXPECT_EQ(plan[1].class_subset.size(), 4u);
  EXPECT_TRUE(std::equal(plan[0].class_subset.begin(), plan[0].class_subset.end(),
                         plan[1].class_subset.begin()));
}

TEST(AblationPlan, Errors) {
  const auto plan_of = [](const char* text) {
    return ablation_plan_from(KeyValueConfig::parse(text, "e"), 6);
  };
  EXPECT_EQ(kind_of([&] { plan_of("[train]\nepochs = 1\n"); }), ErrorKind::kUsage);
  EXPECT_EQ(kind_of([&] { plan_of("[run.a]\nvarient = full\n"); }), ErrorKind::kUsage);
  EXPECT_EQ(kind_of([&] { plan_of("[run.a]\ntoggles = 1,1\n"); }), ErrorKind::kUsage);
  EXPECT_EQ(kind_of([&] { plan_of("[run.a]\ngroups = single\nnum_groups = 2\n"); }),
            ErrorKind::kUsage);
  EXPECT_EQ(kind_of([&] { plan_of("[run.a]\nclass_growth = 7\n"); }), ErrorKind::kUsage);
  EXPECT_EQ(kind_of([&] { plan_of("[run.a]\nclasses = 1,2\nclass_growth = 2\n"); }),
            ErrorKind::kUsage);
  EXPECT_EQ(kind_of([&] { plan_of("[run.a]\nseeds = \n"); }), ErrorKind::kUsage);
}
