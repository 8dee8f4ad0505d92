#pragma once

// Evaluation, the reduced inference model, and the ablation harness (variant
// graphs, loss-term toggles, group sources, class-count sweeps).

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "gsfl/featureio.hpp"
#include "gsfl/trainer.hpp"

namespace gsfl {

// Accuracy of the inference path (Encoder.D -> classifier) on `dataset`.
double evaluate(const TrainState& state, const FeatureDataset& dataset);

// Deployable subset of a trained state: extractor (if any), Encoder.D and the
// classifier. Encoder.S and the Decoder are not stored.
class InferenceModel {
 public:
  InferenceModel() = default;
  static InferenceModel from_state(const TrainState& state);

  Matrix logits(const Matrix& x) const;
  std::vector<int> predict(const Matrix& x) const;
  double evaluate(const FeatureDataset& dataset) const;
  // Always throws kCapability: the decoder is not part of the exported model.
  Matrix reconstruct(const Matrix& x) const;

  std::uint32_t input_dim() const noexcept;
  std::uint32_t num_classes() const noexcept { return num_classes_; }
  std::size_t parameter_count() const noexcept;

  std::vector<unsigned char> encode() const;
  static InferenceModel decode(std::span<const unsigned char> bytes, const std::string& source);

 private:
  std::optional<Extractor> extractor_;
  Activation activation_ = Activation::kRectifier;
  LayerStack encoder_d_;
  LayerStack classifier_;
  std::uint32_t num_classes_ = 0;
};

// Writes the reduced model (magic "GSFI").
void export_inference(const TrainState& state, const std::string& path);
InferenceModel load_inference(const std::string& path);

enum class Variant : std::uint8_t { kFull, kDisOnly, kPlain };
enum class GroupSource : std::uint8_t { kKmeans, kRandom, kSingle };

const char* to_string(Variant v) noexcept;
const char* to_string(GroupSource g) noexcept;
Variant parse_variant(const std::string& s);
GroupSource parse_group_source(const std::string& s);

struct AblationSpec {
  std::string name = "run";
  Variant variant = Variant::kFull;
  GroupSource group_source = GroupSource::kKmeans;
  std::uint32_t num_groups = 1;
  std::array<bool, 3> loss_toggles{true, true, true};  // alpha1, alpha2, alpha3
  std::vector<int> class_subset;                       // empty: all classes
  std::vector<std::uint64_t> seeds{0};
  int kmeans_max_iters = 300;

  void validate() const;
};

// Loss weights, eta and topology a variant actually trains with.
struct VariantSetup {
  LossWeights weights;
  double eta = 0.0;
  Topology topology = Topology::kFull;
};
VariantSetup variant_setup(const AblationSpec& spec, const TrainConfig& base);

// Keeps the listed classes and relabels them 1..|subset| in list order.
FeatureDataset restrict_classes(const FeatureDataset& dataset, std::span<const int> subset);

// Nested prefixes of one seeded class order, one per requested size.
std::vector<std::vector<int>> class_growth_subsets(std::uint32_t num_classes,
                                                   std::span<const std::uint32_t> sizes,
                                                   std::uint64_t seed);

GroupAssignment make_groups(const AblationSpec& spec, const FeatureDataset& train_set,
                            std::uint64_t seed);

struct SeedResult {
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  int convergence_epoch = 0;
  double best_eval = 0.0;
  double first_epoch_loss = 0.0;
  double final_epoch_loss = 0.0;
  std::uint32_t num_groups = 0;
};

struct EvalReport {
  AblationSpec spec;
  std::vector<SeedResult> seeds;
  double mean_accuracy = 0.0;
  double stddev_accuracy = 0.0;  // sample stddev; 0 for a single seed
  double mean_convergence_epoch = 0.0;

  bool operator==(const EvalReport& o) const;
};

EvalReport run_ablation(const AblationSpec& spec, const TrainConfig& base,
                        const FeatureDataset& train_set, const FeatureDataset& test_set);

// run,variant,groups,N_g,a1,a2,a3,classes,seed,accuracy,convergence_epoch,first_loss,final_loss
std::string reports_to_csv(const std::vector<EvalReport>& reports);
std::string reports_to_table(const std::vector<EvalReport>& reports);

}  // namespace gsfl
