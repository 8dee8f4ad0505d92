#pragma once

// Labeled feature vectors, the GSFL binary feature format, CSV import, and the
// synthetic group/class generator.

#include <cstdint>
#include <string>
#include <vector>

#include "gsfl/common.hpp"

namespace gsfl {

enum class Split { kTrain, kTest };

struct FeatureVector {
  std::vector<float> values;
  int label = 1;  // 1-based class index

  bool operator==(const FeatureVector&) const = default;
};

struct FeatureDataset {
  std::uint32_t dim = 0;
  std::uint32_t num_classes = 0;
  std::vector<FeatureVector> samples;
  Split split = Split::kTrain;

  std::size_t size() const noexcept { return samples.size(); }

  // Features widened to float64, one row per sample.
  Matrix features() const;
  Matrix rows(std::span<const std::size_t> indices) const;
  std::vector<int> labels() const;

  // Dimension, label range and finiteness checks. Throws kData / kShape.
  void validate() const;
  // Every class 1..C must have at least one sample. Throws kData naming the class.
  void require_all_classes() const;

  // Field-by-field equality of the persisted fields (split is not stored on disk).
  bool same_content(const FeatureDataset& other) const;
};

inline constexpr std::uint16_t kFeatureFormatVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 4 + 2 + 4 + 4 + 8;

std::vector<unsigned char> encode_features(const FeatureDataset& dataset);
FeatureDataset decode_features(std::span<const unsigned char> bytes,
                               const std::string& source, Split split = Split::kTrain);

// `.csv` paths are parsed as text (values..., label); everything else as binary.
FeatureDataset load_features(const std::string& path, Split split = Split::kTrain);
void save_features(const FeatureDataset& dataset, const std::string& path);

FeatureDataset parse_feature_csv(const std::string& text, const std::string& source,
                                 Split split = Split::kTrain);

struct SyntheticSpec {
  std::uint32_t num_classes = 8;
  std::uint32_t num_groups = 2;
  std::uint32_t dim = 16;
  std::uint32_t per_class_count = 50;
  double shared_scale = 5.0;
  double discriminative_scale = 1.0;
  double noise_scale = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticAnchors {
  Matrix group;  // N_g x d, already scaled by shared_scale
  Matrix klass;  // C x d, already scaled by discriminative_scale
};

// Round-robin ground truth: class c -> group (c-1 mod N_g) + 1.
int synthetic_group_of(int label, std::uint32_t num_groups) noexcept;

SyntheticAnchors synthetic_anchors(const SyntheticSpec& spec);

// Samples for class c in group j are s*_j + m*_c + noise. Anchors depend only on
// the seed; the noise stream is keyed by (seed, split) so train and test draw
// independent noise around the same anchors.
FeatureDataset generate_synthetic(const SyntheticSpec& spec, Split split = Split::kTrain);

}  // namespace gsfl
