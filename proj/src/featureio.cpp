#include "gsfl/featureio.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <sstream>

#include "gsfl/binio.hpp"

namespace gsfl {

Matrix FeatureDataset::features() const {
  Matrix out(samples.size(), dim);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t k = 0; k < dim; ++k) out(i, k) = samples[i].values[k];
  }
  return out;
}

Matrix FeatureDataset::rows(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), dim);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& v = samples.at(indices[i]).values;
    for (std::size_t k = 0; k < dim; ++k) out(i, k) = v[k];
  }
  return out;
}

std::vector<int> FeatureDataset::labels() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

void FeatureDataset::validate() const {
  if (dim == 0) fail(ErrorKind::kShape, "feature dimension must be >= 1");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.values.size() != dim) {
      fail(ErrorKind::kShape, "sample " + std::to_string(i) + " has dimension " +
                                  std::to_string(s.values.size()) + ", expected " +
                                  std::to_string(dim));
    }
    if (s.label < 1 || static_cast<std::uint32_t>(s.label) > num_classes) {
      fail(ErrorKind::kData, "sample " + std::to_string(i) + " has label " +
                                 std::to_string(s.label) + " outside 1.." +
                                 std::to_string(num_classes));
    }
    for (float v : s.values) {
      if (!std::isfinite(v)) {
        fail(ErrorKind::kData, "sample " + std::to_string(i) + " has a non-finite value");
      }
    }
  }
}

void FeatureDataset::require_all_classes() const {
  std::vector<std::size_t> counts(num_classes + 1, 0);
  for (const auto& s : samples) ++counts.at(static_cast<std::size_t>(s.label));
  for (std::uint32_t c = 1; c <= num_classes; ++c) {
    if (counts[c] == 0) {
      fail(ErrorKind::kData, "class " + std::to_string(c) + " has no samples");
    }
  }
}

bool FeatureDataset::same_content(const FeatureDataset& other) const {
  if (dim != other.dim || num_classes != other.num_classes ||
      samples.size() != other.samples.size()) {
    return false;
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].label != other.samples[i].label) return false;
    // Bitwise, so -0.0 vs 0.0 and NaN payloads are distinguished.
    if (std::memcmp(samples[i].values.data(), other.samples[i].values.data(),
                    dim * sizeof(float)) != 0) {
      return false;
    }
  }
  return true;
}

std::vector<unsigned char> encode_features(const FeatureDataset& dataset) {
  binio::Writer w;
  w.magic("GSFL");
  w.u16(kFeatureFormatVersion);
  w.u32(dataset.dim);
  w.u32(dataset.num_classes);
  w.u64(dataset.samples.size());
  for (const auto& s : dataset.samples) {
    for (float v : s.values) w.f32(v);
    w.u32(static_cast<std::uint32_t>(s.label));
  }
  return w.buffer();
}

FeatureDataset decode_features(std::span<const unsigned char> bytes, const std::string& source,
                               Split split) {
  binio::Reader r(bytes, source);
  r.expect_magic("GSFL");
  const std::size_t version_at = r.offset();
  if (r.u16() != kFeatureFormatVersion) r.error_at(version_at, "unsupported version");
  const std::size_t dim_at = r.offset();
  FeatureDataset ds;
  ds.split = split;
  ds.dim = r.u32();
  if (ds.dim == 0) r.error_at(dim_at, "dimension must be >= 1");
  ds.num_classes = r.u32();
  const std::uint64_t n = r.u64();
  const std::size_t record = 4 * std::size_t{ds.dim} + 4;
  // Check the payload size up front so a huge N cannot trigger a huge allocation.
  if (n > r.remaining() / record) {
    r.error_at(r.offset() + (r.remaining() / record) * record,
               "truncated payload: header declares " + std::to_string(n) + " records");
  }
  ds.samples.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    auto& s = ds.samples[i];
    s.values.resize(ds.dim);
    for (auto& v : s.values) v = r.f32();
    const std::size_t label_at = r.offset();
    const std::uint32_t label = r.u32();
    if (label < 1 || label > ds.num_classes) {
      r.error_at(label_at, "label " + std::to_string(label) + " outside 1.." +
                               std::to_string(ds.num_classes));
    }
    s.label = static_cast<int>(label);
    for (float v : s.values) {
      if (!std::isfinite(v)) {
        fail(ErrorKind::kData, source + ": sample " + std::to_string(i) + " has a non-finite value");
      }
    }
  }
  r.expect_end();
  return ds;
}

namespace {

bool has_csv_extension(const std::string& path) {
  if (path.size() < 4) return false;
  std::string ext = path.substr(path.size() - 4);
  for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return ext == ".csv";
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

FeatureDataset parse_feature_csv(const std::string& text, const std::string& source,
                                 Split split) {
  FeatureDataset ds;
  ds.split = split;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  int max_label = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto comma = t.find(',', start);
      fields.push_back(trim(std::string_view(t).substr(start, comma - start)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    const auto where = source + ":" + std::to_string(line_no);
    if (fields.size() < 2) fail(ErrorKind::kFormat, where + ": need at least one value and a label");
    FeatureVector fv;
    for (std::size_t k = 0; k + 1 < fields.size(); ++k) {
      char* end = nullptr;
      const double v = std::strtod(fields[k].c_str(), &end);
      if (fields[k].empty() || end != fields[k].c_str() + fields[k].size()) {
        fail(ErrorKind::kFormat, where + ": cannot parse value \"" + fields[k] + "\"");
      }
      if (!std::isfinite(v)) {
        fail(ErrorKind::kData, source + ": sample " + std::to_string(ds.samples.size()) +
                                   " has a non-finite value");
      }
      fv.values.push_back(static_cast<float>(v));
    }
    const auto& lab = fields.back();
    int label = 0;
    const auto res = std::from_chars(lab.data(), lab.data() + lab.size(), label);
    if (res.ec != std::errc{} || res.ptr != lab.data() + lab.size() || label < 1) {
      fail(ErrorKind::kFormat, where + ": invalid label \"" + lab + "\"");
    }
    if (ds.samples.empty()) {
      ds.dim = static_cast<std::uint32_t>(fv.values.size());
    } else if (fv.values.size() != ds.dim) {
      fail(ErrorKind::kFormat, where + ": expected " + std::to_string(ds.dim) + " values");
    }
    fv.label = label;
    max_label = std::max(max_label, label);
    ds.samples.push_back(std::move(fv));
  }
  if (ds.samples.empty()) fail(ErrorKind::kFormat, source + ": no samples");
  ds.num_classes = static_cast<std::uint32_t>(max_label);
  return ds;
}

FeatureDataset load_features(const std::string& path, Split split) {
  const auto bytes = binio::read_file(path);
  if (has_csv_extension(path)) {
    return parse_feature_csv(std::string(bytes.begin(), bytes.end()), path, split);
  }
  return decode_features(bytes, path, split);
}

void save_features(const FeatureDataset& dataset, const std::string& path) {
  binio::write_file_atomic(path, encode_features(dataset));
}

void SyntheticSpec::validate() const {
  if (num_classes == 0) fail(ErrorKind::kParameter, "num_classes must be >= 1");
  if (num_groups == 0) fail(ErrorKind::kParameter, "num_groups must be >= 1");
  if (num_groups > num_classes) {
    fail(ErrorKind::kParameter, "num_groups (" + std::to_string(num_groups) +
                                    ") exceeds num_classes (" + std::to_string(num_classes) + ")");
  }
  if (dim == 0) fail(ErrorKind::kParameter, "dim must be >= 1");
  if (per_class_count == 0) fail(ErrorKind::kParameter, "per_class_count must be >= 1");
  for (double s : {shared_scale, discriminative_scale, noise_scale}) {
    if (!(s >= 0.0) || !std::isfinite(s)) {
      fail(ErrorKind::kParameter, "scales must be finite and nonnegative");
    }
  }
}

int synthetic_group_of(int label, std::uint32_t num_groups) noexcept {
  return (label - 1) % static_cast<int>(num_groups) + 1;
}

SyntheticAnchors synthetic_anchors(const SyntheticSpec& spec) {
  spec.validate();
  auto rng = make_rng(spec.seed, "synthetic.anchors");
  SyntheticAnchors a{Matrix(spec.num_groups, spec.dim), Matrix(spec.num_classes, spec.dim)};
  for (double& v : a.group.flat()) v = spec.shared_scale * standard_normal(rng);
  for (double& v : a.klass.flat()) v = spec.discriminative_scale * standard_normal(rng);
  return a;
}

FeatureDataset generate_synthetic(const SyntheticSpec& spec, Split split) {
  const auto anchors = synthetic_anchors(spec);
  auto rng = make_rng(spec.seed, split == Split::kTrain ? "synthetic.noise.train"
                                                        : "synthetic.noise.test");
  FeatureDataset ds;
  ds.dim = spec.dim;
  ds.num_classes = spec.num_classes;
  ds.split = split;
  ds.samples.reserve(std::size_t{spec.num_classes} * spec.per_class_count);
  for (std::uint32_t c = 1; c <= spec.num_classes; ++c) {
    const auto g = static_cast<std::size_t>(synthetic_group_of(static_cast<int>(c), spec.num_groups));
    for (std::uint32_t n = 0; n < spec.per_class_count; ++n) {
      FeatureVector fv;
      fv.label = static_cast<int>(c);
      fv.values.resize(spec.dim);
      for (std::size_t k = 0; k < spec.dim; ++k) {
        double v = anchors.group(g - 1, k) + anchors.klass(c - 1, k);
        if (spec.noise_scale > 0.0) v += spec.noise_scale * standard_normal(rng);
        fv.values[k] = static_cast<float>(v);
      }
      ds.samples.push_back(std::move(fv));
    }
  }
  return ds;
}

}  // namespace gsfl
