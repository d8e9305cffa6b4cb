// Copyright 2026 The vt4s Authors
// SPDX-License-Identifier: Apache-2.0

// Dataset records, the clip-feature interface, and the synthetic corpus.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vt4s/autodiff.hpp"

namespace vt4s::data {

using ad::Mat;

/// Ordered, unique class names; the index of a name is its class id.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> names);

  [[nodiscard]] int size() const { return static_cast<int>(names_.size()); }
  [[nodiscard]] const std::string& name(int index) const;
  [[nodiscard]] std::optional<int> index_of(std::string_view name) const;
  [[nodiscard]] const std::vector<std::string>& names() const { return names_; }
  /// Comma-separated list, for error messages.
  [[nodiscard]] std::string joined() const;

  bool operator==(const Vocabulary&) const = default;

 private:
  std::vector<std::string> names_;
};

struct Vocabularies {
  Vocabulary transitions;
  Vocabulary styles;
};

/// Transition class names; the first 30 are common editor transitions.
Vocabulary default_transition_vocabulary(int count = 30);
/// vlog, anime, influencer, photos, nature (then style_<i>).
Vocabulary default_style_vocabulary(int count = 5);

void save_vocabularies(const Vocabularies& vocab, const std::filesystem::path& path);
Vocabularies load_vocabularies(const std::filesystem::path& path);

/// One fixed-length feature vector per clip, in clip order.
struct ClipFeatureSequence {
  std::string video_id;
  Mat clips;  // [n x F]

  [[nodiscard]] int n() const { return static_cast<int>(clips.rows()); }
  [[nodiscard]] int dim() const { return static_cast<int>(clips.cols()); }
  /// Throws ValidationError unless 2 <= n <= n_max and every value is finite.
  void validate(int n_max) const;

  bool operator==(const ClipFeatureSequence&) const = default;
};

struct DatasetRecord {
  ClipFeatureSequence features;
  std::vector<int> gt_transitions;  // n - 1 entries
  std::optional<int> style_label;   // absent for unlabeled videos

  void validate(int n_transitions, int n_styles, int n_max) const;
  bool operator==(const DatasetRecord&) const = default;
};

/// The feature of the video segment around transition `step` (0-based): the
/// second half of clip `step` followed by the first half of clip `step + 1`.
/// Has the same dimension F as a clip feature.
Mat transition_segment(const ClipFeatureSequence& seq, int step);

// ---- clip features -------------------------------------------------------------

struct FeatureConfig {
  std::string backend = "hash-stub";
  int dim = 256;
  std::uint64_t seed = 0;
};

/// Pluggable per-clip feature backend. A real video backbone implements this
/// by returning one fixed-length vector per clip.
class ClipFeatureExtractor {
 public:
  virtual ~ClipFeatureExtractor() = default;
  [[nodiscard]] virtual int dim() const = 0;
  [[nodiscard]] virtual Mat extract(std::string_view clip_id) const = 0;  // [1 x dim]
};

/// Throws ConfigError for an unknown backend or a non-positive dimension.
std::unique_ptr<ClipFeatureExtractor> make_feature_extractor(const FeatureConfig& config);

/// Deterministic stub features: N(0, 1/F) entries drawn from a generator
/// seeded by a hash of the clip id and the config seed.
Mat extract_clip_features(std::string_view clip_id, const FeatureConfig& config);

// ---- synthetic corpus ----------------------------------------------------------

struct SyntheticCorpusSpec {
  /// One categorical distribution over transition classes per style.
  std::vector<std::vector<double>> style_profiles;
  /// Per-half noise norm; each coordinate gets N(0, sigma^2 / (F/2)).
  double sigma = 0.0;
  /// Weight of the per-clip stub content added under the transition signal.
  double content_scale = 0.0;
  int videos_per_style = 400;
  int min_clips = 4;
  int max_clips = 8;
  double unlabeled_fraction = 0.75;
  FeatureConfig features;
  std::uint64_t seed = 0;

  [[nodiscard]] int n_transitions() const;
  [[nodiscard]] int n_styles() const { return static_cast<int>(style_profiles.size()); }
  void validate() const;
};

/// Distinct per-style profiles that share every class but boost a disjoint
/// block of "signature" classes for each style.
std::vector<std::vector<double>> default_style_profiles(int n_transitions, int n_styles, std::uint64_t seed);

/// Unit prototype per transition class, living in F/2 dimensions.
Mat transition_prototypes(const SyntheticCorpusSpec& spec);

std::vector<DatasetRecord> generate_synthetic_dataset(const SyntheticCorpusSpec& spec);

/// Per-style transition histogram [n_styles x n_transitions] over labeled records.
std::vector<std::vector<int>> transition_histogram(const std::vector<DatasetRecord>& records, int n_transitions,
                                                   int n_styles);

// ---- splits and files ----------------------------------------------------------

struct Split {
  std::vector<DatasetRecord> train;
  std::vector<DatasetRecord> val;
  std::vector<DatasetRecord> test;
};

/// Seeded shuffle, then round(r_train * N) / round(r_val * N) / remainder.
Split split_dataset(const std::vector<DatasetRecord>& records, std::array<double, 3> ratios, std::uint64_t seed);

void save_dataset(const std::vector<DatasetRecord>& records, const std::filesystem::path& path);
/// Throws ParseError naming the 0-based record index of the first bad line.
std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path);

/// Serializes one record as a single JSON line (no trailing newline).
std::string record_to_json_line(const DatasetRecord& record);
DatasetRecord record_from_json_line(std::string_view line);

}  // namespace vt4s::data
