// Copyright 2026 The vt4s Authors
// SPDX-License-Identifier: Apache-2.0

#include "vt4s/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include <json.hpp>

#include "vt4s/error.hpp"
#include "vt4s/hash.hpp"

namespace vt4s::data {

using json = nlohmann::ordered_json;

namespace {

constexpr std::array<const char*, 30> kTransitionNames = {
    "mix",        "dissolve",  "black_fade",   "white_fade",   "pull_in",   "pull_out",
    "wipe_left",  "wipe_right", "slide_left",  "slide_right",  "zoom_in",   "zoom_out",
    "spin",       "blur",      "glitch",       "flash",        "shake",     "split",
    "circle_open", "circle_close", "page_turn", "cube",        "ripple",    "pixelate",
    "swirl",      "stretch",   "color_glitch", "film_burn",    "mosaic",    "light_leak"};

constexpr std::array<const char*, 5> kStyleNames = {"vlog", "anime", "influencer", "photos", "nature"};

}  // namespace

// ---- vocabularies ------------------------------------------------------------

Vocabulary::Vocabulary(std::vector<std::string> names) : names_(std::move(names)) {
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty() || n.find_first_of(" \t\r\n,") != std::string::npos) {
      throw ValidationError("vocabulary name '" + n + "' must be non-empty without whitespace or commas");
    }
    if (!seen.insert(n).second) throw ValidationError("duplicate vocabulary name '" + n + "'");
  }
}

const std::string& Vocabulary::name(int index) const {
  if (index < 0 || index >= size()) throw ValidationError("vocabulary index " + std::to_string(index) + " out of range");
  return names_[static_cast<std::size_t>(index)];
}

std::optional<int> Vocabulary::index_of(std::string_view name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<int>(it - names_.begin());
}

std::string Vocabulary::joined() const {
  std::string out;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (i > 0) out += ", ";
    out += names_[i];
  }
  return out;
}

Vocabulary default_transition_vocabulary(int count) {
  if (count < 2) throw ValidationError("need at least 2 transition classes");
  std::vector<std::string> names;
  for (int i = 0; i < count; ++i) {
    names.emplace_back(i < static_cast<int>(kTransitionNames.size()) ? kTransitionNames[static_cast<std::size_t>(i)]
                                                                      : "transition_" + std::to_string(i));
  }
  return Vocabulary(std::move(names));
}

Vocabulary default_style_vocabulary(int count) {
  if (count < 2) throw ValidationError("need at least 2 styles");
  std::vector<std::string> names;
  for (int i = 0; i < count; ++i) {
    names.emplace_back(i < static_cast<int>(kStyleNames.size()) ? kStyleNames[static_cast<std::size_t>(i)]
                                                                 : "style_" + std::to_string(i));
  }
  return Vocabulary(std::move(names));
}

void save_vocabularies(const Vocabularies& vocab, const std::filesystem::path& path) {
  json j;
  j["transitions"] = vocab.transitions.names();
  j["styles"] = vocab.styles.names();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Vocabularies load_vocabularies(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    const json j = json::parse(text);
    return {Vocabulary(j.at("transitions").get<std::vector<std::string>>()),
            Vocabulary(j.at("styles").get<std::vector<std::string>>())};
  } catch (const json::exception& e) {
    throw ParseError("vocabulary file " + path.string() + ": " + e.what());
  }
}

// ---- records -----------------------------------------------------------------

void ClipFeatureSequence::validate(int n_max) const {
  if (n() < 2 || n() > n_max) {
    throw ValidationError("video '" + video_id + "' has " + std::to_string(n()) + " clips; expected 2.." +
                          std::to_string(n_max));
  }
  if (dim() < 1) throw ValidationError("video '" + video_id + "' has empty clip features");
  if (!clips.allFinite()) throw ValidationError("video '" + video_id + "' has non-finite clip features");
}

void DatasetRecord::validate(int n_transitions, int n_styles, int n_max) const {
  features.validate(n_max);
  if (static_cast<int>(gt_transitions.size()) != features.n() - 1) {
    throw ValidationError("video '" + features.video_id + "': expected " + std::to_string(features.n() - 1) +
                          " transitions, got " + std::to_string(gt_transitions.size()));
  }
  for (int t : gt_transitions) {
    if (t < 0 || t >= n_transitions) {
      throw ValidationError("video '" + features.video_id + "': transition index " + std::to_string(t) +
                            " out of range");
    }
  }
  if (style_label && (*style_label < 0 || *style_label >= n_styles)) {
    throw ValidationError("video '" + features.video_id + "': style label out of range");
  }
}

Mat transition_segment(const ClipFeatureSequence& seq, int step) {
  if (step < 0 || step + 1 >= seq.n()) throw ValidationError("transition_segment: step out of range");
  const Eigen::Index f = seq.dim();
  const Eigen::Index head = f / 2;
  const Eigen::Index tail = f - head;
  Mat seg(1, f);
  seg.leftCols(tail) = seq.clips.row(step).rightCols(tail);
  seg.rightCols(head) = seq.clips.row(step + 1).leftCols(head);
  return seg;
}

// ---- clip features -------------------------------------------------------------

namespace {

class HashStubExtractor final : public ClipFeatureExtractor {
 public:
  explicit HashStubExtractor(FeatureConfig config) : config_(std::move(config)) {}
  [[nodiscard]] int dim() const override { return config_.dim; }
  [[nodiscard]] Mat extract(std::string_view clip_id) const override {
    if (clip_id.empty()) throw ValidationError("clip id must be non-empty");
    std::mt19937_64 rng(mix64(fnv1a64(clip_id) ^ mix64(config_.seed)));
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(config_.dim)));
    Mat v(1, config_.dim);
    for (int j = 0; j < config_.dim; ++j) v(0, j) = dist(rng);
    return v;
  }

 private:
  FeatureConfig config_;
};

}  // namespace

std::unique_ptr<ClipFeatureExtractor> make_feature_extractor(const FeatureConfig& config) {
  if (config.dim < 2) throw ConfigError("feature_dim must be >= 2");
  if (config.backend == "hash-stub") return std::make_unique<HashStubExtractor>(config);
  throw ConfigError("unknown feature backend '" + config.backend + "' (known: hash-stub)");
}

Mat extract_clip_features(std::string_view clip_id, const FeatureConfig& config) {
  return make_feature_extractor(config)->extract(clip_id);
}

// ---- synthetic corpus ----------------------------------------------------------

int SyntheticCorpusSpec::n_transitions() const {
  return style_profiles.empty() ? 0 : static_cast<int>(style_profiles.front().size());
}

void SyntheticCorpusSpec::validate() const {
  if (style_profiles.empty()) throw ValidationError("synthetic corpus: no style profiles");
  const std::size_t n_tr = style_profiles.front().size();
  if (n_tr < 2) throw ValidationError("synthetic corpus: need at least 2 transition classes");
  for (std::size_t k = 0; k < style_profiles.size(); ++k) {
    const auto& p = style_profiles[k];
    if (p.size() != n_tr) throw ValidationError("synthetic corpus: profile " + std::to_string(k) + " has wrong length");
    double sum = 0.0;
    for (double v : p) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw ValidationError("synthetic corpus: profile " + std::to_string(k) + " has a negative or non-finite entry");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw ValidationError("synthetic corpus: profile " + std::to_string(k) + " sums to " + std::to_string(sum) +
                            ", not 1");
    }
    for (std::size_t other = 0; other < k; ++other) {
      if (style_profiles[other] == p) {
        throw ValidationError("synthetic corpus: profiles " + std::to_string(other) + " and " + std::to_string(k) +
                              " are identical");
      }
    }
  }
  if (!(sigma >= 0.0)) throw ValidationError("synthetic corpus: sigma must be >= 0");
  if (!(content_scale >= 0.0)) throw ValidationError("synthetic corpus: content_scale must be >= 0");
  if (videos_per_style < 1) throw ValidationError("synthetic corpus: videos_per_style must be >= 1");
  if (min_clips < 2 || max_clips < min_clips) throw ValidationError("synthetic corpus: need 2 <= min_clips <= max_clips");
  if (!(unlabeled_fraction >= 0.0 && unlabeled_fraction <= 1.0)) {
    throw ValidationError("synthetic corpus: unlabeled_fraction must be in [0, 1]");
  }
  if (features.dim < 2) throw ValidationError("synthetic corpus: feature dim must be >= 2");
}

std::vector<std::vector<double>> default_style_profiles(int n_transitions, int n_styles, std::uint64_t seed) {
  if (n_transitions < 2 || n_styles < 1) throw ValidationError("default_style_profiles: bad sizes");
  std::mt19937_64 rng(mix64(seed ^ 0x5354594c45ULL));
  std::uniform_real_distribution<double> base(0.5, 1.5);
  std::vector<int> order(static_cast<std::size_t>(n_transitions));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  constexpr double kSignatureBoost = 8.0;
  std::vector<std::vector<double>> profiles;
  for (int k = 0; k < n_styles; ++k) {
    std::vector<double> p(static_cast<std::size_t>(n_transitions));
    for (auto& v : p) v = base(rng);
    for (int i = 0; i < n_transitions; ++i) {
      if (i % n_styles == k) p[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] *= kSignatureBoost;
    }
    const double sum = std::accumulate(p.begin(), p.end(), 0.0);
    for (auto& v : p) v /= sum;
    profiles.push_back(std::move(p));
  }
  return profiles;
}

Mat transition_prototypes(const SyntheticCorpusSpec& spec) {
  const int half = spec.features.dim / 2;
  std::mt19937_64 rng(mix64(spec.seed ^ 0x50524f544fULL));
  std::normal_distribution<double> dist(0.0, 1.0);
  Mat protos(spec.n_transitions(), half);
  for (Eigen::Index i = 0; i < protos.rows(); ++i) {
    for (Eigen::Index j = 0; j < half; ++j) protos(i, j) = dist(rng);
    protos.row(i).normalize();
  }
  return protos;
}

std::vector<DatasetRecord> generate_synthetic_dataset(const SyntheticCorpusSpec& spec) {
  spec.validate();
  const auto extractor = make_feature_extractor(spec.features);
  const Mat protos = transition_prototypes(spec);
  const int f = spec.features.dim;
  const int head = f / 2;
  const int tail = f - head;
  const int half = static_cast<int>(protos.cols());

  std::mt19937_64 rng(mix64(spec.seed));
  std::uniform_int_distribution<int> clip_count(spec.min_clips, spec.max_clips);
  const double noise_std = spec.sigma / std::sqrt(static_cast<double>(half));
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<DatasetRecord> records;
  records.reserve(static_cast<std::size_t>(spec.n_styles() * spec.videos_per_style));
  int video_index = 0;
  for (int style = 0; style < spec.n_styles(); ++style) {
    const auto& profile = spec.style_profiles[static_cast<std::size_t>(style)];
    std::discrete_distribution<int> pick(profile.begin(), profile.end());
    for (int v = 0; v < spec.videos_per_style; ++v, ++video_index) {
      DatasetRecord rec;
      char id[32];
      std::snprintf(id, sizeof(id), "vid%05d", video_index);
      rec.features.video_id = id;
      const int n = clip_count(rng);
      rec.gt_transitions.resize(static_cast<std::size_t>(n - 1));
      for (auto& t : rec.gt_transitions) t = pick(rng);
      rec.style_label = style;

      Mat clips(n, f);
      for (int c = 0; c < n; ++c) {
        clips.row(c) = spec.content_scale * extractor->extract(rec.features.video_id + "/c" + std::to_string(c));
      }
      // The segment around transition t is the tail of clip t plus the head of
      // clip t + 1; both carry the class prototype (truncated to fit).
      for (int t = 0; t + 1 < n; ++t) {
        const auto proto = protos.row(rec.gt_transitions[static_cast<std::size_t>(t)]);
        for (int j = 0; j < tail && j < half; ++j) clips(t, head + j) += proto(j);
        for (int j = 0; j < head && j < half; ++j) clips(t + 1, j) += proto(j);
      }
      if (spec.sigma > 0.0) {
        for (int c = 0; c < n; ++c)
          for (int j = 0; j < f; ++j) clips(c, j) += noise_std * noise(rng);
      }
      rec.features.clips = std::move(clips);
      records.push_back(std::move(rec));
    }
  }

  const auto n_unlabeled =
      static_cast<std::size_t>(std::llround(spec.unlabeled_fraction * static_cast<double>(records.size())));
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < n_unlabeled; ++i) records[order[i]].style_label.reset();
  return records;
}

std::vector<std::vector<int>> transition_histogram(const std::vector<DatasetRecord>& records, int n_transitions,
                                                   int n_styles) {
  std::vector<std::vector<int>> hist(static_cast<std::size_t>(n_styles),
                                     std::vector<int>(static_cast<std::size_t>(n_transitions), 0));
  for (const auto& r : records) {
    if (!r.style_label) continue;
    for (int t : r.gt_transitions) ++hist[static_cast<std::size_t>(*r.style_label)][static_cast<std::size_t>(t)];
  }
  return hist;
}

// ---- splits ------------------------------------------------------------------

Split split_dataset(const std::vector<DatasetRecord>& records, std::array<double, 3> ratios, std::uint64_t seed) {
  if (records.empty()) throw ValidationError("split_dataset: empty input");
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw ValidationError("split_dataset: ratios must be non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("split_dataset: ratios must sum to 1");

  const auto n = static_cast<long long>(records.size());
  long long n_train = std::llround(ratios[0] * static_cast<double>(n));
  long long n_val = std::llround(ratios[1] * static_cast<double>(n));
  n_train = std::min(n_train, n);
  n_val = std::min(n_val, n - n_train);

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix64(seed ^ 0x53504c4954ULL));
  std::shuffle(order.begin(), order.end(), rng);

  Split out;
  for (long long i = 0; i < n; ++i) {
    const auto& rec = records[order[static_cast<std::size_t>(i)]];
    if (i < n_train) {
      out.train.push_back(rec);
    } else if (i < n_train + n_val) {
      out.val.push_back(rec);
    } else {
      out.test.push_back(rec);
    }
  }
  return out;
}

// ---- files -------------------------------------------------------------------

std::string record_to_json_line(const DatasetRecord& record) {
  json j;
  j["video_id"] = record.features.video_id;
  json clips = json::array();
  for (Eigen::Index i = 0; i < record.features.clips.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < record.features.clips.cols(); ++k) row.push_back(record.features.clips(i, k));
    clips.push_back(std::move(row));
  }
  j["clip_features"] = std::move(clips);
  j["gt_transitions"] = record.gt_transitions;
  j["style_label"] = record.style_label ? json(*record.style_label) : json(nullptr);
  return j.dump();
}

DatasetRecord record_from_json_line(std::string_view line) {
  const json j = json::parse(line);
  DatasetRecord rec;
  rec.features.video_id = j.at("video_id").get<std::string>();
  const auto& clips = j.at("clip_features");
  if (!clips.is_array() || clips.empty()) throw ValidationError("clip_features must be a non-empty array");
  const auto f = clips.front().size();
  rec.features.clips.resize(static_cast<Eigen::Index>(clips.size()), static_cast<Eigen::Index>(f));
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const auto& row = clips[i];
    if (!row.is_array() || row.size() != f) throw ValidationError("clip_features rows must share one dimension");
    for (std::size_t k = 0; k < f; ++k) {
      rec.features.clips(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = row[k].get<double>();
    }
  }
  if (j.contains("gt_transitions")) rec.gt_transitions = j.at("gt_transitions").get<std::vector<int>>();
  if (j.contains("style_label") && !j.at("style_label").is_null()) rec.style_label = j.at("style_label").get<int>();
  return rec;
}

void save_dataset(const std::vector<DatasetRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& r : records) out << record_to_json_line(r) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::vector<DatasetRecord> records;
  std::size_t pos = 0;
  std::size_t index = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) {
      throw ParseError(path.string() + ": record " + std::to_string(index) + " is truncated (no line terminator)");
    }
    const std::string_view line(text.data() + pos, nl - pos);
    try {
      records.push_back(record_from_json_line(line));
    } catch (const std::exception& e) {
      throw ParseError(path.string() + ": record " + std::to_string(index) + ": " + e.what());
    }
    pos = nl + 1;
    ++index;
  }
  return records;
}

}  // namespace vt4s::data
