// Copyright 2026 The vt4s Authors
// SPDX-License-Identifier: Apache-2.0

// Ranking metrics over pooled decode steps and per-video style similarity.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vt4s/checkpoint.hpp"
#include "vt4s/embeddings.hpp"
#include "vt4s/seq_model.hpp"

namespace vt4s::eval {

using ad::Mat;

enum class RankingMode { kSimilarity, kLogits };

std::string ranking_mode_name(RankingMode mode);
RankingMode parse_ranking_mode(const std::string& name);

/// Permutation of 0..N-1 by descending score; equal scores keep ascending index.
std::vector<int> rank_by_score(std::span<const double> scores);

/// Similarity mode scores <h_decode, e_i>; logits mode scores the logit row.
std::vector<int> rank_transitions(const seq::TraceStep& step, const Mat& transition_table, RankingMode mode);

/// 1-based position of `gt` in `ranking`.
int rank_of(std::span<const int> ranking, int gt);

/// Fraction of pooled steps whose ground truth sits in the top K.
double recall_at_k(const std::vector<std::vector<int>>& rankings, std::span<const int> gt, int k);
double mean_rank(const std::vector<std::vector<int>>& rankings, std::span<const int> gt);

struct StyleSimilarity {
  double mean = 0.0;
  int videos = 0;
  int skipped = 0;  // empty traces
};

/// Mean over videos of cos(mean pretrained embedding of the predicted
/// classes, e_style).
StyleSimilarity style_similarity(const std::vector<seq::DecodeTrace>& traces, const Mat& transition_table,
                                 const Mat& e_style);

enum class Metric { kRecall, kMeanRank, kStyleSimilarity };

struct MetricSpec {
  Metric metric = Metric::kRecall;
  int k = 1;
  [[nodiscard]] std::string name() const;
};

/// Parses `recall@1,recall@5,mean-rank,style-similarity`; ValidationError on
/// unknown names or duplicates.
std::vector<MetricSpec> parse_metrics(const std::string& list);

struct EvalReport {
  std::string method;
  std::string split;
  RankingMode ranking_mode = RankingMode::kSimilarity;
  std::vector<std::string> metric_order;
  std::map<std::string, double> metrics;                  // recall@K, mean-rank
  std::map<std::string, double> style_similarity;         // per style name
  std::map<std::string, int> style_videos;
  int videos = 0;
  int steps = 0;
  int skipped = 0;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> artifact_hashes;
  checkpoint::Json config = checkpoint::Json::object();

  [[nodiscard]] bool has(const std::string& metric) const;
  /// Value of a scalar metric, or the mean across styles for style-similarity.
  [[nodiscard]] double value(const std::string& metric) const;
};

inline constexpr const char* kReportSchema = "vt4s-report/1";

checkpoint::Json report_to_json(const EvalReport& report);
EvalReport report_from_json(const checkpoint::Json& json);
void emit_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport load_report(const std::filesystem::path& path);

/// Ranks every step of every trace and fills the requested ranking metrics.
void add_ranking_metrics(EvalReport& report, const std::vector<seq::DecodeTrace>& traces,
                         const std::vector<std::vector<int>>& gt, const Mat& transition_table,
                         const std::vector<MetricSpec>& metrics);

}  // namespace vt4s::eval
