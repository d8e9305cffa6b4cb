// Copyright 2026 The vt4s Authors
// SPDX-License-Identifier: Apache-2.0

#include "vt4s/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "vt4s/error.hpp"
#include "vt4s/hash.hpp"

namespace vt4s::eval {

std::string ranking_mode_name(RankingMode mode) {
  return mode == RankingMode::kSimilarity ? "similarity" : "logits";
}

RankingMode parse_ranking_mode(const std::string& name) {
  if (name == "similarity") return RankingMode::kSimilarity;
  if (name == "logits") return RankingMode::kLogits;
  throw ValidationError("ranking mode must be similarity or logits, got '" + name + "'");
}

std::vector<int> rank_by_score(std::span<const double> scores) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
  });
  return order;
}

std::vector<int> rank_transitions(const seq::TraceStep& step, const Mat& transition_table, RankingMode mode) {
  std::vector<double> scores(static_cast<std::size_t>(transition_table.rows()));
  if (mode == RankingMode::kSimilarity) {
    for (Eigen::Index i = 0; i < transition_table.rows(); ++i) {
      scores[static_cast<std::size_t>(i)] = step.h_decode.row(0).dot(transition_table.row(i));
    }
  } else {
    if (step.logits.cols() != transition_table.rows()) throw ValidationError("rank_transitions: logit width mismatch");
    for (Eigen::Index i = 0; i < step.logits.cols(); ++i) scores[static_cast<std::size_t>(i)] = step.logits(0, i);
  }
  return rank_by_score(scores);
}

int rank_of(std::span<const int> ranking, int gt) {
  const auto it = std::find(ranking.begin(), ranking.end(), gt);
  if (it == ranking.end()) throw ValidationError("rank_of: class " + std::to_string(gt) + " missing from ranking");
  return static_cast<int>(it - ranking.begin()) + 1;
}

namespace {

void check_lengths(const std::vector<std::vector<int>>& rankings, std::span<const int> gt) {
  if (rankings.size() != gt.size()) {
    throw ValidationError("metric: " + std::to_string(rankings.size()) + " rankings for " +
                          std::to_string(gt.size()) + " ground-truth steps");
  }
  if (gt.empty()) throw ValidationError("metric: no steps");
}

}  // namespace

double recall_at_k(const std::vector<std::vector<int>>& rankings, std::span<const int> gt, int k) {
  if (k < 1) throw ValidationError("recall_at_k: K must be >= 1");
  check_lengths(rankings, gt);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) hits += rank_of(rankings[i], gt[i]) <= k ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(gt.size());
}

double mean_rank(const std::vector<std::vector<int>>& rankings, std::span<const int> gt) {
  check_lengths(rankings, gt);
  double total = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) total += rank_of(rankings[i], gt[i]);
  return total / static_cast<double>(gt.size());
}

StyleSimilarity style_similarity(const std::vector<seq::DecodeTrace>& traces, const Mat& transition_table,
                                 const Mat& e_style) {
  StyleSimilarity out;
  double total = 0.0;
  for (const auto& trace : traces) {
    if (trace.steps.empty()) {
      ++out.skipped;
      continue;
    }
    Mat mean = Mat::Zero(1, transition_table.cols());
    for (const auto& s : trace.steps) mean += transition_table.row(s.transition);
    mean /= static_cast<double>(trace.steps.size());
    const double denom = std::max(mean.norm(), 1e-12) * std::max(e_style.norm(), 1e-12);
    total += mean.row(0).dot(e_style.row(0)) / denom;
    ++out.videos;
  }
  if (out.videos == 0) throw ValidationError("style_similarity: no non-empty traces");
  out.mean = total / out.videos;
  return out;
}

std::string MetricSpec::name() const {
  switch (metric) {
    case Metric::kRecall:
      return "recall@" + std::to_string(k);
    case Metric::kMeanRank:
      return "mean-rank";
    case Metric::kStyleSimilarity:
      return "style-similarity";
  }
  return {};
}

std::vector<MetricSpec> parse_metrics(const std::string& list) {
  std::vector<MetricSpec> out;
  std::set<std::string> seen;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    MetricSpec spec;
    if (item == "mean-rank") {
      spec.metric = Metric::kMeanRank;
    } else if (item == "style-similarity") {
      spec.metric = Metric::kStyleSimilarity;
    } else if (item.rfind("recall@", 0) == 0) {
      const std::string num = item.substr(7);
      if (num.empty() || num.find_first_not_of("0123456789") != std::string::npos || num.size() > 6 ||
          std::stoi(num) < 1) {
        throw ValidationError("unknown metric '" + item + "'");
      }
      spec.k = std::stoi(num);
    } else {
      throw ValidationError("unknown metric '" + item +
                            "'; valid metrics: recall@K, mean-rank, style-similarity");
    }
    if (!seen.insert(spec.name()).second) throw ValidationError("duplicate metric '" + item + "'");
    out.push_back(spec);
  }
  if (out.empty()) throw ValidationError("empty metric list");
  return out;
}

bool EvalReport::has(const std::string& metric) const {
  if (metric == "style-similarity") return !style_similarity.empty();
  return metrics.count(metric) != 0;
}

double EvalReport::value(const std::string& metric) const {
  if (metric == "style-similarity") {
    if (style_similarity.empty()) throw ValidationError("report '" + method + "' has no style-similarity");
    double total = 0.0;
    for (const auto& [_, v] : style_similarity) total += v;
    return total / static_cast<double>(style_similarity.size());
  }
  const auto it = metrics.find(metric);
  if (it == metrics.end()) throw ValidationError("report '" + method + "' is missing metric '" + metric + "'");
  return it->second;
}

checkpoint::Json report_to_json(const EvalReport& r) {
  checkpoint::Json j;
  j["schema"] = kReportSchema;
  j["method"] = r.method;
  j["split"] = r.split;
  j["ranking_mode"] = ranking_mode_name(r.ranking_mode);
  j["seed"] = r.seed;
  j["counts"] = {{"videos", r.videos}, {"steps", r.steps}, {"skipped", r.skipped}};
  checkpoint::Json m = checkpoint::Json::object();
  for (const auto& name : r.metric_order) {
    if (name == "style-similarity") {
      checkpoint::Json s = checkpoint::Json::object();
      for (const auto& [style, v] : r.style_similarity) s[style] = v;
      m[name] = s;
    } else {
      m[name] = r.metrics.at(name);
    }
  }
  j["metrics"] = m;
  checkpoint::Json videos = checkpoint::Json::object();
  for (const auto& [style, n] : r.style_videos) videos[style] = n;
  j["style_videos"] = videos;
  checkpoint::Json hashes = checkpoint::Json::object();
  for (const auto& [k, v] : r.artifact_hashes) hashes[k] = v;
  j["artifact_hashes"] = hashes;
  j["config"] = r.config;
  return j;
}

EvalReport report_from_json(const checkpoint::Json& j) {
  EvalReport r;
  try {
    if (j.at("schema").get<std::string>() != kReportSchema) {
      throw ParseError("report schema '" + j.at("schema").get<std::string>() + "' is not " + kReportSchema);
    }
    r.method = j.at("method").get<std::string>();
    r.split = j.at("split").get<std::string>();
    r.ranking_mode = parse_ranking_mode(j.at("ranking_mode").get<std::string>());
    r.seed = j.at("seed").get<std::uint64_t>();
    r.videos = j.at("counts").at("videos").get<int>();
    r.steps = j.at("counts").at("steps").get<int>();
    r.skipped = j.at("counts").at("skipped").get<int>();
    for (const auto& [name, v] : j.at("metrics").items()) {
      r.metric_order.push_back(name);
      if (name == "style-similarity") {
        for (const auto& [style, s] : v.items()) r.style_similarity[style] = s.get<double>();
      } else {
        r.metrics[name] = v.get<double>();
      }
    }
    for (const auto& [style, n] : j.at("style_videos").items()) r.style_videos[style] = n.get<int>();
    for (const auto& [k, v] : j.at("artifact_hashes").items()) r.artifact_hashes[k] = v.get<std::string>();
    r.config = j.at("config");
  } catch (const checkpoint::Json::exception& e) {
    throw ParseError(std::string("report: ") + e.what());
  }
  return r;
}

void emit_report(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write report to " + path.string());
  out << report_to_json(report).dump(2) << '\n';
  if (!out) throw IoError("failed writing report to " + path.string());
}

EvalReport load_report(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  checkpoint::Json j;
  try {
    j = checkpoint::Json::parse(text);
  } catch (const checkpoint::Json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return report_from_json(j);
}

void add_ranking_metrics(EvalReport& report, const std::vector<seq::DecodeTrace>& traces,
                         const std::vector<std::vector<int>>& gt, const Mat& transition_table,
                         const std::vector<MetricSpec>& metrics) {
  if (traces.size() != gt.size()) throw ValidationError("add_ranking_metrics: trace/ground-truth count mismatch");
  std::vector<std::vector<int>> rankings;
  std::vector<int> flat_gt;
  for (std::size_t v = 0; v < traces.size(); ++v) {
    if (traces[v].steps.size() != gt[v].size()) {
      throw ValidationError("add_ranking_metrics: video " + traces[v].video_id + " step count mismatch");
    }
    for (std::size_t t = 0; t < gt[v].size(); ++t) {
      rankings.push_back(rank_transitions(traces[v].steps[t], transition_table, report.ranking_mode));
      flat_gt.push_back(gt[v][t]);
    }
  }
  report.steps = static_cast<int>(flat_gt.size());
  for (const auto& m : metrics) {
    if (m.metric == Metric::kRecall) {
      report.metrics[m.name()] = recall_at_k(rankings, flat_gt, m.k);
    } else if (m.metric == Metric::kMeanRank) {
      report.metrics[m.name()] = mean_rank(rankings, flat_gt);
    }
  }
}

}  // namespace vt4s::eval
