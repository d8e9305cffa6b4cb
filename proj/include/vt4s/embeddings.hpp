// Copyright 2026 The vt4s Authors
// SPDX-License-Identifier: Apache-2.0

// Multitask embedding network: a shared projection normalized to the unit
// sphere feeds a transition classifier and a style classifier. Transition and
// style embedding tables are read off the unit vectors it produces.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vt4s/data.hpp"
#include "vt4s/nn.hpp"

namespace vt4s::embeddings {

using ad::Mat;

struct MLNConfig {
  int feature_dim = 256;
  int embedding_dim = 128;
  int n_transitions = 30;
  int n_styles = 5;
  int epochs = 30;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double lambda_mtl = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct MLNParams {
  nn::Linear projection;       // F -> d_e
  nn::Linear transition_head;  // d_e -> N_tr
  nn::Linear style_head;       // d_e -> N_style

  static MLNParams init(const MLNConfig& config);
  std::vector<ad::Parameter*> parameters();
  [[nodiscard]] std::vector<const ad::Parameter*> parameters() const;
  [[nodiscard]] int feature_dim() const { return static_cast<int>(projection.in_dim()); }
  [[nodiscard]] int embedding_dim() const { return static_cast<int>(projection.out_dim()); }
};

struct MLNOutput {
  Mat unit;               // U, [1 x d_e], unit norm (eps 1e-12 guards zero input)
  Mat transition_logits;  // [1 x N_tr]
  Mat style_logits;       // [1 x N_style]
};

struct MLNVars {
  ad::Var unit;
  ad::Var transition_logits;
  ad::Var style_logits;
};

MLNVars mln_forward(const nn::Binder& b, ad::Var feature, const MLNParams& params);
MLNOutput mln_forward(const Mat& feature, const MLNParams& params);

/// L_TC + lambda * L_VPC when a style label is present, L_TC otherwise. The
/// style logits are not touched at all for unlabeled samples.
ad::Var mtl_loss(ad::Var transition_logits, ad::Var style_logits, int gt_transition, std::optional<int> gt_style,
                 double lambda_mtl);
double mtl_loss(const Mat& transition_logits, const Mat& style_logits, int gt_transition,
                std::optional<int> gt_style, double lambda_mtl);

/// One per-transition training example: the segment feature around it.
struct TransitionSample {
  Mat feature;  // [1 x F]
  int transition = 0;
  std::optional<int> style;
};

std::vector<TransitionSample> transition_samples(const std::vector<data::DatasetRecord>& records);

struct MLNTrainLog {
  std::vector<double> epoch_loss;
};

/// Adam over shuffled mini-batches; returns the last-epoch parameters.
MLNParams train_mln(const std::vector<data::DatasetRecord>& train, const MLNConfig& config,
                    MLNTrainLog* log = nullptr);

/// Fraction of transition samples whose argmax transition logit is correct.
double transition_accuracy(const MLNParams& params, const std::vector<TransitionSample>& samples);

// ---- embedding tables ----------------------------------------------------------

struct EmbeddingTable {
  Mat transitions;  // [N_tr x d_e], unit rows
  Mat styles;       // [N_style x d_e], unit rows
  data::Vocabularies vocab;

  struct Provenance {
    std::string source_checkpoint;
    std::string extraction_rule;
    std::uint64_t seed = 0;
  } provenance;

  [[nodiscard]] int n_transitions() const { return static_cast<int>(transitions.rows()); }
  [[nodiscard]] int n_styles() const { return static_cast<int>(styles.rows()); }
  [[nodiscard]] int dim() const { return static_cast<int>(transitions.cols()); }
  /// Throws ValidationError when counts, dimensions or norms are off.
  void validate(double norm_tolerance = 1e-6) const;
};

inline constexpr const char* kMeanUnitRule = "normalized-mean-of-U";

/// Transition row i: normalized mean of U over every segment labeled i.
/// Style row k: normalized mean of U over every segment of a video labeled k.
/// Throws ValidationError listing classes or styles without samples.
EmbeddingTable extract_embedding_tables(const MLNParams& params, const std::vector<data::DatasetRecord>& records,
                                        const data::Vocabularies& vocab);

/// Text format: header `VT4S-EMB 1 <n_tr> <n_style> <d_e>`, then
/// `<T|S> <index> <name> <values...>` per row. Provenance goes to `<path>.meta.json`.
void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path);
EmbeddingTable load_embeddings(const std::filesystem::path& path);

}  // namespace vt4s::embeddings
