// Copyright 2026 The vt4s Authors
// SPDX-License-Identifier: Apache-2.0

// Inference-time style conditioning. A small decoder D_psi learns to rebuild
// the encoder output h_tfe from the latent z. At every decode step the latent
// is nudged by plain gradient descent on
//
//   L(z) = alpha_E * (1 - cos(mean_t h_decode_t(z), e_style))
//        + alpha_R * mean |D_psi(z) - h_tfe|
//
// before the next transition is emitted. An optional post pass swaps each
// emitted class for one of its K nearest table neighbors when that moves the
// mean embedding of the sequence closer to the style.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vt4s/checkpoint.hpp"
#include "vt4s/data.hpp"
#include "vt4s/embeddings.hpp"
#include "vt4s/nn.hpp"
#include "vt4s/seq_model.hpp"

namespace vt4s::style {

using ad::Mat;
using embeddings::EmbeddingTable;

enum class ReconActivation { kRelu, kNone };

struct ReconConfig {
  int hidden_dim = 512;
  ReconActivation activation = ReconActivation::kRelu;
  int epochs = 60;
  int batch_size = 16;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ReconDecoderParams {
  int d_model = 0;
  int n_max = 0;
  ReconActivation activation = ReconActivation::kRelu;
  nn::Linear first;   // d_model -> hidden
  nn::Linear second;  // hidden -> n_max * d_model

  static ReconDecoderParams init(int d_model, int n_max, const ReconConfig& config);
  std::vector<ad::Parameter*> parameters();
  [[nodiscard]] std::vector<const ad::Parameter*> parameters() const;
};

/// D_psi(z) restricted to the first n positions, as [n x d_model].
ad::Var reconstruct(const nn::Binder& b, ad::Var z, Eigen::Index n, const ReconDecoderParams& recon);
Mat reconstruct(const Mat& z, Eigen::Index n, const ReconDecoderParams& recon);

checkpoint::Checkpoint to_checkpoint(const ReconDecoderParams& recon);
ReconDecoderParams recon_from_checkpoint(const checkpoint::Checkpoint& ckpt);

struct ReconTrainLog {
  std::vector<double> epoch_loss;  // mean L1 over the training set, after each epoch
  double initial_loss = 0.0;
};

/// Fits D_psi on (z, h_tfe) pairs from the frozen encoder with Adam.
ReconDecoderParams train_recon_decoder(const seq::SeqModelParams& seq_params,
                                       const std::vector<data::DatasetRecord>& train, const ReconConfig& config,
                                       ReconTrainLog* log = nullptr);

/// 1 - cos(e_mu, e_style); the norms are clamped below at 1e-12.
double embedding_loss(const Mat& e_mu, const Mat& e_style);
/// Elementwise mean of |D_psi(z)[:n] - h_tfe_ref|.
double reconstruction_loss(const Mat& z, const Mat& h_tfe_ref, const ReconDecoderParams& recon);

struct SCMConfig {
  int iterations = 5000;
  double beta = 0.1;
  double alpha_e = 1.0;
  double alpha_r = 1.0;
  int k = 3;

  void validate(int n_transitions) const;
};

struct StyleTarget {
  int index = 0;
  Mat embedding;  // [1 x d_e]
};

/// Resolves a style name; unknown names raise ValidationError listing the vocabulary.
StyleTarget style_target(const EmbeddingTable& table, const std::string& name);

/// Everything the AM objective needs besides z.
struct ConditionContext {
  const seq::SeqModelParams* seq = nullptr;
  const ReconDecoderParams* recon = nullptr;
  const EmbeddingTable* table = nullptr;
  Mat h_tfe_ref;
  Mat e_style;
};

struct Objective {
  double value = 0.0;
  double embedding_term = 0.0;
  double reconstruction_term = 0.0;
  Mat grad;  // dL/dz, [1 x d_model]
};

/// L(z) and its gradient; decoder steps 1..|prefix|+1 are recomputed from z.
Objective condition_objective(const Mat& z, std::span<const int> prefix, const ConditionContext& ctx,
                              const SCMConfig& config);

/// `iterations` steps of z <- z - beta * grad L(z). Throws NumericError naming
/// the iteration when the gradient stops being finite.
Mat condition_step(const Mat& z, std::span<const int> prefix, const ConditionContext& ctx, const SCMConfig& config);

/// cos(mean of table rows for `classes`, e_style).
double sequence_similarity(std::span<const int> classes, const Mat& transition_table, const Mat& e_style);

/// Left-to-right pass; step t may switch to any of the K classes nearest to
/// h_decode_t, scored with the finalized prefix and the original suffix.
seq::DecodeTrace rrt_finetune(const seq::DecodeTrace& trace, const EmbeddingTable& table, const Mat& e_style,
                              int k);

struct StyledStep {
  double similarity_before = 0.0;  // style similarity of the step output before AM
  double similarity_after = 0.0;
};

struct StyledResult {
  seq::DecodeTrace trace;
  std::vector<StyledStep> steps;
};

StyledResult recommend_styled(const data::ClipFeatureSequence& features, const std::string& style,
                              const seq::SeqModelParams& seq_params, const ReconDecoderParams& recon,
                              const EmbeddingTable& table, const SCMConfig& config, bool rrt);

}  // namespace vt4s::style
