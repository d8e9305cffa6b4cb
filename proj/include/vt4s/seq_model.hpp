// Copyright 2026 The vt4s Authors
// SPDX-License-Identifier: Apache-2.0

// Transformer encoder-decoder that maps an ordered list of clip features to
// one transition per adjacent clip pair.
//
// Encoder: clip features + learned positions -> input projection -> pre-LN
// transformer layers -> h_tfe [n x d_model]; z = Linear(flatten(h_tfe)), with
// the z head weight rows for positions >= n unused (zero padding).
//
// Decoder: the row sequence [z, BOS, in(e_tr[p_1]), ..., in(e_tr[p_{t-1}])]
// plus learned positions runs through causally masked pre-LN layers. Row s
// (s >= 1) yields step s: h_decode = Linear(h_tfd) in the pretrained embedding
// space, logits = Linear(h_decode).

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vt4s/checkpoint.hpp"
#include "vt4s/data.hpp"
#include "vt4s/embeddings.hpp"
#include "vt4s/nn.hpp"

namespace vt4s::seq {

using ad::Mat;
using embeddings::EmbeddingTable;

struct SeqModelConfig {
  int feature_dim = 256;
  int d_model = 512;
  int n_head = 8;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int d_ff = 2048;
  int embedding_dim = 128;  // d_e, must match the embedding table
  int n_transitions = 30;
  int n_max = 8;
  double lambda = 1.0;               // weight of the masked triplet term
  double classification_weight = 1.0;  // 0 gives the triplet-only ablation
  double margin = 0.5;
  ad::TripletForm triplet_form = ad::TripletForm::kCorrected;
  double learning_rate = 1e-5;
  int epochs = 60;
  int batch_size = 16;
  std::uint64_t seed = 0;

  void validate() const;
};

checkpoint::Json config_to_json(const SeqModelConfig& c);
SeqModelConfig config_from_json(const checkpoint::Json& j);

/// Pre-LN block: x + Attn(LN(x)), then x + FFN(LN(x)).
struct TransformerLayer {
  nn::LayerNorm attn_norm;
  nn::Linear query;
  nn::Linear key;
  nn::Linear value;
  nn::Linear out;
  nn::LayerNorm ffn_norm;
  nn::Linear ffn_in;
  nn::Linear ffn_out;

  TransformerLayer() = default;
  TransformerLayer(const std::string& name, int d_model, int d_ff, nn::Rng& rng);
  ad::Var operator()(const nn::Binder& b, ad::Var x, int n_head, bool causal) const;
  void collect(std::vector<ad::Parameter*>& out);
  void collect(std::vector<const ad::Parameter*>& out) const;
};

struct SeqModelParams {
  SeqModelConfig config;

  ad::Parameter encoder_positions;  // [n_max x F]
  nn::Linear input_projection;      // F -> d_model
  std::vector<TransformerLayer> encoder;
  nn::LayerNorm encoder_norm;
  nn::Linear latent_head;           // n_max * d_model -> d_model

  nn::Linear transition_input;      // d_e -> d_model
  ad::Parameter bos;                // [1 x d_model]
  ad::Parameter decoder_positions;  // [n_max x d_model]
  std::vector<TransformerLayer> decoder;
  nn::LayerNorm decoder_norm;
  nn::Linear decode_projection;     // d_model -> d_e
  nn::Linear logit_head;            // d_e -> N_tr

  static SeqModelParams init(const SeqModelConfig& config);
  std::vector<ad::Parameter*> parameters();
  [[nodiscard]] std::vector<const ad::Parameter*> parameters() const;
  /// Parameters that determine h_tfe and z.
  [[nodiscard]] std::vector<const ad::Parameter*> encoder_parameters() const;
};

checkpoint::Checkpoint to_checkpoint(const SeqModelParams& params);
SeqModelParams from_checkpoint(const checkpoint::Checkpoint& ckpt);

// ---- tape-level forward --------------------------------------------------------

struct EncodeVars {
  ad::Var h_tfe;  // [n x d_model]
  ad::Var z;      // [1 x d_model]
};

EncodeVars encode(const nn::Binder& b, const Mat& clips, const SeqModelParams& params);

struct DecodeVars {
  ad::Var h_decode;  // [steps x d_e]
  ad::Var logits;    // [steps x N_tr]
};

/// Runs the decoder on z and a prefix of emitted classes; returns outputs for
/// steps 1..|prefix|+1.
DecodeVars decode(const nn::Binder& b, ad::Var z, std::span<const int> prefix, const SeqModelParams& params,
                  const EmbeddingTable& table);

// ---- value-level API -----------------------------------------------------------

struct EncodeResult {
  Mat h_tfe;
  Mat z;
};

EncodeResult encode(const data::ClipFeatureSequence& features, const SeqModelParams& params);

struct StepOutput {
  Mat h_decode;  // [1 x d_e]
  Mat logits;    // [1 x N_tr]
};

/// Output of step |prefix| + 1. Depends only on z and the prefix.
StepOutput decode_step(const Mat& z, std::span<const int> prefix, const SeqModelParams& params,
                       const EmbeddingTable& table);

/// Every step output for a given prefix at once (rows = steps).
struct DecodeRows {
  Mat h_decode;
  Mat logits;
};
DecodeRows decode_all(const Mat& z, std::span<const int> prefix, const SeqModelParams& params,
                      const EmbeddingTable& table);

struct TraceStep {
  Mat h_decode;  // [1 x d_e]
  Mat logits;    // [1 x N_tr]
  int transition = 0;
  Mat z;         // latent used at this step
};

struct DecodeTrace {
  std::string video_id;
  std::vector<TraceStep> steps;

  [[nodiscard]] std::vector<int> transitions() const;
};

/// argmax_i <h, e_i>, ties broken by the lowest index.
int nearest_transition(const Mat& h_decode, const Mat& transition_table);

/// Autoregressive decode with a fixed latent; one transition per clip pair.
DecodeTrace recommend_greedy(const data::ClipFeatureSequence& features, const SeqModelParams& params,
                             const EmbeddingTable& table);

// ---- losses --------------------------------------------------------------------

double masked_triplet_loss(const Mat& h_decode, int gt_class, const Mat& transition_table, double margin,
                           ad::TripletForm form = ad::TripletForm::kCorrected);

/// Teacher-forced L_V for one record: w_cls * mean_t CE(logits_t, y_t) +
/// lambda * mean_t triplet(h_decode_t, y_t).
ad::Var sequence_loss(const nn::Binder& b, const SeqModelParams& params, const data::DatasetRecord& record,
                      const EmbeddingTable& table);
double sequence_loss(const SeqModelParams& params, const data::DatasetRecord& record, const EmbeddingTable& table);

/// The same objective from precomputed step outputs.
double sequence_loss_from_outputs(const Mat& h_decode, const Mat& logits, std::span<const int> gt,
                                  const EmbeddingTable& table, double lambda, double margin,
                                  double classification_weight = 1.0,
                                  ad::TripletForm form = ad::TripletForm::kCorrected);

// ---- training ------------------------------------------------------------------

struct SeqEpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_recall_at_1 = 0.0;
};

struct SeqTrainLog {
  std::vector<SeqEpochLog> epochs;
  int best_epoch = -1;
  double best_val_recall_at_1 = 0.0;
  double last_val_recall_at_1 = 0.0;
};

/// Greedy-decode Recall@1 over records (pooled over steps).
double greedy_recall_at_1(const SeqModelParams& params, const std::vector<data::DatasetRecord>& records,
                          const EmbeddingTable& table);

/// Adam with teacher forcing; returns the checkpoint with the best validation
/// Recall@1 (the last epoch when val is empty).
SeqModelParams train_seq_model(const std::vector<data::DatasetRecord>& train,
                               const std::vector<data::DatasetRecord>& val, const EmbeddingTable& table,
                               const SeqModelConfig& config, SeqTrainLog* log = nullptr);

}  // namespace vt4s::seq
