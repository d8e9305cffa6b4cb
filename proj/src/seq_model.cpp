// Copyright 2026 The vt4s Authors
// SPDX-License-Identifier: Apache-2.0

#include "vt4s/seq_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "vt4s/error.hpp"
#include "vt4s/hash.hpp"

namespace vt4s::seq {

void SeqModelConfig::validate() const {
  if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
  if (d_model < 1 || n_head < 1 || d_model % n_head != 0) throw ConfigError("d_model must be divisible by n_head");
  if (encoder_layers < 1 || decoder_layers < 1) throw ConfigError("encoder/decoder layers must be >= 1");
  if (d_ff < 1) throw ConfigError("d_ff must be >= 1");
  if (embedding_dim < 1) throw ConfigError("d_e must be >= 1");
  if (n_transitions < 2) throw ConfigError("n_transitions must be >= 2");
  if (n_max < 2) throw ConfigError("n_max must be >= 2");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (!(classification_weight >= 0.0)) throw ConfigError("classification_weight must be >= 0");
  if (!(margin >= 0.0)) throw ConfigError("margin must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("seq_lr must be > 0");
  if (epochs < 0) throw ConfigError("seq_epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("seq_batch must be >= 1");
}

checkpoint::Json config_to_json(const SeqModelConfig& c) {
  checkpoint::Json j;
  j["feature_dim"] = c.feature_dim;
  j["d_model"] = c.d_model;
  j["n_head"] = c.n_head;
  j["encoder_layers"] = c.encoder_layers;
  j["decoder_layers"] = c.decoder_layers;
  j["d_ff"] = c.d_ff;
  j["d_e"] = c.embedding_dim;
  j["n_transitions"] = c.n_transitions;
  j["n_max"] = c.n_max;
  j["lambda"] = c.lambda;
  j["classification_weight"] = c.classification_weight;
  j["margin"] = c.margin;
  j["triplet_form"] = c.triplet_form == ad::TripletForm::kCorrected ? "corrected" : "literal";
  j["learning_rate"] = c.learning_rate;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  return j;
}

SeqModelConfig config_from_json(const checkpoint::Json& j) {
  SeqModelConfig c;
  try {
    c.feature_dim = j.at("feature_dim").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.n_head = j.at("n_head").get<int>();
    c.encoder_layers = j.at("encoder_layers").get<int>();
    c.decoder_layers = j.at("decoder_layers").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.embedding_dim = j.at("d_e").get<int>();
    c.n_transitions = j.at("n_transitions").get<int>();
    c.n_max = j.at("n_max").get<int>();
    c.lambda = j.at("lambda").get<double>();
    c.classification_weight = j.at("classification_weight").get<double>();
    c.margin = j.at("margin").get<double>();
    c.triplet_form = j.at("triplet_form").get<std::string>() == "literal" ? ad::TripletForm::kLiteral
                                                                          : ad::TripletForm::kCorrected;
    c.learning_rate = j.at("learning_rate").get<double>();
    c.epochs = j.at("epochs").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const checkpoint::Json::exception& e) {
    throw ParseError(std::string("seq model config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---- layers --------------------------------------------------------------------

TransformerLayer::TransformerLayer(const std::string& name, int d_model, int d_ff, nn::Rng& rng)
    : attn_norm(name + ".attn_norm", d_model),
      query(name + ".query", d_model, d_model, rng),
      key(name + ".key", d_model, d_model, rng),
      value(name + ".value", d_model, d_model, rng),
      out(name + ".out", d_model, d_model, rng),
      ffn_norm(name + ".ffn_norm", d_model),
      ffn_in(name + ".ffn_in", d_model, d_ff, rng),
      ffn_out(name + ".ffn_out", d_ff, d_model, rng) {}

ad::Var TransformerLayer::operator()(const nn::Binder& b, ad::Var x, int n_head, bool causal) const {
  const ad::Var h = attn_norm(b, x);
  const ad::Var attn = ad::multi_head_attention(query(b, h), key(b, h), value(b, h), n_head, causal);
  x = ad::add(x, out(b, attn));
  const ad::Var f = ffn_out(b, ad::relu(ffn_in(b, ffn_norm(b, x))));
  return ad::add(x, f);
}

void TransformerLayer::collect(std::vector<ad::Parameter*>& o) {
  attn_norm.collect(o);
  query.collect(o);
  key.collect(o);
  value.collect(o);
  out.collect(o);
  ffn_norm.collect(o);
  ffn_in.collect(o);
  ffn_out.collect(o);
}

void TransformerLayer::collect(std::vector<const ad::Parameter*>& o) const {
  attn_norm.collect(o);
  query.collect(o);
  key.collect(o);
  value.collect(o);
  out.collect(o);
  ffn_norm.collect(o);
  ffn_in.collect(o);
  ffn_out.collect(o);
}

SeqModelParams SeqModelParams::init(const SeqModelConfig& config) {
  config.validate();
  nn::Rng rng(mix64(config.seed ^ 0x5345514dULL));
  SeqModelParams p;
  p.config = config;
  p.encoder_positions = ad::Parameter("enc.positions", nn::normal(config.n_max, config.feature_dim, 0.02, rng));
  p.input_projection = nn::Linear("enc.input", config.feature_dim, config.d_model, rng);
  for (int i = 0; i < config.encoder_layers; ++i) {
    p.encoder.emplace_back("enc.layer" + std::to_string(i), config.d_model, config.d_ff, rng);
  }
  p.encoder_norm = nn::LayerNorm("enc.norm", config.d_model);
  p.latent_head = nn::Linear("enc.latent", config.n_max * config.d_model, config.d_model, rng);

  p.transition_input = nn::Linear("dec.transition_input", config.embedding_dim, config.d_model, rng);
  p.bos = ad::Parameter("dec.bos", nn::normal(1, config.d_model, 1.0, rng));
  p.decoder_positions = ad::Parameter("dec.positions", nn::normal(config.n_max, config.d_model, 0.02, rng));
  for (int i = 0; i < config.decoder_layers; ++i) {
    p.decoder.emplace_back("dec.layer" + std::to_string(i), config.d_model, config.d_ff, rng);
  }
  p.decoder_norm = nn::LayerNorm("dec.norm", config.d_model);
  p.decode_projection = nn::Linear("dec.projection", config.d_model, config.embedding_dim, rng);
  p.logit_head = nn::Linear("dec.logits", config.embedding_dim, config.n_transitions, rng);
  return p;
}

std::vector<ad::Parameter*> SeqModelParams::parameters() {
  std::vector<ad::Parameter*> o;
  o.push_back(&encoder_positions);
  input_projection.collect(o);
  for (auto& l : encoder) l.collect(o);
  encoder_norm.collect(o);
  latent_head.collect(o);
  transition_input.collect(o);
  o.push_back(&bos);
  o.push_back(&decoder_positions);
  for (auto& l : decoder) l.collect(o);
  decoder_norm.collect(o);
  decode_projection.collect(o);
  logit_head.collect(o);
  return o;
}

std::vector<const ad::Parameter*> SeqModelParams::parameters() const {
  std::vector<const ad::Parameter*> o = encoder_parameters();
  transition_input.collect(o);
  o.push_back(&bos);
  o.push_back(&decoder_positions);
  for (const auto& l : decoder) l.collect(o);
  decoder_norm.collect(o);
  decode_projection.collect(o);
  logit_head.collect(o);
  return o;
}

std::vector<const ad::Parameter*> SeqModelParams::encoder_parameters() const {
  std::vector<const ad::Parameter*> o;
  o.push_back(&encoder_positions);
  input_projection.collect(o);
  for (const auto& l : encoder) l.collect(o);
  encoder_norm.collect(o);
  latent_head.collect(o);
  return o;
}

checkpoint::Checkpoint to_checkpoint(const SeqModelParams& params) {
  checkpoint::Checkpoint ckpt;
  ckpt.metadata["kind"] = "seq";
  ckpt.metadata["config"] = config_to_json(params.config);
  checkpoint::store_parameters(ckpt, params.parameters());
  return ckpt;
}

SeqModelParams from_checkpoint(const checkpoint::Checkpoint& ckpt) {
  if (ckpt.kind() != "seq") throw ValidationError("checkpoint kind '" + ckpt.kind() + "' is not a seq model");
  SeqModelParams p = SeqModelParams::init(config_from_json(ckpt.metadata.at("config")));
  checkpoint::restore_parameters(ckpt, p.parameters());
  return p;
}

// ---- forward -------------------------------------------------------------------

EncodeVars encode(const nn::Binder& b, const Mat& clips, const SeqModelParams& params) {
  const SeqModelConfig& c = params.config;
  const auto n = clips.rows();
  if (n < 2 || n > c.n_max) {
    throw ValidationError("encode: clip count " + std::to_string(n) + " outside 2.." + std::to_string(c.n_max));
  }
  if (clips.cols() != c.feature_dim) {
    throw ValidationError("encode: feature dimension " + std::to_string(clips.cols()) + " does not match model " +
                          std::to_string(c.feature_dim));
  }
  ad::Tape& tape = b.tape();
  ad::Var x = ad::add(tape.constant_ref(clips), ad::slice_rows(b(params.encoder_positions), 0, n));
  x = params.input_projection(b, x);
  for (const auto& layer : params.encoder) x = layer(b, x, c.n_head, false);
  const ad::Var h_tfe = params.encoder_norm(b, x);
  const ad::Var flat = ad::reshape(h_tfe, 1, n * c.d_model);
  const ad::Var w = ad::slice_rows(b(params.latent_head.weight), 0, n * c.d_model);
  const ad::Var z = ad::linear(flat, w, b(params.latent_head.bias));
  return {h_tfe, z};
}

DecodeVars decode(const nn::Binder& b, ad::Var z, std::span<const int> prefix, const SeqModelParams& params,
                  const EmbeddingTable& table) {
  const SeqModelConfig& c = params.config;
  if (table.dim() != c.embedding_dim) {
    throw ConfigError("decode: embedding table dimension " + std::to_string(table.dim()) + " != model d_e " +
                      std::to_string(c.embedding_dim));
  }
  if (table.n_transitions() != c.n_transitions) throw ConfigError("decode: transition count mismatch");
  const auto len = static_cast<Eigen::Index>(prefix.size()) + 2;
  if (len > c.n_max) throw ValidationError("decode: prefix longer than n_max - 2");
  if (z.rows() != 1 || z.cols() != c.d_model) throw ValidationError("decode: z must be [1 x d_model]");

  ad::Tape& tape = b.tape();
  std::vector<ad::Var> rows{z, b(params.bos)};
  if (!prefix.empty()) {
    Mat emb(static_cast<Eigen::Index>(prefix.size()), table.dim());
    for (std::size_t i = 0; i < prefix.size(); ++i) {
      const int cls = prefix[i];
      if (cls < 0 || cls >= table.n_transitions()) {
        throw ValidationError("decode: prefix entry " + std::to_string(i) + " is not a valid class index");
      }
      emb.row(static_cast<Eigen::Index>(i)) = table.transitions.row(cls);
    }
    rows.push_back(params.transition_input(b, tape.constant(std::move(emb))));
  }
  ad::Var x = ad::add(ad::concat_rows(rows), ad::slice_rows(b(params.decoder_positions), 0, len));
  for (const auto& layer : params.decoder) x = layer(b, x, c.n_head, true);
  const ad::Var h_tfd = ad::slice_rows(params.decoder_norm(b, x), 1, len - 1);
  const ad::Var h_decode = params.decode_projection(b, h_tfd);
  return {h_decode, params.logit_head(b, h_decode)};
}

EncodeResult encode(const data::ClipFeatureSequence& features, const SeqModelParams& params) {
  ad::Tape tape;
  const nn::Binder b(tape, false);
  const EncodeVars v = encode(b, features.clips, params);
  return {v.h_tfe.value(), v.z.value()};
}

DecodeRows decode_all(const Mat& z, std::span<const int> prefix, const SeqModelParams& params,
                      const EmbeddingTable& table) {
  ad::Tape tape;
  const nn::Binder b(tape, false);
  const DecodeVars v = decode(b, tape.constant_ref(z), prefix, params, table);
  return {v.h_decode.value(), v.logits.value()};
}

StepOutput decode_step(const Mat& z, std::span<const int> prefix, const SeqModelParams& params,
                       const EmbeddingTable& table) {
  const DecodeRows rows = decode_all(z, prefix, params, table);
  const auto last = rows.h_decode.rows() - 1;
  return {rows.h_decode.row(last), rows.logits.row(last)};
}

std::vector<int> DecodeTrace::transitions() const {
  std::vector<int> out;
  out.reserve(steps.size());
  for (const auto& s : steps) out.push_back(s.transition);
  return out;
}

int nearest_transition(const Mat& h_decode, const Mat& transition_table) {
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < transition_table.rows(); ++i) {
    const double s = h_decode.row(0).dot(transition_table.row(i));
    if (s > best_score) {
      best_score = s;
      best = static_cast<int>(i);
    }
  }
  return best;
}

DecodeTrace recommend_greedy(const data::ClipFeatureSequence& features, const SeqModelParams& params,
                             const EmbeddingTable& table) {
  features.validate(params.config.n_max);
  const EncodeResult enc = encode(features, params);
  DecodeTrace trace;
  trace.video_id = features.video_id;
  std::vector<int> prefix;
  for (int t = 0; t + 1 < features.n(); ++t) {
    StepOutput out = decode_step(enc.z, prefix, params, table);
    const int cls = nearest_transition(out.h_decode, table.transitions);
    trace.steps.push_back({std::move(out.h_decode), std::move(out.logits), cls, enc.z});
    prefix.push_back(cls);
  }
  return trace;
}

// ---- losses --------------------------------------------------------------------

double masked_triplet_loss(const Mat& h_decode, int gt_class, const Mat& transition_table, double margin,
                           ad::TripletForm form) {
  ad::Tape tape;
  return ad::masked_triplet(tape.constant_ref(h_decode), transition_table, gt_class, margin, form).item();
}

ad::Var sequence_loss(const nn::Binder& b, const SeqModelParams& params, const data::DatasetRecord& record,
                      const EmbeddingTable& table) {
  const SeqModelConfig& c = params.config;
  const auto steps = static_cast<int>(record.gt_transitions.size());
  if (steps != record.features.n() - 1) throw ValidationError("sequence_loss: transition count != clips - 1");
  const EncodeVars enc = encode(b, record.features.clips, params);
  const std::span<const int> gt(record.gt_transitions);
  const DecodeVars dec = decode(b, enc.z, gt.first(static_cast<std::size_t>(steps - 1)), params, table);

  ad::Tape& tape = b.tape();
  ad::Var total = tape.constant(Mat::Zero(1, 1));
  const double inv = 1.0 / static_cast<double>(steps);
  for (int t = 0; t < steps; ++t) {
    const int y = gt[static_cast<std::size_t>(t)];
    if (c.classification_weight > 0.0) {
      total = ad::add(total, ad::scale(ad::cross_entropy(ad::slice_rows(dec.logits, t, 1), y),
                                       c.classification_weight * inv));
    }
    if (c.lambda > 0.0) {
      total = ad::add(total, ad::scale(ad::masked_triplet(ad::slice_rows(dec.h_decode, t, 1), table.transitions, y,
                                                          c.margin, c.triplet_form),
                                       c.lambda * inv));
    }
  }
  return total;
}

double sequence_loss(const SeqModelParams& params, const data::DatasetRecord& record, const EmbeddingTable& table) {
  ad::Tape tape;
  return sequence_loss(nn::Binder(tape, false), params, record, table).item();
}

double sequence_loss_from_outputs(const Mat& h_decode, const Mat& logits, std::span<const int> gt,
                                  const EmbeddingTable& table, double lambda, double margin,
                                  double classification_weight, ad::TripletForm form) {
  if (static_cast<Eigen::Index>(gt.size()) != h_decode.rows() || h_decode.rows() != logits.rows()) {
    throw ValidationError("sequence_loss: step count mismatch");
  }
  if (gt.empty()) throw ValidationError("sequence_loss: no steps");
  ad::Tape tape;
  double ce = 0.0;
  double trip = 0.0;
  for (std::size_t t = 0; t < gt.size(); ++t) {
    const auto r = static_cast<Eigen::Index>(t);
    ce += ad::cross_entropy(tape.constant(logits.row(r)), gt[t]).item();
    trip += ad::masked_triplet(tape.constant(h_decode.row(r)), table.transitions, gt[t], margin, form).item();
  }
  const auto n = static_cast<double>(gt.size());
  return classification_weight * ce / n + lambda * trip / n;
}

// ---- training ------------------------------------------------------------------

double greedy_recall_at_1(const SeqModelParams& params, const std::vector<data::DatasetRecord>& records,
                          const EmbeddingTable& table) {
  std::size_t hits = 0;
  std::size_t total = 0;
  for (const auto& r : records) {
    const DecodeTrace trace = recommend_greedy(r.features, params, table);
    for (std::size_t t = 0; t < trace.steps.size(); ++t) {
      hits += trace.steps[t].transition == r.gt_transitions[t] ? 1 : 0;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

SeqModelParams train_seq_model(const std::vector<data::DatasetRecord>& train,
                               const std::vector<data::DatasetRecord>& val, const EmbeddingTable& table,
                               const SeqModelConfig& config, SeqTrainLog* log) {
  config.validate();
  if (train.empty()) throw ValidationError("train_seq_model: empty training set");
  if (table.dim() != config.embedding_dim) {
    throw ConfigError("train_seq_model: embedding dimension " + std::to_string(table.dim()) + " != d_e " +
                      std::to_string(config.embedding_dim));
  }
  if (table.n_transitions() != config.n_transitions) {
    throw ConfigError("train_seq_model: embedding table has " + std::to_string(table.n_transitions()) +
                      " transitions, config expects " + std::to_string(config.n_transitions));
  }
  for (const auto& r : train) r.validate(config.n_transitions, table.n_styles(), config.n_max);

  SeqModelParams params = SeqModelParams::init(config);
  SeqModelParams best = params;
  double best_recall = -1.0;
  nn::Adam adam(params.parameters(), {.learning_rate = config.learning_rate});
  nn::Rng rng(mix64(config.seed ^ 0x5345515452ULL));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  ad::Tape tape;
  const nn::Binder b(tape, true);
  SeqTrainLog local;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double train_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const double inv = 1.0 / static_cast<double>(end - start);
      adam.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        tape.clear();
        const ad::Var loss = sequence_loss(b, params, train[order[i]], table);
        if (!std::isfinite(loss.item())) {
          throw NumericError("train_seq_model: non-finite loss at epoch " + std::to_string(epoch));
        }
        train_loss += loss.item();
        tape.backward(ad::scale(loss, inv));
      }
      adam.step();
    }
    SeqEpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = train_loss / static_cast<double>(train.size());
    if (!val.empty()) {
      double vl = 0.0;
      for (const auto& r : val) vl += sequence_loss(params, r, table);
      entry.val_loss = vl / static_cast<double>(val.size());
      entry.val_recall_at_1 = greedy_recall_at_1(params, val, table);
    }
    local.epochs.push_back(entry);
    local.last_val_recall_at_1 = entry.val_recall_at_1;
    if (val.empty() || entry.val_recall_at_1 > best_recall) {
      best_recall = entry.val_recall_at_1;
      best = params;
      local.best_epoch = epoch;
      local.best_val_recall_at_1 = entry.val_recall_at_1;
    }
  }
  if (config.epochs == 0) local.best_epoch = -1;
  if (log != nullptr) *log = std::move(local);
  return config.epochs == 0 ? params : best;
}

}  // namespace vt4s::seq
