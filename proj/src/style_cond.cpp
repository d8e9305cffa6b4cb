// Copyright 2026 The vt4s Authors
// SPDX-License-Identifier: Apache-2.0

#include "vt4s/style_cond.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vt4s/error.hpp"
#include "vt4s/hash.hpp"

namespace vt4s::style {

namespace {

const char* activation_name(ReconActivation a) { return a == ReconActivation::kRelu ? "relu" : "none"; }

ReconActivation parse_activation(const std::string& s) {
  if (s == "relu") return ReconActivation::kRelu;
  if (s == "none") return ReconActivation::kNone;
  throw ConfigError("recon activation must be relu or none, got '" + s + "'");
}

std::vector<int> ranked_by_dot(const Mat& h, const Mat& table) {
  std::vector<double> score(static_cast<std::size_t>(table.rows()));
  for (Eigen::Index i = 0; i < table.rows(); ++i) score[static_cast<std::size_t>(i)] = h.row(0).dot(table.row(i));
  std::vector<int> order(score.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return score[static_cast<std::size_t>(a)] > score[static_cast<std::size_t>(b)];
  });
  return order;
}

double cosine(const Mat& a, const Mat& b) {
  const double na = std::max(a.norm(), 1e-12);
  const double nb = std::max(b.norm(), 1e-12);
  return a.row(0).dot(b.row(0)) / (na * nb);
}

}  // namespace

void ReconConfig::validate() const {
  if (hidden_dim < 1) throw ConfigError("recon_hidden must be >= 1");
  if (epochs < 0) throw ConfigError("recon_epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("recon_batch must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("recon_lr must be > 0");
}

ReconDecoderParams ReconDecoderParams::init(int d_model, int n_max, const ReconConfig& config) {
  config.validate();
  if (d_model < 1 || n_max < 2) throw ConfigError("recon decoder: invalid d_model or n_max");
  nn::Rng rng(mix64(config.seed ^ 0x5245434fULL));
  ReconDecoderParams p;
  p.d_model = d_model;
  p.n_max = n_max;
  p.activation = config.activation;
  p.first = nn::Linear("recon.first", d_model, config.hidden_dim, rng);
  p.second = nn::Linear("recon.second", config.hidden_dim, static_cast<Eigen::Index>(n_max) * d_model, rng);
  return p;
}

std::vector<ad::Parameter*> ReconDecoderParams::parameters() {
  std::vector<ad::Parameter*> o;
  first.collect(o);
  second.collect(o);
  return o;
}

std::vector<const ad::Parameter*> ReconDecoderParams::parameters() const {
  std::vector<const ad::Parameter*> o;
  first.collect(o);
  second.collect(o);
  return o;
}

ad::Var reconstruct(const nn::Binder& b, ad::Var z, Eigen::Index n, const ReconDecoderParams& recon) {
  if (n < 1 || n > recon.n_max) throw ValidationError("reconstruct: n outside 1..n_max");
  if (z.rows() != 1 || z.cols() != recon.d_model) {
    throw ConfigError("reconstruct: z has " + std::to_string(z.cols()) + " columns, decoder expects " +
                      std::to_string(recon.d_model));
  }
  ad::Var h = recon.first(b, z);
  if (recon.activation == ReconActivation::kRelu) h = ad::relu(h);
  const ad::Var flat = recon.second(b, h);
  const ad::Var used = ad::reshape(flat, recon.n_max, recon.d_model);
  return ad::slice_rows(used, 0, n);
}

Mat reconstruct(const Mat& z, Eigen::Index n, const ReconDecoderParams& recon) {
  ad::Tape tape;
  return reconstruct(nn::Binder(tape, false), tape.constant_ref(z), n, recon).value();
}

checkpoint::Checkpoint to_checkpoint(const ReconDecoderParams& recon) {
  checkpoint::Checkpoint ckpt;
  ckpt.metadata["kind"] = "recon";
  ckpt.metadata["d_model"] = recon.d_model;
  ckpt.metadata["n_max"] = recon.n_max;
  ckpt.metadata["hidden_dim"] = recon.first.out_dim();
  ckpt.metadata["activation"] = activation_name(recon.activation);
  checkpoint::store_parameters(ckpt, recon.parameters());
  return ckpt;
}

ReconDecoderParams recon_from_checkpoint(const checkpoint::Checkpoint& ckpt) {
  if (ckpt.kind() != "recon") throw ValidationError("checkpoint kind '" + ckpt.kind() + "' is not a recon decoder");
  ReconConfig cfg;
  int d_model = 0;
  int n_max = 0;
  try {
    cfg.hidden_dim = ckpt.metadata.at("hidden_dim").get<int>();
    cfg.activation = parse_activation(ckpt.metadata.at("activation").get<std::string>());
    d_model = ckpt.metadata.at("d_model").get<int>();
    n_max = ckpt.metadata.at("n_max").get<int>();
  } catch (const checkpoint::Json::exception& e) {
    throw ParseError(std::string("recon checkpoint metadata: ") + e.what());
  }
  ReconDecoderParams p = ReconDecoderParams::init(d_model, n_max, cfg);
  checkpoint::restore_parameters(ckpt, p.parameters());
  return p;
}

ReconDecoderParams train_recon_decoder(const seq::SeqModelParams& seq_params,
                                       const std::vector<data::DatasetRecord>& train, const ReconConfig& config,
                                       ReconTrainLog* log) {
  config.validate();
  if (train.empty()) throw ValidationError("train_recon_decoder: empty training set");
  const auto& sc = seq_params.config;
  std::vector<seq::EncodeResult> pairs;
  pairs.reserve(train.size());
  for (const auto& r : train) {
    if (r.features.dim() != sc.feature_dim) {
      throw ConfigError("train_recon_decoder: record feature dimension " + std::to_string(r.features.dim()) +
                        " does not match the encoder (" + std::to_string(sc.feature_dim) + ")");
    }
    pairs.push_back(seq::encode(r.features, seq_params));
  }

  ReconDecoderParams recon = ReconDecoderParams::init(sc.d_model, sc.n_max, config);
  nn::Adam adam(recon.parameters(), {.learning_rate = config.learning_rate});
  nn::Rng rng(mix64(config.seed ^ 0x52454354ULL));
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);

  auto mean_l1 = [&] {
    double total = 0.0;
    for (const auto& p : pairs) total += reconstruction_loss(p.z, p.h_tfe, recon);
    return total / static_cast<double>(pairs.size());
  };
  ReconTrainLog local;
  local.initial_loss = mean_l1();

  ad::Tape tape;
  const nn::Binder b(tape, true);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const double inv = 1.0 / static_cast<double>(end - start);
      adam.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        tape.clear();
        const auto& p = pairs[order[i]];
        const ad::Var rec = reconstruct(b, tape.constant_ref(p.z), p.h_tfe.rows(), recon);
        tape.backward(ad::scale(ad::l1_mean_to(rec, p.h_tfe), inv));
      }
      adam.step();
    }
    if (!nn::all_finite(std::as_const(recon).parameters())) {
      throw NumericError("train_recon_decoder: non-finite parameters after epoch " + std::to_string(epoch));
    }
    local.epoch_loss.push_back(mean_l1());
  }
  if (log != nullptr) *log = std::move(local);
  return recon;
}

double embedding_loss(const Mat& e_mu, const Mat& e_style) { return 1.0 - cosine(e_mu, e_style); }

double reconstruction_loss(const Mat& z, const Mat& h_tfe_ref, const ReconDecoderParams& recon) {
  const Mat rec = reconstruct(z, h_tfe_ref.rows(), recon);
  if (rec.cols() != h_tfe_ref.cols()) throw ConfigError("reconstruction_loss: d_model mismatch");
  return (rec - h_tfe_ref).cwiseAbs().mean();
}

void SCMConfig::validate(int n_transitions) const {
  if (iterations < 0) throw ConfigError("scm_iterations must be >= 0");
  if (!(beta > 0.0)) throw ConfigError("scm_beta must be > 0");
  if (!(alpha_e >= 0.0)) throw ConfigError("scm_alpha_e must be >= 0");
  if (!(alpha_r >= 0.0)) throw ConfigError("scm_alpha_r must be >= 0");
  if (k < 1 || k > n_transitions) {
    throw ConfigError("rrt_k must be in 1.." + std::to_string(n_transitions) + ", got " + std::to_string(k));
  }
}

StyleTarget style_target(const EmbeddingTable& table, const std::string& name) {
  const auto idx = table.vocab.styles.index_of(name);
  if (!idx) {
    throw ValidationError("unknown style '" + name + "'; valid styles: " + table.vocab.styles.joined());
  }
  return {*idx, table.styles.row(*idx)};
}

Objective condition_objective(const Mat& z, std::span<const int> prefix, const ConditionContext& ctx,
                              const SCMConfig& config) {
  ad::Tape tape;
  const nn::Binder b(tape, false);
  const ad::Var zv = tape.leaf(z);
  Objective out;
  ad::Var root = tape.constant(Mat::Zero(1, 1));
  {
    const seq::DecodeVars dec = seq::decode(b, zv, prefix, *ctx.seq, *ctx.table);
    const ad::Var cos = ad::cosine_to(ad::mean_rows(dec.h_decode), ctx.e_style);
    out.embedding_term = 1.0 - cos.item();
    if (config.alpha_e > 0.0) root = ad::add(root, ad::scale(cos, -config.alpha_e));
  }
  {
    const ad::Var rec = reconstruct(b, zv, ctx.h_tfe_ref.rows(), *ctx.recon);
    const ad::Var l1 = ad::l1_mean_to(rec, ctx.h_tfe_ref);
    out.reconstruction_term = l1.item();
    if (config.alpha_r > 0.0) root = ad::add(root, ad::scale(l1, config.alpha_r));
  }
  out.value = config.alpha_e * out.embedding_term + config.alpha_r * out.reconstruction_term;
  if (tape.requires_grad(root)) {
    tape.backward(root);
    out.grad = tape.grad(zv);
  } else {
    out.grad = Mat::Zero(1, z.cols());
  }
  return out;
}

Mat condition_step(const Mat& z, std::span<const int> prefix, const ConditionContext& ctx, const SCMConfig& config) {
  Mat cur = z;
  for (int it = 0; it < config.iterations; ++it) {
    const Objective obj = condition_objective(cur, prefix, ctx, config);
    if (!obj.grad.allFinite()) {
      throw NumericError("condition_step: non-finite gradient at iteration " + std::to_string(it));
    }
    cur -= config.beta * obj.grad;
  }
  return cur;
}

double sequence_similarity(std::span<const int> classes, const Mat& transition_table, const Mat& e_style) {
  if (classes.empty()) throw ValidationError("sequence_similarity: empty sequence");
  Mat mean = Mat::Zero(1, transition_table.cols());
  for (const int c : classes) mean += transition_table.row(c);
  mean /= static_cast<double>(classes.size());
  return cosine(mean, e_style);
}

seq::DecodeTrace rrt_finetune(const seq::DecodeTrace& trace, const EmbeddingTable& table, const Mat& e_style,
                              int k) {
  if (k < 1 || k > table.n_transitions()) throw ValidationError("rrt_finetune: K outside 1..N_tr");
  seq::DecodeTrace out = trace;
  if (trace.steps.empty()) return out;
  std::vector<int> classes = trace.transitions();
  for (std::size_t t = 0; t < out.steps.size(); ++t) {
    const std::vector<int> ranked = ranked_by_dot(out.steps[t].h_decode, table.transitions);
    int best = classes[t];
    double best_sim = sequence_similarity(classes, table.transitions, e_style);
    for (int c = 0; c < k; ++c) {
      const int cand = ranked[static_cast<std::size_t>(c)];
      if (cand == best) continue;
      classes[t] = cand;
      const double sim = sequence_similarity(classes, table.transitions, e_style);
      if (sim > best_sim) {
        best_sim = sim;
        best = cand;
      }
    }
    classes[t] = best;
    out.steps[t].transition = best;
  }
  return out;
}

StyledResult recommend_styled(const data::ClipFeatureSequence& features, const std::string& style,
                              const seq::SeqModelParams& seq_params, const ReconDecoderParams& recon,
                              const EmbeddingTable& table, const SCMConfig& config, bool rrt) {
  config.validate(table.n_transitions());
  const StyleTarget target = style_target(table, style);
  features.validate(seq_params.config.n_max);
  if (recon.d_model != seq_params.config.d_model || recon.n_max != seq_params.config.n_max) {
    throw ConfigError("recommend_styled: recon decoder shape does not match the seq model");
  }
  const seq::EncodeResult enc = seq::encode(features, seq_params);
  ConditionContext ctx{&seq_params, &recon, &table, enc.h_tfe, target.embedding};

  StyledResult result;
  result.trace.video_id = features.video_id;
  Mat z = enc.z;
  std::vector<int> prefix;
  for (int t = 0; t + 1 < features.n(); ++t) {
    StyledStep info;
    const seq::DecodeRows before = seq::decode_all(z, prefix, seq_params, table);
    info.similarity_before = cosine(before.h_decode.colwise().mean(), target.embedding);
    seq::DecodeRows after = before;
    if (config.iterations > 0) {
      z = condition_step(z, prefix, ctx, config);
      after = seq::decode_all(z, prefix, seq_params, table);
    }
    info.similarity_after = cosine(after.h_decode.colwise().mean(), target.embedding);
    const auto last = after.h_decode.rows() - 1;
    Mat h = after.h_decode.row(last);
    Mat logits = after.logits.row(last);
    const int cls = seq::nearest_transition(h, table.transitions);
    result.trace.steps.push_back({std::move(h), std::move(logits), cls, z});
    result.steps.push_back(info);
    prefix.push_back(cls);
  }
  if (rrt) result.trace = rrt_finetune(result.trace, table, target.embedding, config.k);
  return result;
}

}  // namespace vt4s::style
