// Copyright 2026 The vt4s Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "test_util.hpp"
#include "vt4s/error.hpp"
#include "vt4s/seq_model.hpp"

namespace vt4s::seq {
namespace {

SeqModelConfig tiny_config() {
  SeqModelConfig c;
  c.feature_dim = 12;
  c.d_model = 8;
  c.n_head = 2;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.d_ff = 16;
  c.embedding_dim = 6;
  c.n_transitions = 5;
  c.n_max = 6;
  c.seed = 3;
  return c;
}

EmbeddingTable random_table(int n_tr, int n_st, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  EmbeddingTable t;
  t.transitions = testing::random_mat(n_tr, dim, rng).rowwise().normalized();
  t.styles = testing::random_mat(n_st, dim, rng).rowwise().normalized();
  t.vocab = {data::default_transition_vocabulary(n_tr), data::default_style_vocabulary(n_st)};
  return t;
}

data::ClipFeatureSequence random_video(int n, int f, std::mt19937_64& rng) {
  return {"v" + std::to_string(n), testing::random_mat(n, f, rng)};
}

std::vector<int> random_prefix(int len, int n_tr, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, n_tr - 1);
  std::vector<int> p(static_cast<std::size_t>(len));
  for (auto& v : p) v = pick(rng);
  return p;
}

TEST(SeqConfig, ValidationRejectsBadValues) {
  SeqModelConfig c = tiny_config();
  EXPECT_NO_THROW(c.validate());
  c.n_head = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.lambda = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.n_max = 1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(SeqConfig, JsonRoundTrip) {
  SeqModelConfig c = tiny_config();
  c.triplet_form = ad::TripletForm::kLiteral;
  c.classification_weight = 0.0;
  const SeqModelConfig back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
  EXPECT_EQ(back.triplet_form, ad::TripletForm::kLiteral);
}

TEST(SeqModel, EncodeShapesAndInputValidation) {
  const SeqModelParams p = SeqModelParams::init(tiny_config());
  std::mt19937_64 rng(1);
  const EncodeResult e = encode(random_video(4, 12, rng), p);
  EXPECT_EQ(e.h_tfe.rows(), 4);
  EXPECT_EQ(e.h_tfe.cols(), 8);
  EXPECT_EQ(e.z.rows(), 1);
  EXPECT_EQ(e.z.cols(), 8);
  EXPECT_THROW(encode(random_video(7, 12, rng), p), ValidationError);
  EXPECT_THROW(encode(random_video(1, 12, rng), p), ValidationError);
  EXPECT_THROW(encode(random_video(3, 11, rng), p), ValidationError);
}

TEST(SeqModel, LatentIgnoresHeadRowsOfAbsentPositions) {
  SeqModelParams p = SeqModelParams::init(tiny_config());
  std::mt19937_64 rng(2);
  const auto video = random_video(3, 12, rng);
  const Mat z = encode(video, p).z;
  // Input rows 3*d_model.. of the flattened encoding belong to positions >= 3.
  auto& w = p.latent_head.weight.value;
  const Eigen::Index d = 8;
  w.bottomRows(3 * d).setConstant(5.0);
  p.encoder_positions.value.bottomRows(3).setConstant(7.0);
  EXPECT_TRUE(encode(video, p).z == z);
}

TEST(SeqModel, DecoderIsCausalInThePrefix) {
  const SeqModelConfig c = tiny_config();
  const SeqModelParams p = SeqModelParams::init(c);
  const EmbeddingTable table = random_table(5, 2, 6, 4);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat z = testing::random_mat(1, 8, rng);
    const auto prefix = random_prefix(4, 5, rng);
    const DecodeRows all = decode_all(z, prefix, p, table);
    ASSERT_EQ(all.h_decode.rows(), 5);
    for (int s = 0; s <= 4; ++s) {
      const std::span<const int> head(prefix.data(), static_cast<std::size_t>(s));
      const StepOutput step = decode_step(z, head, p, table);
      EXPECT_LT((step.h_decode - all.h_decode.row(s)).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LT((step.logits - all.logits.row(s)).cwiseAbs().maxCoeff(), 1e-12);
    }
    // Changing the last prefix entry leaves every earlier row untouched.
    auto changed = prefix;
    changed.back() = (changed.back() + 1) % 5;
    const DecodeRows other = decode_all(z, changed, p, table);
    EXPECT_TRUE(other.h_decode.topRows(4) == all.h_decode.topRows(4));
    EXPECT_FALSE(other.h_decode.row(4) == all.h_decode.row(4));
  }
}

TEST(SeqModel, LogitsAreALinearFunctionOfHDecode) {
  const SeqModelParams p = SeqModelParams::init(tiny_config());
  const EmbeddingTable table = random_table(5, 2, 6, 4);
  std::mt19937_64 rng(6);
  const Mat z = testing::random_mat(1, 8, rng);
  const std::vector<int> prefix{1, 2};
  const DecodeRows rows = decode_all(z, prefix, p, table);
  Mat expected = rows.h_decode * p.logit_head.weight.value;
  expected.rowwise() += p.logit_head.bias.value.row(0);
  EXPECT_LT((expected - rows.logits).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(NearestTransition, ArgmaxDotWithLowestIndexTies) {
  Mat table(3, 2);
  table << 1.0, 0.0, 0.0, 1.0, 1.0, 0.0;
  Mat h(1, 2);
  h << 0.2, 0.9;
  EXPECT_EQ(nearest_transition(h, table), 1);
  h << 0.9, 0.2;
  EXPECT_EQ(nearest_transition(h, table), 0);
  h << 0.5, 0.5;
  EXPECT_EQ(nearest_transition(h, table), 0);
}

TEST(Greedy, TraceFollowsItsOwnEmissions) {
  const SeqModelParams p = SeqModelParams::init(tiny_config());
  const EmbeddingTable table = random_table(5, 2, 6, 4);
  std::mt19937_64 rng(7);
  for (int n = 2; n <= 6; ++n) {
    const auto video = random_video(n, 12, rng);
    const DecodeTrace trace = recommend_greedy(video, p, table);
    ASSERT_EQ(trace.steps.size(), static_cast<std::size_t>(n - 1));
    const Mat z = encode(video, p).z;
    std::vector<int> prefix;
    for (const auto& step : trace.steps) {
      const StepOutput expected = decode_step(z, prefix, p, table);
      EXPECT_TRUE(step.h_decode == expected.h_decode);
      EXPECT_TRUE(step.z == z);
      EXPECT_EQ(step.transition, nearest_transition(step.h_decode, table.transitions));
      prefix.push_back(step.transition);
    }
    EXPECT_EQ(trace.transitions(), prefix);
  }
}

data::DatasetRecord random_record(int n, std::mt19937_64& rng) {
  data::DatasetRecord r;
  r.features = random_video(n, 12, rng);
  r.gt_transitions = random_prefix(n - 1, 5, rng);
  return r;
}

TEST(SeqLoss, MatchesIndependentOracle) {
  SeqModelConfig c = tiny_config();
  c.lambda = 0.7;
  c.classification_weight = 1.3;
  const SeqModelParams p = SeqModelParams::init(c);
  const EmbeddingTable table = random_table(5, 2, 6, 4);
  std::mt19937_64 rng(8);
  const auto rec = random_record(5, rng);
  const Mat z = encode(rec.features, p).z;
  const std::span<const int> teacher(rec.gt_transitions.data(), rec.gt_transitions.size() - 1);
  const DecodeRows rows = decode_all(z, teacher, p, table);

  double ce = 0.0;
  double trip = 0.0;
  for (Eigen::Index s = 0; s < rows.logits.rows(); ++s) {
    const int y = rec.gt_transitions[static_cast<std::size_t>(s)];
    const double m = rows.logits.row(s).maxCoeff();
    ce += std::log((rows.logits.row(s).array() - m).exp().sum()) + m - rows.logits(s, y);
    double acc = 0.0;
    for (int i = 0; i < 5; ++i) {
      if (i == y) continue;
      const double pos = rows.h_decode.row(s).dot(table.transitions.row(y));
      const double neg = rows.h_decode.row(s).dot(table.transitions.row(i));
      acc += std::max(0.0, c.margin - pos + neg);
    }
    trip += acc / 4.0;
  }
  const double steps = static_cast<double>(rows.logits.rows());
  const double expected = 1.3 * ce / steps + 0.7 * trip / steps;
  EXPECT_NEAR(sequence_loss(p, rec, table), expected, 1e-10);
  EXPECT_NEAR(sequence_loss_from_outputs(rows.h_decode, rows.logits, rec.gt_transitions, table, 0.7, c.margin, 1.3),
              expected, 1e-10);
}

TEST(SeqLoss, GradientMatchesFiniteDifferences) {
  const SeqModelConfig c = tiny_config();
  SeqModelParams p = SeqModelParams::init(c);
  const EmbeddingTable table = random_table(5, 2, 6, 4);
  std::mt19937_64 rng(9);
  const auto rec = random_record(4, rng);
  for (auto* q : p.parameters()) q->zero_grad();
  ad::Tape t;
  const nn::Binder b(t, true);
  t.backward(sequence_loss(b, p, rec, table));

  auto check = [&](ad::Parameter& param) {
    auto loss_at = [&](const Mat& v) {
      SeqModelParams q = p;
      for (auto* qp : q.parameters()) {
        if (qp->name == param.name) qp->value = v;
      }
      return sequence_loss(q, rec, table);
    };
    const Mat numeric = testing::numeric_gradient(loss_at, param.value);
    EXPECT_LT(testing::relative_error(param.grad, numeric), 1e-5) << param.name;
  };
  check(p.encoder_positions);
  check(p.latent_head.weight);
  check(p.bos);
  check(p.transition_input.weight);
  check(p.decoder[0].query.weight);
  check(p.decode_projection.bias);
}

TEST(SeqCheckpoint, RoundTripPreservesOutputs) {
  const SeqModelParams p = SeqModelParams::init(tiny_config());
  const auto path = testing::temp_dir("seq_ckpt") / "seq.ckpt";
  checkpoint::save_checkpoint(to_checkpoint(p), path);
  const SeqModelParams back = from_checkpoint(checkpoint::load_checkpoint(path));
  const EmbeddingTable table = random_table(5, 2, 6, 4);
  std::mt19937_64 rng(10);
  const auto video = random_video(5, 12, rng);
  EXPECT_EQ(recommend_greedy(video, p, table).transitions(), recommend_greedy(video, back, table).transitions());
  EXPECT_TRUE(encode(video, back).z == encode(video, p).z);
}

SeqModelConfig learn_config() {
  SeqModelConfig c;
  c.feature_dim = 16;
  c.d_model = 16;
  c.n_head = 2;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.d_ff = 32;
  c.embedding_dim = 8;
  c.n_transitions = 4;
  c.n_max = 3;
  c.learning_rate = 3e-3;
  c.epochs = 60;
  c.batch_size = 16;
  c.seed = 1;
  return c;
}

// Noiseless corpus: 4 classes, 3 clips per video, so every video has 2 steps.
std::vector<data::DatasetRecord> toy_corpus(std::uint64_t seed, int videos_per_style) {
  data::SyntheticCorpusSpec spec;
  spec.style_profiles = data::default_style_profiles(4, 2, seed);
  spec.videos_per_style = videos_per_style;
  spec.min_clips = 3;
  spec.max_clips = 3;
  spec.content_scale = 0.0;
  spec.features.dim = 16;
  spec.features.seed = seed;
  spec.seed = seed;
  return data::generate_synthetic_dataset(spec);
}

// Table built from the class prototypes, as a trained MLN would produce.
EmbeddingTable toy_table() {
  return random_table(4, 2, 8, 21);
}

TEST(SeqTraining, NoiselessToyCorpusIsLearnable) {
  const auto records = toy_corpus(2, 100);
  const data::Split split = data::split_dataset(records, {0.7, 0.15, 0.15}, 2);
  SeqTrainLog log;
  const SeqModelParams p = train_seq_model(split.train, split.val, toy_table(), learn_config(), &log);
  ASSERT_EQ(log.epochs.size(), 60u);
  EXPECT_GE(greedy_recall_at_1(p, split.test, toy_table()), 0.9);
  EXPECT_LT(log.epochs.back().train_loss, log.epochs.front().train_loss);
}

TEST(SeqTraining, ReturnsBestValidationEpoch) {
  const auto records = toy_corpus(3, 40);
  const data::Split split = data::split_dataset(records, {0.7, 0.15, 0.15}, 3);
  SeqModelConfig c = learn_config();
  c.epochs = 8;
  SeqTrainLog log;
  const SeqModelParams p = train_seq_model(split.train, split.val, toy_table(), c, &log);
  double best = -1.0;
  for (const auto& e : log.epochs) best = std::max(best, e.val_recall_at_1);
  EXPECT_EQ(log.best_val_recall_at_1, best);
  EXPECT_EQ(log.epochs[static_cast<std::size_t>(log.best_epoch)].val_recall_at_1, best);
  EXPECT_EQ(greedy_recall_at_1(p, split.val, toy_table()), best);
  EXPECT_EQ(log.last_val_recall_at_1, log.epochs.back().val_recall_at_1);
}

TEST(SeqTraining, IsDeterministicForASeed) {
  const auto records = toy_corpus(4, 20);
  SeqModelConfig c = learn_config();
  c.epochs = 2;
  const SeqModelParams a = train_seq_model(records, {}, toy_table(), c);
  const SeqModelParams b = train_seq_model(records, {}, toy_table(), c);
  EXPECT_TRUE(a.latent_head.weight.value == b.latent_head.weight.value);
  EXPECT_TRUE(a.logit_head.weight.value == b.logit_head.weight.value);
}

TEST(SeqTraining, RejectsMismatchedTable) {
  const auto records = toy_corpus(4, 5);
  EXPECT_THROW(train_seq_model(records, {}, random_table(4, 2, 7, 1), learn_config()), ConfigError);
  EXPECT_THROW(train_seq_model(records, {}, random_table(5, 2, 8, 1), learn_config()), ConfigError);
}

}  // namespace
}  // namespace vt4s::seq
