// Copyright 2026 The vt4s Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero when any hard criterion fails. Soft criteria print WARN.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "test_util.hpp"
#include "vt4s/checkpoint.hpp"
#include "vt4s/cli.hpp"
#include "vt4s/config.hpp"
#include "vt4s/embeddings.hpp"
#include "vt4s/error.hpp"
#include "vt4s/eval.hpp"
#include "vt4s/hash.hpp"
#include "vt4s/seq_model.hpp"
#include "vt4s/style_cond.hpp"

namespace {

namespace fs = std::filesystem;
using vt4s::ad::Mat;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Options {
  fs::path workdir;
  fs::path config;
  int scm_iterations = 500;
  int scm_videos = 20;
  std::set<int> only;
};

std::string sci(double v) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(2) << v;
  return s.str();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

// Runs one CLI stage in-process; throws with the captured stderr on failure.
void stage(std::vector<std::string> args, const Options& opt, const std::vector<std::string>& sets) {
  args.push_back("--config");
  args.push_back(opt.config.string());
  for (const auto& s : sets) {
    args.push_back("--set");
    args.push_back(s);
  }
  std::ostringstream out;
  std::ostringstream err;
  const int code = vt4s::cli::run(args, out, err);
  if (code != vt4s::cli::kExitOk) {
    throw std::runtime_error(args.front() + " exited " + std::to_string(code) + ": " + err.str());
  }
}

struct PipelinePaths {
  fs::path dir;
  [[nodiscard]] std::string p(const std::string& name) const { return (dir / name).string(); }
};

// gen-data, train-mln, export-embeddings and train-seq (plus train-recon when asked).
PipelinePaths run_pipeline(const Options& opt, const std::string& name, const std::vector<std::string>& sets,
                           bool recon) {
  PipelinePaths pp{opt.workdir / name};
  fs::remove_all(pp.dir);
  fs::create_directories(pp.dir);
  stage({"gen-data", "--out", pp.p("data")}, opt, sets);
  stage({"train-mln", "--data", pp.p("data"), "--out", pp.p("mln.ckpt")}, opt, sets);
  stage({"export-embeddings", "--mln-ckpt", pp.p("mln.ckpt"), "--data", pp.p("data"), "--out", pp.p("emb.txt")},
        opt, sets);
  stage({"train-seq", "--data", pp.p("data"), "--emb", pp.p("emb.txt"), "--out", pp.p("seq.ckpt")}, opt, sets);
  if (recon) {
    stage({"train-recon", "--data", pp.p("data"), "--seq-ckpt", pp.p("seq.ckpt"), "--out", pp.p("recon.ckpt")}, opt,
          sets);
  }
  return pp;
}

// ---- criterion 1 ---------------------------------------------------------------

Outcome causality(const PipelinePaths& pp) {
  const auto start = Clock::now();
  const auto seq = vt4s::seq::from_checkpoint(vt4s::checkpoint::load_checkpoint(pp.p("seq.ckpt")));
  const auto table = vt4s::embeddings::load_embeddings(pp.p("emb.txt"));
  const auto videos = vt4s::data::load_dataset(pp.p("data/test.jsonl"));
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> cls(0, table.n_transitions() - 1);
  int violations = 0;
  int checked = 0;
  for (int i = 0; i < 100; ++i) {
    const auto& v = videos[static_cast<std::size_t>(i) % videos.size()];
    const Mat z = vt4s::seq::encode(v.features, seq).z;
    const int len = v.features.n() - 2;  // longest prefix the decoder ever sees
    std::vector<int> prefix(static_cast<std::size_t>(len));
    for (auto& c : prefix) c = cls(rng);
    const int t = std::uniform_int_distribution<int>(0, len)(rng);
    auto perturbed = prefix;
    for (int j = t; j < len; ++j) {
      const int shift = std::uniform_int_distribution<int>(1, table.n_transitions() - 1)(rng);
      perturbed[static_cast<std::size_t>(j)] = (prefix[static_cast<std::size_t>(j)] + shift) % table.n_transitions();
    }
    const auto a = vt4s::seq::decode_all(z, prefix, seq, table);
    const auto b = vt4s::seq::decode_all(z, perturbed, seq, table);
    // Row s is step s + 1 and reads prefix entries 0..s-1 only.
    for (int s = 0; s <= t; ++s) {
      ++checked;
      if (!(a.h_decode.row(s) == b.h_decode.row(s)) || !(a.logits.row(s) == b.logits.row(s))) ++violations;
    }
  }
  const double secs = seconds_since(start);
  return {violations == 0 && secs < 60.0,
          std::to_string(checked) + " earlier-step rows compared over 100 inputs, " + std::to_string(violations) +
              " differ, " + fmt(secs, 1) + " s"};
}

// ---- criterion 2 ---------------------------------------------------------------

double rel_error(const Mat& a, const Mat& b) {
  const double denom = std::max({a.norm(), b.norm(), 1e-12});
  return (a - b).norm() / denom;
}

Outcome gradients() {
  const auto start = Clock::now();
  vt4s::seq::SeqModelConfig c;
  c.feature_dim = 24;
  c.d_model = 32;
  c.n_head = 4;
  c.d_ff = 64;
  c.embedding_dim = 16;
  c.n_transitions = 10;
  c.n_max = 6;
  c.seed = 5;
  vt4s::seq::SeqModelParams params = vt4s::seq::SeqModelParams::init(c);
  std::mt19937_64 rng(6);
  vt4s::embeddings::EmbeddingTable table;
  table.transitions = vt4s::testing::random_mat(10, 16, rng).rowwise().normalized();
  table.styles = vt4s::testing::random_mat(3, 16, rng).rowwise().normalized();
  table.vocab = {vt4s::data::default_transition_vocabulary(10), vt4s::data::default_style_vocabulary(3)};
  vt4s::data::DatasetRecord rec;
  rec.features = {"toy", vt4s::testing::random_mat(5, 24, rng)};
  rec.gt_transitions = {3, 7, 1, 9};

  // (a) sequence loss against a slice of the latent head and a decoder query block.
  for (auto* p : params.parameters()) p->zero_grad();
  {
    vt4s::ad::Tape tape;
    const vt4s::nn::Binder b(tape, true);
    tape.backward(vt4s::seq::sequence_loss(b, params, rec, table));
  }
  double worst_seq = 0.0;
  auto check_slice = [&](vt4s::ad::Parameter& param, Eigen::Index rows) {
    const Mat analytic = param.grad.topRows(rows);
    Mat numeric(rows, param.value.cols());
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < param.value.cols(); ++j) {
        const double keep = param.value(i, j);
        param.value(i, j) = keep + h;
        const double up = vt4s::seq::sequence_loss(params, rec, table);
        param.value(i, j) = keep - h;
        const double down = vt4s::seq::sequence_loss(params, rec, table);
        param.value(i, j) = keep;
        numeric(i, j) = (up - down) / (2.0 * h);
      }
    }
    worst_seq = std::max(worst_seq, rel_error(analytic, numeric));
  };
  check_slice(params.latent_head.weight, 4);
  check_slice(params.decoder[0].query.weight, 4);
  check_slice(params.encoder[1].ffn_in.weight, 2);

  // (b) the conditioning objective against z.
  vt4s::style::ReconConfig rc;
  rc.hidden_dim = 48;
  rc.seed = 2;
  const auto recon = vt4s::style::ReconDecoderParams::init(32, 6, rc);
  const auto enc = vt4s::seq::encode(rec.features, params);
  const vt4s::style::ConditionContext ctx{&params, &recon, &table, enc.h_tfe, table.styles.row(1)};
  vt4s::style::SCMConfig scm;
  const std::vector<int> prefix{3, 7};
  const auto obj = vt4s::style::condition_objective(enc.z, prefix, ctx, scm);
  Mat numeric(1, enc.z.cols());
  for (Eigen::Index j = 0; j < enc.z.cols(); ++j) {
    Mat up = enc.z;
    Mat down = enc.z;
    up(0, j) += 1e-5;
    down(0, j) -= 1e-5;
    numeric(0, j) = (vt4s::style::condition_objective(up, prefix, ctx, scm).value -
                     vt4s::style::condition_objective(down, prefix, ctx, scm).value) /
                    2e-5;
  }
  const double worst_am = rel_error(obj.grad, numeric);
  const double secs = seconds_since(start);
  return {worst_seq < 1e-4 && worst_am < 1e-4 && secs < 120.0,
          "sequence loss rel err " + sci(worst_seq) + ", AM objective rel err " + sci(worst_am) + ", " + fmt(secs, 1) + " s"};
}

// ---- criterion 3 ---------------------------------------------------------------

Outcome loss_units() {
  std::vector<std::string> failures;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };
  Mat table(2, 2);
  Mat a(1, 2);
  table << 1.0, 0.0, 0.0, 1.0;
  a << 1.0, 0.0;
  expect(vt4s::seq::masked_triplet_loss(a, 0, table, 0.5) == 0.0, "triplet margin met");
  Mat swapped(2, 2);
  swapped << 0.0, 1.0, 1.0, 0.0;
  expect(std::abs(vt4s::seq::masked_triplet_loss(a, 0, swapped, 0.5) - 1.5) < 1e-15, "triplet 1.5");
  Mat tie(1, 2);
  tie << 1.0, 1.0;
  expect(vt4s::seq::masked_triplet_loss(tie, 1, table, 0.0) == 0.0, "triplet zero-margin tie");

  vt4s::ad::Tape tape;
  const double ce = vt4s::ad::cross_entropy(tape.constant(Mat::Zero(1, 30)), 4).item();
  expect(std::abs(ce - std::log(30.0)) < 1e-9, "uniform cross-entropy");

  Mat e(1, 3);
  e << 0.3, -1.2, 0.5;
  Mat orth(1, 3);
  orth << 1.2, 0.3, 0.0;
  expect(std::abs(vt4s::style::embedding_loss(e, e)) < 1e-15, "L_E parallel");
  expect(std::abs(vt4s::style::embedding_loss(e, orth) - 1.0) < 1e-15, "L_E orthogonal");
  expect(std::abs(vt4s::style::embedding_loss(e, -e) - 2.0) < 1e-15, "L_E opposite");

  std::mt19937_64 rng(9);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const Mat h = vt4s::testing::random_mat(1 + i % 7, 16, rng);
    const Mat target = vt4s::testing::random_mat(1, 16, rng);
    const double by_sum = vt4s::style::embedding_loss(h.colwise().sum(), target);
    const double by_mean = vt4s::style::embedding_loss(h.colwise().mean(), target);
    worst = std::max(worst, std::abs(by_sum - by_mean));
  }
  expect(worst <= 1e-12, "sum-vs-mean cosine");
  std::string detail = "triplet 0/1.5/tie, CE=ln30 (err " + sci(std::abs(ce - std::log(30.0))) +
                       "), L_E 0/1/2, sum-vs-mean max diff " + sci(worst);
  for (const auto& f : failures) detail += "; failed: " + f;
  return {failures.empty(), detail};
}

// ---- criterion 4 ---------------------------------------------------------------

Outcome metric_oracle() {
  std::mt19937_64 rng(44);
  int mismatches = 0;
  for (int inst = 0; inst < 1000; ++inst) {
    const int n = std::uniform_int_distribution<int>(2, 40)(rng);
    const int steps = std::uniform_int_distribution<int>(1, 25)(rng);
    const bool coarse = inst % 3 == 0;  // coarse scores force ties
    std::vector<std::vector<int>> rankings;
    std::vector<int> gt;
    std::vector<int> brute_ranks;
    for (int s = 0; s < steps; ++s) {
      std::vector<double> scores(static_cast<std::size_t>(n));
      for (auto& v : scores) {
        v = std::normal_distribution<double>(0.0, 1.0)(rng);
        if (coarse) v = std::round(v * 2.0);
      }
      const int g = std::uniform_int_distribution<int>(0, n - 1)(rng);
      gt.push_back(g);
      rankings.push_back(vt4s::eval::rank_by_score(scores));
      // Brute force: classes strictly ahead of g under (score desc, index asc).
      int ahead = 0;
      for (int c = 0; c < n; ++c) {
        const double sc = scores[static_cast<std::size_t>(c)];
        const double sg = scores[static_cast<std::size_t>(g)];
        if (sc > sg || (sc == sg && c < g)) ++ahead;
      }
      brute_ranks.push_back(ahead + 1);
    }
    const int k = std::uniform_int_distribution<int>(1, n)(rng);
    int hits = 0;
    long total = 0;
    for (int r : brute_ranks) {
      hits += r <= k ? 1 : 0;
      total += r;
    }
    const double brute_recall = static_cast<double>(hits) / steps;
    const double brute_mean = static_cast<double>(total) / steps;
    if (vt4s::eval::recall_at_k(rankings, gt, k) != brute_recall) ++mismatches;
    if (vt4s::eval::mean_rank(rankings, gt) != brute_mean) ++mismatches;
  }

  std::vector<std::vector<int>> rankings;
  std::vector<int> gt;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int s = 0; s < 10000; ++s) {
    std::vector<double> scores(30);
    for (auto& v : scores) v = uni(rng);
    rankings.push_back(vt4s::eval::rank_by_score(scores));
    gt.push_back(std::uniform_int_distribution<int>(0, 29)(rng));
  }
  const double random_mean = vt4s::eval::mean_rank(rankings, gt);
  return {mismatches == 0 && std::abs(random_mean - 15.5) <= 0.5,
          std::to_string(mismatches) + " mismatches over 1000 instances, random-scorer mean rank " +
              fmt(random_mean, 3)};
}

// ---- criterion 5 ---------------------------------------------------------------

Outcome selective_activation() {
  vt4s::embeddings::MLNConfig c;
  c.feature_dim = 32;
  c.embedding_dim = 16;
  c.n_transitions = 8;
  c.n_styles = 4;
  c.epochs = 3;
  c.seed = 12;
  vt4s::embeddings::MLNParams p = vt4s::embeddings::MLNParams::init(c);
  std::mt19937_64 rng(13);
  for (auto* q : p.parameters()) q->zero_grad();
  vt4s::ad::Tape tape;
  const vt4s::nn::Binder b(tape, true);
  vt4s::ad::Var total = tape.constant(Mat::Zero(1, 1));
  for (int i = 0; i < 32; ++i) {
    const auto v = vt4s::embeddings::mln_forward(b, tape.constant(vt4s::testing::random_mat(1, 32, rng)), p);
    total = vt4s::ad::add(total, vt4s::embeddings::mtl_loss(v.transition_logits, v.style_logits, i % 8,
                                                            std::nullopt, 1.0));
  }
  tape.backward(vt4s::ad::scale(total, 1.0 / 32.0));
  const double style_grad = std::max(p.style_head.weight.grad.cwiseAbs().maxCoeff(),
                                     p.style_head.bias.grad.cwiseAbs().maxCoeff());

  vt4s::data::SyntheticCorpusSpec spec;
  spec.style_profiles = vt4s::data::default_style_profiles(8, 4, 3);
  spec.videos_per_style = 30;
  spec.unlabeled_fraction = 1.0;
  spec.features.dim = 32;
  spec.seed = 3;
  const auto records = vt4s::data::generate_synthetic_dataset(spec);
  const auto init = vt4s::embeddings::MLNParams::init(c);
  const auto trained = vt4s::embeddings::train_mln(records, c);
  const bool untouched = trained.style_head.weight.value == init.style_head.weight.value &&
                         trained.style_head.bias.value == init.style_head.bias.value;
  const bool moved = !(trained.projection.weight.value == init.projection.weight.value);
  return {style_grad == 0.0 && untouched && moved,
          "max |style-head grad| on unlabeled batch = " + fmt(style_grad, 1) +
              ", style head after label-free training " + (untouched ? "bitwise at init" : "CHANGED") +
              ", projection " + (moved ? "trained" : "not trained")};
}

// ---- criterion 6 ---------------------------------------------------------------

Outcome learnability(const Options& opt, PipelinePaths& out_paths) {
  const auto start = Clock::now();
  const std::vector<std::string> sets{"sigma=0"};
  out_paths = run_pipeline(opt, "sigma0", sets, false);
  stage({"evaluate", "--seq-ckpt", out_paths.p("seq.ckpt"), "--emb", out_paths.p("emb.txt"), "--data",
         out_paths.p("data"), "--split", "test", "--metrics", "recall@1,recall@5,mean-rank", "--out",
         out_paths.p("report.json")},
        opt, sets);
  const auto report = vt4s::eval::load_report(out_paths.p("report.json"));
  const auto ckpt = vt4s::checkpoint::load_checkpoint(out_paths.p("seq.ckpt"));
  const double recall = report.value("recall@1");
  const double secs = seconds_since(start);
  return {recall >= 0.9 && secs < 1800.0,
          "test Recall@1 " + fmt(recall) + " (" + std::to_string(report.steps) + " steps, best epoch " +
              ckpt.metadata["best_epoch"].dump() + "), pipeline wall time " + fmt(secs, 0) + " s"};
}

// ---- criterion 7 ---------------------------------------------------------------

double seq_similarity(const std::vector<int>& classes, const Mat& table, const Mat& style) {
  return vt4s::style::sequence_similarity(classes, table, style);
}

Outcome rrt_checks() {
  std::mt19937_64 rng(70);
  int monotone_violations = 0;
  int random_cases = 0;
  for (int inst = 0; inst < 300; ++inst) {
    const int n_tr = std::uniform_int_distribution<int>(2, 12)(rng);
    const int d = std::uniform_int_distribution<int>(2, 6)(rng);
    vt4s::embeddings::EmbeddingTable table;
    table.transitions = vt4s::testing::random_mat(n_tr, d, rng).rowwise().normalized();
    table.styles = vt4s::testing::random_mat(2, d, rng).rowwise().normalized();
    table.vocab = {vt4s::data::default_transition_vocabulary(n_tr), vt4s::data::default_style_vocabulary(2)};
    const Mat style = table.styles.row(0);
    vt4s::seq::DecodeTrace trace;
    const int steps = std::uniform_int_distribution<int>(1, 7)(rng);
    for (int s = 0; s < steps; ++s) {
      vt4s::seq::TraceStep st;
      st.h_decode = vt4s::testing::random_mat(1, d, rng);
      st.transition = vt4s::seq::nearest_transition(st.h_decode, table.transitions);
      trace.steps.push_back(st);
    }
    const double before = seq_similarity(trace.transitions(), table.transitions, style);
    for (int k = 1; k <= n_tr; ++k) {
      ++random_cases;
      const auto tuned = vt4s::style::rrt_finetune(trace, table, style, k);
      // Per-step: replaying the decisions one at a time never lowers the score.
      auto classes = trace.transitions();
      double prev = before;
      for (std::size_t t = 0; t < classes.size(); ++t) {
        classes[t] = tuned.steps[t].transition;
        const double now = seq_similarity(classes, table.transitions, style);
        if (now < prev) ++monotone_violations;
        prev = now;
      }
      if (k == 1 && tuned.transitions() != trace.transitions()) ++monotone_violations;
    }
  }

  // Hand-built 2-D instances: five unit directions, three steps, K = 2.
  Mat dirs(5, 2);
  const double deg = std::acos(-1.0) / 180.0;
  const double angles[] = {0.0, 35.0, 80.0, 130.0, 200.0};
  for (int i = 0; i < 5; ++i) dirs.row(i) << std::cos(angles[i] * deg), std::sin(angles[i] * deg);
  vt4s::embeddings::EmbeddingTable table;
  table.transitions = dirs;
  table.vocab = {vt4s::data::default_transition_vocabulary(5), vt4s::data::default_style_vocabulary(2)};
  int oracle_cases = 0;
  int oracle_mismatch = 0;
  int below_exhaustive = 0;
  for (int style_deg = 0; style_deg < 360; style_deg += 45) {
    Mat style(1, 2);
    style << std::cos(style_deg * deg), std::sin(style_deg * deg);
    table.styles = Mat(2, 2);
    table.styles << style, -style;
    for (int code = 0; code < 125; ++code) {
      vt4s::seq::DecodeTrace trace;
      std::vector<std::array<int, 2>> cands;
      for (int s = 0, c = code; s < 3; ++s, c /= 5) {
        const int cls = c % 5;
        vt4s::seq::TraceStep st;
        // Nudge toward the next direction so the runner-up is unambiguous.
        st.h_decode = dirs.row(cls) + 0.1 * dirs.row((cls + 1) % 5);
        st.transition = vt4s::seq::nearest_transition(st.h_decode, dirs);
        trace.steps.push_back(st);
        const Mat dots = dirs * st.h_decode.transpose();
        const auto ranked = vt4s::eval::rank_by_score(std::vector<double>(dots.data(), dots.data() + 5));
        cands.push_back({ranked[0], ranked[1]});
      }
      // Exhaustive enumeration of all 2^3 substitutions.
      double best = -2.0;
      for (int mask = 0; mask < 8; ++mask) {
        std::vector<int> cls;
        for (int s = 0; s < 3; ++s) cls.push_back(cands[static_cast<std::size_t>(s)][(mask >> s) & 1]);
        best = std::max(best, seq_similarity(cls, dirs, style));
      }
      // Per-step enumeration of the same candidate sets, scored with the original suffix.
      std::vector<int> greedy = trace.transitions();
      for (int s = 0; s < 3; ++s) {
        double top = seq_similarity(greedy, dirs, style);
        int pick = greedy[static_cast<std::size_t>(s)];
        for (int cnd : cands[static_cast<std::size_t>(s)]) {
          auto trial = greedy;
          trial[static_cast<std::size_t>(s)] = cnd;
          const double v = seq_similarity(trial, dirs, style);
          if (v > top) {
            top = v;
            pick = cnd;
          }
        }
        greedy[static_cast<std::size_t>(s)] = pick;
      }
      const auto tuned = vt4s::style::rrt_finetune(trace, table, style, 2);
      const double got = seq_similarity(tuned.transitions(), dirs, style);
      ++oracle_cases;
      if (tuned.transitions() != greedy) ++oracle_mismatch;
      if (got < best - 1e-12) ++below_exhaustive;
    }
  }
  // A single left-to-right pass is not a global search, so the joint optimum is reported, not required.
  return {monotone_violations == 0 && oracle_mismatch == 0,
          std::to_string(random_cases) + " random (trace, K) cases with " + std::to_string(monotone_violations) +
              " monotonicity violations; " + std::to_string(oracle_cases) + " hand-built 3-step K=2 cases: " +
              std::to_string(oracle_mismatch) + " differ from per-step exhaustive enumeration, " +
              std::to_string(below_exhaustive) + " below the joint 8-combination optimum"};
}

// ---- criterion 8 ---------------------------------------------------------------

Outcome scm_direction(const Options& opt, const PipelinePaths& pp, double train_secs) {
  const auto start = Clock::now();
  const auto seq = vt4s::seq::from_checkpoint(vt4s::checkpoint::load_checkpoint(pp.p("seq.ckpt")));
  const auto recon = vt4s::style::recon_from_checkpoint(vt4s::checkpoint::load_checkpoint(pp.p("recon.ckpt")));
  const auto table = vt4s::embeddings::load_embeddings(pp.p("emb.txt"));
  auto videos = vt4s::data::load_dataset(pp.p("data/test.jsonl"));
  videos.resize(std::min<std::size_t>(videos.size(), static_cast<std::size_t>(opt.scm_videos)));
  vt4s::config::RunConfig cfg;
  cfg.apply_file(opt.config);
  cfg.set("scm_iterations", std::to_string(opt.scm_iterations));
  const vt4s::style::SCMConfig scm = cfg.scm_config();

  int ordered_styles = 0;
  int improved = 0;
  int pairs = 0;
  std::ostringstream per_style;
  std::map<std::string, std::vector<vt4s::seq::DecodeTrace>> variants;
  for (int k = 0; k < table.n_styles(); ++k) {
    const std::string name = table.vocab.styles.name(k);
    const Mat e_style = table.styles.row(k);
    std::vector<vt4s::seq::DecodeTrace> plain;
    std::vector<vt4s::seq::DecodeTrace> am;
    std::vector<vt4s::seq::DecodeTrace> am_rrt;
    for (const auto& v : videos) {
      plain.push_back(vt4s::seq::recommend_greedy(v.features, seq, table));
      am.push_back(vt4s::style::recommend_styled(v.features, name, seq, recon, table, scm, false).trace);
      am_rrt.push_back(vt4s::style::rrt_finetune(am.back(), table, e_style, scm.k));
      ++pairs;
      if (seq_similarity(am.back().transitions(), table.transitions, e_style) >
          seq_similarity(plain.back().transitions(), table.transitions, e_style)) {
        ++improved;
      }
    }
    const double s_plain = vt4s::eval::style_similarity(plain, table.transitions, e_style).mean;
    const double s_am = vt4s::eval::style_similarity(am, table.transitions, e_style).mean;
    const double s_rrt = vt4s::eval::style_similarity(am_rrt, table.transitions, e_style).mean;
    if (s_rrt >= s_am && s_am >= s_plain) ++ordered_styles;
    per_style << ' ' << name << ' ' << fmt(s_plain, 3) << '/' << fmt(s_am, 3) << '/' << fmt(s_rrt, 3);
  }
  const double frac = static_cast<double>(improved) / pairs;
  const double secs = seconds_since(start) + train_secs;
  return {ordered_styles >= 4 && frac >= 0.7 && secs < 3600.0,
          "ordering holds in " + std::to_string(ordered_styles) + "/5 styles, SCM improves " +
              std::to_string(improved) + "/" + std::to_string(pairs) + " (video, style) pairs (" + fmt(frac, 3) +
              "), " + std::to_string(videos.size()) + " test videos, " + std::to_string(scm.iterations) +
              " iterations, beta " + fmt(scm.beta, 3) + ", " + fmt(secs, 0) + " s; E+D/SCM/SCM+RRT:" + per_style.str()};
}

// ---- criterion 9 ---------------------------------------------------------------

Outcome loss_ablation(const Options& opt, const PipelinePaths& pp, const std::vector<std::string>& sets) {
  const std::vector<std::pair<std::string, std::string>> variants{
      {"combined", ""}, {"classification", "lambda=0"}, {"triplet", "classification_weight=0"}};
  // Each variant is scored under both ranking modes and keeps its better mean rank.
  std::map<std::string, double> mean_rank;
  std::vector<std::string> reports;
  std::ostringstream detail;
  for (const auto& [label, set] : variants) {
    auto s = sets;
    std::string ckpt = pp.p("seq.ckpt");
    if (!set.empty()) {
      s.push_back(set);
      ckpt = pp.p("seq_" + label + ".ckpt");
      stage({"train-seq", "--data", pp.p("data"), "--emb", pp.p("emb.txt"), "--out", ckpt, "--force"}, opt, s);
    }
    mean_rank[label] = std::numeric_limits<double>::infinity();
    detail << ' ' << label;
    for (const std::string mode : {"similarity", "logits"}) {
      const std::string name = label + " (" + mode + ")";
      const std::string out = pp.p("ablation_" + label + "_" + mode + ".json");
      auto sm = s;
      sm.push_back("ranking_mode=" + mode);
      stage({"evaluate", "--seq-ckpt", ckpt, "--emb", pp.p("emb.txt"), "--data", pp.p("data"), "--metrics",
             "recall@1,recall@5,mean-rank", "--label", name, "--out", out, "--force"},
            opt, sm);
      reports.push_back(out);
      const double mr = vt4s::eval::load_report(out).value("mean-rank");
      mean_rank[label] = std::min(mean_rank[label], mr);
      detail << ' ' << mode << ' ' << fmt(mr, 3);
    }
  }
  std::string joined;
  for (const auto& r : reports) joined += (joined.empty() ? "" : ",") + r;
  stage({"ablation-table", "--reports", joined, "--out", pp.p("loss_ablation.csv"), "--force"}, opt, {});
  const double best_single = std::min(mean_rank["classification"], mean_rank["triplet"]);
  return {mean_rank["combined"] <= best_single,
          "best mean rank combined " + fmt(mean_rank["combined"], 3) + ", classification-only " +
              fmt(mean_rank["classification"], 3) + ", triplet-only " + fmt(mean_rank["triplet"], 3) + ";" +
              detail.str() + "; table at " + pp.p("loss_ablation.csv")};
}

// ---- criterion 10 --------------------------------------------------------------

Outcome determinism(const Options& opt) {
  const std::vector<std::string> sets{"videos_per_style=40", "unlabeled_fraction=0.5", "feature_dim=16",
                                      "d_e=8",  "d_model=16", "n_head=2", "d_ff=32", "mln_epochs=2",
                                      "seq_epochs=2", "recon_hidden=16", "recon_epochs=2", "scm_iterations=5"};
  auto run_all = [&](const std::string& name) {
    const PipelinePaths pp = run_pipeline(opt, name, sets, true);
    stage({"recommend", "--seq-ckpt", pp.p("seq.ckpt"), "--recon-ckpt", pp.p("recon.ckpt"), "--emb", pp.p("emb.txt"),
           "--video", pp.p("data/test.jsonl"), "--style", "vlog", "--rrt", "--out", pp.p("rec.json")},
          opt, sets);
    stage({"evaluate", "--seq-ckpt", pp.p("seq.ckpt"), "--emb", pp.p("emb.txt"), "--data", pp.p("data"), "--out",
           pp.p("eval.json")},
          opt, sets);
    stage({"evaluate", "--seq-ckpt", pp.p("seq.ckpt"), "--recon-ckpt", pp.p("recon.ckpt"), "--emb", pp.p("emb.txt"),
           "--data", pp.p("data"), "--scm", "--rrt", "--metrics", "style-similarity", "--style-videos", "3", "--out",
           pp.p("eval_scm.json")},
          opt, sets);
    stage({"dump-embeddings", "--emb", pp.p("emb.txt"), "--out", pp.p("emb.csv")}, opt, sets);
    stage({"ablation-table", "--reports", pp.p("eval.json"), "--out", pp.p("table.csv")}, opt, sets);
    return pp;
  };
  const PipelinePaths a = run_all("determinism_a");
  const PipelinePaths b = run_all("determinism_b");
  int files = 0;
  std::vector<std::string> differing;
  for (const auto& entry : fs::recursive_directory_iterator(a.dir)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), a.dir);
    ++files;
    const std::string left = vt4s::strip_timestamps(vt4s::read_file(entry.path()));
    const std::string right = vt4s::strip_timestamps(vt4s::read_file(b.dir / rel));
    if (left != right) differing.push_back(rel.string());
  }
  std::string detail = std::to_string(files) + " artifacts across 9 stages compared, " +
                       std::to_string(differing.size()) + " differ";
  for (const auto& d : differing) detail += " " + d;
  return {differing.empty() && files > 0, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vt4s acceptance run"};
  Options opt;
  std::string only;
  bool long_run = false;
  app.add_option("--workdir", opt.workdir, "scratch directory")->required();
  app.add_option("--config", opt.config, "desk configuration")->default_val(VT4S_DESK_CONFIG);
  app.add_option("--scm-videos", opt.scm_videos, "test videos per style for the conditioning check");
  app.add_option("--only", only, "comma list of criteria to run");
  app.add_flag("--long", long_run, "5000 conditioning iterations");
  CLI11_PARSE(app, argc, argv);
  if (long_run) opt.scm_iterations = 5000;
  if (!only.empty()) {
    std::stringstream ss(only);
    std::string item;
    while (std::getline(ss, item, ',')) opt.only.insert(std::stoi(item));
  }
  setenv("SOURCE_DATE_EPOCH", "0", 1);
  unsetenv("VT4S_SEED");
  fs::create_directories(opt.workdir);

  int hard_failures = 0;
  auto report = [&](int id, const std::string& name, bool soft, const std::function<Outcome()>& fn) {
    if (!opt.only.empty() && opt.only.count(id) == 0) return;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const char* verdict = o.pass ? "PASS" : (soft ? "WARN" : "FAIL");
    if (!o.pass && !soft) ++hard_failures;
    std::cout << "criterion " << id << " [" << name << "]: " << verdict << " - " << o.detail << std::endl;
  };

  report(2, "gradient suite", false, gradients);
  report(3, "loss unit suite", false, loss_units);
  report(4, "metric oracle suite", false, metric_oracle);
  report(5, "selective activation", false, selective_activation);
  report(7, "rrt monotonicity and oracle", false, rrt_checks);

  PipelinePaths sigma0;
  report(6, "learnability", false, [&] { return learnability(opt, sigma0); });
  report(1, "causality", false, [&] {
    if (sigma0.dir.empty()) sigma0 = run_pipeline(opt, "sigma0", {"sigma=0"}, false);
    return causality(sigma0);
  });

  const std::vector<std::string> noisy{"sigma=0.5"};
  PipelinePaths sigma05;
  double noisy_train_secs = 0.0;
  auto noisy_pipeline = [&] {
    if (sigma05.dir.empty()) {
      const auto start = Clock::now();
      sigma05 = run_pipeline(opt, "sigma05", noisy, true);
      noisy_train_secs = seconds_since(start);
    }
  };
  report(8, "scm direction", false, [&] {
    noisy_pipeline();
    return scm_direction(opt, sigma05, noisy_train_secs);
  });
  report(9, "loss ablation direction", true, [&] {
    noisy_pipeline();
    return loss_ablation(opt, sigma05, noisy);
  });
  report(10, "determinism", false, [&] { return determinism(opt); });

  std::cout << (hard_failures == 0 ? "acceptance: all hard criteria passed" : "acceptance: hard failures: " +
                                                                                 std::to_string(hard_failures))
            << std::endl;
  return hard_failures == 0 ? 0 : 1;
}
