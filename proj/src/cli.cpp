// Copyright 2026 The vt4s Authors
// SPDX-License-Identifier: Apache-2.0

#include "vt4s/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>

#include <CLI11.hpp>

#include "vt4s/checkpoint.hpp"
#include "vt4s/config.hpp"
#include "vt4s/data.hpp"
#include "vt4s/embeddings.hpp"
#include "vt4s/error.hpp"
#include "vt4s/eval.hpp"
#include "vt4s/hash.hpp"
#include "vt4s/reporting.hpp"
#include "vt4s/seq_model.hpp"
#include "vt4s/style_cond.hpp"

namespace vt4s::cli {

namespace fs = std::filesystem;
using checkpoint::Json;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  bool force = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "key = value configuration file");
  cmd->add_option("--set", c.sets, "override one config key (key=value), repeatable");
  cmd->add_option("--seed", c.seed, "global seed");
  cmd->add_flag("--force", c.force, "overwrite existing outputs");
}

config::RunConfig load_config(const Common& c) {
  config::RunConfig cfg;
  if (const char* env = std::getenv("VT4S_SEED"); env != nullptr && *env != '\0') {
    try {
      cfg.set("seed", env);
    } catch (const ConfigError&) {
      throw ConfigError(std::string("VT4S_SEED: cannot parse '") + env + "'");
    }
  }
  if (!c.config_path.empty()) {
    if (!fs::exists(c.config_path)) throw ConfigError("config file not found: " + c.config_path);
    cfg.apply_file(c.config_path);
  }
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    cfg.set(s.substr(0, eq), s.substr(eq + 1));
  }
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

void check_output(const fs::path& path, bool force) {
  if (fs::exists(path) && !force) {
    throw ValidationError("refusing to overwrite " + path.string() + " (pass --force)");
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

void require_input(const fs::path& path, const std::string& what, const std::string& stage) {
  if (!fs::exists(path)) {
    throw PrerequisiteError("missing " + what + " at " + path.string() + "; run `vt4s " + stage + "` first");
  }
}

Json artifact_metadata(const std::string& kind, const config::RunConfig& cfg, const Json& parents) {
  Json m;
  m["kind"] = kind;
  m["created"] = checkpoint::timestamp_now();
  m["seed"] = cfg.seed;
  m["config_hash"] = cfg.hash();
  m["run_config"] = cfg.to_json();
  m["parents"] = parents;
  return m;
}

std::string parent_hash(const checkpoint::Checkpoint& ckpt, const std::string& name) {
  const auto it = ckpt.metadata.find("parents");
  if (it == ckpt.metadata.end() || !it->contains(name)) return {};
  return (*it)[name].get<std::string>();
}

void check_lineage(const checkpoint::Checkpoint& child, const std::string& child_name, const std::string& parent,
                   const fs::path& parent_path) {
  const std::string recorded = parent_hash(child, parent);
  const std::string actual = artifact_hash(parent_path);
  if (recorded != actual) {
    throw ValidationError("lineage mismatch: " + child_name + " was built from " + parent + " " +
                          (recorded.empty() ? std::string("<unknown>") : recorded.substr(0, 12)) + ", but " +
                          parent_path.string() + " hashes to " + actual.substr(0, 12));
  }
}

fs::path split_file(const fs::path& dir, const std::string& split) {
  if (split != "train" && split != "val" && split != "test") {
    throw ValidationError("split must be train, val or test, got '" + split + "'");
  }
  return dir / (split + ".jsonl");
}

std::vector<data::DatasetRecord> load_split(const fs::path& dir, const std::string& split) {
  const fs::path p = split_file(dir, split);
  require_input(p, "dataset split", "gen-data");
  return data::load_dataset(p);
}

checkpoint::Checkpoint load_ckpt(const fs::path& path, const std::string& what, const std::string& stage) {
  require_input(path, what, stage);
  return checkpoint::load_checkpoint(path);
}

embeddings::EmbeddingTable load_emb(const fs::path& path) {
  require_input(path, "embedding file", "export-embeddings");
  return embeddings::load_embeddings(path);
}

// ---- MLN checkpoint helpers ----------------------------------------------------

checkpoint::Checkpoint mln_to_checkpoint(const embeddings::MLNParams& p, const embeddings::MLNConfig& c,
                                         Json metadata) {
  checkpoint::Checkpoint ckpt;
  ckpt.metadata = std::move(metadata);
  ckpt.metadata["mln"] = {{"feature_dim", c.feature_dim},
                          {"d_e", c.embedding_dim},
                          {"n_transitions", c.n_transitions},
                          {"n_styles", c.n_styles}};
  checkpoint::store_parameters(ckpt, p.parameters());
  return ckpt;
}

embeddings::MLNParams mln_from_checkpoint(const checkpoint::Checkpoint& ckpt) {
  if (ckpt.kind() != "mln") throw ValidationError("checkpoint kind '" + ckpt.kind() + "' is not an MLN checkpoint");
  embeddings::MLNConfig c;
  try {
    const Json& m = ckpt.metadata.at("mln");
    c.feature_dim = m.at("feature_dim").get<int>();
    c.embedding_dim = m.at("d_e").get<int>();
    c.n_transitions = m.at("n_transitions").get<int>();
    c.n_styles = m.at("n_styles").get<int>();
  } catch (const Json::exception& e) {
    throw ParseError(std::string("MLN checkpoint metadata: ") + e.what());
  }
  embeddings::MLNParams p = embeddings::MLNParams::init(c);
  checkpoint::restore_parameters(ckpt, p.parameters());
  return p;
}

seq::DecodeTrace baseline_trace(const data::ClipFeatureSequence& features, const embeddings::MLNParams& mln,
                                const embeddings::EmbeddingTable& table) {
  seq::DecodeTrace trace;
  trace.video_id = features.video_id;
  for (int t = 0; t + 1 < features.n(); ++t) {
    embeddings::MLNOutput o = embeddings::mln_forward(data::transition_segment(features, t), mln);
    const int cls = seq::nearest_transition(o.unit, table.transitions);
    trace.steps.push_back({std::move(o.unit), std::move(o.transition_logits), cls, ad::Mat()});
  }
  return trace;
}

// ---- commands ------------------------------------------------------------------

void print_histograms(std::ostream& out, const std::vector<data::DatasetRecord>& records,
                      const data::Vocabularies& vocab) {
  const auto hist = data::transition_histogram(records, vocab.transitions.size(), vocab.styles.size());
  out << "per-style transition histogram (labeled videos)\n";
  out << std::left << std::setw(12) << "style";
  for (int i = 0; i < vocab.transitions.size(); ++i) out << ' ' << std::setw(4) << i;
  out << "  total\n";
  for (int k = 0; k < vocab.styles.size(); ++k) {
    out << std::left << std::setw(12) << vocab.styles.name(k);
    int total = 0;
    for (const int c : hist[static_cast<std::size_t>(k)]) {
      out << ' ' << std::setw(4) << c;
      total += c;
    }
    out << "  " << total << '\n';
  }
}

int cmd_gen_data(const Common& common, const std::string& out_dir, std::ostream& out) {
  const config::RunConfig cfg = load_config(common);
  const fs::path dir(out_dir);
  for (const char* f : {"dataset.jsonl", "train.jsonl", "val.jsonl", "test.jsonl", "vocab.json", "manifest.json"}) {
    check_output(dir / f, common.force);
  }
  fs::create_directories(dir);
  const data::SyntheticCorpusSpec spec = cfg.corpus_spec();
  const std::vector<data::DatasetRecord> records = data::generate_synthetic_dataset(spec);
  const data::Vocabularies vocab{data::default_transition_vocabulary(cfg.n_transitions),
                                 data::default_style_vocabulary(cfg.n_styles)};
  const data::Split split = data::split_dataset(records, cfg.split, cfg.seed);
  data::save_dataset(records, dir / "dataset.jsonl");
  data::save_dataset(split.train, dir / "train.jsonl");
  data::save_dataset(split.val, dir / "val.jsonl");
  data::save_dataset(split.test, dir / "test.jsonl");
  data::save_vocabularies(vocab, dir / "vocab.json");

  Json manifest = artifact_metadata("dataset", cfg, Json::object());
  manifest["counts"] = {{"videos", records.size()},
                        {"train", split.train.size()},
                        {"val", split.val.size()},
                        {"test", split.test.size()}};
  Json files = Json::object();
  for (const char* f : {"dataset.jsonl", "train.jsonl", "val.jsonl", "test.jsonl", "vocab.json"}) {
    files[f] = artifact_hash(dir / f);
  }
  manifest["files"] = files;
  std::ofstream m(dir / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!m) throw IoError("cannot write " + (dir / "manifest.json").string());
  m << manifest.dump(2) << '\n';

  std::size_t labeled = 0;
  for (const auto& r : records) labeled += r.style_label ? 1 : 0;
  out << "wrote " << records.size() << " videos (" << labeled << " labeled) to " << dir.string() << "\n";
  out << "split train/val/test = " << split.train.size() << "/" << split.val.size() << "/" << split.test.size()
      << "\n";
  print_histograms(out, records, vocab);
  return kExitOk;
}

int cmd_train_mln(const Common& common, const std::string& data_dir, const std::string& out_path,
                  std::ostream& out) {
  const config::RunConfig cfg = load_config(common);
  check_output(out_path, common.force);
  const auto train = load_split(data_dir, "train");
  const auto val = load_split(data_dir, "val");
  embeddings::MLNTrainLog log;
  const embeddings::MLNParams params = embeddings::train_mln(train, cfg.mln_config(), &log);
  for (std::size_t e = 0; e < log.epoch_loss.size(); ++e) {
    out << "mln epoch " << e + 1 << " loss " << log.epoch_loss[e] << '\n';
  }
  const double acc = embeddings::transition_accuracy(params, embeddings::transition_samples(val));
  out << "mln val transition accuracy " << acc << '\n';
  Json meta = artifact_metadata("mln", cfg, {{"train_data", artifact_hash(split_file(data_dir, "train"))}});
  meta["val_transition_accuracy"] = acc;
  checkpoint::save_checkpoint(mln_to_checkpoint(params, cfg.mln_config(), std::move(meta)), out_path);
  out << "wrote " << out_path << '\n';
  return kExitOk;
}

int cmd_export_embeddings(const Common& common, const std::string& mln_path, const std::string& data_dir,
                          const std::string& out_path, std::ostream& out) {
  const config::RunConfig cfg = load_config(common);
  check_output(out_path, common.force);
  check_output(out_path + ".meta.json", common.force);
  const checkpoint::Checkpoint ckpt = load_ckpt(mln_path, "MLN checkpoint", "train-mln");
  const embeddings::MLNParams params = mln_from_checkpoint(ckpt);
  const auto train = load_split(data_dir, "train");
  const fs::path vocab_path = fs::path(data_dir) / "vocab.json";
  require_input(vocab_path, "vocabulary", "gen-data");
  embeddings::EmbeddingTable table =
      embeddings::extract_embedding_tables(params, train, data::load_vocabularies(vocab_path));
  table.provenance.source_checkpoint = artifact_hash(mln_path);
  table.provenance.seed = cfg.seed;
  embeddings::save_embeddings(table, out_path);
  out << "wrote " << table.n_transitions() << " transition and " << table.n_styles() << " style embeddings (d_e "
      << table.dim() << ") to " << out_path << '\n';
  return kExitOk;
}

int cmd_train_seq(const Common& common, const std::string& data_dir, const std::string& emb_path,
                  const std::string& out_path, std::ostream& out) {
  const config::RunConfig cfg = load_config(common);
  check_output(out_path, common.force);
  const embeddings::EmbeddingTable table = load_emb(emb_path);
  const seq::SeqModelConfig sc = cfg.seq_config();
  if (table.dim() != sc.embedding_dim) {
    throw ConfigError("d_e mismatch: embedding file has " + std::to_string(table.dim()) + ", config d_e = " +
                      std::to_string(sc.embedding_dim));
  }
  if (table.n_transitions() != sc.n_transitions) {
    throw ConfigError("n_transitions mismatch: embedding file has " + std::to_string(table.n_transitions()) +
                      ", config n_transitions = " + std::to_string(sc.n_transitions));
  }
  const auto train = load_split(data_dir, "train");
  const auto val = load_split(data_dir, "val");
  seq::SeqTrainLog log;
  const seq::SeqModelParams params = seq::train_seq_model(train, val, table, sc, &log);
  for (const auto& e : log.epochs) {
    out << "seq epoch " << e.epoch + 1 << " train_loss " << e.train_loss << " val_loss " << e.val_loss
        << " val_recall@1 " << e.val_recall_at_1 << '\n';
  }
  out << "best epoch " << log.best_epoch + 1 << " val_recall@1 " << log.best_val_recall_at_1 << '\n';
  checkpoint::Checkpoint ckpt = seq::to_checkpoint(params);
  Json meta = artifact_metadata("seq", cfg,
                                {{"embeddings", artifact_hash(emb_path)},
                                 {"train_data", artifact_hash(split_file(data_dir, "train"))}});
  meta["config"] = ckpt.metadata["config"];
  meta["best_epoch"] = log.best_epoch + 1;
  meta["best_val_recall_at_1"] = log.best_val_recall_at_1;
  ckpt.metadata = meta;
  checkpoint::save_checkpoint(ckpt, out_path);
  out << "wrote " << out_path << '\n';
  return kExitOk;
}

int cmd_train_recon(const Common& common, const std::string& data_dir, const std::string& seq_path,
                    const std::string& out_path, std::ostream& out) {
  const config::RunConfig cfg = load_config(common);
  check_output(out_path, common.force);
  const checkpoint::Checkpoint seq_ckpt = load_ckpt(seq_path, "seq checkpoint", "train-seq");
  const seq::SeqModelParams seq_params = seq::from_checkpoint(seq_ckpt);
  const auto train = load_split(data_dir, "train");
  const std::string encoder_before = checkpoint::parameter_hash(seq_params.encoder_parameters());
  style::ReconTrainLog log;
  const style::ReconDecoderParams recon = style::train_recon_decoder(seq_params, train, cfg.recon_config(), &log);
  if (checkpoint::parameter_hash(seq_params.encoder_parameters()) != encoder_before) {
    throw NumericError("train-recon: encoder parameters changed during training");
  }
  out << "recon initial mean L1 " << log.initial_loss << '\n';
  for (std::size_t e = 0; e < log.epoch_loss.size(); ++e) {
    out << "recon epoch " << e + 1 << " mean L1 " << log.epoch_loss[e] << '\n';
  }
  checkpoint::Checkpoint ckpt = style::to_checkpoint(recon);
  Json meta = artifact_metadata("recon", cfg,
                                {{"seq", artifact_hash(seq_path)},
                                 {"train_data", artifact_hash(split_file(data_dir, "train"))}});
  meta["encoder_hash"] = encoder_before;
  for (const auto& [k, v] : ckpt.metadata.items()) {
    if (k != "kind") meta[k] = v;
  }
  ckpt.metadata = meta;
  checkpoint::save_checkpoint(ckpt, out_path);
  out << "wrote " << out_path << '\n';
  return kExitOk;
}

Json scm_json(const style::SCMConfig& c) {
  return {{"iterations", c.iterations}, {"beta", c.beta}, {"alpha_e", c.alpha_e}, {"alpha_r", c.alpha_r},
          {"k", c.k}};
}

struct RecommendArgs {
  std::string seq_path;
  std::string recon_path;
  std::string emb_path;
  std::string video_path;
  std::string video_id;
  std::string style;
  std::string out_path;
  bool no_scm = false;
  bool rrt = false;
  std::optional<int> k;
};

int cmd_recommend(const Common& common, const RecommendArgs& a, std::ostream& out) {
  config::RunConfig cfg = load_config(common);
  if (a.k) cfg.rrt_k = *a.k;
  check_output(a.out_path, common.force);
  const embeddings::EmbeddingTable table = load_emb(a.emb_path);
  const style::StyleTarget target = style::style_target(table, a.style);
  style::SCMConfig scm = cfg.scm_config();
  scm.validate(table.n_transitions());

  const checkpoint::Checkpoint seq_ckpt = load_ckpt(a.seq_path, "seq checkpoint", "train-seq");
  check_lineage(seq_ckpt, "seq checkpoint", "embeddings", a.emb_path);
  const seq::SeqModelParams seq_params = seq::from_checkpoint(seq_ckpt);

  require_input(a.video_path, "video feature file", "gen-data");
  const auto videos = data::load_dataset(a.video_path);
  const data::DatasetRecord* video = nullptr;
  for (const auto& r : videos) {
    if (a.video_id.empty() || r.features.video_id == a.video_id) {
      video = &r;
      break;
    }
  }
  if (video == nullptr) {
    throw ValidationError(a.video_id.empty() ? "video file is empty" : "video '" + a.video_id + "' not found");
  }

  Json parents = {{"seq", artifact_hash(a.seq_path)}, {"embeddings", artifact_hash(a.emb_path)}};
  style::StyledResult result;
  if (a.no_scm) {
    result.trace = seq::recommend_greedy(video->features, seq_params, table);
    for (const auto& s : result.trace.steps) {
      (void)s;
      result.steps.push_back({});
    }
    for (std::size_t t = 0; t < result.trace.steps.size(); ++t) {
      ad::Mat mean = ad::Mat::Zero(1, table.dim());
      for (std::size_t i = 0; i <= t; ++i) mean += result.trace.steps[i].h_decode;
      const double sim = 1.0 - style::embedding_loss(mean, target.embedding);
      result.steps[t] = {sim, sim};
    }
    if (a.rrt) result.trace = style::rrt_finetune(result.trace, table, target.embedding, scm.k);
  } else {
    require_input(a.recon_path, "recon checkpoint", "train-recon");
    const checkpoint::Checkpoint recon_ckpt = checkpoint::load_checkpoint(a.recon_path);
    check_lineage(recon_ckpt, "recon checkpoint", "seq", a.seq_path);
    const style::ReconDecoderParams recon = style::recon_from_checkpoint(recon_ckpt);
    parents["recon"] = artifact_hash(a.recon_path);
    result = style::recommend_styled(video->features, a.style, seq_params, recon, table, scm, a.rrt);
  }

  Json doc;
  doc["video_id"] = video->features.video_id;
  doc["style"] = a.style;
  doc["created"] = checkpoint::timestamp_now();
  doc["scm"] = !a.no_scm;
  doc["rrt"] = a.rrt;
  Json steps = Json::array();
  for (std::size_t t = 0; t < result.trace.steps.size(); ++t) {
    const auto& s = result.trace.steps[t];
    const std::vector<int> ranked = eval::rank_transitions(s, table.transitions, eval::RankingMode::kSimilarity);
    Json top5 = Json::array();
    for (std::size_t r = 0; r < std::min<std::size_t>(5, ranked.size()); ++r) {
      const int c = ranked[r];
      top5.push_back({{"transition_id", c},
                      {"transition_name", table.vocab.transitions.name(c)},
                      {"score", s.h_decode.row(0).dot(table.transitions.row(c))}});
    }
    steps.push_back({{"step", t + 1},
                     {"transition_id", s.transition},
                     {"transition_name", table.vocab.transitions.name(s.transition)},
                     {"top5", top5},
                     {"similarity_before", result.steps[t].similarity_before},
                     {"similarity_after", result.steps[t].similarity_after}});
  }
  doc["steps"] = steps;
  doc["trajectory"] = reporting::similarity_trajectory(result.trace, table.transitions, target.embedding);
  doc["scm_config"] = scm_json(scm);
  doc["seed"] = cfg.seed;
  doc["parents"] = parents;
  std::ofstream f(a.out_path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + a.out_path);
  f << doc.dump(2) << '\n';
  out << "video " << video->features.video_id << " style " << a.style << ":";
  for (const auto& s : result.trace.steps) out << ' ' << table.vocab.transitions.name(s.transition);
  out << '\n';
  return kExitOk;
}

struct EvaluateArgs {
  std::string seq_path;
  std::string emb_path;
  std::string recon_path;
  std::string mln_path;
  std::string data_dir;
  std::string split = "test";
  std::string metrics = "recall@1,recall@5,mean-rank";
  std::string label;
  std::string out_path;
  int style_videos = 0;
  bool scm = false;
  bool rrt = false;
  bool baseline = false;
};

int cmd_evaluate(const Common& common, const EvaluateArgs& a, std::ostream& out) {
  const config::RunConfig cfg = load_config(common);
  const std::vector<eval::MetricSpec> metrics = eval::parse_metrics(a.metrics);
  if (a.rrt && !a.scm) throw ValidationError("--rrt requires --scm");
  if (a.baseline && a.scm) throw ValidationError("--baseline cannot be combined with --scm");
  bool wants_style = false;
  bool wants_ranking = false;
  for (const auto& m : metrics) (m.metric == eval::Metric::kStyleSimilarity ? wants_style : wants_ranking) = true;
  if (a.scm && wants_ranking) {
    throw ValidationError("ranking metrics are reported for unconditioned decoding; drop --scm or use style-similarity");
  }
  check_output(a.out_path, common.force);

  const embeddings::EmbeddingTable table = load_emb(a.emb_path);
  const auto records = load_split(a.data_dir, a.split);

  eval::EvalReport report;
  report.split = a.split;
  report.seed = cfg.seed;
  report.ranking_mode = cfg.ranking();
  report.config = cfg.to_json();
  report.artifact_hashes["embeddings"] = artifact_hash(a.emb_path);
  report.artifact_hashes["data"] = artifact_hash(split_file(a.data_dir, a.split));
  for (const auto& m : metrics) report.metric_order.push_back(m.name());

  std::optional<embeddings::MLNParams> mln;
  std::optional<seq::SeqModelParams> seq_params;
  std::optional<style::ReconDecoderParams> recon;
  if (a.baseline) {
    report.method = "baseline";
    const checkpoint::Checkpoint ckpt = load_ckpt(a.mln_path, "MLN checkpoint", "train-mln");
    if (table.provenance.source_checkpoint != artifact_hash(a.mln_path)) {
      throw ValidationError("lineage mismatch: embedding file was not exported from " + a.mln_path);
    }
    mln = mln_from_checkpoint(ckpt);
    report.artifact_hashes["mln"] = artifact_hash(a.mln_path);
  } else {
    report.method = a.scm ? (a.rrt ? "E & D, SCM w/ RRT" : "E & D, SCM w/o RRT") : "E & D";
    const checkpoint::Checkpoint ckpt = load_ckpt(a.seq_path, "seq checkpoint", "train-seq");
    check_lineage(ckpt, "seq checkpoint", "embeddings", a.emb_path);
    seq_params = seq::from_checkpoint(ckpt);
    report.artifact_hashes["seq"] = artifact_hash(a.seq_path);
    if (a.scm) {
      const checkpoint::Checkpoint rc = load_ckpt(a.recon_path, "recon checkpoint", "train-recon");
      check_lineage(rc, "recon checkpoint", "seq", a.seq_path);
      recon = style::recon_from_checkpoint(rc);
      report.artifact_hashes["recon"] = artifact_hash(a.recon_path);
    }
  }
  if (!a.label.empty()) report.method = a.label;

  auto plain_trace = [&](const data::DatasetRecord& r) {
    return a.baseline ? baseline_trace(r.features, *mln, table) : seq::recommend_greedy(r.features, *seq_params, table);
  };

  std::vector<seq::DecodeTrace> plain;
  if (wants_ranking || (wants_style && !a.scm)) {
    for (const auto& r : records) plain.push_back(plain_trace(r));
  }
  report.videos = static_cast<int>(records.size());
  if (wants_ranking) {
    std::vector<std::vector<int>> gt;
    for (const auto& r : records) gt.push_back(r.gt_transitions);
    eval::add_ranking_metrics(report, plain, gt, table.transitions, metrics);
  }
  if (wants_style) {
    const std::size_t n = a.style_videos > 0 ? std::min<std::size_t>(records.size(), a.style_videos) : records.size();
    const style::SCMConfig scm = cfg.scm_config();
    for (int k = 0; k < table.n_styles(); ++k) {
      const std::string name = table.vocab.styles.name(k);
      const ad::Mat e_style = table.styles.row(k);
      std::vector<seq::DecodeTrace> traces;
      for (std::size_t i = 0; i < n; ++i) {
        if (a.scm) {
          traces.push_back(
              style::recommend_styled(records[i].features, name, *seq_params, *recon, table, scm, a.rrt).trace);
        } else {
          traces.push_back(plain[i]);
        }
      }
      const eval::StyleSimilarity s = eval::style_similarity(traces, table.transitions, e_style);
      report.style_similarity[name] = s.mean;
      report.style_videos[name] = s.videos;
      report.skipped += s.skipped;
      out << "style " << name << " similarity " << s.mean << " over " << s.videos << " videos\n";
    }
  }
  for (const auto& [k, v] : report.metrics) out << k << ' ' << v << '\n';
  eval::emit_report(report, a.out_path);
  out << "wrote " << a.out_path << '\n';
  return kExitOk;
}

int cmd_dump_embeddings(const Common& common, const std::string& emb_path, const std::string& out_path,
                        std::ostream& out) {
  check_output(out_path, common.force);
  const embeddings::EmbeddingTable table = load_emb(emb_path);
  reporting::dump_embeddings(table, out_path);
  out << "wrote " << table.n_transitions() + table.n_styles() << " rows to " << out_path << '\n';
  return kExitOk;
}

int cmd_ablation_table(const Common& common, const std::vector<std::string>& report_paths,
                       const std::string& columns, const std::string& out_path, std::ostream& out) {
  check_output(out_path, common.force);
  std::vector<eval::EvalReport> reports;
  for (const auto& p : report_paths) {
    require_input(p, "evaluation report", "evaluate");
    reports.push_back(eval::load_report(p));
  }
  std::vector<std::string> cols;
  for (const auto& m : eval::parse_metrics(columns)) cols.push_back(m.name());
  reporting::ablation_table(reports, cols, out_path);
  out << "wrote " << reports.size() << " rows to " << out_path << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"vt4s: style-aware video transition recommendation pipeline", "vt4s"};
  app.require_subcommand(1);
  Common common;

  std::string out_path;
  std::string data_dir;
  std::string emb_path;
  std::string mln_path;
  std::string seq_path;

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic corpus and its splits");
  add_common(gen, common);
  gen->add_option("--out", out_path, "output directory")->required();

  auto* tmln = app.add_subcommand("train-mln", "train the multitask embedding network");
  add_common(tmln, common);
  tmln->add_option("--data", data_dir, "dataset directory")->required();
  tmln->add_option("--out", out_path, "checkpoint path")->required();

  auto* exp = app.add_subcommand("export-embeddings", "extract transition and style embedding tables");
  add_common(exp, common);
  exp->add_option("--mln-ckpt", mln_path, "MLN checkpoint")->required();
  exp->add_option("--data", data_dir, "dataset directory")->required();
  exp->add_option("--out", out_path, "embedding file")->required();

  auto* tseq = app.add_subcommand("train-seq", "train the encoder-decoder");
  add_common(tseq, common);
  tseq->add_option("--data", data_dir, "dataset directory")->required();
  tseq->add_option("--emb", emb_path, "embedding file")->required();
  tseq->add_option("--out", out_path, "checkpoint path")->required();

  auto* trec = app.add_subcommand("train-recon", "train the reconstruction decoder on the frozen encoder");
  add_common(trec, common);
  trec->add_option("--data", data_dir, "dataset directory")->required();
  trec->add_option("--seq-ckpt", seq_path, "seq checkpoint")->required();
  trec->add_option("--out", out_path, "checkpoint path")->required();

  RecommendArgs rec;
  auto* rcmd = app.add_subcommand("recommend", "recommend transitions for one video and style");
  add_common(rcmd, common);
  rcmd->add_option("--seq-ckpt", rec.seq_path)->required();
  rcmd->add_option("--recon-ckpt", rec.recon_path);
  rcmd->add_option("--emb", rec.emb_path)->required();
  rcmd->add_option("--video", rec.video_path, "JSONL file with clip features")->required();
  rcmd->add_option("--video-id", rec.video_id, "record to use (default: first)");
  rcmd->add_option("--style", rec.style)->required();
  rcmd->add_flag("--no-scm", rec.no_scm, "plain greedy decoding");
  rcmd->add_flag("--rrt", rec.rrt, "K-nearest finetuning pass");
  rcmd->add_option("--k", rec.k, "finetuning breadth");
  rcmd->add_option("--out", rec.out_path)->required();

  EvaluateArgs ev;
  auto* ecmd = app.add_subcommand("evaluate", "evaluate a method variant on a split");
  add_common(ecmd, common);
  ecmd->add_option("--seq-ckpt", ev.seq_path);
  ecmd->add_option("--emb", ev.emb_path)->required();
  ecmd->add_option("--recon-ckpt", ev.recon_path);
  ecmd->add_option("--mln-ckpt", ev.mln_path);
  ecmd->add_option("--data", ev.data_dir)->required();
  ecmd->add_option("--split", ev.split);
  ecmd->add_option("--metrics", ev.metrics, "comma list of recall@K, mean-rank, style-similarity");
  ecmd->add_option("--label", ev.label, "method label in the report");
  ecmd->add_option("--style-videos", ev.style_videos, "videos per style for style-similarity (0 = all)");
  ecmd->add_flag("--scm", ev.scm);
  ecmd->add_flag("--rrt", ev.rrt);
  ecmd->add_flag("--baseline", ev.baseline, "per-segment MLN classifier");
  ecmd->add_option("--out", ev.out_path)->required();

  auto* dump = app.add_subcommand("dump-embeddings", "write the embedding tables as CSV");
  add_common(dump, common);
  dump->add_option("--emb", emb_path)->required();
  dump->add_option("--out", out_path)->required();

  std::vector<std::string> report_paths;
  std::string columns = "recall@1,recall@5,mean-rank";
  auto* abl = app.add_subcommand("ablation-table", "combine evaluation reports into one CSV table");
  add_common(abl, common);
  abl->add_option("--reports", report_paths)->required()->delimiter(',');
  abl->add_option("--columns", columns);
  abl->add_option("--out", out_path)->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(common, out_path, out);
    if (tmln->parsed()) return cmd_train_mln(common, data_dir, out_path, out);
    if (exp->parsed()) return cmd_export_embeddings(common, mln_path, data_dir, out_path, out);
    if (tseq->parsed()) return cmd_train_seq(common, data_dir, emb_path, out_path, out);
    if (trec->parsed()) return cmd_train_recon(common, data_dir, seq_path, out_path, out);
    if (rcmd->parsed()) return cmd_recommend(common, rec, out);
    if (ecmd->parsed()) {
      if (!ev.baseline && ev.seq_path.empty()) throw ValidationError("evaluate: --seq-ckpt is required");
      if (ev.baseline && ev.mln_path.empty()) throw ValidationError("evaluate: --baseline needs --mln-ckpt");
      if (ev.scm && ev.recon_path.empty()) throw ValidationError("evaluate: --scm needs --recon-ckpt");
      return cmd_evaluate(common, ev, out);
    }
    if (dump->parsed()) return cmd_dump_embeddings(common, emb_path, out_path, out);
    if (abl->parsed()) return cmd_ablation_table(common, report_paths, columns, out_path, out);
  } catch (const PrerequisiteError& e) {
    err << "error: " << e.what() << '\n';
    return kExitPrerequisite;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitValidation;
}

}  // namespace vt4s::cli
