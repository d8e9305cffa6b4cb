// Copyright 2026 The vt4s Authors
// SPDX-License-Identifier: Apache-2.0

#include "vt4s/embeddings.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "vt4s/error.hpp"
#include "vt4s/hash.hpp"

namespace vt4s::embeddings {

using json = nlohmann::ordered_json;

void MLNConfig::validate() const {
  if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
  if (embedding_dim < 1) throw ConfigError("d_e must be >= 1");
  if (n_transitions < 2) throw ConfigError("n_transitions must be >= 2");
  if (n_styles < 2) throw ConfigError("n_styles must be >= 2");
  if (epochs < 0) throw ConfigError("mln_epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("mln_batch must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("mln_lr must be > 0");
  if (!(lambda_mtl >= 0.0)) throw ConfigError("lambda_mtl must be >= 0");
}

MLNParams MLNParams::init(const MLNConfig& config) {
  config.validate();
  nn::Rng rng(mix64(config.seed ^ 0x4d4c4eULL));
  MLNParams p;
  p.projection = nn::Linear("mln.projection", config.feature_dim, config.embedding_dim, rng);
  p.transition_head = nn::Linear("mln.transition_head", config.embedding_dim, config.n_transitions, rng);
  p.style_head = nn::Linear("mln.style_head", config.embedding_dim, config.n_styles, rng);
  return p;
}

std::vector<ad::Parameter*> MLNParams::parameters() {
  std::vector<ad::Parameter*> out;
  projection.collect(out);
  transition_head.collect(out);
  style_head.collect(out);
  return out;
}

std::vector<const ad::Parameter*> MLNParams::parameters() const {
  std::vector<const ad::Parameter*> out;
  projection.collect(out);
  transition_head.collect(out);
  style_head.collect(out);
  return out;
}

MLNVars mln_forward(const nn::Binder& b, ad::Var feature, const MLNParams& params) {
  MLNVars out;
  out.unit = ad::l2_normalize_rows(params.projection(b, feature));
  out.transition_logits = params.transition_head(b, out.unit);
  out.style_logits = params.style_head(b, out.unit);
  return out;
}

MLNOutput mln_forward(const Mat& feature, const MLNParams& params) {
  if (feature.rows() != 1 || feature.cols() != params.feature_dim()) {
    throw ValidationError("mln_forward: expected a [1 x " + std::to_string(params.feature_dim()) + "] feature");
  }
  ad::Tape tape;
  const nn::Binder b(tape, false);
  const MLNVars v = mln_forward(b, tape.constant_ref(feature), params);
  return {v.unit.value(), v.transition_logits.value(), v.style_logits.value()};
}

ad::Var mtl_loss(ad::Var transition_logits, ad::Var style_logits, int gt_transition, std::optional<int> gt_style,
                 double lambda_mtl) {
  ad::Var loss = ad::cross_entropy(transition_logits, gt_transition);
  if (gt_style) {
    loss = ad::add(loss, ad::scale(ad::cross_entropy(style_logits, *gt_style), lambda_mtl));
  }
  return loss;
}

double mtl_loss(const Mat& transition_logits, const Mat& style_logits, int gt_transition, std::optional<int> gt_style,
                double lambda_mtl) {
  ad::Tape tape;
  return mtl_loss(tape.constant_ref(transition_logits), tape.constant_ref(style_logits), gt_transition, gt_style,
                  lambda_mtl)
      .item();
}

std::vector<TransitionSample> transition_samples(const std::vector<data::DatasetRecord>& records) {
  std::vector<TransitionSample> out;
  for (const auto& r : records) {
    for (int t = 0; t < static_cast<int>(r.gt_transitions.size()); ++t) {
      out.push_back({data::transition_segment(r.features, t), r.gt_transitions[static_cast<std::size_t>(t)],
                     r.style_label});
    }
  }
  return out;
}

MLNParams train_mln(const std::vector<data::DatasetRecord>& train, const MLNConfig& config, MLNTrainLog* log) {
  config.validate();
  const auto samples = transition_samples(train);
  if (samples.empty()) throw ValidationError("train_mln: no labeled transitions in the training set");
  for (const auto& s : samples) {
    if (s.feature.cols() != config.feature_dim) throw ConfigError("train_mln: feature_dim does not match the data");
    if (s.transition < 0 || s.transition >= config.n_transitions) {
      throw ValidationError("train_mln: transition label out of range");
    }
    if (s.style && (*s.style < 0 || *s.style >= config.n_styles)) {
      throw ValidationError("train_mln: style label out of range");
    }
  }

  MLNParams params = MLNParams::init(config);
  nn::Adam adam(params.parameters(), {.learning_rate = config.learning_rate});
  nn::Rng rng(mix64(config.seed ^ 0x4d4c4e5452ULL));
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  ad::Tape tape;
  const nn::Binder b(tape, true);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const double inv = 1.0 / static_cast<double>(end - start);
      adam.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        const auto& s = samples[order[i]];
        tape.clear();
        const MLNVars v = mln_forward(b, tape.constant_ref(s.feature), params);
        const ad::Var loss = mtl_loss(v.transition_logits, v.style_logits, s.transition, s.style, config.lambda_mtl);
        epoch_loss += loss.item();
        tape.backward(ad::scale(loss, inv));
      }
      adam.step();
    }
    if (!nn::all_finite(std::as_const(params).parameters())) {
      throw NumericError("train_mln: non-finite parameters after epoch " + std::to_string(epoch));
    }
    if (log != nullptr) log->epoch_loss.push_back(epoch_loss / static_cast<double>(samples.size()));
  }
  return params;
}

double transition_accuracy(const MLNParams& params, const std::vector<TransitionSample>& samples) {
  if (samples.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& s : samples) {
    const MLNOutput out = mln_forward(s.feature, params);
    Eigen::Index best = 0;
    out.transition_logits.row(0).maxCoeff(&best);
    if (best == s.transition) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

// ---- tables ------------------------------------------------------------------

void EmbeddingTable::validate(double norm_tolerance) const {
  if (transitions.rows() != vocab.transitions.size() || styles.rows() != vocab.styles.size()) {
    throw ValidationError("embedding table: row counts do not match the vocabularies");
  }
  if (transitions.cols() != styles.cols() || transitions.cols() < 1) {
    throw ValidationError("embedding table: transition and style dimensions differ");
  }
  auto check = [norm_tolerance](const Mat& m, const char* kind) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const double n = m.row(i).norm();
      if (!std::isfinite(n) || std::abs(n - 1.0) > norm_tolerance) {
        throw ValidationError(std::string("embedding table: ") + kind + " row " + std::to_string(i) +
                              " is not unit norm (" + std::to_string(n) + ")");
      }
    }
  };
  check(transitions, "transition");
  check(styles, "style");
}

EmbeddingTable extract_embedding_tables(const MLNParams& params, const std::vector<data::DatasetRecord>& records,
                                        const data::Vocabularies& vocab) {
  const int n_tr = vocab.transitions.size();
  const int n_st = vocab.styles.size();
  const int d_e = params.embedding_dim();
  Mat tr_sum = Mat::Zero(n_tr, d_e);
  Mat st_sum = Mat::Zero(n_st, d_e);
  std::vector<long> tr_count(static_cast<std::size_t>(n_tr), 0);
  std::vector<long> st_count(static_cast<std::size_t>(n_st), 0);

  for (const auto& r : records) {
    for (int t = 0; t < static_cast<int>(r.gt_transitions.size()); ++t) {
      const int cls = r.gt_transitions[static_cast<std::size_t>(t)];
      if (cls < 0 || cls >= n_tr) throw ValidationError("extract_embedding_tables: transition label out of range");
      const Mat u = mln_forward(data::transition_segment(r.features, t), params).unit;
      tr_sum.row(cls) += u;
      ++tr_count[static_cast<std::size_t>(cls)];
      if (r.style_label) {
        if (*r.style_label < 0 || *r.style_label >= n_st) {
          throw ValidationError("extract_embedding_tables: style label out of range");
        }
        st_sum.row(*r.style_label) += u;
        ++st_count[static_cast<std::size_t>(*r.style_label)];
      }
    }
  }

  std::string missing;
  for (int i = 0; i < n_tr; ++i) {
    if (tr_count[static_cast<std::size_t>(i)] == 0) missing += " transition:" + vocab.transitions.name(i);
  }
  for (int k = 0; k < n_st; ++k) {
    if (st_count[static_cast<std::size_t>(k)] == 0) missing += " style:" + vocab.styles.name(k);
  }
  if (!missing.empty()) throw ValidationError("extract_embedding_tables: no samples for" + missing);

  EmbeddingTable table;
  table.vocab = vocab;
  table.transitions = tr_sum;
  table.styles = st_sum;
  // Mean then normalize; the division by the count does not change the direction.
  for (int i = 0; i < n_tr; ++i) {
    table.transitions.row(i) /= static_cast<double>(tr_count[static_cast<std::size_t>(i)]);
    table.transitions.row(i).normalize();
  }
  for (int k = 0; k < n_st; ++k) {
    table.styles.row(k) /= static_cast<double>(st_count[static_cast<std::size_t>(k)]);
    table.styles.row(k).normalize();
  }
  table.provenance.extraction_rule = kMeanUnitRule;
  return table;
}

namespace {

void append_double(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

double parse_double(std::string_view tok, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    throw ParseError("embedding file line " + std::to_string(line) + ": bad number '" + std::string(tok) + "'");
  }
  return v;
}

std::filesystem::path meta_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".meta.json");
}

}  // namespace

void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path) {
  table.validate();
  std::string out = "VT4S-EMB 1 " + std::to_string(table.n_transitions()) + " " + std::to_string(table.n_styles()) +
                    " " + std::to_string(table.dim()) + "\n";
  auto rows = [&out](const Mat& m, const data::Vocabulary& names, char kind) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      out += kind;
      out += ' ' + std::to_string(i) + ' ' + names.name(static_cast<int>(i));
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        out += ' ';
        append_double(out, m(i, j));
      }
      out += '\n';
    }
  };
  rows(table.transitions, table.vocab.transitions, 'T');
  rows(table.styles, table.vocab.styles, 'S');
  {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    f << out;
  }
  json meta;
  meta["source_checkpoint"] = table.provenance.source_checkpoint;
  meta["extraction_rule"] = table.provenance.extraction_rule;
  meta["seed"] = table.provenance.seed;
  std::ofstream m(meta_path(path));
  if (!m) throw IoError("cannot write " + meta_path(path).string());
  m << meta.dump(2) << '\n';
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw ParseError("embedding file " + path.string() + " is empty");
  std::istringstream header(line);
  std::string magic;
  int version = 0;
  int n_tr = 0;
  int n_st = 0;
  int d_e = 0;
  if (!(header >> magic >> version >> n_tr >> n_st >> d_e) || magic != "VT4S-EMB" || version != 1 || n_tr < 1 ||
      n_st < 1 || d_e < 1) {
    throw ParseError("embedding file " + path.string() + ": bad header '" + line + "'");
  }
  EmbeddingTable table;
  table.transitions = Mat::Constant(n_tr, d_e, std::nan(""));
  table.styles = Mat::Constant(n_st, d_e, std::nan(""));
  std::vector<std::string> tr_names(static_cast<std::size_t>(n_tr));
  std::vector<std::string> st_names(static_cast<std::size_t>(n_st));
  std::size_t line_no = 1;
  int rows_read = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string kind;
    int index = -1;
    std::string name;
    if (!(ls >> kind >> index >> name) || (kind != "T" && kind != "S")) {
      throw ParseError("embedding file line " + std::to_string(line_no) + ": bad row prefix");
    }
    const bool is_tr = kind == "T";
    Mat& target = is_tr ? table.transitions : table.styles;
    auto& names = is_tr ? tr_names : st_names;
    if (index < 0 || index >= target.rows()) {
      throw ParseError("embedding file line " + std::to_string(line_no) + ": index " + std::to_string(index) +
                       " exceeds header count");
    }
    if (!names[static_cast<std::size_t>(index)].empty()) {
      throw ParseError("embedding file line " + std::to_string(line_no) + ": duplicate row");
    }
    names[static_cast<std::size_t>(index)] = name;
    std::string tok;
    int col = 0;
    while (ls >> tok) {
      if (col >= d_e) throw ParseError("embedding file line " + std::to_string(line_no) + ": too many values");
      target(index, col++) = parse_double(tok, line_no);
    }
    if (col != d_e) throw ParseError("embedding file line " + std::to_string(line_no) + ": too few values");
    ++rows_read;
  }
  if (rows_read != n_tr + n_st) {
    throw ParseError("embedding file " + path.string() + ": header declares " + std::to_string(n_tr + n_st) +
                     " rows, found " + std::to_string(rows_read));
  }
  try {
    table.vocab = {data::Vocabulary(tr_names), data::Vocabulary(st_names)};
    table.validate(1e-5);
  } catch (const ValidationError& e) {
    throw ParseError("embedding file " + path.string() + ": " + e.what());
  }
  if (std::filesystem::exists(meta_path(path))) {
    try {
      const json meta = json::parse(read_file(meta_path(path)));
      table.provenance.source_checkpoint = meta.value("source_checkpoint", "");
      table.provenance.extraction_rule = meta.value("extraction_rule", "");
      table.provenance.seed = meta.value("seed", std::uint64_t{0});
    } catch (const json::exception& e) {
      throw ParseError("embedding metadata " + meta_path(path).string() + ": " + e.what());
    }
  }
  return table;
}

}  // namespace vt4s::embeddings
