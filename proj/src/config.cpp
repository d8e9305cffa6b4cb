// Copyright 2026 The vt4s Authors
// SPDX-License-Identifier: Apache-2.0

#include "vt4s/config.hpp"

#include <charconv>
#include <cmath>
#include <sstream>
#include <utility>
#include <variant>

#include "vt4s/error.hpp"
#include "vt4s/hash.hpp"

namespace vt4s::config {

namespace {

using Field = std::variant<int*, double*, std::uint64_t*, std::string*>;

std::vector<std::pair<std::string, Field>> fields(RunConfig& c) {
  return {
      {"seed", &c.seed},
      {"feature_backend", &c.feature_backend},
      {"feature_dim", &c.feature_dim},
      {"n_transitions", &c.n_transitions},
      {"n_styles", &c.n_styles},
      {"n_max", &c.n_max},
      {"min_clips", &c.min_clips},
      {"sigma", &c.sigma},
      {"content_scale", &c.content_scale},
      {"videos_per_style", &c.videos_per_style},
      {"unlabeled_fraction", &c.unlabeled_fraction},
      {"split_train", &c.split[0]},
      {"split_val", &c.split[1]},
      {"split_test", &c.split[2]},
      {"d_e", &c.d_e},
      {"mln_epochs", &c.mln_epochs},
      {"mln_batch", &c.mln_batch},
      {"mln_lr", &c.mln_lr},
      {"lambda_mtl", &c.lambda_mtl},
      {"d_model", &c.d_model},
      {"n_head", &c.n_head},
      {"encoder_layers", &c.encoder_layers},
      {"decoder_layers", &c.decoder_layers},
      {"d_ff", &c.d_ff},
      {"lambda", &c.lambda},
      {"margin", &c.margin},
      {"classification_weight", &c.classification_weight},
      {"triplet_form", &c.triplet_form},
      {"seq_lr", &c.seq_lr},
      {"seq_epochs", &c.seq_epochs},
      {"seq_batch", &c.seq_batch},
      {"recon_hidden", &c.recon_hidden},
      {"recon_activation", &c.recon_activation},
      {"recon_epochs", &c.recon_epochs},
      {"recon_batch", &c.recon_batch},
      {"recon_lr", &c.recon_lr},
      {"scm_iterations", &c.scm_iterations},
      {"scm_beta", &c.scm_beta},
      {"scm_alpha_e", &c.scm_alpha_e},
      {"scm_alpha_r", &c.scm_alpha_r},
      {"rrt_k", &c.rrt_k},
      {"ranking_mode", &c.ranking_mode},
  };
}

template <typename T>
bool parse_number(const std::string& text, T& out) {
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, out);
  return res.ec == std::errc{} && res.ptr == end;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format(const Field& f) {
  return std::visit(
      [](auto* p) -> std::string {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, std::string>) {
          return *p;
        } else {
          char buf[64];
          const auto res = std::to_chars(buf, buf + sizeof buf, *p);
          return {buf, res.ptr};
        }
      },
      f);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  for (auto& [name, field] : fields(*this)) {
    if (name != key) continue;
    const bool ok = std::visit(
        [&](auto* p) {
          using T = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<T, std::string>) {
            *p = value;
            return !value.empty();
          } else {
            return parse_number(value, *p);
          }
        },
        field);
    if (!ok) throw ConfigError("config key '" + key + "': cannot parse value '" + value + "'");
    return;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::string RunConfig::get(const std::string& key) const {
  auto& self = const_cast<RunConfig&>(*this);
  for (const auto& [name, field] : fields(self)) {
    if (name == key) return format(field);
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::string> RunConfig::keys() {
  RunConfig tmp;
  std::vector<std::string> out;
  for (const auto& [name, _] : fields(tmp)) out.push_back(name);
  return out;
}

void RunConfig::apply_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void RunConfig::apply_file(const std::filesystem::path& path) { apply_text(read_file(path), path.string()); }

void RunConfig::validate() const {
  (void)corpus_spec();
  mln_config().validate();
  seq_config().validate();
  recon_config().validate();
  scm_config().validate(n_transitions);
  (void)ranking();
  if (n_styles < 2) throw ConfigError("n_styles must be >= 2");
  if (feature_dim < 2) throw ConfigError("feature_dim must be >= 2");
  if (min_clips < 2 || min_clips > n_max) throw ConfigError("min_clips must be in 2..n_max");
  double sum = 0.0;
  for (const double r : split) {
    if (!(r >= 0.0)) throw ConfigError("split ratios must be >= 0");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split_train + split_val + split_test must equal 1");
}

data::SyntheticCorpusSpec RunConfig::corpus_spec() const {
  data::SyntheticCorpusSpec spec;
  if (n_transitions < 2 || n_styles < 1) throw ConfigError("n_transitions must be >= 2 and n_styles >= 1");
  spec.style_profiles = data::default_style_profiles(n_transitions, n_styles, seed);
  spec.sigma = sigma;
  spec.content_scale = content_scale;
  spec.videos_per_style = videos_per_style;
  spec.min_clips = min_clips;
  spec.max_clips = n_max;
  spec.unlabeled_fraction = unlabeled_fraction;
  spec.features.backend = feature_backend;
  spec.features.dim = feature_dim;
  spec.features.seed = seed;
  spec.seed = seed;
  try {
    spec.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  return spec;
}

embeddings::MLNConfig RunConfig::mln_config() const {
  embeddings::MLNConfig c;
  c.feature_dim = feature_dim;
  c.embedding_dim = d_e;
  c.n_transitions = n_transitions;
  c.n_styles = n_styles;
  c.epochs = mln_epochs;
  c.batch_size = mln_batch;
  c.learning_rate = mln_lr;
  c.lambda_mtl = lambda_mtl;
  c.seed = seed;
  return c;
}

seq::SeqModelConfig RunConfig::seq_config() const {
  seq::SeqModelConfig c;
  c.feature_dim = feature_dim;
  c.d_model = d_model;
  c.n_head = n_head;
  c.encoder_layers = encoder_layers;
  c.decoder_layers = decoder_layers;
  c.d_ff = d_ff;
  c.embedding_dim = d_e;
  c.n_transitions = n_transitions;
  c.n_max = n_max;
  c.lambda = lambda;
  c.classification_weight = classification_weight;
  c.margin = margin;
  if (triplet_form == "corrected") {
    c.triplet_form = ad::TripletForm::kCorrected;
  } else if (triplet_form == "literal") {
    c.triplet_form = ad::TripletForm::kLiteral;
  } else {
    throw ConfigError("triplet_form must be corrected or literal, got '" + triplet_form + "'");
  }
  c.learning_rate = seq_lr;
  c.epochs = seq_epochs;
  c.batch_size = seq_batch;
  c.seed = seed;
  return c;
}

style::ReconConfig RunConfig::recon_config() const {
  style::ReconConfig c;
  c.hidden_dim = recon_hidden;
  if (recon_activation == "relu") {
    c.activation = style::ReconActivation::kRelu;
  } else if (recon_activation == "none") {
    c.activation = style::ReconActivation::kNone;
  } else {
    throw ConfigError("recon_activation must be relu or none, got '" + recon_activation + "'");
  }
  c.epochs = recon_epochs;
  c.batch_size = recon_batch;
  c.learning_rate = recon_lr;
  c.seed = seed;
  return c;
}

style::SCMConfig RunConfig::scm_config() const {
  style::SCMConfig c;
  c.iterations = scm_iterations;
  c.beta = scm_beta;
  c.alpha_e = scm_alpha_e;
  c.alpha_r = scm_alpha_r;
  c.k = rrt_k;
  return c;
}

eval::RankingMode RunConfig::ranking() const {
  try {
    return eval::parse_ranking_mode(ranking_mode);
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("ranking_mode: ") + e.what());
  }
}

checkpoint::Json RunConfig::to_json() const {
  checkpoint::Json j = checkpoint::Json::object();
  for (const auto& key : keys()) j[key] = get(key);
  return j;
}

std::string RunConfig::hash() const {
  std::string canonical;
  for (const auto& key : keys()) canonical += key + "=" + get(key) + "\n";
  return sha256_hex(canonical);
}

}  // namespace vt4s::config
