// Copyright 2026 The vt4s Authors
// SPDX-License-Identifier: Apache-2.0

// Flat `key = value` run configuration shared by every pipeline stage.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vt4s/checkpoint.hpp"
#include "vt4s/data.hpp"
#include "vt4s/embeddings.hpp"
#include "vt4s/eval.hpp"
#include "vt4s/seq_model.hpp"
#include "vt4s/style_cond.hpp"

namespace vt4s::config {

struct RunConfig {
  std::uint64_t seed = 0;

  // corpus
  std::string feature_backend = "hash-stub";
  int feature_dim = 256;
  int n_transitions = 30;
  int n_styles = 5;
  int n_max = 8;
  int min_clips = 4;
  double sigma = 0.5;
  double content_scale = 0.0;
  int videos_per_style = 400;
  double unlabeled_fraction = 0.75;
  std::array<double, 3> split = {0.7, 0.15, 0.15};

  // embedding network
  int d_e = 128;
  int mln_epochs = 30;
  int mln_batch = 64;
  double mln_lr = 1e-3;
  double lambda_mtl = 1.0;

  // encoder-decoder
  int d_model = 512;
  int n_head = 8;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int d_ff = 2048;
  double lambda = 1.0;
  double margin = 0.5;
  double classification_weight = 1.0;
  std::string triplet_form = "corrected";
  double seq_lr = 1e-5;
  int seq_epochs = 60;
  int seq_batch = 16;

  // reconstruction decoder and conditioning
  int recon_hidden = 512;
  std::string recon_activation = "relu";
  int recon_epochs = 60;
  int recon_batch = 16;
  double recon_lr = 1e-3;
  int scm_iterations = 5000;
  double scm_beta = 0.1;
  double scm_alpha_e = 1.0;
  double scm_alpha_r = 1.0;
  int rrt_k = 3;

  std::string ranking_mode = "similarity";

  /// Assigns one key from its text form. ConfigError names the key on an
  /// unknown key or an unparsable value.
  void set(const std::string& key, const std::string& value);
  [[nodiscard]] std::string get(const std::string& key) const;
  [[nodiscard]] static std::vector<std::string> keys();

  /// Applies every `key = value` line; `#` starts a comment.
  void apply_text(const std::string& text, const std::string& origin);
  void apply_file(const std::filesystem::path& path);

  /// Builds every module config and validates it.
  void validate() const;

  [[nodiscard]] data::SyntheticCorpusSpec corpus_spec() const;
  [[nodiscard]] embeddings::MLNConfig mln_config() const;
  [[nodiscard]] seq::SeqModelConfig seq_config() const;
  [[nodiscard]] style::ReconConfig recon_config() const;
  [[nodiscard]] style::SCMConfig scm_config() const;
  [[nodiscard]] eval::RankingMode ranking() const;

  /// Every key with its effective value, in declaration order.
  [[nodiscard]] checkpoint::Json to_json() const;
  /// SHA-256 of the canonical `key=value` listing.
  [[nodiscard]] std::string hash() const;
};

}  // namespace vt4s::config
