// Copyright 2026 The vt4s Authors
// SPDX-License-Identifier: Apache-2.0

// CSV artifacts for inspection: embedding dumps, per-step style similarity
// trajectories and ablation tables.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vt4s/embeddings.hpp"
#include "vt4s/eval.hpp"
#include "vt4s/seq_model.hpp"

namespace vt4s::reporting {

using ad::Mat;

/// Rows `kind,index,name,v0..v{d-1}` after a `# source_checkpoint=<hash>` line.
void dump_embeddings(const embeddings::EmbeddingTable& table, const std::filesystem::path& path);

struct EmbeddingDump {
  std::string source_checkpoint;
  std::vector<std::string> kinds;
  std::vector<std::string> names;
  Mat values;
};
EmbeddingDump read_embedding_dump(const std::filesystem::path& path);

/// Element t: cos(mean of table rows for the first t + 1 predictions, e_style).
std::vector<double> similarity_trajectory(const seq::DecodeTrace& trace, const Mat& transition_table,
                                          const Mat& e_style);

/// One row per report; columns are `method` plus `columns` in the given
/// order. Any report lacking a column is a ValidationError.
void ablation_table(const std::vector<eval::EvalReport>& reports, const std::vector<std::string>& columns,
                    const std::filesystem::path& path);

}  // namespace vt4s::reporting
