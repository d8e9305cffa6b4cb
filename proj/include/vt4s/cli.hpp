// Copyright 2026 The vt4s Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line pipeline: gen-data, train-mln, export-embeddings, train-seq,
// train-recon, recommend, evaluate, dump-embeddings, ablation-table.
//
// Exit codes: 0 success, 2 validation or configuration error, 3 missing
// prerequisite artifact, 4 runtime, numeric or I/O failure.

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace vt4s::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitPrerequisite = 3;
inline constexpr int kExitRuntime = 4;

/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vt4s::cli
