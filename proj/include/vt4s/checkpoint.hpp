// Copyright 2026 The vt4s Authors
// SPDX-License-Identifier: Apache-2.0

// Versioned parameter container:
//
//   VT4S-CKPT 1\n
//   <metadata JSON on one line>\n
//   TENSOR <name> <rows> <cols>\n<rows*cols little-endian float64>\n   (repeated)
//   END\n

#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vt4s/autodiff.hpp"

namespace vt4s::checkpoint {

using Json = nlohmann::ordered_json;

struct Checkpoint {
  Json metadata = Json::object();
  std::vector<std::pair<std::string, ad::Mat>> tensors;

  [[nodiscard]] const ad::Mat& tensor(const std::string& name) const;
  [[nodiscard]] std::string kind() const { return metadata.value("kind", ""); }
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws ParseError on a bad magic line, truncated payload, or missing END.
Checkpoint load_checkpoint(const std::filesystem::path& path);

void store_parameters(Checkpoint& ckpt, const std::vector<const ad::Parameter*>& params);
/// Copies tensors into params by name; every parameter must be present with
/// a matching shape.
void restore_parameters(const Checkpoint& ckpt, const std::vector<ad::Parameter*>& params);

/// Order-sensitive hash over parameter names, shapes and values.
std::string parameter_hash(const std::vector<const ad::Parameter*>& params);

/// ISO-8601 UTC timestamp; honors SOURCE_DATE_EPOCH when set.
std::string timestamp_now();

}  // namespace vt4s::checkpoint
