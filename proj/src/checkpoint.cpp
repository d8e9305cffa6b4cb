// Copyright 2026 The vt4s Authors
// SPDX-License-Identifier: Apache-2.0

#include "vt4s/checkpoint.hpp"

#include <bit>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

#include "vt4s/error.hpp"
#include "vt4s/hash.hpp"

namespace vt4s::checkpoint {

static_assert(std::endian::native == std::endian::little, "checkpoint payloads are little-endian");

const ad::Mat& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, m] : tensors) {
    if (n == name) return m;
  }
  throw ValidationError("checkpoint has no tensor '" + name + "'");
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "VT4S-CKPT 1\n" << ckpt.metadata.dump() << '\n';
  for (const auto& [name, m] : ckpt.tensors) {
    if (name.empty() || name.find_first_of(" \n") != std::string::npos) {
      throw ValidationError("checkpoint tensor name '" + name + "' must be non-empty without spaces");
    }
    out << "TENSOR " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    out << '\n';
  }
  out << "END\n";
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  std::size_t pos = 0;
  auto next_line = [&](const char* what) {
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw ParseError(path.string() + ": truncated while reading " + what);
    std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };
  if (next_line("magic") != "VT4S-CKPT 1") throw ParseError(path.string() + ": not a VT4S-CKPT 1 checkpoint");
  Checkpoint ckpt;
  try {
    ckpt.metadata = Json::parse(next_line("metadata"));
  } catch (const Json::exception& e) {
    throw ParseError(path.string() + ": bad metadata: " + e.what());
  }
  while (true) {
    const std::string line = next_line("tensor header");
    if (line == "END") break;
    std::istringstream hs(line);
    std::string tag;
    std::string name;
    long rows = -1;
    long cols = -1;
    if (!(hs >> tag >> name >> rows >> cols) || tag != "TENSOR" || rows < 0 || cols < 0) {
      throw ParseError(path.string() + ": bad tensor header '" + line + "'");
    }
    const std::size_t n_bytes = static_cast<std::size_t>(rows * cols) * sizeof(double);
    if (pos + n_bytes + 1 > bytes.size() || bytes[pos + n_bytes] != '\n') {
      throw ParseError(path.string() + ": truncated payload for tensor '" + name + "'");
    }
    ad::Mat m(rows, cols);
    std::memcpy(m.data(), bytes.data() + pos, n_bytes);
    pos += n_bytes + 1;
    ckpt.tensors.emplace_back(name, std::move(m));
  }
  return ckpt;
}

void store_parameters(Checkpoint& ckpt, const std::vector<const ad::Parameter*>& params) {
  for (const ad::Parameter* p : params) ckpt.tensors.emplace_back(p->name, p->value);
}

void restore_parameters(const Checkpoint& ckpt, const std::vector<ad::Parameter*>& params) {
  for (ad::Parameter* p : params) {
    const ad::Mat& m = ckpt.tensor(p->name);
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols()) {
      throw ValidationError("checkpoint tensor '" + p->name + "' has shape " + std::to_string(m.rows()) + "x" +
                            std::to_string(m.cols()) + ", expected " + std::to_string(p->value.rows()) + "x" +
                            std::to_string(p->value.cols()));
    }
    p->value = m;
    p->zero_grad();
  }
}

std::string parameter_hash(const std::vector<const ad::Parameter*>& params) {
  std::string buf;
  for (const ad::Parameter* p : params) {
    buf += p->name + ' ' + std::to_string(p->value.rows()) + ' ' + std::to_string(p->value.cols()) + '\n';
    buf.append(reinterpret_cast<const char*>(p->value.data()), p->value.size() * sizeof(double));
  }
  return sha256_hex(buf);
}

std::string timestamp_now() {
  std::time_t t = 0;
  if (const char* sde = std::getenv("SOURCE_DATE_EPOCH"); sde != nullptr && *sde != '\0') {
    t = static_cast<std::time_t>(std::strtoll(sde, nullptr, 10));
  } else {
    t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace vt4s::checkpoint
