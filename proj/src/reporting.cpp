// Copyright 2026 The vt4s Authors
// SPDX-License-Identifier: Apache-2.0

#include "vt4s/reporting.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "vt4s/error.hpp"
#include "vt4s/hash.hpp"

namespace vt4s::reporting {

namespace {

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void dump_embeddings(const embeddings::EmbeddingTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# source_checkpoint=" << table.provenance.source_checkpoint << '\n';
  out << "kind,index,name";
  for (int d = 0; d < table.dim(); ++d) out << ",v" << d;
  out << '\n';
  auto rows = [&](const char* kind, const Mat& m, const data::Vocabulary& vocab) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      out << kind << ',' << i << ',' << vocab.name(static_cast<int>(i));
      for (Eigen::Index d = 0; d < m.cols(); ++d) out << ',' << shortest(m(i, d));
      out << '\n';
    }
  };
  rows("transition", table.transitions, table.vocab.transitions);
  rows("style", table.styles, table.vocab.styles);
  if (!out) throw IoError("failed writing " + path.string());
}

EmbeddingDump read_embedding_dump(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  EmbeddingDump dump;
  std::string line;
  const std::string prefix = "# source_checkpoint=";
  if (!std::getline(in, line) || line.rfind(prefix, 0) != 0) throw ParseError(path.string() + ": missing provenance line");
  dump.source_checkpoint = line.substr(prefix.size());
  if (!std::getline(in, line) || line.rfind("kind,index,name", 0) != 0) throw ParseError(path.string() + ": missing header");
  const auto dim = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ',')) - 2;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string kind, index, name, cell;
    std::getline(ss, kind, ',');
    std::getline(ss, index, ',');
    std::getline(ss, name, ',');
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) {
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc{}) throw ParseError(path.string() + ": bad value '" + cell + "'");
      vals.push_back(v);
    }
    if (static_cast<Eigen::Index>(vals.size()) != dim) throw ParseError(path.string() + ": row width mismatch");
    dump.kinds.push_back(kind);
    dump.names.push_back(name);
    rows.push_back(std::move(vals));
  }
  dump.values.resize(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (Eigen::Index d = 0; d < dim; ++d) dump.values(static_cast<Eigen::Index>(r), d) = rows[r][static_cast<std::size_t>(d)];
  }
  return dump;
}

std::vector<double> similarity_trajectory(const seq::DecodeTrace& trace, const Mat& transition_table,
                                          const Mat& e_style) {
  std::vector<double> out;
  Mat sum = Mat::Zero(1, transition_table.cols());
  for (std::size_t t = 0; t < trace.steps.size(); ++t) {
    sum += transition_table.row(trace.steps[t].transition);
    const Mat mean = sum / static_cast<double>(t + 1);
    const double denom = std::max(mean.norm(), 1e-12) * std::max(e_style.norm(), 1e-12);
    out.push_back(mean.row(0).dot(e_style.row(0)) / denom);
  }
  return out;
}

void ablation_table(const std::vector<eval::EvalReport>& reports, const std::vector<std::string>& columns,
                    const std::filesystem::path& path) {
  if (reports.empty()) throw ValidationError("ablation_table: no reports");
  if (columns.empty()) throw ValidationError("ablation_table: no columns");
  for (const auto& r : reports) {
    for (const auto& c : columns) {
      if (!r.has(c)) throw ValidationError("ablation_table: report '" + r.method + "' is missing metric '" + c + "'");
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "method";
  for (const auto& c : columns) out << ',' << c;
  out << '\n';
  for (const auto& r : reports) {
    out << csv_field(r.method);
    for (const auto& c : columns) out << ',' << shortest(r.value(c));
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace vt4s::reporting
