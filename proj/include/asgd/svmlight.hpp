#pragma once

// svmlight / libsvm text format:  "<label> <idx>:<val> <idx>:<val> ..."
// with 1-based, strictly ascending indices.  Blank lines and '#' comments are
// skipped; "qid:" tokens are ignored.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "asgd/dataset.hpp"

namespace asgd {

struct SvmlightOptions {
  std::size_t force_dim = 0;  // 0: dim = largest index seen (at least 1)
  bool remap_01 = false;      // labels {0,1} -> {-1,+1}
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

namespace detail {

inline bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, out);
  return res.ec == std::errc() && res.ptr == end;
}

inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

inline Dataset read_svmlight(std::istream& in, const SvmlightOptions& opt = {}) {
  struct Parsed {
    double label;
    std::vector<SparseVec::Entry> entries;
  };
  std::vector<Parsed> parsed;
  std::size_t max_index = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view sv(line);
    if (auto hash = sv.find('#'); hash != std::string_view::npos) sv = sv.substr(0, hash);
    std::vector<std::string_view> tokens;
    std::size_t pos = 0;
    while (pos < sv.size()) {
      while (pos < sv.size() && std::isspace(static_cast<unsigned char>(sv[pos]))) ++pos;
      std::size_t end = pos;
      while (end < sv.size() && !std::isspace(static_cast<unsigned char>(sv[end]))) ++end;
      if (end > pos) tokens.push_back(sv.substr(pos, end - pos));
      pos = end;
    }
    if (tokens.empty()) continue;

    Parsed row{};
    if (!detail::parse_double(tokens[0], row.label)) throw ParseError("malformed label '" + std::string(tokens[0]) + "'", lineno);
    std::size_t prev = 0;
    for (std::size_t t = 1; t < tokens.size(); ++t) {
      const auto tok = tokens[t];
      const auto colon = tok.find(':');
      if (colon == std::string_view::npos) throw ParseError("malformed feature '" + std::string(tok) + "'", lineno);
      const auto key = tok.substr(0, colon);
      if (key == "qid") continue;
      std::size_t idx = 0;
      const auto r = std::from_chars(key.data(), key.data() + key.size(), idx);
      if (r.ec != std::errc() || r.ptr != key.data() + key.size() || idx == 0)
        throw ParseError("malformed feature index '" + std::string(key) + "'", lineno);
      double val = 0.0;
      if (!detail::parse_double(tok.substr(colon + 1), val))
        throw ParseError("malformed feature value '" + std::string(tok) + "'", lineno);
      if (idx <= prev) throw ParseError("feature indices must be strictly ascending", lineno);
      if (opt.force_dim != 0 && idx > opt.force_dim)
        throw ParseError("feature index " + std::to_string(idx) + " exceeds forced dim", lineno);
      prev = idx;
      max_index = std::max(max_index, idx);
      row.entries.push_back({static_cast<std::uint32_t>(idx - 1), val});
    }
    parsed.push_back(std::move(row));
  }

  const std::size_t dim = opt.force_dim != 0 ? opt.force_dim : std::max<std::size_t>(1, max_index);
  const bool is_01 = !parsed.empty() && std::all_of(parsed.begin(), parsed.end(), [](const Parsed& p) {
    return p.label == 0.0 || p.label == 1.0;
  });
  if (opt.remap_01 && is_01)
    for (auto& p : parsed) p.label = p.label == 0.0 ? -1.0 : 1.0;
  const bool binary = !parsed.empty() && std::all_of(parsed.begin(), parsed.end(), [](const Parsed& p) {
    return p.label == 1.0 || p.label == -1.0;
  });

  std::vector<Row> rows;
  rows.reserve(parsed.size());
  for (auto& p : parsed) rows.push_back({SparseVec(dim, std::move(p.entries)), p.label});
  return Dataset(dim, std::move(rows), binary ? Task::Binary : Task::Regression);
}

inline Dataset load_svmlight(const std::string& path, const SvmlightOptions& opt = {}) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_svmlight: cannot open '" + path + "'");
  return read_svmlight(in, opt);
}

/// Shortest round-trip formatting, so reading the output back is exact.
inline void write_svmlight(std::ostream& out, const Dataset& data) {
  for (const auto& r : data.rows()) {
    out << detail::format_double(r.label);
    for (const auto& e : r.features.entries()) out << ' ' << (e.index + 1) << ':' << detail::format_double(e.value);
    out << '\n';
  }
}

inline void save_svmlight(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_svmlight: cannot open '" + path + "' for writing");
  write_svmlight(out, data);
  if (!out) throw std::runtime_error("save_svmlight: write failed for '" + path + "'");
}

}  // namespace asgd
