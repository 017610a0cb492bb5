#pragma once

// CSV files written by the benchmark driver.  Every file starts with a
// "# config: ..." comment line followed by a header row.
//
//   trace:      epoch,steps,gap,epoch_seconds,max_delay,mean_delay
//   replicates: replicate,n,coord_0,...,coord_{d-1}   (rows of sqrt(n)(x_bar - x*))

#include <charconv>
#include <cmath>
#include <limits>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "asgd/run.hpp"
#include "asgd/stats.hpp"

namespace asgd::csv {

inline std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::vector<std::string> split(std::string_view line, char sep = ',') {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_num(const std::string& s) {
  if (s == "nan" || s.empty()) return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw std::runtime_error("csv: bad number '" + s + "'");
  return v;
}

inline void write_comment(std::ostream& out, const std::string& config) { out << "# config: " << config << '\n'; }

inline void write_trace(std::ostream& out, const std::vector<TraceRecord>& trace, const std::string& config) {
  write_comment(out, config);
  out << "epoch,steps,gap,epoch_seconds,max_delay,mean_delay\n";
  for (const auto& r : trace) {
    out << r.epoch << ',' << r.steps << ',' << num(r.gap) << ',' << num(r.epoch_seconds) << ',';
    if (r.max_delay) out << *r.max_delay;
    out << ',';
    if (r.mean_delay) out << num(*r.mean_delay);
    out << '\n';
  }
}

inline std::vector<TraceRecord> read_trace(std::istream& in) {
  std::vector<TraceRecord> out;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != "epoch,steps,gap,epoch_seconds,max_delay,mean_delay") throw std::runtime_error("csv: not a trace file");
      header = true;
      continue;
    }
    const auto f = split(line);
    if (f.size() != 6) throw std::runtime_error("csv: trace row has " + std::to_string(f.size()) + " fields");
    TraceRecord r;
    r.epoch = std::stoul(f[0]);
    r.steps = std::stoull(f[1]);
    r.gap = parse_num(f[2]);
    r.epoch_seconds = parse_num(f[3]);
    if (!f[4].empty()) r.max_delay = std::stoull(f[4]);
    if (!f[5].empty()) r.mean_delay = parse_num(f[5]);
    out.push_back(r);
  }
  return out;
}

inline void write_replicates(std::ostream& out, const ReplicateBatch& b, const std::string& config) {
  write_comment(out, config);
  out << "replicate,n";
  for (Eigen::Index j = 0; j < b.errors.cols(); ++j) out << ",coord_" << j;
  out << '\n';
  for (Eigen::Index r = 0; r < b.errors.rows(); ++r) {
    out << r << ',' << b.n;
    for (Eigen::Index j = 0; j < b.errors.cols(); ++j) out << ',' << num(b.errors(r, j));
    out << '\n';
  }
}

/// Reads the replicate schema back; gaps are left empty.
inline ReplicateBatch read_replicates(std::istream& in) {
  ReplicateBatch b;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t d = 0;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto f = split(line);
    if (!header) {
      if (f.size() < 3 || f[0] != "replicate" || f[1] != "n") throw std::runtime_error("csv: not a replicate file");
      d = f.size() - 2;
      header = true;
      continue;
    }
    if (f.size() != d + 2) throw std::runtime_error("csv: replicate row has wrong width");
    b.n = std::stoull(f[1]);
    std::vector<double> row(d);
    for (std::size_t j = 0; j < d; ++j) row[j] = parse_num(f[j + 2]);
    rows.push_back(std::move(row));
  }
  b.errors.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t j = 0; j < d; ++j) b.errors(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = rows[r][j];
  return b;
}

template <class Writer>
void write_file(const std::string& path, Writer&& w) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  w(out);
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace asgd::csv
