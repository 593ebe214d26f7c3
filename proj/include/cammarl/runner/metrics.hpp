#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cammarl/trainer.hpp"

namespace cammarl::runner {

inline constexpr std::string_view kReturnsHeader = "run_id,seed,episode,agent,return,smoothed_return";
inline constexpr std::string_view kConformalHeader =
    "run_id,seed,update,model_agent,mean_set_size,coverage,cls_accuracy,cls_loss,lambda,k_reg,tau";

/// Shortest text that parses back to the same double ("nan", "inf" included).
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("not a number: '" + std::string(s) + "'");
  }
  return v;
}

template <typename Int>
Int parse_int(std::string_view s) {
  Int v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("not an integer: '" + std::string(s) + "'");
  }
  return v;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

struct ReturnRow {
  std::string run_id;
  std::uint64_t seed = 0;
  std::size_t episode = 0;
  std::size_t agent = 0;
  double ret = 0.0;
  double smoothed = 0.0;

  friend bool operator==(const ReturnRow&, const ReturnRow&) = default;
};

struct ConformalRow {
  std::string run_id;
  std::uint64_t seed = 0;
  ConformalMetrics m;
};

inline std::string to_csv(const ReturnRow& r) {
  return r.run_id + ',' + std::to_string(r.seed) + ',' + std::to_string(r.episode) + ',' + std::to_string(r.agent) +
         ',' + format_double(r.ret) + ',' + format_double(r.smoothed);
}

inline ReturnRow parse_return_row(std::string_view line) {
  const auto f = split_csv(line);
  if (f.size() != 6) throw std::invalid_argument("returns row needs 6 fields: '" + std::string(line) + "'");
  return {std::string(f[0]), parse_int<std::uint64_t>(f[1]), parse_int<std::size_t>(f[2]),
          parse_int<std::size_t>(f[3]), parse_double(f[4]), parse_double(f[5])};
}

inline std::string to_csv(const ConformalRow& r) {
  const ConformalMetrics& m = r.m;
  return r.run_id + ',' + std::to_string(r.seed) + ',' + std::to_string(m.update) + ',' +
         std::to_string(m.model_agent) + ',' + format_double(m.mean_set_size) + ',' + format_double(m.coverage) +
         ',' + format_double(m.cls_accuracy) + ',' + format_double(m.cls_loss) + ',' + format_double(m.lambda) +
         ',' + std::to_string(m.k_reg) + ',' + format_double(m.tau);
}

inline ConformalRow parse_conformal_row(std::string_view line) {
  const auto f = split_csv(line);
  if (f.size() != 11) throw std::invalid_argument("conformal row needs 11 fields: '" + std::string(line) + "'");
  ConformalRow r;
  r.run_id = std::string(f[0]);
  r.seed = parse_int<std::uint64_t>(f[1]);
  r.m.update = parse_int<std::size_t>(f[2]);
  r.m.model_agent = parse_int<std::size_t>(f[3]);
  r.m.mean_set_size = parse_double(f[4]);
  r.m.coverage = parse_double(f[5]);
  r.m.cls_accuracy = parse_double(f[6]);
  r.m.cls_loss = parse_double(f[7]);
  r.m.lambda = parse_double(f[8]);
  r.m.k_reg = parse_int<int>(f[9]);
  r.m.tau = parse_double(f[10]);
  return r;
}

template <typename Row, typename Parse>
std::vector<Row> read_csv(std::istream& in, std::string_view header, Parse parse) {
  std::string line;
  if (!std::getline(in, line) || line != header) {
    throw std::invalid_argument("unexpected CSV header '" + line + "', expected '" + std::string(header) + "'");
  }
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(parse(line));
  }
  return rows;
}

inline std::vector<ReturnRow> read_returns_csv(std::istream& in) {
  return read_csv<ReturnRow>(in, kReturnsHeader, parse_return_row);
}

inline std::vector<ConformalRow> read_conformal_csv(std::istream& in) {
  return read_csv<ConformalRow>(in, kConformalHeader, parse_conformal_row);
}

/// Trailing moving average; the first window-1 entries average what exists.
inline std::vector<double> smooth(std::span<const double> series, std::size_t window = 100) {
  if (series.empty()) throw std::invalid_argument("smooth: empty series");
  if (window == 0) throw std::invalid_argument("smooth: window must be >= 1");
  std::vector<double> out(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    // Summed directly rather than as a running total so the result is exact
    // for constant input and linear in the series.
    const std::size_t begin = i + 1 >= window ? i + 1 - window : 0;
    double sum = 0.0;
    for (std::size_t k = begin; k <= i; ++k) sum += series[k];
    out[i] = sum / static_cast<double>(i + 1 - begin);
  }
  return out;
}

struct SeedAggregate {
  std::vector<double> mean;
  std::vector<double> std;  // sample std (n - 1); zero for a single seed
  bool single_seed = false;
};

inline SeedAggregate aggregate_seeds(std::span<const std::vector<double>> runs) {
  if (runs.empty()) throw std::invalid_argument("aggregate_seeds: no runs");
  const std::size_t len = runs.front().size();
  for (const auto& r : runs) {
    if (r.size() != len) throw std::invalid_argument("aggregate_seeds: series lengths differ");
  }
  SeedAggregate out;
  out.single_seed = runs.size() == 1;
  out.mean.assign(len, 0.0);
  out.std.assign(len, 0.0);
  const double n = static_cast<double>(runs.size());
  for (std::size_t i = 0; i < len; ++i) {
    double sum = 0.0;
    for (const auto& r : runs) sum += r[i];
    const double mean = sum / n;
    out.mean[i] = mean;
    if (runs.size() > 1) {
      double ss = 0.0;
      for (const auto& r : runs) ss += (r[i] - mean) * (r[i] - mean);
      out.std[i] = std::sqrt(ss / (n - 1.0));
    }
  }
  return out;
}

/// Ranks starting at 1; ties get their average rank.
inline std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

/// Spearman rank correlation; NaN when either side is constant.
inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("spearman: length mismatch");
  if (x.size() < 2) throw std::invalid_argument("spearman: need at least 2 points");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

/// Mean of the last ceil(fraction * n) entries of the smoothed series.
inline double final_window_mean(std::span<const double> series, double fraction = 0.1, std::size_t window = 100) {
  const auto s = smooth(series, window);
  const auto n = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(s.size())));
  const std::size_t take = std::clamp<std::size_t>(n, 1, s.size());
  return std::accumulate(s.end() - static_cast<std::ptrdiff_t>(take), s.end(), 0.0) / static_cast<double>(take);
}

}  // namespace cammarl::runner
