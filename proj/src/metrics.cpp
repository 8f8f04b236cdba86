#include <charconv>
#include <cmath>
#include <sstream>

#include "impact/runtime.hpp"

namespace impact {

namespace {

std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::nan("");
  double x = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw std::runtime_error("malformed number in metrics CSV: " + s);
  return x;
}

template <typename T>
T parse_int(const std::string& s) {
  T x{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw std::runtime_error("malformed integer in metrics CSV: " + s);
  return x;
}

}  // namespace

std::string format_metrics_row(const MetricsRow& r) {
  std::string out;
  out += fmt(r.wall_clock_s) + ',';
  out += std::to_string(r.env_steps) + ',';
  out += std::to_string(r.learner_steps) + ',';
  out += fmt(r.mean_return) + ',';
  out += fmt(r.mean_kl) + ',';
  out += fmt(r.mean_ratio) + ',';
  out += fmt(r.clip_fraction) + ',';
  out += std::to_string(r.buffer_occupancy) + ',';
  out += std::to_string(r.version_lag);
  return out;
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path) : out_(path, std::ios::trunc) {
  if (!out_) throw std::runtime_error("cannot write metrics file: " + path.string());
  out_ << kMetricsHeader << '\n' << std::flush;
}

void MetricsWriter::write(const MetricsRow& row) { out_ << format_metrics_row(row) << '\n' << std::flush; }

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read metrics file: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw std::runtime_error("unexpected metrics header in " + path.string());
  }
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 9) throw std::runtime_error("malformed metrics row in " + path.string());
    MetricsRow r;
    r.wall_clock_s = parse_double(f[0]);
    r.env_steps = parse_int<std::uint64_t>(f[1]);
    r.learner_steps = parse_int<std::uint64_t>(f[2]);
    r.mean_return = parse_double(f[3]);
    r.mean_kl = parse_double(f[4]);
    r.mean_ratio = parse_double(f[5]);
    r.clip_fraction = parse_double(f[6]);
    r.buffer_occupancy = parse_int<int>(f[7]);
    r.version_lag = parse_int<std::int64_t>(f[8]);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace impact
