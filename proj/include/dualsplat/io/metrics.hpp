// Copyright 2026 The dualsplat Authors
// SPDX-License-Identifier: Apache-2.0

// Metrics log: `#` header lines (schema plus config echo), then one
// whitespace-separated `key=value` record per logged iteration.

#ifndef DUALSPLAT_IO_METRICS_HPP_
#define DUALSPLAT_IO_METRICS_HPP_

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dualsplat/trainer.hpp"

namespace dualsplat::io {

inline constexpr const char* kMetricsSchema = "iter stage l1 ssim obj total psnr count";

inline std::string format_metrics_record(const MetricsRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "iter=%ld stage=%d l1=%.8g ssim=%.8g obj=%.8g total=%.8g psnr=%.6g count=%zu",
                r.iteration, r.stage, r.l1, r.ssim, r.obj, r.total, r.psnr, r.count);
  return buf;
}

/// `config_echo` is emitted as `# config key = value` lines.
inline std::string format_metrics_log(const std::vector<MetricsRecord>& log, const std::string& config_echo) {
  std::ostringstream out;
  out << "# dualsplat metrics\n# fields " << kMetricsSchema << "\n";
  std::istringstream cfg(config_echo);
  std::string line;
  while (std::getline(cfg, line)) {
    if (!line.empty()) out << "# config " << line << "\n";
  }
  for (const auto& r : log) out << format_metrics_record(r) << "\n";
  return out.str();
}

inline void write_metrics_log(const std::string& path, const std::vector<MetricsRecord>& log,
                              const std::string& config_echo) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << format_metrics_log(log, config_echo);
  if (!f) throw std::runtime_error("failed writing " + path);
}

/// Parsed log: records plus the echoed config lines (without prefix).
struct MetricsLog {
  std::vector<MetricsRecord> records;
  std::vector<std::string> config;
};

inline MetricsLog parse_metrics_log(const std::string& text) {
  MetricsLog log;
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("# config ", 0) == 0) log.config.push_back(line.substr(9));
      continue;
    }
    MetricsRecord r;
    std::istringstream ls(line);
    std::string field;
    int seen = 0;
    while (ls >> field) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) throw std::runtime_error("metrics line " + std::to_string(n) + ": bad field");
      const std::string k = field.substr(0, eq);
      const std::string v = field.substr(eq + 1);
      if (k == "iter") r.iteration = std::stol(v);
      else if (k == "stage") r.stage = std::stoi(v);
      else if (k == "l1") r.l1 = std::stod(v);
      else if (k == "ssim") r.ssim = std::stod(v);
      else if (k == "obj") r.obj = std::stod(v);
      else if (k == "total") r.total = std::stod(v);
      else if (k == "psnr") r.psnr = std::stod(v);
      else if (k == "count") r.count = std::stoul(v);
      else throw std::runtime_error("metrics line " + std::to_string(n) + ": unknown field " + k);
      ++seen;
    }
    if (seen != 8) throw std::runtime_error("metrics line " + std::to_string(n) + ": expected 8 fields");
    log.records.push_back(r);
  }
  return log;
}

}  // namespace dualsplat::io

#endif  // DUALSPLAT_IO_METRICS_HPP_
