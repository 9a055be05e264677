#pragma once

// Deterministic output files: 6-significant-digit numbers, CSV tables,
// "key: value" reports and run manifests keyed by an FNV-1a config hash.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sncbf/error.hpp"
#include "sncbf/train.hpp"

#ifndef SNCBF_VERSION
#define SNCBF_VERSION "0.1.0"
#endif

namespace sncbf {

inline std::string fmt6(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v == 0.0 ? 0.0 : v);
  return buf;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  out << text;
  if (!out) throw Error("write failed for '" + p.string() + "'");
}

inline std::string csv_row(const std::vector<std::string>& cells) {
  std::string s;
  for (std::size_t i = 0; i < cells.size(); ++i) s += (i ? "," : "") + cells[i];
  return s + "\n";
}

inline std::string history_csv(const History& h) {
  std::string s = csv_row(h.columns);
  for (const auto& row : h.rows) {
    std::vector<std::string> cells;
    for (double v : row) cells.push_back(fmt6(v));
    s += csv_row(cells);
  }
  return s;
}

// Ordered "key: value" lines.
class Report {
 public:
  Report& add(const std::string& key, const std::string& value) {
    lines_.emplace_back(key, value);
    return *this;
  }
  Report& add(const std::string& key, double value) { return add(key, fmt6(value)); }
  Report& add(const std::string& key, long value) { return add(key, std::to_string(value)); }
  Report& add(const std::string& key, int value) { return add(key, std::to_string(value)); }
  Report& add(const std::string& key, bool value) { return add(key, std::string(value ? "true" : "false")); }
  Report& add(const std::string& key, const char* value) { return add(key, std::string(value)); }
  Report& add(const std::string& key, const Eigen::VectorXd& v) {
    std::string s = "[";
    for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt6(v(i));
    return add(key, s + "]");
  }

  std::string str() const {
    std::string s;
    for (const auto& [k, v] : lines_) s += k + ": " + v + "\n";
    return s;
  }

 private:
  std::vector<std::pair<std::string, std::string>> lines_;
};

inline nlohmann::json make_manifest(const std::string& command, const nlohmann::json& resolved_config,
                                    std::uint64_t seed, const std::vector<std::string>& inputs = {}) {
  const std::string canon = resolved_config.dump();
  nlohmann::json m;
  m["manifest_version"] = 1;
  m["command"] = command;
  m["config_hash"] = "fnv1a64:" + hex64(fnv1a64(canon));
  m["seed"] = seed;
  m["library_version"] = SNCBF_VERSION;
  m["model_format_version"] = 1;
  m["inputs"] = nlohmann::json::object();
  for (const auto& path : inputs) {
    std::ifstream in(path, std::ios::binary);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    m["inputs"][path] = "fnv1a64:" + hex64(fnv1a64(text));
  }
  m["config"] = resolved_config;
  return m;
}

}  // namespace sncbf
