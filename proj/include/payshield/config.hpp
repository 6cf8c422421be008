#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "payshield/error.hpp"
#include "payshield/tabular.hpp"

namespace payshield {

/// Flat INI-style configuration: `[section]` headers followed by
/// `key = value` lines. `#` and `;` start comment lines. Keys are addressed
/// as "section.key"; keys before any header live in the empty section. A
/// `#` or `;` preceded by whitespace starts a trailing comment. Every key
/// must be consumed by the reader, so typos surface as errors.
class Config {
 public:
  static Config parse(std::istream& in, const std::string& source = "<config>") {
    Config cfg;
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      std::string_view s = detail::trim(line);
      if (s.empty() || s.front() == '#' || s.front() == ';') continue;
      auto where = [&] { return source + ":" + std::to_string(line_no) + ": "; };
      if (s.front() == '[') {
        if (s.back() != ']') throw Error(ErrorKind::kConfigError, where() + "unterminated section header");
        section = std::string(detail::trim(s.substr(1, s.size() - 2)));
        continue;
      }
      const auto eq = s.find('=');
      if (eq == std::string_view::npos) throw Error(ErrorKind::kConfigError, where() + "expected key = value");
      std::string key = std::string(detail::trim(s.substr(0, eq)));
      if (key.empty()) throw Error(ErrorKind::kConfigError, where() + "empty key");
      std::string full = section.empty() ? key : section + "." + key;
      if (cfg.values_.count(full)) throw Error(ErrorKind::kConfigError, where() + "duplicate key '" + full + "'");
      cfg.values_[full] = std::string(detail::trim(strip_comment(s.substr(eq + 1))));
    }
    return cfg;
  }

  static Config parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::kConfigError, "cannot open config '" + path + "'");
    return parse(in, path);
  }

  static Config parse_string(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_real(const std::string& key, double fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    double v = 0.0;
    if (!detail::parse_double(it->second, v)) bad(key, "a real number");
    return v;
  }

  long long get_int(const std::string& key, long long fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    long long v = 0;
    const std::string& s = it->second;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) bad(key, "an integer");
    return v;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const std::string& s = it->second;
    if (s == "true" || s == "on" || s == "yes" || s == "1") return true;
    if (s == "false" || s == "off" || s == "no" || s == "0") return false;
    bad(key, "a boolean");
  }

  /// Comma-separated list; empty items are dropped.
  std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<std::string> out;
    for (auto item : detail::split_commas(it->second)) {
      auto t = detail::trim(item);
      if (!t.empty()) out.emplace_back(t);
    }
    return out;
  }

  /// Throws ConfigError naming every key that no getter asked for.
  void reject_unused() const {
    std::string unknown;
    for (const auto& [k, v] : values_) {
      if (!used_.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
    }
    if (!unknown.empty()) throw Error(ErrorKind::kConfigError, "unknown keys: " + unknown);
  }

 private:
  static std::string_view strip_comment(std::string_view v) {
    for (std::size_t k = 1; k < v.size(); ++k) {
      if ((v[k] == '#' || v[k] == ';') && (v[k - 1] == ' ' || v[k - 1] == '\t')) return v.substr(0, k);
    }
    return v;
  }

  [[noreturn]] void bad(const std::string& key, const char* what) const {
    throw Error(ErrorKind::kConfigError, "'" + key + "' must be " + what + ", got '" + values_.at(key) + "'");
  }

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

}  // namespace payshield
