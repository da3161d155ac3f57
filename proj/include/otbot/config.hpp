#pragma once

// Flat INI-style key/value files: `key = value` lines, optional `[section]`
// headers, `#` or `;` comments. Keys inside a section are addressed as
// "section.key".

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace otbot {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace detail

class Config {
 public:
  Config() = default;

  static Config parse(std::string_view text, const std::string& origin = "<string>") {
    Config cfg;
    cfg.origin_ = origin;
    std::string section;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      auto nl = text.find('\n', pos);
      if (nl == std::string_view::npos) nl = text.size();
      auto line = text.substr(pos, nl - pos);
      pos = nl + 1;
      ++line_no;

      if (auto c = line.find_first_of("#;"); c != std::string_view::npos) line = line.substr(0, c);
      line = detail::trim(line);
      if (line.empty()) {
        if (nl == text.size()) break;
        continue;
      }
      if (line.front() == '[') {
        if (line.back() != ']' || line.size() < 3)
          throw ConfigError(origin + ":" + std::to_string(line_no) + ": malformed section header");
        section = std::string(detail::trim(line.substr(1, line.size() - 2)));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string_view::npos)
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
      auto key = std::string(detail::trim(line.substr(0, eq)));
      if (key.empty())
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
      if (!section.empty()) key = section + "." + key;
      if (cfg.entries_.count(key))
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
      cfg.entries_[key] = Entry{std::string(detail::trim(line.substr(eq + 1))), line_no};
      cfg.order_.push_back(key);
      if (nl == text.size()) break;
    }
    return cfg;
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  const std::string& get_string(const std::string& key) const { return entry(key).value; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    return has(key) ? entry(key).value : fallback;
  }

  double get_double(const std::string& key) const {
    const auto& e = entry(key);
    double v = 0.0;
    if (!detail::parse_double(e.value, v))
      throw ConfigError(where(e) + ": key '" + key + "' is not a number: '" + e.value + "'");
    return v;
  }

  double get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
  }

  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const auto& e = entry(key);
    std::uint64_t v = 0;
    auto s = detail::trim(e.value);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
      throw ConfigError(where(e) + ": key '" + key + "' is not an unsigned integer");
    return v;
  }

  /// Comma-separated list of numbers.
  std::vector<double> get_list(const std::string& key) const {
    const auto& e = entry(key);
    std::vector<double> out;
    std::string_view rest = e.value;
    while (true) {
      const auto comma = rest.find(',');
      double v = 0.0;
      if (!detail::parse_double(rest.substr(0, comma), v))
        throw ConfigError(where(e) + ": key '" + key + "' is not a number list");
      out.push_back(v);
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    return out;
  }

  void set(const std::string& key, std::string value) {
    if (!has(key)) order_.push_back(key);
    entries_[key] = Entry{std::move(value), 0};
  }

  const std::vector<std::string>& keys() const { return order_; }
  const std::string& origin() const { return origin_; }

 private:
  struct Entry {
    std::string value;
    std::size_t line = 0;
  };

  const Entry& entry(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError(origin_ + ": missing key '" + key + "'");
    return it->second;
  }

  std::string where(const Entry& e) const { return origin_ + ":" + std::to_string(e.line); }

  std::string origin_ = "<empty>";
  std::map<std::string, Entry> entries_;
  std::vector<std::string> order_;
};

/// Shortest decimal string that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

}  // namespace otbot
