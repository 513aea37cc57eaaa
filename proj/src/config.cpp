#include "edd/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string_view>

namespace edd {
namespace {

[[noreturn]] void fail(const std::string& msg) { throw ConfigError("config: " + msg); }

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::string key_name(const std::string& section, const std::string& key) {
  return section + "." + key;
}

template <typename T>
T parse_number(const std::string& section, const std::string& key,
               const std::string& value, const char* what) {
  T v{};
  const char* last = value.data() + value.size();
  auto [p, ec] = std::from_chars(value.data(), last, v);
  if (ec != std::errc{} || p != last)
    fail(key_name(section, key) + ": cannot parse '" + value + "' as " + what);
  return v;
}

std::vector<std::string> split_list(const std::string& section,
                                    const std::string& key,
                                    const std::string& value) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= value.size(); ++i) {
    if (i == value.size() || value[i] == ',') {
      const std::string_view item = trim(std::string_view(value).substr(start, i - start));
      if (item.empty())
        fail(key_name(section, key) + ": expected a comma-separated list, got '" +
             value + "'");
      out.emplace_back(item);
      start = i + 1;
    }
  }
  return out;
}

}  // namespace

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_text(text.str(), path);
}

Config Config::parse_text(const std::string& text, const std::string& origin) {
  Config cfg;
  std::string section;
  bool in_section = false;
  std::size_t lineno = 0;
  std::istringstream in(text);
  std::string raw;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line(raw);
    if (const std::size_t hash_pos = line.find('#'); hash_pos != std::string_view::npos)
      line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;

    const auto at = [&] { return origin + ":" + std::to_string(lineno) + ": "; };
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3)
        fail(at() + "malformed section header '" + std::string(line) + "'");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section.empty()) fail(at() + "empty section name");
      in_section = true;
      cfg.sections_[section];  // a section may be declared and left empty
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos)
      fail(at() + "expected 'key = value', got '" + std::string(line) + "'");
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) fail(at() + "empty key name");
    if (!in_section) fail(at() + "key '" + key + "' outside any [section]");
    cfg.sections_[section][key] = std::string(trim(line.substr(eq + 1)));
  }
  return cfg;
}

bool Config::has(const std::string& section, const std::string& key) const {
  return find(section, key) != nullptr;
}

void Config::set(const std::string& section, const std::string& key,
                 const std::string& value) {
  sections_[section][key] = value;
}

const std::string* Config::find(const std::string& section,
                                const std::string& key) const {
  const auto s = sections_.find(section);
  if (s == sections_.end()) return nullptr;
  const auto k = s->second.find(key);
  return k == s->second.end() ? nullptr : &k->second;
}

const std::string& Config::require(const std::string& section,
                                   const std::string& key) const {
  const std::string* v = find(section, key);
  if (!v) fail("missing key " + key_name(section, key));
  return *v;
}

std::string Config::get_string(const std::string& section,
                               const std::string& key) const {
  return require(section, key);
}

std::string Config::get_string(const std::string& section, const std::string& key,
                               const std::string& fallback) const {
  const std::string* v = find(section, key);
  return v ? *v : fallback;
}

std::int64_t Config::get_int(const std::string& section,
                             const std::string& key) const {
  return parse_number<std::int64_t>(section, key, require(section, key),
                                    "an integer");
}

std::int64_t Config::get_int(const std::string& section, const std::string& key,
                             std::int64_t fallback) const {
  return has(section, key) ? get_int(section, key) : fallback;
}

std::uint64_t Config::get_uint(const std::string& section,
                               const std::string& key) const {
  return parse_number<std::uint64_t>(section, key, require(section, key),
                                     "a non-negative integer");
}

std::uint64_t Config::get_uint(const std::string& section, const std::string& key,
                               std::uint64_t fallback) const {
  return has(section, key) ? get_uint(section, key) : fallback;
}

double Config::get_double(const std::string& section,
                          const std::string& key) const {
  return parse_number<double>(section, key, require(section, key), "a number");
}

double Config::get_double(const std::string& section, const std::string& key,
                          double fallback) const {
  return has(section, key) ? get_double(section, key) : fallback;
}

bool Config::get_bool(const std::string& section, const std::string& key) const {
  const std::string& v = require(section, key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail(key_name(section, key) + ": cannot parse '" + v +
       "' as a boolean (use true/false/1/0)");
}

bool Config::get_bool(const std::string& section, const std::string& key,
                      bool fallback) const {
  return has(section, key) ? get_bool(section, key) : fallback;
}

std::vector<double> Config::get_double_list(const std::string& section,
                                            const std::string& key) const {
  std::vector<double> out;
  for (const std::string& item : split_list(section, key, require(section, key)))
    out.push_back(parse_number<double>(section, key, item, "a number"));
  return out;
}

std::vector<std::uint64_t> Config::get_uint_list(const std::string& section,
                                                 const std::string& key) const {
  std::vector<std::uint64_t> out;
  for (const std::string& item : split_list(section, key, require(section, key)))
    out.push_back(parse_number<std::uint64_t>(section, key, item,
                                              "a non-negative integer"));
  return out;
}

std::string Config::canonical_text() const {
  std::string out;
  for (const auto& [section, keys] : sections_) {
    out += "[" + section + "]\n";
    for (const auto& [key, value] : keys) out += key + " = " + value + "\n";
  }
  return out;
}

std::string Config::hash() const {
  std::uint64_t h = 14695981039346656037ULL;  // FNV-1a offset basis
  for (const unsigned char c : canonical_text()) {
    h ^= c;
    h *= 1099511628211ULL;  // FNV prime
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 16);
}

}  // namespace edd
