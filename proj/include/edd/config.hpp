#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace edd {

// Raised on parse failures, missing keys, and values of the wrong type.
// Messages name the offending section.key (or origin:line while parsing).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Plain-text configuration: [section] headers, key = value lines, comments
// from '#' to end of line. Later assignments win, and set() lets the CLI
// override file values before anything reads them. canonical_text() renders
// sections and keys sorted with uniform spacing; its 64-bit FNV-1a hash
// stamps every run artifact, so identical effective configs hash identically
// regardless of key order or comments.
class Config {
 public:
  static Config parse_file(const std::string& path);
  static Config parse_text(const std::string& text,
                           const std::string& origin = "<text>");

  bool has(const std::string& section, const std::string& key) const;
  void set(const std::string& section, const std::string& key,
           const std::string& value);

  // Getters without a fallback throw ConfigError when the key is absent; all
  // of them throw when the stored value does not parse as the requested type.
  std::string get_string(const std::string& section, const std::string& key) const;
  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  std::int64_t get_int(const std::string& section, const std::string& key) const;
  std::int64_t get_int(const std::string& section, const std::string& key,
                       std::int64_t fallback) const;
  std::uint64_t get_uint(const std::string& section, const std::string& key) const;
  std::uint64_t get_uint(const std::string& section, const std::string& key,
                         std::uint64_t fallback) const;
  double get_double(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key,
                    double fallback) const;
  bool get_bool(const std::string& section, const std::string& key) const;
  bool get_bool(const std::string& section, const std::string& key,
                bool fallback) const;

  // Comma-separated lists; at least one element is required.
  std::vector<double> get_double_list(const std::string& section,
                                      const std::string& key) const;
  std::vector<std::uint64_t> get_uint_list(const std::string& section,
                                           const std::string& key) const;

  std::string canonical_text() const;
  std::string hash() const;  // 16 lowercase hex chars

 private:
  const std::string* find(const std::string& section, const std::string& key) const;
  const std::string& require(const std::string& section,
                             const std::string& key) const;

  std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace edd
