#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace msnet {

/// Plain-text configuration document.
///
/// Grammar (one entry per line):
///   # comment (also ';'), blank lines ignored
///   [section] or [section.subsection]   -- section header
///   key = value                         -- entry in the current section
///
/// Section and key names are lowercase [a-z0-9_-]. Values are read through
/// the typed getters: numbers, booleans (true/false/on/off/yes/no), strings,
/// and comma-separated tuples. Keys are addressed as "section.key".
///
/// Every key must be declared in the schema (config_schema()); unknown or
/// duplicate keys are rejected at parse time so typos fail loudly.
class Config {
 public:
  static Config parse_file(const std::string& path);
  static Config parse_string(std::string_view text, std::string_view origin = "<config>");

  bool has(std::string_view key) const;

  double number(std::string_view key) const;
  double number(std::string_view key, double fallback) const;
  long long integer(std::string_view key) const;
  long long integer(std::string_view key, long long fallback) const;
  bool flag(std::string_view key) const;
  bool flag(std::string_view key, bool fallback) const;
  std::string str(std::string_view key) const;
  std::string str(std::string_view key, const std::string& fallback) const;
  std::vector<double> numbers(std::string_view key) const;  // comma tuple
  std::vector<std::string> list(std::string_view key) const;

  /// Keys present under a section prefix ("scenario.sphere" matches
  /// "scenario.sphere.0.center", ...).
  std::vector<std::string> keys_with_prefix(std::string_view prefix) const;

  /// Canonical text rendering (sorted keys) used for config hashing.
  std::string canonical() const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::string raw(std::string_view key) const;

  std::map<std::string, std::string> values_;
  std::string origin_;
};

/// Allowed keys; '#' in a pattern segment matches one integer segment.
const std::vector<std::string>& config_schema();

}  // namespace msnet
