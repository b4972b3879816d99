#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "mocapfuse/core_math.hpp"

namespace mocapfuse {

/// Flat `key = value` text configuration. Blank lines and `#` comments are ignored.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(std::istream& in, const std::string& source = "<config>");
  static KeyValueConfig parse_text(const std::string& text, const std::string& source = "<config>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  void set(const std::string& key, const std::string& value);

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  Vec3 get_vec3(const std::string& key, const Vec3& fallback) const;
  /// Comma-separated list with surrounding whitespace trimmed.
  std::vector<std::string> get_list(const std::string& key) const;

  /// "source:line" of a key, for error messages.
  std::string where(const std::string& key) const;

  std::vector<std::string> keys() const;
  std::string to_text() const;

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };
  std::string source_ = "<config>";
  std::map<std::string, Entry> entries_;
};

std::string format_double(double v);
std::string format_vec3(const Vec3& v);

}  // namespace mocapfuse
