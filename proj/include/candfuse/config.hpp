#pragma once

// Flat key=value configuration with file parsing and override merging.
// Precedence is built by the caller: defaults, then file, then flags.

#include <map>
#include <optional>
#include <string>

namespace candfuse {

class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  // Lines of `key = value`; '#' starts a comment; blank lines ignored.
  static KeyValueConfig from_file(const std::string& path);
  static KeyValueConfig from_string(const std::string& text);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  std::optional<std::string> raw(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  long get_int(const std::string& key, long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Entries of `other` win over existing keys.
  void merge_from(const KeyValueConfig& other);

  const std::map<std::string, std::string>& entries() const { return entries_; }
  std::string serialize() const;

 private:
  std::map<std::string, std::string> entries_;
};

}  // namespace candfuse
