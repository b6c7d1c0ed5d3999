#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace av::cfg {

enum class ValueType { integer, real, boolean, text, int_list };

struct SchemaEntry {
  const char* key;  // "section.name"
  ValueType type;
  const char* default_value;
};

// The full key schema: every tunable of every module, with toy defaults.
const std::vector<SchemaEntry>& schema();

// Validated configuration. Keys are dotted "section.name" strings; every key
// must appear in the schema and every value must parse as the declared type.
class RunConfig {
 public:
  // preset: "toy", "paper-geometry" or "large-scale".
  static RunConfig defaults(const std::string& preset = "toy");

  // Reads a sectioned key=value file, or JSON when the extension is .json.
  static RunConfig from_file(const std::filesystem::path& path);

  void set(const std::string& dotted_key, const std::string& value);
  bool has(const std::string& dotted_key) const;

  int64_t get_int(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::string get_text(const std::string& key) const;
  std::vector<int64_t> get_int_list(const std::string& key) const;

  // Canonical serialization: schema order, one [section] per group.
  std::string serialize() const;
  void write_resolved(const std::filesystem::path& path) const;

 private:
  std::map<std::string, std::string> values_;
};

// Plain key=value line parsing, shared with clip metadata files.
// Supports blank lines, '#' comments and optional [section] headers, which
// prefix keys as "section.".
std::vector<std::pair<std::string, std::string>> parse_kv_text(const std::string& text);

}  // namespace av::cfg
