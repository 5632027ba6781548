#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace preflearn::cli {

struct KeySpec {
  std::string name;
  std::string default_value;
  std::string help;
};

/// Flat key=value configuration validated against a fixed schema. Every
/// schema key always has a value, so a serialized config is fully resolved.
class Config {
 public:
  Config() = default;
  explicit Config(std::vector<KeySpec> schema);

  const std::vector<KeySpec>& schema() const noexcept { return schema_; }

  /// Throws ConfigError naming the key when it is not in the schema.
  void set(std::string_view key, std::string value);
  const std::string& get(std::string_view key) const;
  bool has_key(std::string_view key) const noexcept;

  /// Typed accessors; ConfigError naming the key on malformed values.
  std::string str(std::string_view key) const { return get(key); }
  double real(std::string_view key) const;
  long long integer(std::string_view key) const;
  int int32(std::string_view key) const;
  std::uint64_t u64(std::string_view key) const;
  bool flag(std::string_view key) const;
  /// Comma-separated reals.
  std::vector<double> reals(std::string_view key) const;

  /// `key=value` lines; blank lines and lines starting with '#' are ignored.
  void merge_text(std::string_view text, std::string_view origin = "<text>");
  void merge_file(const std::filesystem::path& path);
  /// "key=value" as given to --set.
  void merge_assignment(std::string_view assignment);

  /// Every key in schema order, one `key=value` per line.
  std::string serialize() const;
  void write(const std::filesystem::path& path) const;

  bool operator==(const Config& other) const { return values_ == other.values_; }

 private:
  std::size_t index(std::string_view key) const;

  std::vector<KeySpec> schema_;
  std::vector<std::string> values_;
};

/// Subcommands with a config schema, e.g. "train-ppo" or "data remix".
const std::vector<std::string>& command_names();

/// Schema for a command, defaults included. PREFLEARN_SEED, when set,
/// replaces the built-in seed default. Throws ConfigError for unknown
/// commands.
Config default_config(std::string_view command);

}  // namespace preflearn::cli
