#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace preflearn::data {

enum class Role { user, assistant };

std::string_view to_string(Role role);
/// Throws SchemaError-free std::nullopt on unknown names; callers attach line info.
std::optional<Role> parse_role(std::string_view name);

struct Turn {
  Role role = Role::user;
  std::string content;

  bool operator==(const Turn&) const = default;
};

using Conversation = std::vector<Turn>;

/// (x, y_c, y_r): a prompt ending with a user turn plus the preferred and
/// dispreferred assistant replies.
struct PreferencePair {
  Conversation prompt;
  std::string chosen;
  std::string rejected;
  std::string source_tag;

  bool operator==(const PreferencePair&) const = default;
};

struct ScoredResponse {
  std::string content;
  std::map<std::string, double> aspects;
  std::optional<double> overall;
};

struct ScoredResponseSet {
  Conversation prompt;
  std::vector<ScoredResponse> responses;
};

struct PoolEntry {
  Conversation prompt;
  std::string origin;  ///< pool_tag of the pool this prompt came from

  bool operator==(const PoolEntry&) const = default;
};

struct PromptPool {
  std::string pool_tag;
  std::vector<PoolEntry> prompts;
};

}  // namespace preflearn::data
