#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "preflearn/data/types.hpp"

namespace preflearn::data {

// JSON-lines interchange formats (UTF-8, one object per line, blank lines
// ignored):
//   preference:  {"prompt": [{"role", "content"}...], "chosen", "rejected", "source"?}
//   scored:      {"prompt": [...], "responses": [{"content", "aspects": {name: number}, "overall"?}]}
//   prompt pool: {"prompt": [...]}
// Parse failures raise ParseError and schema violations SchemaError, both
// carrying the 1-based line number.

std::vector<PreferencePair> load_preferences(const std::filesystem::path& path);
void save_preferences(const std::filesystem::path& path, const std::vector<PreferencePair>& pairs);

std::vector<ScoredResponseSet> load_scored(const std::filesystem::path& path);
void save_scored(const std::filesystem::path& path, const std::vector<ScoredResponseSet>& sets);

/// `pool_tag` defaults to the file stem.
PromptPool load_prompt_pool(const std::filesystem::path& path, std::string pool_tag = {});
void save_prompt_pool(const std::filesystem::path& path, const PromptPool& pool);

/// In-memory variants used by the loaders; `line` is reported in errors.
PreferencePair parse_preference_line(const std::string& text, std::size_t line);
ScoredResponseSet parse_scored_line(const std::string& text, std::size_t line);

}  // namespace preflearn::data
