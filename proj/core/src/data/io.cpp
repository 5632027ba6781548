#include "preflearn/data/io.hpp"

#include <fstream>
#include <nlohmann/json.hpp>

#include "preflearn/common/errors.hpp"

namespace preflearn::data {

using nlohmann::json;

std::string_view to_string(Role role) { return role == Role::user ? "user" : "assistant"; }

std::optional<Role> parse_role(std::string_view name) {
  if (name == "user") return Role::user;
  if (name == "assistant") return Role::assistant;
  return std::nullopt;
}

namespace {

json parse_json(const std::string& text, std::size_t line) {
  try {
    json j = json::parse(text);
    if (!j.is_object()) throw ParseError(line, "expected a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw ParseError(line, e.what());
  }
}

const json& require(const json& j, const char* key, std::size_t line) {
  const auto it = j.find(key);
  if (it == j.end()) throw SchemaError(line, std::string("missing field '") + key + "'");
  return *it;
}

std::string require_string(const json& j, const char* key, std::size_t line) {
  const auto& v = require(j, key, line);
  if (!v.is_string()) throw SchemaError(line, std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

Conversation parse_conversation(const json& j, std::size_t line) {
  if (!j.is_array()) throw SchemaError(line, "field 'prompt' must be an array of turns");
  Conversation turns;
  for (const auto& t : j) {
    if (!t.is_object()) throw SchemaError(line, "turn must be an object");
    const auto role_name = require_string(t, "role", line);
    const auto role = parse_role(role_name);
    if (!role) throw SchemaError(line, "unknown role '" + role_name + "'");
    turns.push_back({*role, require_string(t, "content", line)});
  }
  if (!turns.empty() && turns.back().role != Role::user) throw SchemaError(line, "prompt must end with a user turn");
  return turns;
}

json conversation_json(const Conversation& turns) {
  json arr = json::array();
  for (const auto& t : turns) arr.push_back({{"role", std::string(to_string(t.role))}, {"content", t.content}});
  return arr;
}

std::string dump(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.find_first_not_of(" \t") == std::string::npos) continue;
    fn(text, line);
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

}  // namespace

PreferencePair parse_preference_line(const std::string& text, std::size_t line) {
  const json j = parse_json(text, line);
  PreferencePair p;
  p.prompt = parse_conversation(require(j, "prompt", line), line);
  p.chosen = require_string(j, "chosen", line);
  p.rejected = require_string(j, "rejected", line);
  if (const auto it = j.find("source"); it != j.end()) {
    if (!it->is_string()) throw SchemaError(line, "field 'source' must be a string");
    p.source_tag = it->get<std::string>();
  }
  if (p.chosen == p.rejected) throw SchemaError(line, "chosen and rejected are identical");
  return p;
}

std::vector<PreferencePair> load_preferences(const std::filesystem::path& path) {
  std::vector<PreferencePair> out;
  for_each_line(path, [&](const std::string& text, std::size_t line) { out.push_back(parse_preference_line(text, line)); });
  return out;
}

void save_preferences(const std::filesystem::path& path, const std::vector<PreferencePair>& pairs) {
  auto out = open_out(path);
  for (const auto& p : pairs) {
    json j{{"prompt", conversation_json(p.prompt)}, {"chosen", p.chosen}, {"rejected", p.rejected}};
    if (!p.source_tag.empty()) j["source"] = p.source_tag;
    out << dump(j) << '\n';
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

ScoredResponseSet parse_scored_line(const std::string& text, std::size_t line) {
  const json j = parse_json(text, line);
  ScoredResponseSet set;
  set.prompt = parse_conversation(require(j, "prompt", line), line);
  const auto& responses = require(j, "responses", line);
  if (!responses.is_array()) throw SchemaError(line, "field 'responses' must be an array");
  for (const auto& r : responses) {
    if (!r.is_object()) throw SchemaError(line, "response must be an object");
    ScoredResponse sr;
    sr.content = require_string(r, "content", line);
    if (const auto it = r.find("aspects"); it != r.end()) {
      if (!it->is_object()) throw SchemaError(line, "field 'aspects' must be an object");
      for (const auto& [name, value] : it->items()) {
        if (!value.is_number()) throw SchemaError(line, "aspect '" + name + "' must be a number");
        sr.aspects[name] = value.get<double>();
      }
    }
    if (const auto it = r.find("overall"); it != r.end() && !it->is_null()) {
      if (!it->is_number()) throw SchemaError(line, "field 'overall' must be a number");
      sr.overall = it->get<double>();
    }
    if (sr.aspects.empty() && !sr.overall) throw SchemaError(line, "response has neither aspects nor overall score");
    set.responses.push_back(std::move(sr));
  }
  if (set.responses.size() < 2) throw SchemaError(line, "need at least 2 responses");
  return set;
}

std::vector<ScoredResponseSet> load_scored(const std::filesystem::path& path) {
  std::vector<ScoredResponseSet> out;
  for_each_line(path, [&](const std::string& text, std::size_t line) { out.push_back(parse_scored_line(text, line)); });
  return out;
}

void save_scored(const std::filesystem::path& path, const std::vector<ScoredResponseSet>& sets) {
  auto out = open_out(path);
  for (const auto& s : sets) {
    json responses = json::array();
    for (const auto& r : s.responses) {
      json jr{{"content", r.content}, {"aspects", json::object()}};
      for (const auto& [k, v] : r.aspects) jr["aspects"][k] = v;
      if (r.overall) jr["overall"] = *r.overall;
      responses.push_back(std::move(jr));
    }
    out << dump(json{{"prompt", conversation_json(s.prompt)}, {"responses", responses}}) << '\n';
  }
}

PromptPool load_prompt_pool(const std::filesystem::path& path, std::string pool_tag) {
  PromptPool pool;
  pool.pool_tag = pool_tag.empty() ? path.stem().string() : std::move(pool_tag);
  for_each_line(path, [&](const std::string& text, std::size_t line) {
    const json j = parse_json(text, line);
    auto prompt = parse_conversation(require(j, "prompt", line), line);
    if (prompt.empty()) throw SchemaError(line, "empty prompt");
    std::string origin = pool.pool_tag;
    if (const auto it = j.find("origin"); it != j.end() && it->is_string()) origin = it->get<std::string>();
    pool.prompts.push_back({std::move(prompt), std::move(origin)});
  });
  return pool;
}

void save_prompt_pool(const std::filesystem::path& path, const PromptPool& pool) {
  auto out = open_out(path);
  for (const auto& e : pool.prompts) {
    json j{{"prompt", conversation_json(e.prompt)}};
    if (!e.origin.empty() && e.origin != pool.pool_tag) j["origin"] = e.origin;
    out << dump(j) << '\n';
  }
}

}  // namespace preflearn::data
