#include "preflearn/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "preflearn/common/errors.hpp"

namespace preflearn::cli {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

Config::Config(std::vector<KeySpec> schema) : schema_(std::move(schema)) {
  values_.reserve(schema_.size());
  for (const auto& k : schema_) values_.push_back(k.default_value);
}

std::size_t Config::index(std::string_view key) const {
  for (std::size_t i = 0; i < schema_.size(); ++i)
    if (schema_[i].name == key) return i;
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

bool Config::has_key(std::string_view key) const noexcept {
  return std::any_of(schema_.begin(), schema_.end(), [&](const KeySpec& k) { return k.name == key; });
}

void Config::set(std::string_view key, std::string value) { values_[index(key)] = std::move(value); }

const std::string& Config::get(std::string_view key) const { return values_[index(key)]; }

double Config::real(std::string_view key) const {
  const auto& s = get(key);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError("config key '" + std::string(key) + "': expected a number, got '" + s + "'");
  return v;
}

long long Config::integer(std::string_view key) const {
  const auto& s = get(key);
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError("config key '" + std::string(key) + "': expected an integer, got '" + s + "'");
  return v;
}

int Config::int32(std::string_view key) const {
  const long long v = integer(key);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    throw ConfigError("config key '" + std::string(key) + "': value out of range");
  return static_cast<int>(v);
}

std::uint64_t Config::u64(std::string_view key) const {
  const auto& s = get(key);
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError("config key '" + std::string(key) + "': expected a non-negative integer, got '" + s + "'");
  return v;
}

bool Config::flag(std::string_view key) const {
  const auto& s = get(key);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("config key '" + std::string(key) + "': expected true or false, got '" + s + "'");
}

std::vector<double> Config::reals(std::string_view key) const {
  std::vector<double> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto t = trim(item);
    double v = 0.0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
      throw ConfigError("config key '" + std::string(key) + "': bad list entry '" + item + "'");
    out.push_back(v);
  }
  return out;
}

void Config::merge_assignment(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("expected key=value, got '" + std::string(assignment) + "'");
  set(trim(assignment.substr(0, eq)), std::string(trim(assignment.substr(eq + 1))));
}

void Config::merge_text(std::string_view text, std::string_view origin) {
  std::size_t lineno = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const auto line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    try {
      merge_assignment(line);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(origin) + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void Config::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  merge_text(ss.str(), path.string());
}

std::string Config::serialize() const {
  std::string out;
  for (std::size_t i = 0; i < schema_.size(); ++i) out += schema_[i].name + "=" + values_[i] + "\n";
  return out;
}

void Config::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  out << serialize();
  if (!out) throw IoError("cannot write " + path.string());
}

namespace {

using Schema = std::vector<KeySpec>;

Schema model_keys() {
  return {{"d_model", "64", "embedding width"},
          {"n_layer", "2", "transformer blocks"},
          {"n_head", "4", "attention heads"},
          {"context", "64", "maximum sequence length including BOS"},
          {"d_ff", "256", "MLP hidden width"}};
}

Schema ppo_keys() {
  return {{"B", "64", "prompts per rollout batch"},
          {"r", "1", "rollouts per prompt"},
          {"b", "64", "minibatch size in episodes"},
          {"g", "1", "gradient accumulation steps"},
          {"E", "1", "epochs over the prompt pool"},
          {"e", "1", "inner epochs per rollout batch"},
          {"L_p", "1024", "maximum prompt length"},
          {"L_c", "1024", "maximum continuation length"},
          {"tau", "0.7", "sampling temperature"},
          {"beta", "0.05", "KL penalty coefficient"},
          {"gamma", "1.0", "discount"},
          {"lam", "0.95", "GAE lambda"},
          {"eps_clip", "0.2", "policy and value clip range"},
          {"alpha", "0.1", "value loss coefficient"},
          {"eta", "1e-6", "learning rate"},
          {"warmup", "0.1", "warmup fraction"},
          {"adam_beta1", "0.9", ""},
          {"adam_beta2", "0.95", ""},
          {"adam_eps", "1e-5", ""},
          {"weight_decay", "0.0", ""},
          {"grad_clip", "1.0", "global gradient norm limit"},
          {"trunc_penalty", "-10.0", "terminal reward of episodes without EOS"},
          {"minibatch_forward", "false", "recompute old log-probs per minibatch (large-batch mode)"}};
}

Schema concat(std::initializer_list<Schema> parts) {
  Schema out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

const std::map<std::string, Schema, std::less<>>& schemas() {
  static const std::map<std::string, Schema, std::less<>> all = [] {
    std::map<std::string, Schema, std::less<>> m;
    const Schema seed{{"seed", "0", "random seed"}};
    m["train-sft"] = concat({seed,
                             {{"data", "toy", "demonstrations JSONL, or 'toy'"},
                              {"toy_prompts", "256", "demonstrations generated for data=toy"},
                              {"init", "", "policy checkpoint to start from; empty for a fresh model"},
                              {"eta", "1e-3", "learning rate"},
                              {"warmup", "0.0", "warmup fraction"},
                              {"epochs", "4", ""},
                              {"batch", "16", ""},
                              {"grad_clip", "1.0", ""},
                              {"out", "sft", "output directory"}},
                             model_keys()});
    m["train-rm"] = concat({seed,
                            {{"data", "", "preference JSONL, or 'toy' to label samples of the policy"},
                             {"toy_pairs", "512", "pairs generated for data=toy"},
                             {"heldout", "", "optional preference JSONL for accuracy"},
                             {"policy", "", "backbone checkpoint"},
                             {"eta", "1e-5", "peak learning rate"},
                             {"warmup", "0.03", "warmup fraction"},
                             {"final_lr_fraction", "0.1", "learning rate at the end relative to eta"},
                             {"epochs", "1", ""},
                             {"batch", "512", ""},
                             {"grad_clip", "1.0", ""},
                             {"L_c", "32", "continuation length for data=toy"},
                             {"out", "rm", "output directory"}}});
    m["train-dpo"] = concat({seed,
                             {{"data", "", "preference JSONL"},
                              {"heldout", "", "optional preference JSONL for margins"},
                              {"policy", "", "initial policy checkpoint"},
                              {"reference", "", "reference checkpoint; defaults to policy"},
                              {"beta", "0.01", ""},
                              {"eta", "5e-7", "peak learning rate"},
                              {"warmup", "0.1", "warmup fraction"},
                              {"epochs", "3", ""},
                              {"batch", "32", ""},
                              {"grad_clip", "1.0", ""},
                              {"out", "dpo", "output directory"}}});
    m["train-ppo"] = concat({seed,
                             {{"policy", "", "initial policy checkpoint"},
                              {"reference", "", "reference checkpoint; defaults to policy"},
                              {"reward", "", "reward model checkpoint"},
                              {"prompts", "", "prompt-pool JSONL, or 'toy'"},
                              {"toy_prompts", "256", "prompts generated for prompts=toy"},
                              {"out", "ppo", "output directory"}},
                             ppo_keys()});
    m["eval-bon"] = concat({seed,
                            {{"policy", "", "policy checkpoint"},
                             {"scorer", "oracle", "'oracle' or a reward model checkpoint"},
                             {"prompts", "", "prompt-pool JSONL, or 'toy'"},
                             {"toy_prompts", "100", ""},
                             {"n", "16", "samples per prompt"},
                             {"tau", "0.7", "sampling temperature"},
                             {"L_c", "32", "maximum continuation length"},
                             {"candidates", "false", "include all candidates in the report"},
                             {"out", "bon.jsonl", "report path"}}});
    m["eval-kl"] = concat({seed,
                           {{"policy", "", "policy checkpoint"},
                            {"reference", "", "reference checkpoint"},
                            {"prompts", "", "prompt-pool JSONL, or 'toy'"},
                            {"toy_prompts", "100", ""},
                            {"L_c", "32", "maximum continuation length"}}});
    m["data binarize"] = concat({seed,
                                 {{"in", "", "scored JSONL"},
                                  {"out", "", "preference JSONL"},
                                  {"mode", "aspect-mean", "aspect-mean or overall"},
                                  {"exclude", "verbosity", "comma-separated aspects left out of the mean"}}});
    m["data filter"] = {{"in", "", "preference JSONL"}, {"out", "", "preference JSONL"}};
    m["data downsample"] = concat({seed, {{"in", "", "preference JSONL"}, {"out", "", ""}, {"n", "", "pairs kept"}}});
    m["data remix"] = concat({seed,
                              {{"pools", "", "comma-separated path:weight entries"},
                               {"n", "", "target prompt count"},
                               {"tag", "remix", "pool tag of the result"},
                               {"out", "", "prompt-pool JSONL"}}});
    m["gen"] = concat({seed,
                       {{"checkpoint", "", "policy checkpoint"},
                        {"prompt", "", "user message"},
                        {"tau", "0.7", "sampling temperature"},
                        {"L_c", "32", "maximum continuation length"}}});
    m["sweep-beta"] = concat({seed,
                              {{"betas", "0.01,0.025,0.0325,0.05", "KL coefficients"},
                               {"seeds", "5", "PPO seeds per beta"},
                               {"policy", "", "SFT checkpoint; empty builds the toy pipeline"},
                               {"reward", "", "reward model checkpoint; empty builds the toy pipeline"},
                               {"prompts", "toy", "prompt-pool JSONL, or 'toy'"},
                               {"toy_prompts", "256", ""},
                               {"eval_prompts", "128", "toy prompts used for the KL measurement"},
                               {"out", "sweep", "output directory"}},
                              ppo_keys()});
    return m;
  }();
  return all;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [k, v] : schemas()) n.push_back(k);
    return n;
  }();
  return names;
}

Config default_config(std::string_view command) {
  const auto it = schemas().find(command);
  if (it == schemas().end()) throw ConfigError("unknown command '" + std::string(command) + "'");
  Config c(it->second);
  if (c.has_key("seed"))
    if (const char* env = std::getenv("PREFLEARN_SEED"); env && *env) {
      c.set("seed", env);
      c.u64("seed");
    }
  return c;
}

}  // namespace preflearn::cli
