#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "preflearn/cli/config.hpp"
#include "preflearn/dpo/dpo.hpp"
#include "preflearn/lm/sft.hpp"
#include "preflearn/ppo/ppo.hpp"

namespace preflearn::cli {

/// Exit codes: 0 success, 1 runtime or configuration failure, 2 usage error.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_command(int argc, const char* const* argv);

/// Resolved config for `command` from defaults, PREFLEARN_SEED, an optional
/// config file and key=value overrides, in increasing precedence.
Config resolve_config(const std::string& command, const std::string& config_path,
                      const std::vector<std::string>& overrides);

ppo::PpoConfig to_ppo_config(const Config& c);
dpo::DpoConfig to_dpo_config(const Config& c);
lm::TrainConfig to_train_config(const Config& c);
lm::ModelConfig to_model_config(const Config& c);

/// One demonstration per line: {"prompt": [{role, content}...], "response": "..."}.
std::vector<lm::Demonstration> load_demonstrations(const std::filesystem::path& path);

}  // namespace preflearn::cli
