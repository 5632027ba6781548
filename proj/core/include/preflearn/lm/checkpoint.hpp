#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "preflearn/lm/model.hpp"

namespace preflearn::lm {

struct NamedArray {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> data;
};

/// On-disk container:
///
///   PREFLEARN-CHECKPOINT 1\n
///   key=value\n ...            manifest, sorted by key
///   array name d0xd1...\n ...  one line per array, in storage order
///   end\n
///   <float32 little-endian payload for every array, in order>
struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  std::map<std::string, std::string> manifest;
  std::vector<NamedArray> arrays;

  const NamedArray& array(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws IoError on unreadable files and ShapeError when the payload does
/// not match the declared arrays.
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Manifest entries describing a model config, and the reverse.
void put_model_config(std::map<std::string, std::string>& manifest, const ModelConfig& config);
ModelConfig model_config_from(const std::map<std::string, std::string>& manifest);

/// Policy arrays named after the ParamLayout, manifest kind=policy.
Checkpoint to_checkpoint(const PolicyParams& params, const std::string& kind = "policy");
/// Validates every array name and shape against the manifest's config.
PolicyParams policy_from_checkpoint(const Checkpoint& ckpt);

void save_policy(const std::filesystem::path& path, const PolicyParams& params);
PolicyParams load_policy(const std::filesystem::path& path);

}  // namespace preflearn::lm
