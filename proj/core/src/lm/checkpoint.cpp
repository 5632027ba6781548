#include "preflearn/lm/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "preflearn/common/errors.hpp"

namespace preflearn::lm {

namespace {

constexpr const char* kMagic = "PREFLEARN-CHECKPOINT";

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s;
}

std::vector<std::size_t> parse_shape(const std::string& s) {
  std::vector<std::size_t> shape;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    try {
      shape.push_back(static_cast<std::size_t>(std::stoull(part)));
    } catch (const std::exception&) {
      throw ShapeError("checkpoint: malformed shape '" + s + "'");
    }
  }
  if (shape.empty()) throw ShapeError("checkpoint: empty shape");
  return shape;
}

std::size_t element_count(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

int manifest_int(const std::map<std::string, std::string>& m, const std::string& key) {
  const auto it = m.find(key);
  if (it == m.end()) throw ShapeError("checkpoint manifest is missing '" + key + "'");
  try {
    return std::stoi(it->second);
  } catch (const std::exception&) {
    throw ShapeError("checkpoint manifest: '" + key + "' is not an integer");
  }
}

}  // namespace

const NamedArray& Checkpoint::array(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return a;
  }
  throw ShapeError("checkpoint has no array '" + name + "'");
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << kMagic << ' ' << Checkpoint::kFormatVersion << '\n';
  for (const auto& [k, v] : ckpt.manifest) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw ConfigError("checkpoint manifest entry '" + k + "' is not representable");
    }
    out << k << '=' << v << '\n';
  }
  for (const auto& a : ckpt.arrays) {
    if (element_count(a.shape) != a.data.size()) throw ShapeError("checkpoint array '" + a.name + "' size mismatch");
    out << "array " << a.name << ' ' << shape_string(a.shape) << '\n';
  }
  out << "end\n";
  std::vector<char> bytes;
  for (const auto& a : ckpt.arrays) {
    bytes.resize(a.data.size() * 4);
    for (std::size_t i = 0; i < a.data.size(); ++i) {
      const auto u = std::bit_cast<std::uint32_t>(a.data[i]);
      for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<char>((u >> (8 * b)) & 0xffu);
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw ShapeError("checkpoint: empty file");
  {
    std::istringstream header(line);
    std::string magic;
    int version = 0;
    header >> magic >> version;
    if (magic != kMagic) throw ShapeError("checkpoint: bad magic in '" + path.string() + "'");
    if (version != Checkpoint::kFormatVersion) {
      throw ShapeError("checkpoint: unsupported format version " + std::to_string(version));
    }
  }
  Checkpoint ckpt;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    if (line.rfind("array ", 0) == 0) {
      std::istringstream ss(line.substr(6));
      NamedArray a;
      std::string shape;
      ss >> a.name >> shape;
      a.shape = parse_shape(shape);
      ckpt.arrays.push_back(std::move(a));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ShapeError("checkpoint: malformed manifest line '" + line + "'");
    ckpt.manifest[line.substr(0, eq)] = line.substr(eq + 1);
  }
  if (!ended) throw ShapeError("checkpoint: truncated manifest");
  std::vector<char> bytes;
  for (auto& a : ckpt.arrays) {
    const std::size_t n = element_count(a.shape);
    bytes.resize(n * 4);
    in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
      throw ShapeError("checkpoint: payload too short for array '" + a.name + "'");
    }
    a.data.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + b])) << (8 * b);
      a.data[i] = std::bit_cast<float>(u);
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ShapeError("checkpoint: trailing bytes after payload");
  return ckpt;
}

void put_model_config(std::map<std::string, std::string>& m, const ModelConfig& c) {
  m["vocab"] = std::to_string(c.vocab);
  m["d_model"] = std::to_string(c.d_model);
  m["n_layer"] = std::to_string(c.n_layer);
  m["n_head"] = std::to_string(c.n_head);
  m["context"] = std::to_string(c.context);
  m["d_ff"] = std::to_string(c.d_ff);
}

ModelConfig model_config_from(const std::map<std::string, std::string>& m) {
  ModelConfig c;
  c.vocab = manifest_int(m, "vocab");
  c.d_model = manifest_int(m, "d_model");
  c.n_layer = manifest_int(m, "n_layer");
  c.n_head = manifest_int(m, "n_head");
  c.context = manifest_int(m, "context");
  c.d_ff = manifest_int(m, "d_ff");
  c.validate();
  return c;
}

Checkpoint to_checkpoint(const PolicyParams& params, const std::string& kind) {
  Checkpoint ckpt;
  ckpt.manifest["kind"] = kind;
  ckpt.manifest["param_version"] = std::to_string(params.version());
  put_model_config(ckpt.manifest, params.config());
  const auto values = params.values();
  for (const auto& t : params.layout().tensors()) {
    NamedArray a;
    a.name = t.name;
    a.shape = t.shape;
    a.data.assign(values.begin() + static_cast<std::ptrdiff_t>(t.offset),
                  values.begin() + static_cast<std::ptrdiff_t>(t.offset + t.size));
    ckpt.arrays.push_back(std::move(a));
  }
  return ckpt;
}

PolicyParams policy_from_checkpoint(const Checkpoint& ckpt) {
  const ModelConfig config = model_config_from(ckpt.manifest);
  PolicyParams params(config);
  auto values = params.values();
  for (const auto& t : params.layout().tensors()) {
    const auto& a = ckpt.array(t.name);
    if (a.shape != t.shape) {
      throw ShapeError("checkpoint array '" + t.name + "' has shape " + shape_string(a.shape) + ", manifest implies " +
                       shape_string(t.shape));
    }
    if (a.data.size() != t.size)
      throw ShapeError("checkpoint array '" + t.name + "' holds " + std::to_string(a.data.size()) + " values, expected " +
                       std::to_string(t.size));
    std::copy(a.data.begin(), a.data.end(), values.begin() + static_cast<std::ptrdiff_t>(t.offset));
  }
  if (const auto it = ckpt.manifest.find("param_version"); it != ckpt.manifest.end()) {
    params.set_version(std::stoull(it->second));
  }
  if (!params.all_finite()) throw NumericalError("checkpoint contains non-finite parameters");
  return params;
}

void save_policy(const std::filesystem::path& path, const PolicyParams& params) {
  write_checkpoint(path, to_checkpoint(params));
}

PolicyParams load_policy(const std::filesystem::path& path) {
  const auto ckpt = read_checkpoint(path);
  if (const auto it = ckpt.manifest.find("kind"); it != ckpt.manifest.end() && it->second != "policy") {
    throw ShapeError("'" + path.string() + "' is a " + it->second + " checkpoint, expected policy");
  }
  return policy_from_checkpoint(ckpt);
}

}  // namespace preflearn::lm
