#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "preflearn/lm/vocabulary.hpp"

namespace preflearn::lm {

/// Shape of the decoder-only transformer: learned positional embeddings,
/// pre-norm blocks (attention + GELU MLP), final layer norm, linear LM head.
struct ModelConfig {
  int vocab = Vocabulary::kSize;
  int d_model = 64;
  int n_layer = 2;
  int n_head = 4;
  int context = 64;
  int d_ff = 256;

  /// Throws ConfigError on non-positive sizes or d_model % n_head != 0.
  void validate() const;
  int head_dim() const noexcept { return d_model / n_head; }

  bool operator==(const ModelConfig&) const = default;
};

struct TensorInfo {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Named arrays of a flat parameter buffer, in storage order.
class ParamLayout {
 public:
  struct Block {
    std::size_t ln1_g, ln1_b, wq, wk, wv, wo, ln2_g, ln2_b, w_fc, b_fc, w_proj, b_proj;
  };

  explicit ParamLayout(const ModelConfig& config);

  const std::vector<TensorInfo>& tensors() const noexcept { return tensors_; }
  std::size_t total() const noexcept { return total_; }
  /// Throws ShapeError for unknown names.
  const TensorInfo& find(std::string_view name) const;

  std::size_t tok_emb = 0, pos_emb = 0, lnf_g = 0, lnf_b = 0, head_w = 0, head_b = 0;
  std::vector<Block> blocks;

 private:
  std::size_t add(std::string name, std::vector<std::size_t> shape);

  std::vector<TensorInfo> tensors_;
  std::size_t total_ = 0;
};

/// Full parameter set of the language model. Value type: copies are deep and
/// a trainer never mutates an instance it did not create.
template <typename T>
class ModelParams {
 public:
  ModelParams() = default;
  /// All zeros, except layer-norm gains which are 1.
  explicit ModelParams(const ModelConfig& config);

  /// Weights ~ N(0, 0.02^2), layer norms at identity, biases zero.
  static ModelParams initialized(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }
  const ParamLayout& layout() const noexcept { return *layout_; }
  std::span<const T> values() const noexcept { return values_; }
  std::span<T> values() noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }

  std::span<const T> tensor(std::string_view name) const;
  std::span<T> tensor(std::string_view name);

  std::uint64_t version() const noexcept { return version_; }
  void set_version(std::uint64_t v) noexcept { version_ = v; }

  bool all_finite() const noexcept;

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out(config_);
    auto dst = out.values();
    for (std::size_t i = 0; i < values_.size(); ++i) dst[i] = static_cast<U>(values_[i]);
    out.set_version(version_);
    return out;
  }

  bool operator==(const ModelParams& other) const {
    return config_ == other.config_ && values_ == other.values_;
  }

 private:
  ModelConfig config_;
  std::shared_ptr<const ParamLayout> layout_;
  std::vector<T> values_;
  std::uint64_t version_ = 0;
};

using PolicyParams = ModelParams<float>;

/// Which rows of the forward pass get LM-head logits.
struct ForwardOptions {
  bool logits = true;
  int logits_from = 0;  ///< first row with logits; rows before it are skipped
};

/// Everything the backward pass needs, plus the two outputs callers read:
/// `logits` (rows [logits_from, rows) x vocab) and `hidden` (final-norm
/// output, rows x d_model).
template <typename T>
struct Activations {
  struct BlockCache {
    std::vector<T> x_in, xhat1, rstd1, q, k, v, probs, attn, x_mid, xhat2, rstd2, pre_act, act;
  };

  int rows = 0;
  int logits_from = 0;
  bool has_logits = false;
  std::vector<TokenId> inputs;
  std::vector<BlockCache> blocks;
  std::vector<T> x_final, xhatf, rstdf;
  std::vector<T> hidden;
  std::vector<T> logits;

  std::span<const T> logits_row(int row) const;
  std::span<const T> hidden_row(int row) const;
};

/// Runs the transformer over `inputs` (BOS already prepended by the caller).
/// Throws LengthError when inputs exceed the context, InvalidTokenError on ids
/// outside the vocabulary. Each row is computed independently of later rows,
/// so a prefix run reproduces the leading rows of a longer run bit for bit.
template <typename T>
Activations<T> forward(const ModelParams<T>& params, std::span<const TokenId> inputs,
                       const ForwardOptions& options = {});

/// Accumulates parameter gradients into `grad` (same layout as params).
/// `dlogits` covers exactly the rows that have logits, or is empty;
/// `dhidden` covers all rows, or is empty.
template <typename T>
void backward(const ModelParams<T>& params, const Activations<T>& acts,
              std::span<const T> dlogits, std::span<const T> dhidden, std::span<T> grad);

/// [BOS] + prompt + continuation.
std::vector<TokenId> frame(const TokenSequence& prompt, const TokenSequence& continuation = {});

}  // namespace preflearn::lm
