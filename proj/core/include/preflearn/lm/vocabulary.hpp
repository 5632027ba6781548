#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace preflearn::lm {

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;

/// Byte-level vocabulary: ids 0-255 are raw bytes, followed by BOS and EOS.
struct Vocabulary {
  static constexpr TokenId kByteCount = 256;
  static constexpr TokenId kBos = 256;
  static constexpr TokenId kEos = 257;
  static constexpr TokenId kSize = 258;

  static constexpr bool is_byte(TokenId id) noexcept { return id >= 0 && id < kByteCount; }
  static constexpr bool is_valid(TokenId id) noexcept { return id >= 0 && id < kSize; }
};

/// One token per byte, no framing.
TokenSequence encode(std::string_view text);

/// Inverse of encode. Throws InvalidTokenError naming the first id that is
/// not a byte (specials must be stripped by the caller).
std::string decode(const TokenSequence& tokens);

/// Drops a trailing EOS (and anything after the first EOS) before decoding.
std::string decode_response(const TokenSequence& tokens);

}  // namespace preflearn::lm
