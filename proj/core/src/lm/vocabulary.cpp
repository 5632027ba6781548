#include "preflearn/lm/vocabulary.hpp"

#include <algorithm>

#include "preflearn/common/errors.hpp"

namespace preflearn::lm {

TokenSequence encode(std::string_view text) {
  TokenSequence out;
  out.reserve(text.size());
  for (const char c : text) out.push_back(static_cast<TokenId>(static_cast<unsigned char>(c)));
  return out;
}

std::string decode(const TokenSequence& tokens) {
  std::string out;
  out.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!Vocabulary::is_byte(tokens[i])) throw InvalidTokenError(i, tokens[i]);
    out.push_back(static_cast<char>(static_cast<unsigned char>(tokens[i])));
  }
  return out;
}

std::string decode_response(const TokenSequence& tokens) {
  const auto end = std::find(tokens.begin(), tokens.end(), Vocabulary::kEos);
  return decode(TokenSequence(tokens.begin(), end));
}

}  // namespace preflearn::lm
