#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace webgym {

// Byte-level vocabulary: tokens 0..255 are raw bytes, plus three specials.
// No learned merges; masks and spans over text are exact by construction.
using Token = int32_t;

inline constexpr Token kTokenBos = 256;
inline constexpr Token kTokenEos = 257;
inline constexpr Token kTokenPad = 258;
inline constexpr int kVocabSize = 259;

inline bool is_special_token(Token t) { return t >= 256; }

std::vector<Token> tokenize(std::string_view text);

// Inverse of tokenize. A leading BOS and a trailing EOS are tolerated and
// stripped; any other special token raises std::invalid_argument.
std::string detokenize(const std::vector<Token>& tokens);

void append_tokens(std::vector<Token>& out, std::string_view text);

} // namespace webgym
