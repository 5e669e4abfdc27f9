#include "webgym/tokenizer.hpp"

#include <stdexcept>

namespace webgym {

std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> out;
    out.reserve(text.size());
    append_tokens(out, text);
    return out;
}

void append_tokens(std::vector<Token>& out, std::string_view text) {
    for (unsigned char c : text) out.push_back(static_cast<Token>(c));
}

std::string detokenize(const std::vector<Token>& tokens) {
    size_t begin = 0;
    size_t end = tokens.size();
    if (begin < end && tokens[begin] == kTokenBos) ++begin;
    if (begin < end && tokens[end - 1] == kTokenEos) --end;
    std::string out;
    out.reserve(end - begin);
    for (size_t i = begin; i < end; ++i) {
        const Token t = tokens[i];
        if (t < 0 || t > 255) throw std::invalid_argument("detokenize: special token in interior");
        out.push_back(static_cast<char>(static_cast<unsigned char>(t)));
    }
    return out;
}

} // namespace webgym
