#include "memseeker/vocab.hpp"

#include <algorithm>

namespace memseeker {

Vocabulary Vocabulary::standard(int vocab_size) {
    Vocabulary v;
    v.vocab_size = vocab_size;
    if (vocab_size < v.used_ids())
        throw std::invalid_argument("vocab_size " + std::to_string(vocab_size) + " below required " +
                                    std::to_string(v.used_ids()));
    return v;
}

std::vector<int> Vocabulary::encode_number(long long n) const {
    if (n < 0) throw std::invalid_argument("encode_number: negative");
    std::vector<int> out;
    do {
        out.push_back(digit_token(static_cast<int>(n % 10)));
        n /= 10;
    } while (n > 0);
    std::reverse(out.begin(), out.end());
    return out;
}

std::optional<long long> Vocabulary::parse_number(const std::vector<int>& tokens) const {
    if (tokens.empty()) return std::nullopt;
    long long n = 0;
    for (int t : tokens) {
        if (!is_digit(t)) return std::nullopt;
        n = n * 10 + (t - digit0);
    }
    return n;
}

std::string Vocabulary::describe(int token) const {
    if (token == pad) return "<pad>";
    if (token == bos) return "<bos>";
    if (token == eos) return "<eos>";
    if (token == split) return "<split>";
    if (token == query) return "<query>";
    if (token == sep) return "<sep>";
    if (is_digit(token)) return "d" + std::to_string(token - digit0);
    if (is_key(token)) return "k" + std::to_string(token - key0);
    if (is_value(token)) return "v" + std::to_string(token - value0);
    if (is_entity(token)) return "e" + std::to_string(token - entity0);
    if (is_filler(token)) return "f" + std::to_string(token - filler0);
    return "tok" + std::to_string(token);
}

}  // namespace memseeker
