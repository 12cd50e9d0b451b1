#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace memseeker {

// Fixed symbolic vocabulary. Reserved specials come first, then the digit,
// key, value, entity and filler alphabets as contiguous id blocks. The ids
// are frozen for the lifetime of any checkpoint that embeds them.
struct Vocabulary {
    int pad = 0;
    int bos = 1;
    int eos = 2;
    int split = 3;
    int query = 4;
    int sep = 5;

    int digit0 = 6;
    int n_digits = 10;
    int key0 = 16;
    int n_keys = 16;
    int value0 = 32;
    int n_values = 16;
    int entity0 = 48;
    int n_entities = 8;
    int filler0 = 56;
    int n_fillers = 64;

    int vocab_size = 128;

    static Vocabulary standard(int vocab_size = 128);

    int used_ids() const { return filler0 + n_fillers; }

    int key_token(int i) const { return checked(key0, n_keys, i, "key"); }
    int value_token(int i) const { return checked(value0, n_values, i, "value"); }
    int entity_token(int i) const { return checked(entity0, n_entities, i, "entity"); }
    int filler_token(int i) const { return checked(filler0, n_fillers, i, "filler"); }
    int digit_token(int d) const { return checked(digit0, n_digits, d, "digit"); }

    bool is_key(int t) const { return t >= key0 && t < key0 + n_keys; }
    bool is_value(int t) const { return t >= value0 && t < value0 + n_values; }
    bool is_entity(int t) const { return t >= entity0 && t < entity0 + n_entities; }
    bool is_filler(int t) const { return t >= filler0 && t < filler0 + n_fillers; }
    bool is_digit(int t) const { return t >= digit0 && t < digit0 + n_digits; }

    // Non-negative integer as decimal digit tokens.
    std::vector<int> encode_number(long long n) const;
    // Digit-token run back to an integer; nullopt when any token is not a digit.
    std::optional<long long> parse_number(const std::vector<int>& tokens) const;

    std::string describe(int token) const;

  private:
    static int checked(int base, int count, int i, const char* what) {
        if (i < 0 || i >= count) throw std::out_of_range(std::string(what) + " index out of range");
        return base + i;
    }
};

}  // namespace memseeker
