#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "bridge/text.hpp"

namespace bridge {

// Generation vocabulary: 70 SQL keywords/reserved tokens plus the 10 digits.
// The list is a versioned asset shared by the SQL tokenizer, the consistency
// guard and the decoder; order defines vocabulary ids in checkpoints.
inline constexpr int kVocabVersion = 1;

inline constexpr std::array<std::string_view, 70> kReservedSymbols = {
    // clause keywords
    "SELECT", "FROM", "WHERE", "GROUP", "BY", "HAVING", "ORDER", "LIMIT",
    "ASC", "DESC", "DISTINCT", "AND", "OR", "NOT", "IN", "LIKE", "BETWEEN",
    "JOIN", "ON", "AS", "UNION", "INTERSECT", "EXCEPT",
    // aggregates
    "COUNT", "SUM", "AVG", "MIN", "MAX",
    // end of sequence
    "<eos>",
    // operators and punctuation
    "=", "!=", "<>", "<", ">", "<=", ">=", "(", ")", ",", ".", "*", "'", "-",
    // additional SQL reserved words (kept out of identifier space)
    "NULL", "IS", "EXISTS", "ALL", "ANY", "INNER", "OUTER", "LEFT", "RIGHT",
    "FULL", "CROSS", "USING", "CASE", "WHEN", "THEN", "ELSE", "END", "CAST",
    "OFFSET", "SUBSTR", "LOWER", "UPPER", "LENGTH", "ABS", "ROUND", "TRUE",
    "FALSE"};

inline constexpr std::array<std::string_view, 10> kDigitSymbols = {
    "0", "1", "2", "3", "4", "5", "6", "7", "8", "9"};

inline constexpr size_t kNumReserved = kReservedSymbols.size();
inline constexpr size_t kVocabSize = kNumReserved + kDigitSymbols.size();

inline bool vocab_id_is_digit(int id) {
    return id >= static_cast<int>(kNumReserved) &&
           id < static_cast<int>(kVocabSize);
}

inline std::string_view vocab_surface(int id) {
    if (id < static_cast<int>(kNumReserved)) return kReservedSymbols[id];
    return kDigitSymbols[id - kNumReserved];
}

// Case-insensitive lookup (surfaces are stored uppercase where alphabetic).
inline std::optional<int> vocab_id(std::string_view surface) {
    static const std::unordered_map<std::string, int> index = [] {
        std::unordered_map<std::string, int> m;
        for (size_t i = 0; i < kReservedSymbols.size(); ++i)
            m.emplace(to_upper(kReservedSymbols[i]), static_cast<int>(i));
        for (size_t i = 0; i < kDigitSymbols.size(); ++i)
            m.emplace(std::string(kDigitSymbols[i]),
                      static_cast<int>(kNumReserved + i));
        return m;
    }();
    auto it = index.find(to_upper(surface));
    if (it == index.end()) return std::nullopt;
    return it->second;
}

inline bool is_reserved_word(std::string_view word) {
    auto id = vocab_id(word);
    return id && !vocab_id_is_digit(*id);
}

inline int eos_id() { return *vocab_id("<eos>"); }

}  // namespace bridge
