#pragma once

// Closed toy vocabulary: whitespace-delimited single-letter symbols with four
// reserved ids in front. "a b" maps to {4, 5}.

#include <string>
#include <vector>

namespace tiedmt {

inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;   // begin marker fed as first decoder input
inline constexpr int kEosId = 2;   // end marker terminating every sequence
inline constexpr int kClsId = 3;   // classification read-out token (selector)
inline constexpr int kSymbolBase = 4;
inline constexpr int kMaxSymbols = 26;  // letters a..z

std::vector<int> tokenize(const std::string& text);

// Inverse of tokenize; reserved ids are dropped.
std::string detokenize(const std::vector<int>& ids);

}  // namespace tiedmt
