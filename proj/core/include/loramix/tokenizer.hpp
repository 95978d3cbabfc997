#pragma once

#include <string>
#include <string_view>

#include "loramix/common.hpp"

namespace loramix::tok {

// Byte-level tokenizer over a restricted ASCII alphabet:
// id 0 is '\n' (also the end-of-sequence / answer delimiter),
// ids 1..95 map to the printable ASCII range 32..126.
inline constexpr int kVocabSize = 96;
inline constexpr int kEos = 0;

TokenSeq encode(std::string_view text);
std::string decode(const TokenSeq& ids);

}  // namespace loramix::tok
