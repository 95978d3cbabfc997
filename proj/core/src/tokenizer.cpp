#include "loramix/tokenizer.hpp"

#include "loramix/errors.hpp"

namespace loramix::tok {

TokenSeq encode(std::string_view text) {
    TokenSeq ids;
    ids.reserve(text.size());
    for (char ch : text) {
        unsigned char c = static_cast<unsigned char>(ch);
        if (c == '\n') {
            ids.push_back(kEos);
        } else if (c >= 32 && c <= 126) {
            ids.push_back(static_cast<int>(c) - 31);
        } else {
            throw EncodingError("character code " + std::to_string(static_cast<int>(c)) +
                                " is outside the tokenizer alphabet");
        }
    }
    return ids;
}

std::string decode(const TokenSeq& ids) {
    std::string out;
    out.reserve(ids.size());
    for (int id : ids) {
        if (id == kEos) {
            out.push_back('\n');
        } else if (id >= 1 && id < kVocabSize) {
            out.push_back(static_cast<char>(id + 31));
        } else {
            throw EncodingError("token id " + std::to_string(id) + " is outside the vocabulary");
        }
    }
    return out;
}

}  // namespace loramix::tok
