#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lrhp/types.hpp"

namespace lrhp {

/// Byte-level vocabulary: ids 0..255 are raw bytes, followed by five specials.
namespace tok {
inline constexpr TokenId kPad = 256;
inline constexpr TokenId kBos = 257;
inline constexpr TokenId kEos = 258;
inline constexpr TokenId kSep = 259;
inline constexpr TokenId kPreference = 260;
inline constexpr int kVocabSize = 261;
}  // namespace tok

enum class RepresentationMode { special_token, eos_token, ntp };

const char* mode_name(RepresentationMode m);
RepresentationMode parse_mode(std::string_view s);

inline bool is_special(TokenId id) { return id >= tok::kPad; }

std::vector<TokenId> encode_bytes(std::string_view text);
/// Bytes of `tokens` with every special symbol dropped.
std::string decode(std::span<const TokenId> tokens);

/// Pair template: BOS prompt SEP first SEP second TERMINAL, where TERMINAL is
/// PREFERENCE, EOS, or (ntp mode) a third SEP after which the answer byte is
/// predicted. Responses are truncated from the right, longest first, until the
/// sequence fits in `max_seq_len`; the prompt is never truncated.
std::vector<TokenId> tokenize_pair(std::string_view prompt, std::string_view first, std::string_view second,
                                   RepresentationMode mode, int max_seq_len);

/// Single-response scoring template: BOS prompt SEP response EOS.
std::vector<TokenId> tokenize_scored(std::string_view prompt, std::string_view response, int max_seq_len);

/// Language-model context for a prompt: BOS prompt SEP.
std::vector<TokenId> lm_context(std::string_view prompt);

/// Answer tokens predicted in ntp mode for labels 0 and 1.
inline constexpr TokenId answer_token(int label) { return label == 0 ? TokenId{'0'} : TokenId{'1'}; }

}  // namespace lrhp
