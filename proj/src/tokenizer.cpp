#include "lrhp/tokenizer.hpp"

namespace lrhp {

const char* mode_name(RepresentationMode m) {
  switch (m) {
    case RepresentationMode::special_token: return "special_token";
    case RepresentationMode::eos_token: return "eos_token";
    case RepresentationMode::ntp: return "ntp";
  }
  return "?";
}

RepresentationMode parse_mode(std::string_view s) {
  if (s == "special_token") return RepresentationMode::special_token;
  if (s == "eos_token") return RepresentationMode::eos_token;
  if (s == "ntp") return RepresentationMode::ntp;
  fail(ErrorCategory::invalid_request, "unknown representation mode '" + std::string(s) + "'");
}

std::vector<TokenId> encode_bytes(std::string_view text) {
  std::vector<TokenId> out;
  out.reserve(text.size());
  for (unsigned char c : text) out.push_back(static_cast<TokenId>(c));
  return out;
}

std::string decode(std::span<const TokenId> tokens) {
  std::string out;
  out.reserve(tokens.size());
  for (TokenId t : tokens) {
    if (t < 0 || is_special(t)) continue;
    out.push_back(static_cast<char>(static_cast<unsigned char>(t)));
  }
  return out;
}

namespace {

void append(std::vector<TokenId>& seq, std::string_view text) {
  for (unsigned char c : text) seq.push_back(static_cast<TokenId>(c));
}

}  // namespace

std::vector<TokenId> tokenize_pair(std::string_view prompt, std::string_view first, std::string_view second,
                                   RepresentationMode mode, int max_seq_len) {
  constexpr std::size_t kFixed = 4;  // BOS, SEP, SEP, terminal
  const auto limit = static_cast<std::size_t>(max_seq_len);
  if (prompt.size() + kFixed + 2 > limit)
    fail(ErrorCategory::invalid_request, "tokenize_pair: prompt of " + std::to_string(prompt.size()) +
                                             " bytes does not fit max_seq_len " + std::to_string(max_seq_len));
  std::size_t n1 = first.size(), n2 = second.size();
  const std::size_t budget = limit - prompt.size() - kFixed;
  while (n1 + n2 > budget) {
    if (n1 > n2) --n1; else --n2;
  }
  if (n1 == 0 && !first.empty()) n1 = 1;
  if (n2 == 0 && !second.empty()) n2 = 1;

  std::vector<TokenId> seq;
  seq.reserve(prompt.size() + n1 + n2 + kFixed);
  seq.push_back(tok::kBos);
  append(seq, prompt);
  seq.push_back(tok::kSep);
  append(seq, first.substr(0, n1));
  seq.push_back(tok::kSep);
  append(seq, second.substr(0, n2));
  switch (mode) {
    case RepresentationMode::special_token: seq.push_back(tok::kPreference); break;
    case RepresentationMode::eos_token: seq.push_back(tok::kEos); break;
    case RepresentationMode::ntp: seq.push_back(tok::kSep); break;
  }
  if (seq.size() > limit) fail(ErrorCategory::invalid_request, "tokenize_pair: sequence overlong after truncation");
  return seq;
}

std::vector<TokenId> tokenize_scored(std::string_view prompt, std::string_view response, int max_seq_len) {
  const auto limit = static_cast<std::size_t>(max_seq_len);
  if (prompt.size() + 4 > limit)
    fail(ErrorCategory::invalid_request, "tokenize_scored: prompt does not fit max_seq_len");
  const std::size_t n = std::min(response.size(), limit - prompt.size() - 3);
  std::vector<TokenId> seq;
  seq.reserve(prompt.size() + n + 3);
  seq.push_back(tok::kBos);
  append(seq, prompt);
  seq.push_back(tok::kSep);
  append(seq, response.substr(0, n));
  seq.push_back(tok::kEos);
  return seq;
}

std::vector<TokenId> lm_context(std::string_view prompt) {
  std::vector<TokenId> seq;
  seq.reserve(prompt.size() + 2);
  seq.push_back(tok::kBos);
  append(seq, prompt);
  seq.push_back(tok::kSep);
  return seq;
}

}  // namespace lrhp
