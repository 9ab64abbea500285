#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace relpred {

using TokenId = std::int32_t;

// Fixed-length encoding of one (head name, tail name) pair.
struct TokenizedSequence {
  std::vector<TokenId> input_ids;
  std::vector<std::uint8_t> attention_mask;  // prefix of 1s, then 0s
};

// Token -> id map with reserved specials. Trained vocabularies contain every
// single character seen in the corpus, so subword fallback always terminates.
class Vocabulary {
 public:
  static constexpr TokenId kCls = 0;
  static constexpr TokenId kSep = 1;
  static constexpr TokenId kPad = 2;
  static constexpr TokenId kUnk = 3;  // unknown-character fallback
  static constexpr std::size_t kNumSpecials = 4;

  // Keeps all specials, all observed single characters, then the most
  // frequent whole words until max_size entries exist. Deterministic given
  // corpus order: frequency ties break by first appearance.
  static Vocabulary train(const std::vector<std::string>& corpus,
                          std::size_t max_size);

  TokenId find(std::string_view token) const;  // -1 when absent
  const std::string& token(TokenId id) const { return tokens_[static_cast<std::size_t>(id)]; }
  std::size_t size() const { return tokens_.size(); }
  std::size_t max_size() const { return max_size_; }

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  Vocabulary() = default;
  void push_token(std::string token);

  std::unordered_map<std::string, TokenId> ids_;
  std::vector<std::string> tokens_;
  std::size_t max_size_ = 0;
};

// Splits on Unicode whitespace, collapsing runs; never returns empty words.
std::vector<std::string> whitespace_split(std::string_view text);

// Whole-word match, else greedy longest-known-prefix splitting down to
// single characters; characters missing from the vocabulary map to kUnk.
// Total: never throws for any byte sequence.
std::vector<TokenId> tokenize_word(std::string_view word,
                                   const Vocabulary& vocab);

// All pieces for one entity name (whitespace words tokenized in order).
std::vector<TokenId> name_pieces(std::string_view name,
                                 const Vocabulary& vocab);

// Alternating-trim truncation: while the assembled sequence would exceed
// pad_len, drop the trailing piece of the longer side (head first on ties),
// flooring each side at one piece. Only at pad_len == 4 can both floors be
// hit with the total still over budget; then the trailing [SEP] is dropped.
struct TruncatedLayout {
  std::size_t head_len;
  std::size_t tail_len;
  bool trailing_sep;
};
TruncatedLayout truncate_pair_lengths(std::size_t head_len,
                                      std::size_t tail_len,
                                      std::size_t pad_len);

// [CLS] head [SEP] tail [SEP] [PAD]..., mask marking real positions.
// Throws ConfigError when pad_len < 4 and DataError when a name has no
// tokenizable content.
TokenizedSequence encode_pair(std::string_view head_name,
                              std::string_view tail_name,
                              const Vocabulary& vocab, std::size_t pad_len);

// Same layout over pre-tokenized pieces; the hot path for training loops
// that cache per-entity pieces.
TokenizedSequence assemble_pair(std::span<const TokenId> head_pieces,
                                std::span<const TokenId> tail_pieces,
                                std::size_t pad_len);

}  // namespace relpred
