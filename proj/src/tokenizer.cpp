#include "relpred/tokenizer.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "relpred/errors.hpp"

namespace relpred {

namespace {

constexpr std::string_view kClsToken = "[CLS]";
constexpr std::string_view kSepToken = "[SEP]";
constexpr std::string_view kPadToken = "[PAD]";
constexpr std::string_view kUnkToken = "[UNK]";

// Byte length of the UTF-8 sequence starting at src[i]; malformed lead bytes
// are consumed one byte at a time.
std::size_t sequence_length(std::string_view src, std::size_t i) {
  const auto lead = static_cast<unsigned char>(src[i]);
  std::size_t len = 1;
  if (lead >= 0xF0) {
    len = 4;
  } else if (lead >= 0xE0) {
    len = 3;
  } else if (lead >= 0xC0) {
    len = 2;
  }
  return std::min(len, src.size() - i);
}

std::uint32_t decode_codepoint(std::string_view seq) {
  const auto byte = [&seq](std::size_t i) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(seq[i]));
  };
  switch (seq.size()) {
    case 2:
      return ((byte(0) & 0x1F) << 6) | (byte(1) & 0x3F);
    case 3:
      return ((byte(0) & 0x0F) << 12) | ((byte(1) & 0x3F) << 6) |
             (byte(2) & 0x3F);
    case 4:
      return ((byte(0) & 0x07) << 18) | ((byte(1) & 0x3F) << 12) |
             ((byte(2) & 0x3F) << 6) | (byte(3) & 0x3F);
    default:
      return byte(0);
  }
}

bool is_unicode_space(std::uint32_t cp) {
  switch (cp) {
    case 0x09:
    case 0x0A:
    case 0x0B:
    case 0x0C:
    case 0x0D:
    case 0x20:
    case 0x85:
    case 0xA0:
    case 0x1680:
    case 0x2028:
    case 0x2029:
    case 0x202F:
    case 0x205F:
    case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

// Character boundaries of a word: offsets[k] is the byte offset of the k-th
// character; offsets.back() == word.size().
std::vector<std::size_t> char_offsets(std::string_view word) {
  std::vector<std::size_t> offsets;
  std::size_t i = 0;
  while (i < word.size()) {
    offsets.push_back(i);
    i += sequence_length(word, i);
  }
  offsets.push_back(word.size());
  return offsets;
}

}  // namespace

std::vector<std::string> whitespace_split(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t len = sequence_length(text, i);
    const std::string_view seq = text.substr(i, len);
    if (is_unicode_space(decode_codepoint(seq))) {
      if (!current.empty()) {
        words.push_back(std::move(current));
        current.clear();
      }
    } else {
      current.append(seq);
    }
    i += len;
  }
  if (!current.empty()) {
    words.push_back(std::move(current));
  }
  return words;
}

void Vocabulary::push_token(std::string token) {
  const auto id = static_cast<TokenId>(tokens_.size());
  ids_.emplace(token, id);
  tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::train(const std::vector<std::string>& corpus,
                             std::size_t max_size) {
  // Pass 1: word frequencies (first-appearance order preserved for ties)
  // and the single-character inventory.
  std::unordered_map<std::string, std::size_t> word_count;
  std::vector<std::string> word_order;
  std::unordered_map<std::string, std::size_t> char_first_seen;
  std::vector<std::string> char_order;
  for (const std::string& name : corpus) {
    for (std::string& word : whitespace_split(name)) {
      std::size_t i = 0;
      while (i < word.size()) {
        const std::size_t len = sequence_length(word, i);
        std::string ch = word.substr(i, len);
        if (char_first_seen.emplace(ch, char_order.size()).second) {
          char_order.push_back(std::move(ch));
        }
        i += len;
      }
      auto [it, inserted] = word_count.emplace(std::move(word), 1);
      if (inserted) {
        word_order.push_back(it->first);
      } else {
        ++it->second;
      }
    }
  }

  const std::size_t floor = kNumSpecials + char_order.size();
  if (max_size < floor) {
    throw ConfigError("vocabulary max_size " + std::to_string(max_size) +
                      " is below the " + std::to_string(floor) +
                      " entries needed for specials plus observed characters");
  }

  Vocabulary vocab;
  vocab.max_size_ = max_size;
  vocab.push_token(std::string(kClsToken));
  vocab.push_token(std::string(kSepToken));
  vocab.push_token(std::string(kPadToken));
  vocab.push_token(std::string(kUnkToken));
  for (const std::string& ch : char_order) {
    vocab.push_token(ch);
  }

  // Rank words by frequency, first appearance breaking ties.
  std::vector<std::size_t> order(word_order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    order[i] = i;
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return word_count.at(word_order[a]) >
                            word_count.at(word_order[b]);
                   });
  for (std::size_t idx : order) {
    if (vocab.size() >= max_size) {
      break;
    }
    const std::string& word = word_order[idx];
    if (vocab.ids_.find(word) == vocab.ids_.end()) {
      vocab.push_token(word);
    }
  }
  return vocab;
}

TokenId Vocabulary::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? -1 : it->second;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  j["format"] = "relpred-vocab";
  j["version"] = 1;
  j["max_size"] = max_size_;
  j["specials"] = {{"cls", kCls}, {"sep", kSep}, {"pad", kPad}, {"unk", kUnk}};
  nlohmann::ordered_json tokens = nlohmann::ordered_json::object();
  for (std::size_t id = 0; id < tokens_.size(); ++id) {
    tokens[tokens_[id]] = id;
  }
  j["tokens"] = std::move(tokens);
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot write vocabulary: " + path.string());
  }
  out << j.dump(1) << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open vocabulary: " + path.string());
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("invalid vocabulary JSON in " + path.string() + ": " +
                    e.what());
  }
  if (j.value("format", "") != "relpred-vocab") {
    throw DataError(path.string() + ": not a vocabulary file");
  }
  const auto& tokens = j.at("tokens");
  Vocabulary vocab;
  vocab.max_size_ = j.at("max_size").get<std::size_t>();
  vocab.tokens_.resize(tokens.size());
  for (auto it = tokens.begin(); it != tokens.end(); ++it) {
    const auto id = it.value().get<std::size_t>();
    if (id >= vocab.tokens_.size() || !vocab.tokens_[id].empty()) {
      throw DataError(path.string() + ": token ids are not dense and unique");
    }
    vocab.tokens_[id] = it.key();
  }
  for (std::size_t id = 0; id < vocab.tokens_.size(); ++id) {
    vocab.ids_.emplace(vocab.tokens_[id], static_cast<TokenId>(id));
  }
  for (std::string_view special : {kClsToken, kSepToken, kPadToken, kUnkToken}) {
    if (vocab.find(special) < 0) {
      throw DataError(path.string() + ": missing special token " +
                      std::string(special));
    }
  }
  return vocab;
}

std::vector<TokenId> tokenize_word(std::string_view word,
                                   const Vocabulary& vocab) {
  std::vector<TokenId> pieces;
  if (word.empty()) {
    return pieces;
  }
  const TokenId whole = vocab.find(word);
  if (whole >= 0) {
    pieces.push_back(whole);
    return pieces;
  }
  const std::vector<std::size_t> offsets = char_offsets(word);
  const std::size_t chars = offsets.size() - 1;
  std::size_t start = 0;
  while (start < chars) {
    // Longest known prefix of the remaining characters; single characters
    // are the base case and fall back to [UNK] when unseen.
    std::size_t taken = 0;
    TokenId match = -1;
    for (std::size_t end = chars; end > start; --end) {
      const TokenId id = vocab.find(word.substr(
          offsets[start], offsets[end] - offsets[start]));
      if (id >= 0) {
        taken = end - start;
        match = id;
        break;
      }
    }
    if (match < 0) {
      pieces.push_back(Vocabulary::kUnk);
      start += 1;
    } else {
      pieces.push_back(match);
      start += taken;
    }
  }
  return pieces;
}

std::vector<TokenId> name_pieces(std::string_view name,
                                 const Vocabulary& vocab) {
  std::vector<TokenId> pieces;
  for (const std::string& word : whitespace_split(name)) {
    const std::vector<TokenId> word_pieces = tokenize_word(word, vocab);
    pieces.insert(pieces.end(), word_pieces.begin(), word_pieces.end());
  }
  return pieces;
}

TruncatedLayout truncate_pair_lengths(std::size_t head_len,
                                      std::size_t tail_len,
                                      std::size_t pad_len) {
  if (pad_len < 4) {
    throw ConfigError("pad_len must be at least 4, got " +
                      std::to_string(pad_len));
  }
  TruncatedLayout layout{head_len, tail_len, true};
  auto total = [&layout] {
    return layout.head_len + layout.tail_len + (layout.trailing_sep ? 3 : 2);
  };
  while (total() > pad_len &&
         (layout.head_len > 1 || layout.tail_len > 1)) {
    if (layout.head_len >= layout.tail_len && layout.head_len > 1) {
      --layout.head_len;
    } else {
      --layout.tail_len;
    }
  }
  if (total() > pad_len) {
    layout.trailing_sep = false;  // only reachable at pad_len == 4
  }
  return layout;
}

TokenizedSequence assemble_pair(std::span<const TokenId> head_pieces,
                                std::span<const TokenId> tail_pieces,
                                std::size_t pad_len) {
  if (head_pieces.empty() || tail_pieces.empty()) {
    throw DataError("cannot encode a pair with an empty entity name");
  }
  const TruncatedLayout layout =
      truncate_pair_lengths(head_pieces.size(), tail_pieces.size(), pad_len);

  TokenizedSequence seq;
  seq.input_ids.reserve(pad_len);
  seq.input_ids.push_back(Vocabulary::kCls);
  seq.input_ids.insert(seq.input_ids.end(), head_pieces.begin(),
                       head_pieces.begin() + static_cast<std::ptrdiff_t>(layout.head_len));
  seq.input_ids.push_back(Vocabulary::kSep);
  seq.input_ids.insert(seq.input_ids.end(), tail_pieces.begin(),
                       tail_pieces.begin() + static_cast<std::ptrdiff_t>(layout.tail_len));
  if (layout.trailing_sep) {
    seq.input_ids.push_back(Vocabulary::kSep);
  }

  const std::size_t real = seq.input_ids.size();
  seq.input_ids.resize(pad_len, Vocabulary::kPad);
  seq.attention_mask.assign(pad_len, 0);
  std::fill(seq.attention_mask.begin(),
            seq.attention_mask.begin() + static_cast<std::ptrdiff_t>(real), 1);
  return seq;
}

TokenizedSequence encode_pair(std::string_view head_name,
                              std::string_view tail_name,
                              const Vocabulary& vocab, std::size_t pad_len) {
  if (pad_len < 4) {
    throw ConfigError("pad_len must be at least 4, got " +
                      std::to_string(pad_len));
  }
  return assemble_pair(name_pieces(head_name, vocab),
                       name_pieces(tail_name, vocab), pad_len);
}

}  // namespace relpred
