#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace sowreap {

/// Byte-pair-encoding vocabulary. Words are split into UTF-8 characters with
/// an end-of-word marker on the last one ("c</w>"), then merged greedily in
/// rank order. Constituent/POS labels are atomic symbols that never split.
class BpeVocab {
 public:
  static constexpr std::string_view kEndOfWord = "</w>";

  BpeVocab();

  /// Greedy most-frequent-pair merges, ties broken by the lexicographically
  /// smallest pair. Stops early once every word is a single symbol.
  static BpeVocab train(const std::vector<std::vector<std::string>>& corpus, int num_merges,
                        std::vector<std::string> labels = {});

  /// Pieces of one word as ids; a word equal to a registered label maps to
  /// the label id.
  std::vector<int> encode_word(std::string_view word) const;

  struct Encoded {
    std::vector<int> ids;
    std::vector<int> pieces;  // number of ids per input word
  };
  Encoded encode_words(std::span<const std::string> words) const;

  /// Whitespace-tokenised text to ids.
  std::vector<int> apply(std::string_view text) const;
  /// Inverse of apply for text over the training alphabet; special ids are
  /// skipped except unk, which renders as "<unk>".
  std::string decode(std::span<const int> ids) const;
  /// Ids grouped back into words.
  std::vector<std::string> decode_words(std::span<const int> ids) const;

  int size() const { return static_cast<int>(symbols_.size()); }
  int id(std::string_view symbol) const;  // -1 when absent
  const std::string& symbol(int id) const { return symbols_.at(static_cast<std::size_t>(id)); }
  bool is_label(int id) const { return id >= label_begin_ && id < label_end_; }
  int label_id(std::string_view label) const;  // -1 when not a label
  std::vector<std::string> labels() const;
  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }

  /// Text form: header, specials, labels, alphabet, then one merge per line.
  std::string serialize() const;
  static BpeVocab deserialize(std::string_view text);

  bool operator==(const BpeVocab& o) const { return symbols_ == o.symbols_ && merges_ == o.merges_; }

 private:
  int add_symbol(const std::string& s);
  std::vector<std::string> split_chars(std::string_view word) const;
  void rebuild_ranks();

  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> ids_;
  std::vector<std::string> alphabet_;
  std::vector<std::pair<std::string, std::string>> merges_;
  std::unordered_map<std::string, int> ranks_;  // "a b" -> merge rank
  int label_begin_ = 4, label_end_ = 4;
};

}  // namespace sowreap
