#include "sowreap/bpe.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "sowreap/error.hpp"
#include "sowreap/syntax.hpp"
#include "sowreap/transformer.hpp"

namespace sowreap {

namespace {

constexpr const char* kSpecials[] = {"<pad>", "<s>", "</s>", "<unk>"};
constexpr std::string_view kHeader = "#sowreap-bpe v1";

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;  // stray continuation byte: treat as its own character
}

}  // namespace

BpeVocab::BpeVocab() {
  for (const char* s : kSpecials) add_symbol(s);
  static_assert(nn::kPadId == 0 && nn::kBosId == 1 && nn::kEosId == 2 && nn::kUnkId == 3);
}

int BpeVocab::add_symbol(const std::string& s) {
  auto it = ids_.find(s);
  if (it != ids_.end()) return it->second;
  const int id = static_cast<int>(symbols_.size());
  symbols_.push_back(s);
  ids_.emplace(s, id);
  return id;
}

int BpeVocab::id(std::string_view symbol) const {
  auto it = ids_.find(std::string(symbol));
  return it == ids_.end() ? -1 : it->second;
}

int BpeVocab::label_id(std::string_view label) const {
  const int i = id(label);
  return is_label(i) ? i : -1;
}

std::vector<std::string> BpeVocab::labels() const {
  return {symbols_.begin() + label_begin_, symbols_.begin() + label_end_};
}

std::vector<std::string> BpeVocab::split_chars(std::string_view word) const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < word.size();) {
    const std::size_t n = std::min(utf8_length(static_cast<unsigned char>(word[i])), word.size() - i);
    out.emplace_back(word.substr(i, n));
    i += n;
  }
  if (!out.empty()) out.back() += kEndOfWord;
  return out;
}

void BpeVocab::rebuild_ranks() {
  ranks_.clear();
  for (std::size_t r = 0; r < merges_.size(); ++r)
    ranks_.emplace(merges_[r].first + " " + merges_[r].second, static_cast<int>(r));
}

BpeVocab BpeVocab::train(const std::vector<std::vector<std::string>>& corpus, int num_merges,
                         std::vector<std::string> labels) {
  SOWREAP_REQUIRE(num_merges >= 0, "bpe_train: num_merges must be non-negative");
  SOWREAP_REQUIRE(!corpus.empty(), "bpe_train: empty corpus");
  BpeVocab v;
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  for (const auto& l : labels) v.add_symbol(l);
  v.label_end_ = v.size();

  std::set<std::string> label_set(labels.begin(), labels.end());
  std::map<std::string, long> word_freq;
  for (const auto& sent : corpus)
    for (const auto& w : sent)
      if (!w.empty() && !label_set.count(w)) ++word_freq[w];

  std::vector<std::pair<std::vector<std::string>, long>> words;
  std::set<std::string> alphabet;
  for (const auto& [w, f] : word_freq) {
    auto chars = v.split_chars(w);
    alphabet.insert(chars.begin(), chars.end());
    words.emplace_back(std::move(chars), f);
  }
  v.alphabet_.assign(alphabet.begin(), alphabet.end());
  for (const auto& a : v.alphabet_) v.add_symbol(a);

  for (int m = 0; m < num_merges; ++m) {
    std::map<std::pair<std::string, std::string>, long> counts;
    for (const auto& [syms, f] : words)
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) counts[{syms[i], syms[i + 1]}] += f;
    if (counts.empty()) break;
    // std::map iterates pairs in lexicographic order, so the first maximum wins ties.
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it)
      if (it->second > best->second) best = it;
    const auto [a, b] = best->first;
    const std::string merged = a + b;
    v.merges_.emplace_back(a, b);
    v.add_symbol(merged);
    for (auto& [syms, f] : words) {
      std::vector<std::string> next;
      next.reserve(syms.size());
      for (std::size_t i = 0; i < syms.size(); ++i) {
        if (i + 1 < syms.size() && syms[i] == a && syms[i + 1] == b) {
          next.push_back(merged);
          ++i;
        } else {
          next.push_back(syms[i]);
        }
      }
      syms = std::move(next);
    }
  }
  v.rebuild_ranks();
  return v;
}

std::vector<int> BpeVocab::encode_word(std::string_view word) const {
  if (word.empty()) return {};
  if (const int l = label_id(word); l >= 0) return {l};
  auto syms = split_chars(word);
  while (syms.size() > 1) {
    int best_rank = -1;
    std::size_t best_i = 0;
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
      auto it = ranks_.find(syms[i] + " " + syms[i + 1]);
      if (it != ranks_.end() && (best_rank < 0 || it->second < best_rank)) {
        best_rank = it->second;
        best_i = i;
      }
    }
    if (best_rank < 0) break;
    const auto& [a, b] = merges_[static_cast<std::size_t>(best_rank)];
    std::vector<std::string> next;
    next.reserve(syms.size());
    for (std::size_t i = 0; i < syms.size(); ++i) {
      if (i >= best_i && i + 1 < syms.size() && syms[i] == a && syms[i + 1] == b) {
        next.push_back(a + b);
        ++i;
      } else {
        next.push_back(syms[i]);
      }
    }
    syms = std::move(next);
  }
  std::vector<int> out;
  out.reserve(syms.size());
  for (const auto& s : syms) {
    const int i = id(s);
    out.push_back(i >= 0 ? i : nn::kUnkId);
  }
  return out;
}

BpeVocab::Encoded BpeVocab::encode_words(std::span<const std::string> words) const {
  Encoded out;
  for (const auto& w : words) {
    const auto ids = encode_word(w);
    out.ids.insert(out.ids.end(), ids.begin(), ids.end());
    out.pieces.push_back(static_cast<int>(ids.size()));
  }
  return out;
}

std::vector<int> BpeVocab::apply(std::string_view text) const {
  const auto words = split_whitespace(text);
  return encode_words(words).ids;
}

std::vector<std::string> BpeVocab::decode_words(std::span<const int> ids) const {
  std::vector<std::string> words;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) words.push_back(std::move(cur));
    cur.clear();
  };
  for (int i : ids) {
    if (i < 0 || i >= size() || i == nn::kPadId || i == nn::kBosId || i == nn::kEosId) continue;
    if (i == nn::kUnkId) {
      cur += "<unk>";
      continue;
    }
    if (is_label(i)) {
      flush();
      words.push_back(symbols_[static_cast<std::size_t>(i)]);
      continue;
    }
    const auto& s = symbols_[static_cast<std::size_t>(i)];
    if (s.ends_with(kEndOfWord)) {
      cur += s.substr(0, s.size() - kEndOfWord.size());
      flush();
    } else {
      cur += s;
    }
  }
  flush();
  return words;
}

std::string BpeVocab::decode(std::span<const int> ids) const {
  const auto words = decode_words(ids);
  return join(words);
}

std::string BpeVocab::serialize() const {
  std::ostringstream os;
  os << kHeader << "\n";
  os << "specials";
  for (const char* s : kSpecials) os << ' ' << s;
  os << "\nlabels";
  for (int i = label_begin_; i < label_end_; ++i) os << ' ' << symbols_[static_cast<std::size_t>(i)];
  os << "\nalphabet";
  for (const auto& a : alphabet_) os << ' ' << a;
  os << "\nmerges " << merges_.size() << "\n";
  for (const auto& [a, b] : merges_) os << a << ' ' << b << "\n";
  return os.str();
}

BpeVocab BpeVocab::deserialize(std::string_view text) {
  std::istringstream is{std::string(text)};
  std::string line;
  std::size_t offset = 0;
  auto next_line = [&](const char* what) {
    if (!std::getline(is, line)) throw FormatError(std::string("bpe vocab: missing ") + what, offset);
    offset += line.size() + 1;
    return split_whitespace(line);
  };
  next_line("header");
  if (line != kHeader) throw FormatError("bpe vocab: bad header '" + line + "'", 0);
  auto fields = next_line("specials");
  if (fields.empty() || fields[0] != "specials" || fields.size() != 5)
    throw FormatError("bpe vocab: bad specials line", offset);
  BpeVocab v;
  fields = next_line("labels");
  if (fields.empty() || fields[0] != "labels") throw FormatError("bpe vocab: bad labels line", offset);
  for (std::size_t i = 1; i < fields.size(); ++i) v.add_symbol(fields[i]);
  v.label_end_ = v.size();
  fields = next_line("alphabet");
  if (fields.empty() || fields[0] != "alphabet") throw FormatError("bpe vocab: bad alphabet line", offset);
  v.alphabet_.assign(fields.begin() + 1, fields.end());
  for (const auto& a : v.alphabet_) v.add_symbol(a);
  fields = next_line("merges");
  if (fields.size() != 2 || fields[0] != "merges") throw FormatError("bpe vocab: bad merges line", offset);
  const long n = std::stol(fields[1]);
  for (long m = 0; m < n; ++m) {
    fields = next_line("merge rule");
    if (fields.size() != 2) throw FormatError("bpe vocab: merge rule needs two symbols", offset);
    v.merges_.emplace_back(fields[0], fields[1]);
    v.add_symbol(fields[0] + fields[1]);
  }
  v.rebuild_ranks();
  return v;
}

}  // namespace sowreap
