#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>

#include "sowreap/bpe.hpp"
#include "sowreap/error.hpp"
#include "sowreap/rng.hpp"
#include "sowreap/synthetic.hpp"
#include "sowreap/transformer.hpp"

using namespace sowreap;

namespace {

std::vector<std::vector<std::string>> corpus_of(std::initializer_list<const char*> sentences) {
  std::vector<std::vector<std::string>> out;
  for (const char* s : sentences) out.push_back(split_whitespace(s));
  return out;
}

// Most frequent adjacent symbol pair over character-split words, ties to the
// smallest pair.
std::pair<std::string, std::string> brute_first_merge(const std::vector<std::vector<std::string>>& corpus) {
  std::map<std::pair<std::string, std::string>, int> counts;
  for (const auto& s : corpus)
    for (const auto& w : s) {
      std::vector<std::string> syms;
      for (char ch : w) syms.emplace_back(1, ch);
      syms.back() += "</w>";
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) ++counts[{syms[i], syms[i + 1]}];
    }
  auto best = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it)
    if (it->second > best->second) best = it;
  return best->first;
}

}  // namespace

TEST_CASE("bpe_train: zero merges is character level") {
  const auto v = BpeVocab::train(corpus_of({"low lower"}), 0);
  CHECK(v.merges().empty());
  const auto ids = v.encode_word("low");
  REQUIRE(ids.size() == 3);
  CHECK(v.symbol(ids[0]) == "l");
  CHECK(v.symbol(ids[2]) == "w</w>");
  CHECK(v.id("<pad>") == nn::kPadId);
  CHECK(v.id("<unk>") == nn::kUnkId);
}

TEST_CASE("bpe_train: first merge is the most frequent pair") {
  const auto corpus = corpus_of({"low lower lowest"});
  const auto v = BpeVocab::train(corpus, 1);
  REQUIRE(v.merges().size() == 1);
  CHECK(v.merges()[0] == brute_first_merge(corpus));
  CHECK(v.merges()[0] == std::pair<std::string, std::string>{"l", "o"});
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<std::string>> c(3);
    for (auto& s : c)
      for (int w = 0; w < 4; ++w) {
        std::string word;
        const int len = 1 + static_cast<int>(rng.below(5));
        for (int i = 0; i < len; ++i) word += static_cast<char>('a' + rng.below(4));
        s.push_back(word);
      }
    const auto t = BpeVocab::train(c, 1);
    if (!t.merges().empty()) CHECK(t.merges()[0] == brute_first_merge(c));
  }
}

TEST_CASE("bpe_train: deterministic and validated") {
  const auto corpus = corpus_of({"the cat sat on the mat", "the dog sat on the log"});
  CHECK(BpeVocab::train(corpus, 20) == BpeVocab::train(corpus, 20));
  CHECK_THROWS_AS(BpeVocab::train(corpus, -1), ContractViolation);
  CHECK_THROWS_AS(BpeVocab::train({}, 3), ContractViolation);
}

TEST_CASE("bpe apply/decode round trip") {
  const auto pairs = synthesize_corpus(100, 4);
  std::vector<std::vector<std::string>> corpus;
  for (const auto& p : pairs) corpus.push_back(p.source);
  const auto v = BpeVocab::train(corpus, 60, synthetic_labels());
  for (const auto& s : corpus) {
    const auto text = join(s);
    CHECK(v.decode(v.apply(text)) == text);
  }
  CHECK(v.apply("").empty());
  const auto ids = v.apply("the zebra");
  CHECK(std::find(ids.begin(), ids.end(), nn::kUnkId) != ids.end());
}

TEST_CASE("bpe labels are atomic symbols") {
  const auto v = BpeVocab::train(corpus_of({"NP saw the VP NP"}), 10, {"NP", "VP"});
  const auto enc = v.encode_words(split_whitespace("NP saw VP"));
  CHECK(enc.pieces[0] == 1);
  CHECK(enc.pieces[2] == 1);
  CHECK(v.is_label(enc.ids[0]));
  CHECK(v.label_id("VP") == enc.ids.back());
  CHECK(v.label_id("saw") == -1);
  CHECK(v.decode_words(enc.ids) == split_whitespace("NP saw VP"));
}

TEST_CASE("bpe serialisation round trip") {
  const auto v = BpeVocab::train(corpus_of({"lower newest widest", "low new wide"}), 15, {"S", "NP"});
  const auto text = v.serialize();
  const auto w = BpeVocab::deserialize(text);
  CHECK(v == w);
  CHECK(w.apply("lowest widen") == v.apply("lowest widen"));
  CHECK(w.labels() == std::vector<std::string>{"NP", "S"});
  CHECK_THROWS_AS(BpeVocab::deserialize("nonsense\n"), FormatError);
  CHECK_THROWS_AS(BpeVocab::deserialize(text.substr(0, text.rfind('\n', text.size() - 2) + 1)), FormatError);
}
