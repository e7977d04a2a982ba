#include "sowreap/synthetic.hpp"

#include <algorithm>
#include <functional>
#include <set>

#include "sowreap/error.hpp"

namespace sowreap {

namespace {

const std::vector<std::string> kDeterminers = {"the", "a", "this", "that", "every", "some", "each", "one"};
const std::vector<std::string> kAdjectives = {"old", "red", "big", "small", "quiet", "happy", "dark", "green",
                                              "tall", "cold", "brave", "young", "soft", "calm", "wild", "bright"};
const std::vector<std::string> kNouns = {"dog",    "cat",  "man",   "woman", "child", "bird",  "house", "tree",
                                         "river",  "car",  "book",  "table", "city",  "garden", "horse", "boat",
                                         "doctor", "king", "queen", "friend", "letter", "window", "road", "hill",
                                         "teacher", "farmer", "ship", "door", "song", "lamp", "chair", "fox"};
const std::vector<std::string> kVerbs = {"saw",    "found",  "took",   "liked",  "chased", "painted", "opened",
                                         "carried", "watched", "helped", "moved",  "built",  "sold",    "kept",
                                         "followed", "called", "pushed", "washed", "cleaned", "visited"};
const std::vector<std::string> kPrepositions = {"in", "near", "behind", "under", "with", "from", "over", "beside"};
const std::vector<std::string> kAdverbs = {"quickly", "slowly", "often", "never", "gladly", "rarely", "today",
                                           "again"};

class Builder {
 public:
  explicit Builder(Rng& rng) : rng_(rng) {}

  ConstituencyTree sentence() {
    ConstituencyTree s{"S", {}, {}, std::nullopt};
    if (rng_.bernoulli(0.25)) s.children.push_back(pp());
    s.children.push_back(np());
    s.children.push_back(vp());
    s.children.push_back(leaf(".", "."));
    return s;
  }

 private:
  ConstituencyTree leaf(const std::string& tag, const std::string& word) {
    ConstituencyTree t{tag, {}, {}, Token{word, 0, tag}};
    return t;
  }

  ConstituencyTree word(const std::string& tag, const std::vector<std::string>& pool) {
    std::vector<std::string> free;
    for (const auto& w : pool)
      if (!used_.count(w)) free.push_back(w);
    SOWREAP_REQUIRE(!free.empty(), "synthetic grammar ran out of words");
    const auto& w = free[rng_.below(free.size())];
    used_.insert(w);
    return leaf(tag, w);
  }

  ConstituencyTree np() {
    ConstituencyTree n{"NP", {}, {}, std::nullopt};
    n.children.push_back(word("DT", kDeterminers));
    const double u = rng_.uniform();
    if (u < 0.4) {
      n.children.push_back(word("JJ", kAdjectives));
    } else if (u < 0.5) {
      n.children.push_back(word("JJ", kAdjectives));
      n.children.push_back(word("JJ", kAdjectives));
    }
    n.children.push_back(word("NN", kNouns));
    return n;
  }

  ConstituencyTree pp() {
    ConstituencyTree p{"PP", {}, {}, std::nullopt};
    p.children.push_back(word("IN", kPrepositions));
    p.children.push_back(np());
    return p;
  }

  ConstituencyTree advp() {
    ConstituencyTree a{"ADVP", {}, {}, std::nullopt};
    a.children.push_back(word("RB", kAdverbs));
    return a;
  }

  ConstituencyTree vp() {
    ConstituencyTree v{"VP", {}, {}, std::nullopt};
    const double u = rng_.uniform();
    if (u < 0.15) v.children.push_back(advp());
    v.children.push_back(word("VBD", kVerbs));
    v.children.push_back(np());
    if (u >= 0.15 && u < 0.5) v.children.push_back(pp());
    if (u >= 0.5 && u < 0.65) v.children.push_back(advp());
    return v;
  }

  Rng& rng_;
  std::set<std::string> used_;
};

void permute_children(ConstituencyTree& t, Rng& rng, double prob) {
  for (auto& c : t.children) permute_children(c, rng, prob);
  std::vector<std::size_t> movable;
  for (std::size_t i = 0; i < t.children.size(); ++i)
    if (t.children[i].label != ".") movable.push_back(i);
  if (movable.size() < 2 || !rng.bernoulli(prob)) return;
  std::vector<std::size_t> order(movable.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  while (std::is_sorted(order.begin(), order.end())) shuffle(order.begin(), order.end(), rng);
  std::vector<ConstituencyTree> moved;
  for (auto i : order) moved.push_back(t.children[movable[i]]);
  for (std::size_t i = 0; i < movable.size(); ++i) t.children[movable[i]] = std::move(moved[i]);
}

}  // namespace

void renumber(ConstituencyTree& tree, int start) {
  if (tree.is_leaf()) {
    tree.leaf_token->index = start;
    tree.span = {start, start};
    return;
  }
  int pos = start;
  for (auto& c : tree.children) {
    renumber(c, pos);
    pos = c.span.end + 1;
  }
  tree.span = {start, pos - 1};
}

DependencyTree head_rule_dependencies(const ConstituencyTree& tree) {
  const auto tokens = yield_of(tree);
  std::vector<int> heads(tokens.size(), 0);
  auto head_child = [](const ConstituencyTree& n) -> std::size_t {
    const std::string want = n.label == "S"      ? "VP"
                             : n.label == "VP"   ? "VBD"
                             : n.label == "NP"   ? "NN"
                             : n.label == "PP"   ? "IN"
                             : n.label == "ADVP" ? "RB"
                                                 : "";
    if (!want.empty())
      for (std::size_t i = n.children.size(); i-- > 0;)
        if (n.children[i].label == want) return i;
    return 0;
  };
  std::function<int(const ConstituencyTree&)> visit = [&](const ConstituencyTree& n) -> int {
    if (n.is_leaf()) return n.leaf_token->index;
    std::vector<int> hw;
    for (const auto& c : n.children) hw.push_back(visit(c));
    const std::size_t h = head_child(n);
    for (std::size_t i = 0; i < hw.size(); ++i)
      if (i != h) heads[static_cast<std::size_t>(hw[i] - tree.span.start)] = hw[h];
    return hw[h];
  };
  const int root = visit(tree);
  heads[static_cast<std::size_t>(root - tree.span.start)] = 0;
  std::vector<Token> toks = tokens;
  for (std::size_t i = 0; i < toks.size(); ++i) toks[i].index = static_cast<int>(i) + 1;
  for (auto& h : heads)
    if (h > 0) h = h - tree.span.start + 1;
  return DependencyTree(std::move(toks), std::move(heads));
}

SyntheticPair synthesize_pair(Rng& rng, const SyntheticConfig& cfg) {
  SOWREAP_REQUIRE(cfg.min_len <= cfg.max_len, "synthetic: min_len > max_len");
  for (;;) {
    Builder b(rng);
    ConstituencyTree src = b.sentence();
    renumber(src);
    if (src.size() < cfg.min_len || src.size() > cfg.max_len) continue;
    ConstituencyTree tgt = src;
    if (!rng.bernoulli(cfg.identity_fraction)) permute_children(tgt, rng, cfg.reorder_prob);
    std::vector<int> perm;
    for (const auto& t : yield_of(tgt)) perm.push_back(t.index);
    renumber(tgt);
    auto dep = head_rule_dependencies(src);
    SyntheticPair p{std::move(src), std::move(tgt), std::move(dep), std::move(perm), {}, {}};
    p.source = surfaces(yield_of(p.source_tree));
    p.target = surfaces(yield_of(p.target_tree));
    return p;
  }
}

std::vector<SyntheticPair> synthesize_corpus(std::size_t n, std::uint64_t seed, const SyntheticConfig& cfg) {
  Rng rng = Rng::stream(seed, "synthetic");
  std::vector<SyntheticPair> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(synthesize_pair(rng, cfg));
  return out;
}

CorpusRecord to_corpus_record(const SyntheticPair& pair, const std::string& id) {
  return {id, pair.source, pair.target, to_ptb(pair.source_tree), to_ptb(pair.target_tree), to_conll(pair.source_dep),
          1.0};
}

std::vector<std::string> synthetic_labels() {
  return {"S", "NP", "VP", "PP", "ADVP", "DT", "JJ", "NN", "VBD", "IN", "RB", "."};
}

ConstituencyTree random_tree(Rng& rng, int n) {
  static const std::vector<std::string> kPhrase = {"S", "NP", "VP", "PP", "SBAR", "ADJP", "ADVP"};
  static const std::vector<std::string> kPos = {"DT", "IN", "CD", "MD", "TO", "PRP", "NN", "VB", "JJ", "RB", "VBZ"};
  int next_word = 0;
  std::function<ConstituencyTree(int)> build = [&](int len) -> ConstituencyTree {
    if (len == 1) {
      const auto& tag = kPos[rng.below(kPos.size())];
      ConstituencyTree leaf{tag, {}, {}, Token{"w" + std::to_string(next_word++), 0, tag}};
      if (rng.bernoulli(0.1)) return ConstituencyTree{kPhrase[rng.below(kPhrase.size())], {std::move(leaf)}, {}, {}};
      return leaf;
    }
    ConstituencyTree node{kPhrase[rng.below(kPhrase.size())], {}, {}, std::nullopt};
    if (rng.bernoulli(0.05)) {  // unary chain
      node.children.push_back(build(len));
      return node;
    }
    const int parts = 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::min(len, 4) - 1)));
    std::vector<int> cuts;
    while (static_cast<int>(cuts.size()) < parts - 1) {
      const int c = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(len - 1)));
      if (std::find(cuts.begin(), cuts.end(), c) == cuts.end()) cuts.push_back(c);
    }
    std::sort(cuts.begin(), cuts.end());
    int prev = 0;
    cuts.push_back(len);
    for (int c : cuts) {
      node.children.push_back(build(c - prev));
      prev = c;
    }
    return node;
  };
  SOWREAP_REQUIRE(n >= 1, "random_tree: n must be >= 1");
  ConstituencyTree t = build(n);
  renumber(t);
  return t;
}

}  // namespace sowreap
