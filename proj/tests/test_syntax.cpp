#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <functional>
#include <set>

#include "fixtures.hpp"
#include "sowreap/error.hpp"
#include "sowreap/rng.hpp"
#include "sowreap/synthetic.hpp"
#include "sowreap/syntax.hpp"

using namespace sowreap;

namespace {

const ConstituencyTree* find_span(const ConstituencyTree& t, Span s) {
  if (t.span == s && !t.is_leaf()) return &t;
  for (const auto& c : t.children)
    if (const auto* r = find_span(c, s)) return r;
  return nullptr;
}

void check_structure(const ConstituencyTree& t) {
  if (t.is_leaf()) {
    CHECK(t.children.empty());
    CHECK(t.span.length() == 1);
    CHECK(t.leaf_token->index == t.span.start);
    return;
  }
  REQUIRE_FALSE(t.children.empty());
  CHECK(t.children.front().span.start == t.span.start);
  CHECK(t.children.back().span.end == t.span.end);
  for (std::size_t i = 1; i < t.children.size(); ++i) CHECK(t.children[i].span.start == t.children[i - 1].span.end + 1);
  for (const auto& c : t.children) check_structure(c);
}

bool same_shape(const ConstituencyTree& a, const ConstituencyTree& b) {
  if (a.label != b.label || !(a.span == b.span) || a.children.size() != b.children.size()) return false;
  if (a.is_leaf() != b.is_leaf()) return false;
  if (a.is_leaf() && a.leaf_token->surface != b.leaf_token->surface) return false;
  for (std::size_t i = 0; i < a.children.size(); ++i)
    if (!same_shape(a.children[i], b.children[i])) return false;
  return true;
}

}  // namespace

TEST_CASE("parse_ptb: two-leaf tree") {
  const auto t = parse_ptb("(S (NP (PRP I)) (VP (VBD ran)))");
  CHECK(t.label == "S");
  CHECK(t.span == Span{1, 2});
  const auto y = yield_of(t);
  REQUIRE(y.size() == 2);
  CHECK(y[0].surface == "I");
  CHECK(y[0].pos_tag == "PRP");
  CHECK(y[1].index == 2);
  check_structure(t);
}

TEST_CASE("parse_ptb: malformed input reports an offset") {
  CHECK_THROWS_AS(parse_ptb("(S"), FormatError);
  CHECK_THROWS_AS(parse_ptb("(S (NP (DT the) (NN dog))"), FormatError);
  CHECK_THROWS_AS(parse_ptb("(S ())"), FormatError);
  CHECK_THROWS_AS(parse_ptb(""), FormatError);
  CHECK_THROWS_AS(parse_ptb("(S (NP a b))"), FormatError);
  try {
    parse_ptb("(S (NP (DT the)) ()");
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 17);
  }
}

TEST_CASE("parse_ptb: conditional sentence yield matches bracket counting") {
  const auto t = parse_ptb(fixtures::kConditional);
  const auto expected = fixtures::bracket_words(fixtures::kConditional);
  CHECK(expected.size() == 23);
  CHECK(surfaces(yield_of(t)) == expected);
  CHECK(t.span == Span{1, 23});
  check_structure(t);
  CHECK(join(surfaces(yield_of(t))) ==
        "if at any time in the preparation of this product the integrity of this container is compromised it "
        "should not be used .");
}

TEST_CASE("yield_of: leaf and internal spans") {
  const auto t = parse_ptb("(S (NP (DT the) (JJ big) (NN dog)) (VP (VBD saw) (NP (DT a) (JJ small) (NN cat))))");
  const auto* leaf = &t.children[0].children[1];
  REQUIRE(leaf->is_leaf());
  const auto ly = yield_of(*leaf);
  REQUIRE(ly.size() == 1);
  CHECK(ly[0].surface == "big");

  const auto* np = find_span(t, Span{5, 7});
  REQUIRE(np != nullptr);
  CHECK(np->label == "NP");
  const auto full = surfaces(yield_of(t));
  const std::vector<std::string> slice(full.begin() + 4, full.begin() + 7);
  CHECK(surfaces(yield_of(*np)) == slice);
}

TEST_CASE("to_ptb round-trips to an isomorphic tree") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto t = random_tree(rng, 1 + static_cast<int>(rng.below(20)));
    const auto again = parse_ptb(to_ptb(t));
    CHECK(same_shape(t, again));
    check_structure(again);
  }
  const auto t = parse_ptb(fixtures::kConditional);
  CHECK(to_ptb(parse_ptb(to_ptb(t))) == to_ptb(t));
}

TEST_CASE("parse_dependencies: root, cycles and range errors") {
  const auto d = parse_dependencies("1\tthe\tDT\t2\n2\tdog\tNN\t0\n3\tbarked\tVBD\t2\n");
  CHECK(d.size() == 3);
  CHECK(d.root() == 2);
  CHECK(d.children(2) == std::vector<int>{1, 3});
  CHECK(d.tokens()[2].pos_tag == "VBD");

  CHECK_THROWS_AS(parse_dependencies("1\ta\tDT\t2\n2\tb\tNN\t1\n"), FormatError);
  CHECK_THROWS_AS(parse_dependencies("1\ta\tDT\t0\n2\tb\tNN\t0\n"), FormatError);
  CHECK_THROWS_AS(parse_dependencies("1\ta\tDT\t5\n"), FormatError);
  CHECK_THROWS_AS(parse_dependencies("1\ta\tDT\t2\n2\tb\tNN\t3\n3\tc\tNN\t2\n4\td\tNN\t0\n"), FormatError);
  CHECK_THROWS_AS(parse_dependencies("1\ta\tDT\n"), FormatError);
  CHECK_THROWS_AS(parse_dependencies("2\ta\tDT\t0\n"), FormatError);
}

TEST_CASE("parse_dependencies: depth-first visits every token once") {
  // 10 tokens, heads chosen by hand.
  const std::vector<int> heads = {2, 5, 2, 5, 0, 7, 5, 7, 8, 5};
  std::string text;
  for (int i = 1; i <= 10; ++i)
    text += std::to_string(i) + "\tw" + std::to_string(i) + "\tNN\t" + std::to_string(heads[i - 1]) + "\n";
  const auto d = parse_dependencies(text);
  const auto order = d.depth_first();
  CHECK(order.size() == 10);
  CHECK(std::set<int>(order.begin(), order.end()).size() == 10);
  // Brute-force reachability: walking heads from every token reaches the root.
  for (int i = 1; i <= 10; ++i) {
    int cur = i, steps = 0;
    while (cur != 0 && steps <= 10) cur = heads[cur - 1], ++steps;
    CHECK(cur == 0);
  }
  const auto again = parse_dependencies(to_conll(d));
  CHECK(again.heads() == d.heads());
}

TEST_CASE("parse_dependency_file: blank-line separated sentences") {
  const auto ds = parse_dependency_file("1\ta\tDT\t2\n2\tb\tNN\t0\n\n1\tc\tVB\t0\n");
  REQUIRE(ds.size() == 2);
  CHECK(ds[0].size() == 2);
  CHECK(ds[1].root() == 1);
}

TEST_CASE("apply_permutation: examples") {
  const std::vector<std::string> abc = {"a", "b", "c"};
  CHECK(apply_permutation(std::span<const std::string>(abc), std::vector<int>{1, 2, 3}) == abc);
  const std::vector<std::string> five = {"a", "b", "c", "d", "e"};
  CHECK(apply_permutation(std::span<const std::string>(five), std::vector<int>{4, 5, 1, 2, 3}) ==
        std::vector<std::string>{"d", "e", "a", "b", "c"});
  CHECK_THROWS_AS(apply_permutation(std::span<const std::string>(abc), std::vector<int>{1, 2}), ContractViolation);
  CHECK_THROWS_AS(apply_permutation(std::span<const std::string>(abc), std::vector<int>{1, 1, 2}), ContractViolation);
  CHECK_THROWS_AS(apply_permutation(std::span<const std::string>(abc), std::vector<int>{0, 1, 2}), ContractViolation);
}

TEST_CASE("apply_permutation: inverse round trip") {
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(12));
    auto p = identity_permutation(n);
    shuffle(p.begin(), p.end(), rng);
    std::vector<int> seq(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) seq[static_cast<std::size_t>(i)] = 100 + i;
    const auto inv = inverse_permutation(p);
    CHECK(inv == fixtures::brute_inverse(p));
    const auto once = apply_permutation(std::span<const int>(seq), p);
    CHECK(apply_permutation(std::span<const int>(once), inv) == seq);
    if (n == 8) CHECK(apply_permutation(std::span<const int>(seq), identity_permutation(8)) == seq);
  }
}

TEST_CASE("permutation checks") {
  CHECK(is_permutation(std::vector<int>{2, 3, 1}));
  CHECK_FALSE(is_permutation(std::vector<int>{2, 2, 1}));
  CHECK_FALSE(is_permutation(std::vector<int>{0, 1}));
  CHECK(is_permutation(std::vector<int>{}));
  CHECK_THROWS_AS(check_permutation(std::vector<int>{1, 3}), ContractViolation);
}
