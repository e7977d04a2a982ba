#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sowreap/error.hpp"

namespace sowreap {

struct Token {
  std::string surface;
  int index = 0;  // 1-based position in the sentence
  std::string pos_tag;
};

/// Closed token interval [start, end], 1-based.
struct Span {
  int start = 0;
  int end = -1;

  int length() const { return end - start + 1; }
  bool contains(const Span& o) const { return start <= o.start && o.end <= end; }
  bool overlaps(const Span& o) const { return !(end < o.start || o.end < start); }
  bool operator==(const Span&) const = default;
};

/// Constituency tree node. Leaves are preterminals: the label is the POS tag
/// and the node carries exactly one token.
struct ConstituencyTree {
  std::string label;
  std::vector<ConstituencyTree> children;
  Span span;
  std::optional<Token> leaf_token;

  bool is_leaf() const { return leaf_token.has_value(); }
  int size() const { return span.length(); }
};

/// Token sequence plus head map (head[i-1] is the head of token i, 0 = root).
class DependencyTree {
 public:
  DependencyTree(std::vector<Token> tokens, std::vector<int> heads);

  const std::vector<Token>& tokens() const { return tokens_; }
  const std::vector<int>& heads() const { return heads_; }
  int size() const { return static_cast<int>(tokens_.size()); }
  int root() const { return root_; }
  int head(int index) const { return heads_.at(index - 1); }
  /// Dependents of `index` in increasing source order; index 0 gives the root.
  const std::vector<int>& children(int index) const { return children_.at(index); }
  /// Pre-order traversal from the root, children in source order.
  std::vector<int> depth_first() const;

 private:
  std::vector<Token> tokens_;
  std::vector<int> heads_;
  std::vector<std::vector<int>> children_;
  int root_ = 0;
};

/// One phrase-level rewrite contributing to a sentence reordering.
struct RuleApplication {
  int level = 0;  // depth of the rule below the root rule
  std::string abstracted_input;
  std::string output;
};

/// A permutation of 1-based source indices: output[i] = source[perm[i]].
struct Reordering {
  std::vector<int> perm;
  double score = 0.0;
  std::vector<RuleApplication> provenance;

  int size() const { return static_cast<int>(perm.size()); }
  int rule_count() const { return static_cast<int>(provenance.size()); }
};

ConstituencyTree parse_ptb(std::string_view text);
std::string to_ptb(const ConstituencyTree& tree);

DependencyTree parse_dependencies(std::string_view text);
/// Sentences separated by blank lines.
std::vector<DependencyTree> parse_dependency_file(std::string_view text);
std::string to_conll(const DependencyTree& tree);

std::vector<Token> yield_of(const ConstituencyTree& node);
std::vector<std::string> surfaces(std::span<const Token> tokens);
std::string join(std::span<const std::string> words, std::string_view sep = " ");
std::vector<std::string> split_whitespace(std::string_view text);

bool is_permutation(std::span<const int> perm);
void check_permutation(std::span<const int> perm);
std::vector<int> identity_permutation(int n);
std::vector<int> inverse_permutation(std::span<const int> perm);

template <typename T>
std::vector<T> apply_permutation(std::span<const T> seq, std::span<const int> perm) {
  SOWREAP_REQUIRE(seq.size() == perm.size(), "apply_permutation: length mismatch");
  check_permutation(perm);
  std::vector<T> out;
  out.reserve(seq.size());
  for (int p : perm) out.push_back(seq[static_cast<std::size_t>(p - 1)]);
  return out;
}

template <typename T>
std::vector<T> apply_permutation(const std::vector<T>& seq, const Reordering& r) {
  return apply_permutation(std::span<const T>(seq), std::span<const int>(r.perm));
}

/// Visit every node in pre-order.
template <typename F>
void for_each_node(const ConstituencyTree& t, F&& f, int depth = 0) {
  f(t, depth);
  for (const auto& c : t.children) for_each_node(c, f, depth + 1);
}

}  // namespace sowreap
