#pragma once

#include <string>
#include <vector>

#include "sowreap/align.hpp"
#include "sowreap/rng.hpp"
#include "sowreap/syntax.hpp"

namespace sowreap {

/// Toy paraphrase task: sentences from a small phrase-structure grammar
/// (no word repeated within a sentence) whose targets permute the children
/// of some constituents. Dependencies follow head rules, so every dependency
/// subtree is a contiguous block in both source and target.
struct SyntheticConfig {
  int min_len = 8;
  int max_len = 16;
  double reorder_prob = 0.5;        // per constituent with >= 2 movable children
  double identity_fraction = 0.1;   // pairs left unreordered
};

struct SyntheticPair {
  ConstituencyTree source_tree;
  ConstituencyTree target_tree;
  DependencyTree source_dep;
  std::vector<int> perm;  // target = apply_permutation(source, perm)
  std::vector<std::string> source;
  std::vector<std::string> target;
};

SyntheticPair synthesize_pair(Rng& rng, const SyntheticConfig& cfg = {});
std::vector<SyntheticPair> synthesize_corpus(std::size_t n, std::uint64_t seed, const SyntheticConfig& cfg = {});

/// Corpus record with parses and dependencies serialised; para_score 1.
CorpusRecord to_corpus_record(const SyntheticPair& pair, const std::string& id);

/// Every POS tag and constituent label the grammar can produce.
std::vector<std::string> synthetic_labels();

/// Random bracketing over n tokens with labels drawn from a mixed tag set
/// (including the ignored function-word tags); used by property tests.
ConstituencyTree random_tree(Rng& rng, int n);

/// Head-rule dependencies for a tree (head child per label, else leftmost).
DependencyTree head_rule_dependencies(const ConstituencyTree& tree);

/// Recomputes spans and leaf indices after children were reordered.
void renumber(ConstituencyTree& tree, int start = 1);

}  // namespace sowreap
