#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sowreap/bpe.hpp"
#include "sowreap/embeddings.hpp"
#include "sowreap/order.hpp"
#include "sowreap/syntax.hpp"
#include "sowreap/transformer.hpp"

namespace sowreap {

struct EngineConfig {
  double abstraction_threshold = 0.6;
  std::vector<std::string> ignored_tags{"DT", "IN", "CD", "MD", "TO", "PRP"};
  int max_candidates = 10;  // per node, counted after filtering; <= 0 means unlimited
  int max_rules = 3;
  int k = 10;
  int beam = 10;  // SOW phrase decoding
  int max_phrase_len = 64;

  bool operator==(const EngineConfig&) const = default;
};

/// Sub-tree t with two abstracted descendants A and B. Node pointers refer
/// into the tree passed to select_segment_pairs and must not outlive it.
struct PhraseTuple {
  const ConstituencyTree* parent = nullptr;
  const ConstituencyTree* a_node = nullptr;
  const ConstituencyTree* b_node = nullptr;
  std::vector<std::string> abstracted_yield;
  std::vector<std::string> tags;        // POS tag per token, label per non-terminal
  std::vector<char> is_nonterminal;
  std::vector<Span> segments;           // sentence span covered by each abstracted position

  int unabstracted_tokens() const;
  double unabstracted_ratio() const;
  std::string text() const;
};

/// Candidate (A, B) pairs among the descendants of t in document order.
std::vector<PhraseTuple> select_segment_pairs(const ConstituencyTree& t, const EngineConfig& config);

/// Builds the tuple for explicit nodes (no filtering).
PhraseTuple make_phrase_tuple(const ConstituencyTree& parent, const ConstituencyTree& a, const ConstituencyTree& b);

struct TransducerOutput {
  std::vector<std::string> tokens;
  double log_prob = 0.0;
};

/// Rewrites an abstracted phrase under an order preference.
class PhraseTransducer {
 public:
  virtual ~PhraseTransducer() = default;
  virtual TransducerOutput transduce(const PhraseTuple& tuple, OrderPreference o) const = 0;
};

/// Returns its input unchanged.
class EchoTransducer : public PhraseTransducer {
 public:
  TransducerOutput transduce(const PhraseTuple& tuple, OrderPreference o) const override;
};

/// SOW seq2seq model decoded with beam search.
class NeuralTransducer : public PhraseTransducer {
 public:
  NeuralTransducer(const nn::Transformer<float>& model, const BpeVocab& vocab, int beam, int max_len = 64);
  TransducerOutput transduce(const PhraseTuple& tuple, OrderPreference o) const override;

  /// Encoder input for an abstracted phrase (also used to build training data).
  static nn::SourceInput make_input(const BpeVocab& vocab, const std::vector<std::string>& tokens,
                                    const std::vector<std::string>& tags, const std::vector<char>& is_nonterminal,
                                    OrderPreference o);

 private:
  const nn::Transformer<float>& model_;
  const BpeVocab& vocab_;
  int beam_;
  int max_len_;
};

struct PhraseReordering {
  std::vector<int> perm;  // over abstracted positions, 1-based
  double score = 0.0;
  OrderPreference preference = OrderPreference::Monotone;
  bool degraded = false;
  std::vector<std::string> output;
};

/// Aligns output tokens to input positions left to right: non-terminals
/// match the leftmost unused equal label, other tokens the most cosine-
/// similar unused terminal (leftmost on ties). Unaligned positions are
/// appended in ascending order and flagged as degraded.
PhraseReordering align_output(const PhraseTuple& tuple, const std::vector<std::string>& output,
                              const EmbeddingProvider& embeddings);

PhraseReordering reorder_phrase(const PhraseTuple& tuple, OrderPreference o, const PhraseTransducer& transducer,
                                const EmbeddingProvider& embeddings);

/// Expands z over the parent's yield: A and B positions take r_a and r_b
/// (relative to their own yields), other positions map to themselves. The
/// result is relative to the parent yield; score is the sum of the parts.
Reordering combine_reorderings(const PhraseReordering& z, const Reordering& r_a, const Reordering& r_b,
                               const PhraseTuple& tuple);

/// Top-k sentence reorderings. Scores are the summed phrase log-probabilities
/// divided by the number of rules (0 for the identity); sorted descending,
/// deduplicated, identity always present.
std::vector<Reordering> reorder_sentence(const ConstituencyTree& tree, const PhraseTransducer& transducer,
                                         const EmbeddingProvider& embeddings, const EngineConfig& config);

}  // namespace sowreap
