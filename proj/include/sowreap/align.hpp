#pragma once

#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "sowreap/embeddings.hpp"
#include "sowreap/order.hpp"
#include "sowreap/syntax.hpp"

namespace sowreap {

struct CorpusStats {
  long sentences = 0;  // M
  std::unordered_map<std::string, long> doc_freq;

  void add(std::span<const std::string> sentence);
  static CorpusStats build(std::span<const std::vector<std::string>> sentences);
};

/// -log(df / M) with df floored at 1 for unseen words.
double compute_idf(const CorpusStats& stats, const std::string& w);

struct PhraseScore {
  double recall = 0.0;     // R: source tokens matched into the target phrase
  double precision = 0.0;  // P: target tokens matched into the source phrase
  double f = 0.0;
};

/// Harmonic mean when P and R share a sign, 0 otherwise (stays within
/// [min(P, R), max(P, R)]).
double harmonic_f(double precision, double recall);

/// Idf-weighted greedy matching over precomputed vectors; a side whose idf
/// weights sum to zero falls back to the unweighted mean.
PhraseScore phrase_similarity(std::span<const std::vector<double>> p_vecs, std::span<const double> p_idf,
                              std::span<const std::vector<double>> q_vecs, std::span<const double> q_idf);

/// Token-level convenience form (context-free lookups).
PhraseScore phrase_similarity(std::span<const std::string> p, std::span<const std::string> q,
                              const EmbeddingProvider& provider, const CorpusStats& stats);

struct Phrase {
  Span span;
  std::string label;
};

/// Constituent spans of length >= min_len in pre-order; a span shared by a
/// unary chain is listed once with its topmost label.
std::vector<Phrase> candidate_phrases(const ConstituencyTree& tree, int min_len = 2);

struct AlignedPhrasePair {
  Phrase source;
  Phrase target;
  PhraseScore score;
};

/// Mutual-argmax phrase alignment (ties go to the earliest phrase).
std::vector<AlignedPhrasePair> align_phrases(const ConstituencyTree& src_tree, const ConstituencyTree& tgt_tree,
                                             const EmbeddingProvider& provider, const CorpusStats& stats);

struct SowTrainingTuple {
  std::vector<std::string> x_abs;
  std::vector<std::string> y_abs;
  OrderPreference o = OrderPreference::Monotone;
  std::vector<std::string> labels;    // labels of the two abstracted children, source order
  std::vector<std::string> pos_tags;  // one per x_abs token; the label itself on non-terminals
  Span a, b, c;                       // source spans: parent, first child, second child
  Span a_tgt, b_tgt, c_tgt;
};

struct ExtractOptions {
  double max_unabstracted_ratio = 1.0;
  std::vector<std::string> ignored_tags;
};

/// One tuple per aligned parent (A, A') and pair of aligned children
/// (B, B'), (C, C') strictly inside it, with B before C in the source.
std::vector<SowTrainingTuple> extract_sow_tuples(std::span<const AlignedPhrasePair> pairs,
                                                 const ConstituencyTree& src_tree, const ConstituencyTree& tgt_tree,
                                                 const ExtractOptions& options = {});

/// out[i-1] = 1-based target index aligned to source token i (per-source
/// cosine argmax, ties to the leftmost target); 0 when the target is empty.
std::vector<int> align_words(std::span<const std::string> src, std::span<const std::string> tgt,
                             const EmbeddingProvider& provider);

/// Top-down traversal sorting each head with its dependents by aligned target
/// position (stable). `word_align` as returned by align_words; 0 = unaligned.
Reordering derive_pseudo_ground_truth(const DependencyTree& dep, std::span<const int> word_align);

/// Corpus JSONL record; parse/dependency fields stay textual until needed.
struct CorpusRecord {
  std::string id;
  std::vector<std::string> source;
  std::vector<std::string> target;
  std::string source_parse;
  std::string target_parse;
  std::string source_dep;
  std::optional<double> para_score;
};

struct FilterConfig {
  int min_len = 8;
  double para_score_min = 0.7;
  double reorder_score_max = 0.9;
};

struct FilterCounts {
  std::size_t input = 0, kept = 0, too_short = 0, low_quality = 0, low_reordering = 0, missing_fields = 0;
};

struct FilterResult {
  std::vector<CorpusRecord> kept;
  FilterCounts counts;
};

/// Reordering score of a pair: Kendall's tau of align_words output.
double reordering_score(std::span<const std::string> src, std::span<const std::string> tgt,
                        const EmbeddingProvider& provider);

FilterResult filter_corpus(std::span<const CorpusRecord> records, const FilterConfig& cfg,
                           const EmbeddingProvider& provider);

}  // namespace sowreap
