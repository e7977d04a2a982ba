#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sowreap {

using Tokens = std::vector<std::string>;

enum class BleuSmoothing { None, AddOne };

/// Sentence BLEU with brevity penalty. AddOne smooths the n >= 2 precisions
/// as (matches + 1) / (total + 1); unigram precision is never smoothed.
double bleu(std::span<const std::string> candidate, std::span<const std::string> reference, int max_n = 4,
            BleuSmoothing smoothing = BleuSmoothing::AddOne);

enum class RougeMode { One, Two, L };

/// ROUGE-1/2: clipped n-gram recall. ROUGE-L: LCS F1.
double rouge(std::span<const std::string> candidate, std::span<const std::string> reference, RougeMode mode);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);
std::size_t edit_distance(std::span<const std::string> a, std::span<const std::string> b);

/// Token Levenshtein distance over reference length; len(candidate) for an
/// empty reference.
double wer(std::span<const std::string> candidate, std::span<const std::string> reference);

enum class DiversityMetric { Bleu, Wer };

/// Mean of metric(y_i, y_j) over ordered pairs i != j; nullopt for < 2
/// candidates.
std::optional<double> pairwise_diversity(std::span<const Tokens> candidates, DiversityMetric metric);

struct OracleResult {
  std::size_t index = 0;
  double score = 0.0;
};

using SentenceMetric = std::function<double(std::span<const std::string>, std::span<const std::string>)>;

/// Best candidate by metric(candidate, reference); ties keep the first.
OracleResult oracle_best(std::span<const Tokens> candidates, std::span<const std::string> reference,
                         const SentenceMetric& metric);

class ParaphraseScorer {
 public:
  virtual ~ParaphraseScorer() = default;
  /// Similarity in [0, 1] between an input and a candidate paraphrase.
  virtual double score(std::span<const std::string> input, std::span<const std::string> candidate) const = 0;
};

/// Weighted token-overlap F1; stopwords count with a reduced weight.
class LexicalOverlapScorer : public ParaphraseScorer {
 public:
  explicit LexicalOverlapScorer(double stopword_weight = 0.2) : stopword_weight_(stopword_weight) {}
  double score(std::span<const std::string> input, std::span<const std::string> candidate) const override;
  static bool is_stopword(const std::string& w);

 private:
  double stopword_weight_;
};

struct RejectionResult {
  std::vector<std::size_t> kept;  // indices into the candidate list
  double rejected_fraction = 0.0;
};

RejectionResult rejection_filter(std::span<const std::string> input, std::span<const Tokens> candidates,
                                 const ParaphraseScorer& scorer, double threshold);

/// Rank correlation between two orderings of the same items 1..n:
/// (concordant - discordant) / (n(n-1)/2) over item pairs.
double kendall_tau(std::span<const int> perm_a, std::span<const int> perm_b);

/// Tau of a sequence of (possibly repeated) source positions against
/// ascending order; tied pairs count as neither.
double kendall_tau_sequence(std::span<const int> positions);

struct ComplianceRecord {
  double target_tau = 0.0;
  double generated_tau = 0.0;
};

struct ComplianceBin {
  double center = 0.0;
  double mean_generated_tau = 0.0;
  std::size_t count = 0;
};

/// Equal-width bins over [-1, 1]; empty bins are omitted.
std::vector<ComplianceBin> compliance_curve(std::span<const ComplianceRecord> records, int bins);
std::string compliance_tsv(std::span<const ComplianceBin> curve);

/// `nll[i][j]`: per-token NLL of reference i under ordering j. Mean over
/// inputs of the minimum perplexity.
double oracle_perplexity(const std::vector<std::vector<double>>& nll);

/// Fraction of paired resamples with mean(a) < mean(b), ties counting half.
double paired_bootstrap(std::span<const double> a, std::span<const double> b, int resamples, std::uint64_t seed);

struct SystemReport {
  double oracle_bleu = 0.0;
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
  double pct_rejected = 0.0;
  std::optional<double> self_bleu;
  std::optional<double> self_wer;
  std::size_t sentences = 0;
  std::size_t candidates = 0;
};

struct SentenceEval {
  double oracle_bleu = 0.0, rouge1 = 0.0, rouge2 = 0.0, rougeL = 0.0;
  std::size_t candidates = 0, rejected = 0;
  std::optional<double> self_bleu, self_wer;
};

/// Oracle quality over all candidates (no rejection); diversity over the
/// candidates kept by the rejection filter.
SentenceEval evaluate_sentence(std::span<const std::string> input, std::span<const Tokens> candidates,
                               std::span<const std::string> reference, const ParaphraseScorer& scorer,
                               double threshold);

/// Macro-average over sentences; diversity averages only sentences where it
/// is defined. pct_rejected is pooled over all candidates.
SystemReport aggregate(std::span<const SentenceEval> sentences);

}  // namespace sowreap
