#include "sowreap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "sowreap/error.hpp"
#include "sowreap/rng.hpp"
#include "sowreap/syntax.hpp"

namespace sowreap {

namespace {

using NgramCounts = std::map<std::vector<std::string>, int>;

NgramCounts ngrams(std::span<const std::string> s, int n) {
  NgramCounts out;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= s.size(); ++i)
    ++out[std::vector<std::string>(s.begin() + static_cast<std::ptrdiff_t>(i),
                                   s.begin() + static_cast<std::ptrdiff_t>(i) + n)];
  return out;
}

int clipped_matches(const NgramCounts& cand, const NgramCounts& ref) {
  int m = 0;
  for (const auto& [g, c] : cand) {
    auto it = ref.find(g);
    if (it != ref.end()) m += std::min(c, it->second);
  }
  return m;
}

int total(const NgramCounts& c) {
  int t = 0;
  for (const auto& [g, n] : c) t += n;
  return t;
}

}  // namespace

double bleu(std::span<const std::string> candidate, std::span<const std::string> reference, int max_n,
            BleuSmoothing smoothing) {
  SOWREAP_REQUIRE(max_n >= 1, "bleu: max_n must be >= 1");
  if (candidate.empty() || reference.empty()) return 0.0;
  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    const auto c = ngrams(candidate, n);
    const int m = clipped_matches(c, ngrams(reference, n));
    const int t = total(c);
    double p;
    if (n >= 2 && smoothing == BleuSmoothing::AddOne) {
      p = (m + 1.0) / (t + 1.0);
    } else {
      if (m == 0) return 0.0;
      p = static_cast<double>(m) / t;
    }
    log_sum += std::log(p);
  }
  const double c = static_cast<double>(candidate.size());
  const double r = static_cast<double>(reference.size());
  const double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum / max_n);
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge(std::span<const std::string> candidate, std::span<const std::string> reference, RougeMode mode) {
  if (reference.empty()) return 0.0;
  if (mode == RougeMode::L) {
    const auto l = static_cast<double>(lcs_length(candidate, reference));
    if (l == 0) return 0.0;
    const double p = l / static_cast<double>(candidate.size());
    const double r = l / static_cast<double>(reference.size());
    return 2 * p * r / (p + r);
  }
  const int n = mode == RougeMode::One ? 1 : 2;
  const auto ref = ngrams(reference, n);
  const int t = total(ref);
  if (t == 0) return 0.0;
  return static_cast<double>(clipped_matches(ngrams(candidate, n), ref)) / t;
}

std::size_t edit_distance(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double wer(std::span<const std::string> candidate, std::span<const std::string> reference) {
  if (reference.empty()) return static_cast<double>(candidate.size());
  return static_cast<double>(edit_distance(candidate, reference)) / static_cast<double>(reference.size());
}

std::optional<double> pairwise_diversity(std::span<const Tokens> candidates, DiversityMetric metric) {
  if (candidates.size() < 2) return std::nullopt;
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    for (std::size_t j = 0; j < candidates.size(); ++j) {
      if (i == j) continue;
      sum += metric == DiversityMetric::Bleu ? bleu(candidates[i], candidates[j]) : wer(candidates[i], candidates[j]);
      ++pairs;
    }
  return sum / static_cast<double>(pairs);
}

OracleResult oracle_best(std::span<const Tokens> candidates, std::span<const std::string> reference,
                         const SentenceMetric& metric) {
  SOWREAP_REQUIRE(!candidates.empty(), "oracle_best: no candidates");
  OracleResult best{0, metric(candidates[0], reference)};
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const double s = metric(candidates[i], reference);
    if (s > best.score) best = {i, s};
  }
  return best;
}

bool LexicalOverlapScorer::is_stopword(const std::string& w) {
  static const std::set<std::string> kStop = {
      "a",    "an",   "the",  "of",   "to",   "in",    "on",   "at",   "for",  "by",   "with", "from",
      "and",  "or",   "but",  "if",   "is",   "are",   "was",  "were", "be",   "been", "it",   "its",
      "this", "that", "these", "those", "as",  "not",  "do",   "does", "did",  "i",    "you",  "he",
      "she",  "we",   "they", "his",  "her",  "their", "our",  "my",   "your", ".",    ",",    "?",
      "!",    ";",    ":",    "'s",   "will", "would", "can",  "could", "should", "has", "have", "had"};
  return kStop.count(w) > 0;
}

double LexicalOverlapScorer::score(std::span<const std::string> input, std::span<const std::string> candidate) const {
  std::map<std::string, int> a, b;
  for (const auto& w : input) ++a[w];
  for (const auto& w : candidate) ++b[w];
  auto weight = [&](const std::string& w) { return is_stopword(w) ? stopword_weight_ : 1.0; };
  double wa = 0, wb = 0, overlap = 0;
  for (const auto& [w, c] : a) wa += weight(w) * c;
  for (const auto& [w, c] : b) {
    wb += weight(w) * c;
    auto it = a.find(w);
    if (it != a.end()) overlap += weight(w) * std::min(c, it->second);
  }
  if (wa == 0 || wb == 0 || overlap == 0) return 0.0;
  const double p = overlap / wb, r = overlap / wa;
  return 2 * p * r / (p + r);
}

RejectionResult rejection_filter(std::span<const std::string> input, std::span<const Tokens> candidates,
                                 const ParaphraseScorer& scorer, double threshold) {
  RejectionResult out;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (scorer.score(input, candidates[i]) >= threshold) out.kept.push_back(i);
  if (!candidates.empty())
    out.rejected_fraction =
        static_cast<double>(candidates.size() - out.kept.size()) / static_cast<double>(candidates.size());
  return out;
}

double kendall_tau(std::span<const int> perm_a, std::span<const int> perm_b) {
  SOWREAP_REQUIRE(perm_a.size() == perm_b.size(), "kendall_tau: length mismatch");
  SOWREAP_REQUIRE(perm_a.size() >= 2, "kendall_tau: need at least two items");
  const auto pos_a = inverse_permutation(perm_a);
  const auto pos_b = inverse_permutation(perm_b);
  const std::size_t n = perm_a.size();
  long score = 0;
  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t y = x + 1; y < n; ++y) {
      const bool a = pos_a[x] < pos_a[y];
      const bool b = pos_b[x] < pos_b[y];
      score += a == b ? 1 : -1;
    }
  return static_cast<double>(score) / (static_cast<double>(n) * (n - 1) / 2.0);
}

double kendall_tau_sequence(std::span<const int> positions) {
  SOWREAP_REQUIRE(positions.size() >= 2, "kendall_tau_sequence: need at least two items");
  const std::size_t n = positions.size();
  long score = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (positions[i] < positions[j]) ++score;
      else if (positions[i] > positions[j]) --score;
    }
  return static_cast<double>(score) / (static_cast<double>(n) * (n - 1) / 2.0);
}

std::vector<ComplianceBin> compliance_curve(std::span<const ComplianceRecord> records, int bins) {
  SOWREAP_REQUIRE(bins >= 1, "compliance_curve: bins must be >= 1");
  const double width = 2.0 / bins;
  std::vector<double> sum(static_cast<std::size_t>(bins), 0.0);
  std::vector<std::size_t> count(static_cast<std::size_t>(bins), 0);
  for (const auto& r : records) {
    int b = static_cast<int>(std::floor((r.target_tau + 1.0) / width));
    b = std::clamp(b, 0, bins - 1);
    sum[static_cast<std::size_t>(b)] += r.generated_tau;
    ++count[static_cast<std::size_t>(b)];
  }
  std::vector<ComplianceBin> out;
  for (int b = 0; b < bins; ++b) {
    if (count[static_cast<std::size_t>(b)] == 0) continue;
    out.push_back({-1.0 + (b + 0.5) * width, sum[static_cast<std::size_t>(b)] / count[static_cast<std::size_t>(b)],
                   count[static_cast<std::size_t>(b)]});
  }
  return out;
}

std::string compliance_tsv(std::span<const ComplianceBin> curve) {
  std::ostringstream os;
  os << "bin_center\tmean_generated_tau\tcount\n" << std::setprecision(6) << std::fixed;
  for (const auto& b : curve) os << b.center << '\t' << b.mean_generated_tau << '\t' << b.count << '\n';
  return os.str();
}

double oracle_perplexity(const std::vector<std::vector<double>>& nll) {
  SOWREAP_REQUIRE(!nll.empty(), "oracle_perplexity: no inputs");
  double sum = 0.0;
  for (const auto& row : nll) {
    SOWREAP_REQUIRE(!row.empty(), "oracle_perplexity: input without orderings");
    sum += std::exp(*std::min_element(row.begin(), row.end()));
  }
  return sum / static_cast<double>(nll.size());
}

double paired_bootstrap(std::span<const double> a, std::span<const double> b, int resamples, std::uint64_t seed) {
  SOWREAP_REQUIRE(a.size() == b.size(), "paired_bootstrap: length mismatch");
  SOWREAP_REQUIRE(!a.empty(), "paired_bootstrap: empty score lists");
  SOWREAP_REQUIRE(resamples >= 1, "paired_bootstrap: resamples must be >= 1");
  Rng rng = Rng::stream(seed, "bootstrap");
  const std::size_t n = a.size();
  double hits = 0.0;
  for (int s = 0; s < resamples; ++s) {
    double sa = 0.0, sb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = rng.below(n);
      sa += a[k];
      sb += b[k];
    }
    if (sa < sb) hits += 1.0;
    else if (sa == sb) hits += 0.5;
  }
  return hits / resamples;
}

SentenceEval evaluate_sentence(std::span<const std::string> input, std::span<const Tokens> candidates,
                               std::span<const std::string> reference, const ParaphraseScorer& scorer,
                               double threshold) {
  SentenceEval e;
  e.candidates = candidates.size();
  if (candidates.empty()) return e;
  e.oracle_bleu = oracle_best(candidates, reference, [](auto c, auto r) { return bleu(c, r); }).score;
  e.rouge1 = oracle_best(candidates, reference, [](auto c, auto r) { return rouge(c, r, RougeMode::One); }).score;
  e.rouge2 = oracle_best(candidates, reference, [](auto c, auto r) { return rouge(c, r, RougeMode::Two); }).score;
  e.rougeL = oracle_best(candidates, reference, [](auto c, auto r) { return rouge(c, r, RougeMode::L); }).score;
  const auto rej = rejection_filter(input, candidates, scorer, threshold);
  e.rejected = candidates.size() - rej.kept.size();
  std::vector<Tokens> kept;
  for (auto i : rej.kept) kept.push_back(candidates[i]);
  e.self_bleu = pairwise_diversity(kept, DiversityMetric::Bleu);
  e.self_wer = pairwise_diversity(kept, DiversityMetric::Wer);
  return e;
}

SystemReport aggregate(std::span<const SentenceEval> sentences) {
  SystemReport r;
  r.sentences = sentences.size();
  double sb = 0, sw = 0;
  std::size_t nb = 0, nw = 0, rejected = 0;
  for (const auto& s : sentences) {
    r.oracle_bleu += s.oracle_bleu;
    r.rouge1 += s.rouge1;
    r.rouge2 += s.rouge2;
    r.rougeL += s.rougeL;
    r.candidates += s.candidates;
    rejected += s.rejected;
    if (s.self_bleu) sb += *s.self_bleu, ++nb;
    if (s.self_wer) sw += *s.self_wer, ++nw;
  }
  if (!sentences.empty()) {
    const double n = static_cast<double>(sentences.size());
    r.oracle_bleu /= n;
    r.rouge1 /= n;
    r.rouge2 /= n;
    r.rougeL /= n;
  }
  if (r.candidates > 0) r.pct_rejected = static_cast<double>(rejected) / static_cast<double>(r.candidates);
  if (nb > 0) r.self_bleu = sb / static_cast<double>(nb);
  if (nw > 0) r.self_wer = sw / static_cast<double>(nw);
  return r;
}

}  // namespace sowreap
