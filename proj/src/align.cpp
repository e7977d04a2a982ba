#include "sowreap/align.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include "sowreap/error.hpp"
#include "sowreap/metrics.hpp"

namespace sowreap {

void CorpusStats::add(std::span<const std::string> sentence) {
  ++sentences;
  std::set<std::string> seen(sentence.begin(), sentence.end());
  for (const auto& w : seen) ++doc_freq[w];
}

CorpusStats CorpusStats::build(std::span<const std::vector<std::string>> sentences) {
  CorpusStats s;
  for (const auto& sent : sentences) s.add(sent);
  return s;
}

double compute_idf(const CorpusStats& stats, const std::string& w) {
  SOWREAP_REQUIRE(stats.sentences >= 1, "compute_idf: empty corpus statistics");
  long df = 1;
  if (auto it = stats.doc_freq.find(w); it != stats.doc_freq.end()) df = std::max(1L, it->second);
  df = std::min(df, stats.sentences);
  return -std::log(static_cast<double>(df) / static_cast<double>(stats.sentences));
}

double harmonic_f(double precision, double recall) {
  if (precision * recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

namespace {

double greedy_side(std::span<const std::vector<double>> from, std::span<const double> idf,
                   std::span<const std::vector<double>> to) {
  double weighted = 0.0, mass = 0.0, plain = 0.0;
  for (std::size_t i = 0; i < from.size(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& v : to) best = std::max(best, cosine(from[i], v));
    weighted += idf[i] * best;
    mass += idf[i];
    plain += best;
  }
  if (mass > 0.0) return weighted / mass;
  return plain / static_cast<double>(from.size());
}

}  // namespace

PhraseScore phrase_similarity(std::span<const std::vector<double>> p_vecs, std::span<const double> p_idf,
                              std::span<const std::vector<double>> q_vecs, std::span<const double> q_idf) {
  SOWREAP_REQUIRE(!p_vecs.empty() && !q_vecs.empty(), "phrase_similarity: empty phrase");
  SOWREAP_REQUIRE(p_vecs.size() == p_idf.size() && q_vecs.size() == q_idf.size(),
                  "phrase_similarity: idf/vector length mismatch");
  PhraseScore s;
  s.recall = greedy_side(p_vecs, p_idf, q_vecs);
  s.precision = greedy_side(q_vecs, q_idf, p_vecs);
  s.f = harmonic_f(s.precision, s.recall);
  return s;
}

PhraseScore phrase_similarity(std::span<const std::string> p, std::span<const std::string> q,
                              const EmbeddingProvider& provider, const CorpusStats& stats) {
  std::vector<std::vector<double>> pv, qv;
  std::vector<double> pi, qi;
  for (const auto& w : p) pv.push_back(provider.lookup(w)), pi.push_back(compute_idf(stats, w));
  for (const auto& w : q) qv.push_back(provider.lookup(w)), qi.push_back(compute_idf(stats, w));
  return phrase_similarity(pv, pi, qv, qi);
}

std::vector<Phrase> candidate_phrases(const ConstituencyTree& tree, int min_len) {
  std::vector<Phrase> out;
  for_each_node(tree, [&](const ConstituencyTree& n, int) {
    if (n.size() < min_len) return;
    if (!out.empty() && out.back().span == n.span) return;  // unary chain below an emitted node
    out.push_back({n.span, n.label});
  });
  return out;
}

std::vector<AlignedPhrasePair> align_phrases(const ConstituencyTree& src_tree, const ConstituencyTree& tgt_tree,
                                             const EmbeddingProvider& provider, const CorpusStats& stats) {
  const auto src_words = surfaces(yield_of(src_tree));
  const auto tgt_words = surfaces(yield_of(tgt_tree));
  const auto src_vecs = provider.lookup_sentence(src_words);
  const auto tgt_vecs = provider.lookup_sentence(tgt_words);
  std::vector<double> src_idf, tgt_idf;
  for (const auto& w : src_words) src_idf.push_back(compute_idf(stats, w));
  for (const auto& w : tgt_words) tgt_idf.push_back(compute_idf(stats, w));

  const auto sp = candidate_phrases(src_tree);
  const auto tp = candidate_phrases(tgt_tree);
  if (sp.empty() || tp.empty()) return {};
  auto slice = [](const auto& v, const Span& s) {
    return std::span(v).subspan(static_cast<std::size_t>(s.start - 1), static_cast<std::size_t>(s.length()));
  };
  std::vector<std::vector<PhraseScore>> score(sp.size(), std::vector<PhraseScore>(tp.size()));
  for (std::size_t i = 0; i < sp.size(); ++i)
    for (std::size_t j = 0; j < tp.size(); ++j)
      score[i][j] = phrase_similarity(slice(src_vecs, sp[i].span), slice(src_idf, sp[i].span),
                                      slice(tgt_vecs, tp[j].span), slice(tgt_idf, tp[j].span));

  std::vector<std::size_t> best_t(sp.size(), 0), best_s(tp.size(), 0);
  for (std::size_t i = 0; i < sp.size(); ++i)
    for (std::size_t j = 1; j < tp.size(); ++j)
      if (score[i][j].f > score[i][best_t[i]].f) best_t[i] = j;
  for (std::size_t j = 0; j < tp.size(); ++j)
    for (std::size_t i = 1; i < sp.size(); ++i)
      if (score[i][j].f > score[best_s[j]][j].f) best_s[j] = i;

  std::vector<AlignedPhrasePair> out;
  for (std::size_t i = 0; i < sp.size(); ++i) {
    const std::size_t j = best_t[i];
    if (best_s[j] == i) out.push_back({sp[i], tp[j], score[i][j]});
  }
  return out;
}

namespace {

struct Abstracted {
  std::vector<std::string> tokens;
  std::vector<std::string> tags;
};

Abstracted abstract_yield(const std::vector<Token>& words, const Span& parent, const Span& x, const std::string& lx,
                          const Span& y, const std::string& ly) {
  Abstracted out;
  for (int i = parent.start; i <= parent.end; ++i) {
    if (i == x.start) {
      out.tokens.push_back(lx), out.tags.push_back(lx), i = x.end;
    } else if (i == y.start) {
      out.tokens.push_back(ly), out.tags.push_back(ly), i = y.end;
    } else {
      const auto& t = words[static_cast<std::size_t>(i - 1)];
      out.tokens.push_back(t.surface), out.tags.push_back(t.pos_tag);
    }
  }
  return out;
}

}  // namespace

std::vector<SowTrainingTuple> extract_sow_tuples(std::span<const AlignedPhrasePair> pairs,
                                                 const ConstituencyTree& src_tree, const ConstituencyTree& tgt_tree,
                                                 const ExtractOptions& options) {
  const auto src_words = yield_of(src_tree);
  const auto tgt_words = yield_of(tgt_tree);
  const std::set<std::string> ignored(options.ignored_tags.begin(), options.ignored_tags.end());
  std::vector<SowTrainingTuple> out;
  for (const auto& a : pairs) {
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto& b = pairs[i];
      if (!a.source.span.contains(b.source.span) || a.source.span == b.source.span) continue;
      if (!a.target.span.contains(b.target.span) || a.target.span == b.target.span) continue;
      for (std::size_t j = 0; j < pairs.size(); ++j) {
        const auto& c = pairs[j];
        if (i == j) continue;
        if (!a.source.span.contains(c.source.span) || a.source.span == c.source.span) continue;
        if (!a.target.span.contains(c.target.span) || a.target.span == c.target.span) continue;
        if (b.source.span.end >= c.source.span.start) continue;  // B strictly before C, disjoint
        if (b.target.span.overlaps(c.target.span)) continue;
        if (ignored.count(b.source.label) || ignored.count(c.source.label)) continue;
        const int abstracted = b.source.span.length() + c.source.span.length();
        const double ratio =
            static_cast<double>(a.source.span.length() - abstracted) / static_cast<double>(a.source.span.length());
        if (ratio > options.max_unabstracted_ratio) continue;

        SowTrainingTuple t;
        const auto& lb = b.source.label;
        const auto& lc = c.source.label;
        auto x = abstract_yield(src_words, a.source.span, b.source.span, lb, c.source.span, lc);
        auto y = abstract_yield(tgt_words, a.target.span, b.target.span, lb, c.target.span, lc);
        t.x_abs = std::move(x.tokens);
        t.pos_tags = std::move(x.tags);
        t.y_abs = std::move(y.tokens);
        t.o = b.target.span.start < c.target.span.start ? OrderPreference::Monotone : OrderPreference::Flip;
        t.labels = {lb, lc};
        t.a = a.source.span, t.b = b.source.span, t.c = c.source.span;
        t.a_tgt = a.target.span, t.b_tgt = b.target.span, t.c_tgt = c.target.span;
        out.push_back(std::move(t));
      }
    }
  }
  return out;
}

std::vector<int> align_words(std::span<const std::string> src, std::span<const std::string> tgt,
                             const EmbeddingProvider& provider) {
  std::vector<int> out(src.size(), 0);
  if (tgt.empty()) return out;
  const auto sv = provider.lookup_sentence(src);
  const auto tv = provider.lookup_sentence(tgt);
  for (std::size_t i = 0; i < src.size(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < tgt.size(); ++j) {
      const double c = cosine(sv[i], tv[j]);
      if (c > best) best = c, out[i] = static_cast<int>(j) + 1;
    }
  }
  return out;
}

Reordering derive_pseudo_ground_truth(const DependencyTree& dep, std::span<const int> word_align) {
  SOWREAP_REQUIRE(static_cast<int>(word_align.size()) == dep.size(),
                  "derive_pseudo_ground_truth: alignment length must match the tree");
  Reordering r;
  r.perm.reserve(static_cast<std::size_t>(dep.size()));
  std::function<void(int)> visit = [&](int head) {
    std::vector<int> items = dep.children(head);
    items.insert(std::lower_bound(items.begin(), items.end(), head), head);
    std::vector<std::pair<int, int>> keyed;  // (key, item)
    int last_key = 0;
    for (int it : items) {
      const int a = word_align[static_cast<std::size_t>(it - 1)];
      if (a > 0) last_key = a;
      keyed.emplace_back(last_key, it);
    }
    std::stable_sort(keyed.begin(), keyed.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    for (const auto& [k, it] : keyed) {
      if (it == head) r.perm.push_back(head);
      else visit(it);
    }
  };
  visit(dep.root());
  check_permutation(r.perm);
  return r;
}

double reordering_score(std::span<const std::string> src, std::span<const std::string> tgt,
                        const EmbeddingProvider& provider) {
  if (src.size() < 2) return 1.0;
  const auto a = align_words(src, tgt, provider);
  return kendall_tau_sequence(a);
}

FilterResult filter_corpus(std::span<const CorpusRecord> records, const FilterConfig& cfg,
                           const EmbeddingProvider& provider) {
  FilterResult out;
  out.counts.input = records.size();
  for (const auto& r : records) {
    if (r.source.empty() || r.target.empty() || !r.para_score) {
      ++out.counts.missing_fields;
      continue;
    }
    if (static_cast<int>(r.source.size()) < cfg.min_len || static_cast<int>(r.target.size()) < cfg.min_len) {
      ++out.counts.too_short;
      continue;
    }
    if (*r.para_score < cfg.para_score_min) {
      ++out.counts.low_quality;
      continue;
    }
    if (reordering_score(r.source, r.target, provider) > cfg.reorder_score_max) {
      ++out.counts.low_reordering;
      continue;
    }
    out.kept.push_back(r);
  }
  out.counts.kept = out.kept.size();
  return out;
}

}  // namespace sowreap
