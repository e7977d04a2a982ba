#include "sowreap/sow.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <set>

#include "sowreap/error.hpp"

namespace sowreap {

int PhraseTuple::unabstracted_tokens() const {
  int n = 0;
  for (char nt : is_nonterminal) n += nt ? 0 : 1;
  return n;
}

double PhraseTuple::unabstracted_ratio() const {
  return static_cast<double>(unabstracted_tokens()) / static_cast<double>(parent->size());
}

std::string PhraseTuple::text() const { return join(abstracted_yield); }

PhraseTuple make_phrase_tuple(const ConstituencyTree& parent, const ConstituencyTree& a, const ConstituencyTree& b) {
  SOWREAP_REQUIRE(parent.span.contains(a.span) && parent.span.contains(b.span), "phrase tuple: A and B must lie inside t");
  SOWREAP_REQUIRE(!a.span.overlaps(b.span), "phrase tuple: A and B overlap");
  PhraseTuple t;
  t.parent = &parent;
  t.a_node = a.span.start < b.span.start ? &a : &b;
  t.b_node = a.span.start < b.span.start ? &b : &a;
  const auto words = yield_of(parent);
  for (int i = parent.span.start; i <= parent.span.end;) {
    const ConstituencyTree* nt = nullptr;
    if (i == t.a_node->span.start) nt = t.a_node;
    if (i == t.b_node->span.start) nt = t.b_node;
    if (nt) {
      t.abstracted_yield.push_back(nt->label);
      t.tags.push_back(nt->label);
      t.is_nonterminal.push_back(1);
      t.segments.push_back(nt->span);
      i = nt->span.end + 1;
    } else {
      const auto& w = words[static_cast<std::size_t>(i - parent.span.start)];
      t.abstracted_yield.push_back(w.surface);
      t.tags.push_back(w.pos_tag);
      t.is_nonterminal.push_back(0);
      t.segments.push_back({i, i});
      ++i;
    }
  }
  return t;
}

std::vector<PhraseTuple> select_segment_pairs(const ConstituencyTree& t, const EngineConfig& config) {
  const std::set<std::string> ignored(config.ignored_tags.begin(), config.ignored_tags.end());
  std::vector<const ConstituencyTree*> nodes;
  std::function<void(const ConstituencyTree&)> collect = [&](const ConstituencyTree& n) {
    for (const auto& c : n.children) {
      // A unary chain contributes only its topmost node.
      const bool duplicate = c.span == n.span || (!nodes.empty() && nodes.back()->span == c.span);
      if (!duplicate && !ignored.count(c.label)) nodes.push_back(&c);
      collect(c);
    }
  };
  collect(t);
  std::vector<PhraseTuple> out;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t j = i + 1; j < nodes.size(); ++j) {
      const auto* a = nodes[i];
      const auto* b = nodes[j];
      if (a->span.overlaps(b->span)) continue;
      const int abstracted = a->size() + b->size();
      const double ratio = static_cast<double>(t.size() - abstracted) / static_cast<double>(t.size());
      if (ratio > config.abstraction_threshold) continue;
      out.push_back(make_phrase_tuple(t, *a, *b));
      if (config.max_candidates > 0 && static_cast<int>(out.size()) >= config.max_candidates) return out;
    }
  }
  return out;
}

TransducerOutput EchoTransducer::transduce(const PhraseTuple& tuple, OrderPreference) const {
  return {tuple.abstracted_yield, 0.0};
}

NeuralTransducer::NeuralTransducer(const nn::Transformer<float>& model, const BpeVocab& vocab, int beam, int max_len)
    : model_(model), vocab_(vocab), beam_(beam), max_len_(max_len) {
  SOWREAP_REQUIRE(model.config().variant == nn::Variant::Sow, "NeuralTransducer needs a SOW model");
  SOWREAP_REQUIRE(model.config().vocab_size == vocab.size(), "NeuralTransducer: vocabulary size mismatch");
}

nn::SourceInput NeuralTransducer::make_input(const BpeVocab& vocab, const std::vector<std::string>& tokens,
                                             const std::vector<std::string>& tags,
                                             const std::vector<char>& is_nonterminal, OrderPreference o) {
  SOWREAP_REQUIRE(tokens.size() == tags.size() && tokens.size() == is_nonterminal.size(),
                  "SOW input: tokens, tags and flags must align");
  const auto enc = vocab.encode_words(tokens);
  const auto word_order = order_preference_positions(is_nonterminal, o);
  nn::SourceInput in;
  in.ids = enc.ids;
  in.order = expand_to_pieces(word_order.positions, enc.pieces, false);
  for (std::size_t w = 0; w < tokens.size(); ++w) {
    const int tag = vocab.label_id(tags[w]);
    for (int p = 0; p < enc.pieces[w]; ++p) in.tags.push_back(tag >= 0 ? tag : nn::kUnkId);
  }
  return in;
}

TransducerOutput NeuralTransducer::transduce(const PhraseTuple& tuple, OrderPreference o) const {
  const auto in = make_input(vocab_, tuple.abstracted_yield, tuple.tags, tuple.is_nonterminal, o);
  const auto enc = nn::encode_with_order(model_, in);
  const auto hyp = nn::beam_decode(model_, enc, beam_, std::min<int>(max_len_, 2 * static_cast<int>(in.ids.size()) + 4));
  return {vocab_.decode_words(hyp.ids), hyp.log_prob};
}

PhraseReordering align_output(const PhraseTuple& tuple, const std::vector<std::string>& output,
                              const EmbeddingProvider& embeddings) {
  const std::size_t n = tuple.abstracted_yield.size();
  std::vector<char> used(n, 0);
  std::vector<std::vector<double>> in_vecs(n);
  for (std::size_t i = 0; i < n; ++i)
    if (!tuple.is_nonterminal[i]) in_vecs[i] = embeddings.lookup(tuple.abstracted_yield[i]);
  PhraseReordering z;
  for (const auto& tok : output) {
    int pick = -1;
    for (std::size_t i = 0; i < n && pick < 0; ++i)
      if (tuple.is_nonterminal[i] && !used[i] && tuple.abstracted_yield[i] == tok) pick = static_cast<int>(i);
    if (pick < 0) {
      const auto v = embeddings.lookup(tok);
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) {
        if (tuple.is_nonterminal[i] || used[i]) continue;
        const double c = cosine(v, in_vecs[i]);
        if (c > best) best = c, pick = static_cast<int>(i);
      }
    }
    if (pick < 0) continue;
    used[static_cast<std::size_t>(pick)] = 1;
    z.perm.push_back(pick + 1);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (used[i]) continue;
    z.perm.push_back(static_cast<int>(i) + 1);
    z.degraded = true;
  }
  z.output = output;
  return z;
}

PhraseReordering reorder_phrase(const PhraseTuple& tuple, OrderPreference o, const PhraseTransducer& transducer,
                                const EmbeddingProvider& embeddings) {
  const auto out = transducer.transduce(tuple, o);
  auto z = align_output(tuple, out.tokens, embeddings);
  z.score = out.log_prob;
  z.preference = o;
  check_permutation(z.perm);
  return z;
}

Reordering combine_reorderings(const PhraseReordering& z, const Reordering& r_a, const Reordering& r_b,
                               const PhraseTuple& tuple) {
  SOWREAP_REQUIRE(z.perm.size() == tuple.segments.size(), "combine: z does not match the abstracted yield");
  SOWREAP_REQUIRE(r_a.size() == tuple.a_node->size(), "combine: r_a does not cover A");
  SOWREAP_REQUIRE(r_b.size() == tuple.b_node->size(), "combine: r_b does not cover B");
  check_permutation(z.perm);
  const int base = tuple.parent->span.start;
  Reordering r;
  r.perm.reserve(static_cast<std::size_t>(tuple.parent->size()));
  for (int p : z.perm) {
    const Span& seg = tuple.segments[static_cast<std::size_t>(p - 1)];
    if (seg == tuple.a_node->span) {
      for (int x : r_a.perm) r.perm.push_back(seg.start + x - 1 - base + 1);
    } else if (seg == tuple.b_node->span) {
      for (int x : r_b.perm) r.perm.push_back(seg.start + x - 1 - base + 1);
    } else {
      SOWREAP_REQUIRE(seg.length() == 1, "combine: span bookkeeping mismatch");
      r.perm.push_back(seg.start - base + 1);
    }
  }
  check_permutation(r.perm);
  r.score = z.score + r_a.score + r_b.score;
  r.provenance.push_back({0, tuple.text(), join(z.output)});
  for (const auto* sub : {&r_a, &r_b})
    for (auto rule : sub->provenance) {
      ++rule.level;
      r.provenance.push_back(std::move(rule));
    }
  return r;
}

namespace {

class SentenceReorderer {
 public:
  SentenceReorderer(const PhraseTransducer& transducer, const EmbeddingProvider& embeddings, const EngineConfig& cfg)
      : transducer_(transducer), embeddings_(embeddings), cfg_(cfg) {}

  // Candidates relative to node's yield, best summed score first.
  const std::vector<Reordering>& reorder(const ConstituencyTree& node, int budget) {
    const auto key = std::make_pair(&node, budget);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    std::vector<Reordering> result = compute(node, budget);
    return memo_.emplace(key, std::move(result)).first->second;
  }

 private:
  std::vector<Reordering> compute(const ConstituencyTree& node, int budget) {
    Reordering identity{identity_permutation(node.size()), 0.0, {}};
    if (node.size() < 2 || budget <= 0) return {identity};
    if (node.children.size() == 1) return reorder(node.children.front(), budget);
    const auto& tuples = tuples_of(node);
    std::vector<Reordering> beam{identity};
    std::map<std::vector<int>, std::size_t> index{{identity.perm, 0}};
    for (std::size_t ti = 0; ti < tuples.size(); ++ti) {
      const auto& tuple = tuples[ti];
      const auto& la = reorder(*tuple.a_node, budget - 1);
      const auto& lb = reorder(*tuple.b_node, budget - 1);
      for (OrderPreference o : {OrderPreference::Monotone, OrderPreference::Flip}) {
        const auto& z = phrase(node, ti, tuple, o);
        for (const auto& ra : la)
          for (const auto& rb : lb) {
            if (1 + ra.rule_count() + rb.rule_count() > budget) continue;
            auto r = combine_reorderings(z, ra, rb, tuple);
            auto it = index.find(r.perm);
            if (it == index.end()) {
              index.emplace(r.perm, beam.size());
              beam.push_back(std::move(r));
            } else if (r.score > beam[it->second].score) {
              beam[it->second] = std::move(r);
            }
          }
      }
    }
    std::stable_sort(beam.begin(), beam.end(), [](const Reordering& a, const Reordering& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.rule_count() < b.rule_count();
    });
    if (static_cast<int>(beam.size()) > cfg_.k) beam.resize(static_cast<std::size_t>(cfg_.k));
    return beam;
  }

  const std::vector<PhraseTuple>& tuples_of(const ConstituencyTree& node) {
    auto it = tuples_.find(&node);
    if (it == tuples_.end()) it = tuples_.emplace(&node, select_segment_pairs(node, cfg_)).first;
    return it->second;
  }

  const PhraseReordering& phrase(const ConstituencyTree& node, std::size_t ti, const PhraseTuple& tuple,
                                 OrderPreference o) {
    const auto key = std::make_tuple(&node, ti, o == OrderPreference::Flip);
    auto it = phrases_.find(key);
    if (it == phrases_.end()) it = phrases_.emplace(key, reorder_phrase(tuple, o, transducer_, embeddings_)).first;
    return it->second;
  }

  const PhraseTransducer& transducer_;
  const EmbeddingProvider& embeddings_;
  const EngineConfig& cfg_;
  std::map<std::pair<const ConstituencyTree*, int>, std::vector<Reordering>> memo_;
  std::map<const ConstituencyTree*, std::vector<PhraseTuple>> tuples_;
  std::map<std::tuple<const ConstituencyTree*, std::size_t, bool>, PhraseReordering> phrases_;
};

}  // namespace

std::vector<Reordering> reorder_sentence(const ConstituencyTree& tree, const PhraseTransducer& transducer,
                                         const EmbeddingProvider& embeddings, const EngineConfig& config) {
  SOWREAP_REQUIRE(config.k >= 1, "reorder_sentence: k must be >= 1");
  SentenceReorderer engine(transducer, embeddings, config);
  std::vector<Reordering> out = engine.reorder(tree, config.max_rules);
  const auto ident = identity_permutation(tree.size());
  if (std::none_of(out.begin(), out.end(), [&](const Reordering& r) { return r.perm == ident; })) {
    out.back() = Reordering{ident, 0.0, {}};
  }
  for (auto& r : out) r.score = r.rule_count() > 0 ? r.score / r.rule_count() : 0.0;
  std::stable_sort(out.begin(), out.end(), [](const Reordering& a, const Reordering& b) { return a.score > b.score; });
  return out;
}

}  // namespace sowreap
