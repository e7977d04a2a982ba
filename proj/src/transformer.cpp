#include "sowreap/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sowreap/error.hpp"

namespace sowreap::nn {

std::string_view to_string(Variant v) { return v == Variant::Reap ? "reap" : "sow"; }

Variant parse_variant(std::string_view s) {
  if (s == "reap" || s == "REAP") return Variant::Reap;
  if (s == "sow" || s == "SOW") return Variant::Sow;
  throw FormatError("unknown model variant '" + std::string(s) + "'");
}

void ModelConfig::validate() const {
  SOWREAP_REQUIRE(hidden_size > 0 && hidden_size % 2 == 0, "hidden_size must be positive and even");
  SOWREAP_REQUIRE(heads > 0 && hidden_size % heads == 0, "hidden_size must be divisible by heads");
  SOWREAP_REQUIRE(encoder_layers >= 1 && decoder_layers >= 1, "need at least one encoder and decoder layer");
  SOWREAP_REQUIRE(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
  SOWREAP_REQUIRE(vocab_size > kUnkId, "vocab_size must include the special ids");
  SOWREAP_REQUIRE(max_positions >= 2, "max_positions too small");
}

template <typename T>
Transformer<T>::Transformer(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  const int h = config_.hidden_size;
  const int v = config_.vocab_size;
  const int ff = config_.feed_forward();
  params_.reserve(static_cast<std::size_t>(8 + 16 * config_.encoder_layers + 26 * config_.decoder_layers));
  tok_emb_ = add_param("embed.tokens", v, h);
  if (config_.variant == Variant::Sow) tag_emb_ = add_param("embed.tags", v, h);
  for (int l = 0; l < config_.encoder_layers; ++l) {
    const std::string pre = "encoder." + std::to_string(l) + ".";
    EncLayer e{};
    e.ln1_g = add_param(pre + "ln1.gain", 1, h);
    e.ln1_b = add_param(pre + "ln1.bias", 1, h);
    e.self = add_attention(pre + "self.");
    e.ln2_g = add_param(pre + "ln2.gain", 1, h);
    e.ln2_b = add_param(pre + "ln2.bias", 1, h);
    e.w1 = add_param(pre + "ff.w1", h, ff);
    e.b1 = add_param(pre + "ff.b1", 1, ff);
    e.w2 = add_param(pre + "ff.w2", ff, h);
    e.b2 = add_param(pre + "ff.b2", 1, h);
    enc_.push_back(e);
  }
  enc_ln_g_ = add_param("encoder.ln.gain", 1, h);
  enc_ln_b_ = add_param("encoder.ln.bias", 1, h);
  for (int l = 0; l < config_.decoder_layers; ++l) {
    const std::string pre = "decoder." + std::to_string(l) + ".";
    DecLayer d{};
    d.ln1_g = add_param(pre + "ln1.gain", 1, h);
    d.ln1_b = add_param(pre + "ln1.bias", 1, h);
    d.self = add_attention(pre + "self.");
    d.ln2_g = add_param(pre + "ln2.gain", 1, h);
    d.ln2_b = add_param(pre + "ln2.bias", 1, h);
    d.cross = add_attention(pre + "cross.");
    d.ln3_g = add_param(pre + "ln3.gain", 1, h);
    d.ln3_b = add_param(pre + "ln3.bias", 1, h);
    d.w1 = add_param(pre + "ff.w1", h, ff);
    d.b1 = add_param(pre + "ff.b1", 1, ff);
    d.w2 = add_param(pre + "ff.w2", ff, h);
    d.b2 = add_param(pre + "ff.b2", 1, h);
    dec_.push_back(d);
  }
  dec_ln_g_ = add_param("decoder.ln.gain", 1, h);
  dec_ln_b_ = add_param("decoder.ln.bias", 1, h);
  out_w_ = add_param("output.weight", h, v);
  out_b_ = add_param("output.bias", 1, v);
  init(seed);

  pe_rows_.resize(static_cast<std::size_t>(config_.max_positions) + 1);
  for (int pos = 0; pos <= config_.max_positions; ++pos) {
    const auto row = sinusoidal_embedding(pos, h);
    pe_rows_[static_cast<std::size_t>(pos)].assign(row.begin(), row.end());
  }
}

template <typename T>
int Transformer<T>::add_param(const std::string& name, int rows, int cols) {
  params_.emplace_back(name, rows, cols);
  return static_cast<int>(params_.size()) - 1;
}

template <typename T>
typename Transformer<T>::AttnIdx Transformer<T>::add_attention(const std::string& prefix) {
  const int h = config_.hidden_size;
  AttnIdx a{};
  a.wq = add_param(prefix + "wq", h, h);
  a.bq = add_param(prefix + "bq", 1, h);
  a.wk = add_param(prefix + "wk", h, h);
  a.bk = add_param(prefix + "bk", 1, h);
  a.wv = add_param(prefix + "wv", h, h);
  a.bv = add_param(prefix + "bv", 1, h);
  a.wo = add_param(prefix + "wo", h, h);
  a.bo = add_param(prefix + "bo", 1, h);
  return a;
}

template <typename T>
void Transformer<T>::init(std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "init");
  for (auto& prm : params_) {
    const bool is_gain = prm.name.ends_with(".gain");
    const bool is_bias = prm.rows == 1 && !is_gain;
    if (is_gain) {
      std::fill(prm.value.begin(), prm.value.end(), T(1));
    } else if (is_bias) {
      std::fill(prm.value.begin(), prm.value.end(), T(0));
    } else if (prm.name.starts_with("embed.")) {
      // Scaled by sqrt(hidden) at lookup, so entries start around unit size.
      const double a = 1.0 / std::sqrt(static_cast<double>(prm.cols));
      for (auto& x : prm.value) x = static_cast<T>(rng.uniform(-a, a));
    } else {
      const double a = std::sqrt(6.0 / (prm.rows + prm.cols));
      for (auto& x : prm.value) x = static_cast<T>(rng.uniform(-a, a));
    }
  }
}

template <typename T>
Parameter<T>* Transformer<T>::find(std::string_view name) {
  for (auto& prm : params_)
    if (prm.name == name) return &prm;
  return nullptr;
}

template <typename T>
std::size_t Transformer<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& prm : params_) n += prm.size();
  return n;
}

template <typename T>
void Transformer<T>::zero_grad() {
  for (auto& prm : params_) prm.zero_grad();
}

template <typename T>
bool Transformer<T>::all_finite() const {
  for (const auto& prm : params_)
    for (T x : prm.value)
      if (!std::isfinite(x)) return false;
  return true;
}

template <typename T>
const std::vector<T>& Transformer<T>::position_row(int pos) const {
  SOWREAP_REQUIRE(pos >= 0 && pos <= config_.max_positions, "position exceeds max_positions");
  return pe_rows_[static_cast<std::size_t>(pos)];
}

template <typename T>
Var Transformer<T>::p(Graph<T>& g, int idx) const {
  return g.param(params_[static_cast<std::size_t>(idx)]);
}

template <typename T>
Var Transformer<T>::attention_block(Graph<T>& g, const AttnIdx& a, Var query_in, Var key_in, const AttentionShape& s,
                                    std::span<const char> key_valid, bool causal, Var* probs_out) const {
  Var q = g.linear(query_in, p(g, a.wq), p(g, a.bq));
  Var k = g.linear(key_in, p(g, a.wk), p(g, a.bk));
  Var v = g.linear(key_in, p(g, a.wv), p(g, a.bv));
  Var probs = g.attention_probs(q, k, s, key_valid, causal);
  if (probs_out) *probs_out = probs;
  Var ctx = g.attention_context(probs, v, s);
  return g.linear(ctx, p(g, a.wo), p(g, a.bo));
}

template <typename T>
Var Transformer<T>::feed_forward(Graph<T>& g, int w1, int b1, int w2, int b2, Var x, Rng* dropout) const {
  Var hdn = g.relu(g.linear(x, p(g, w1), p(g, b1)));
  hdn = g.dropout(hdn, config_.dropout, dropout);
  return g.linear(hdn, p(g, w2), p(g, b2));
}

template <typename T>
typename Transformer<T>::Encoded Transformer<T>::encode(Graph<T>& g, std::span<const SourceInput> batch,
                                                        Rng* dropout) const {
  SOWREAP_REQUIRE(!batch.empty(), "encode: empty batch");
  const int h = config_.hidden_size;
  const bool sow = config_.variant == Variant::Sow;
  Encoded out;
  out.batch = static_cast<int>(batch.size());
  for (const auto& s : batch) {
    SOWREAP_REQUIRE(!s.ids.empty(), "encode: empty source");
    SOWREAP_REQUIRE(s.order.size() == s.ids.size(), "encode_with_order: order length must match source length");
    if (sow) {
      SOWREAP_REQUIRE(s.tags.size() == s.ids.size(), "encode: SOW variant requires one tag per source id");
    } else {
      SOWREAP_REQUIRE(s.tags.empty(), "encode: REAP variant takes no tags");
    }
    out.src_len = std::max(out.src_len, static_cast<int>(s.ids.size()));
  }
  SOWREAP_REQUIRE(out.src_len <= config_.max_positions, "source longer than max_positions");
  const int len = out.src_len;
  const std::size_t rows = static_cast<std::size_t>(out.batch) * len;
  std::vector<int> ids(rows, kPadId), tags(rows, kPadId);
  out.src_valid.assign(rows, 0);
  std::vector<T> pos_in(rows * h, T(0)), pos_order(rows * h, T(0));
  for (int b = 0; b < out.batch; ++b) {
    const auto& s = batch[static_cast<std::size_t>(b)];
    for (int i = 0; i < len; ++i) {
      const std::size_t r = static_cast<std::size_t>(b) * len + i;
      const auto& in_row = position_row(i + 1);
      std::copy(in_row.begin(), in_row.end(), pos_in.begin() + static_cast<std::ptrdiff_t>(r * h));
      if (i < static_cast<int>(s.ids.size())) {
        ids[r] = s.ids[static_cast<std::size_t>(i)];
        if (sow) tags[r] = s.tags[static_cast<std::size_t>(i)];
        out.src_valid[r] = 1;
        const auto& ord_row = position_row(s.order[static_cast<std::size_t>(i)]);
        std::copy(ord_row.begin(), ord_row.end(), pos_order.begin() + static_cast<std::ptrdiff_t>(r * h));
      }
    }
  }
  const T emb_scale = std::sqrt(static_cast<T>(h));
  Var x = g.scale(g.embedding(p(g, tok_emb_), ids), emb_scale);
  if (sow) x = g.add(x, g.embedding(p(g, tag_emb_), tags));
  x = g.add(x, g.input(out.batch * len, h, std::move(pos_in)));
  x = g.dropout(x, config_.dropout, dropout);

  const AttentionShape s{out.batch, config_.heads, len, len};
  for (const auto& layer : enc_) {
    Var n1 = g.layer_norm(x, p(g, layer.ln1_g), p(g, layer.ln1_b));
    Var att = attention_block(g, layer.self, n1, n1, s, out.src_valid, false, nullptr);
    x = g.add(x, g.dropout(att, config_.dropout, dropout));
    Var n2 = g.layer_norm(x, p(g, layer.ln2_g), p(g, layer.ln2_b));
    Var ff = feed_forward(g, layer.w1, layer.b1, layer.w2, layer.b2, n2, dropout);
    x = g.add(x, g.dropout(ff, config_.dropout, dropout));
  }
  out.body = g.layer_norm(x, p(g, enc_ln_g_), p(g, enc_ln_b_));
  out.states = g.add(out.body, g.input(out.batch * len, h, std::move(pos_order)));
  return out;
}

template <typename T>
typename Transformer<T>::Decoded Transformer<T>::decode(Graph<T>& g, Var states, std::span<const char> src_valid,
                                                        int batch, int src_len,
                                                        std::span<const std::vector<int>> tgt_in,
                                                        Rng* dropout) const {
  SOWREAP_REQUIRE(static_cast<int>(tgt_in.size()) == batch, "decode: batch size mismatch");
  const int h = config_.hidden_size;
  int len = 0;
  for (const auto& t : tgt_in) len = std::max(len, static_cast<int>(t.size()));
  SOWREAP_REQUIRE(len >= 1, "decode: empty decoder input");
  SOWREAP_REQUIRE(len <= config_.max_positions, "decoder prefix exceeds max_positions");
  const std::size_t rows = static_cast<std::size_t>(batch) * len;
  std::vector<int> ids(rows, kPadId);
  Decoded out;
  out.tgt_valid.assign(rows, 0);
  std::vector<T> pos(rows * h);
  for (int b = 0; b < batch; ++b) {
    const auto& t = tgt_in[static_cast<std::size_t>(b)];
    for (int i = 0; i < len; ++i) {
      const std::size_t r = static_cast<std::size_t>(b) * len + i;
      const auto& row = position_row(i + 1);
      std::copy(row.begin(), row.end(), pos.begin() + static_cast<std::ptrdiff_t>(r * h));
      if (i < static_cast<int>(t.size())) {
        ids[r] = t[static_cast<std::size_t>(i)];
        out.tgt_valid[r] = 1;
      }
    }
  }
  const T emb_scale = std::sqrt(static_cast<T>(h));
  Var x = g.scale(g.embedding(p(g, tok_emb_), ids), emb_scale);
  x = g.add(x, g.input(batch * len, h, std::move(pos)));
  x = g.dropout(x, config_.dropout, dropout);

  const AttentionShape self_shape{batch, config_.heads, len, len};
  out.cross_shape = AttentionShape{batch, config_.heads, len, src_len};
  for (std::size_t l = 0; l < dec_.size(); ++l) {
    const auto& layer = dec_[l];
    Var n1 = g.layer_norm(x, p(g, layer.ln1_g), p(g, layer.ln1_b));
    Var sa = attention_block(g, layer.self, n1, n1, self_shape, out.tgt_valid, true, nullptr);
    x = g.add(x, g.dropout(sa, config_.dropout, dropout));
    Var n2 = g.layer_norm(x, p(g, layer.ln2_g), p(g, layer.ln2_b));
    Var probs;
    Var ca = attention_block(g, layer.cross, n2, states, out.cross_shape, src_valid, false, &probs);
    if (l + 1 == dec_.size()) out.cross_probs = probs;
    x = g.add(x, g.dropout(ca, config_.dropout, dropout));
    Var n3 = g.layer_norm(x, p(g, layer.ln3_g), p(g, layer.ln3_b));
    Var ff = feed_forward(g, layer.w1, layer.b1, layer.w2, layer.b2, n3, dropout);
    x = g.add(x, g.dropout(ff, config_.dropout, dropout));
  }
  Var final_norm = g.layer_norm(x, p(g, dec_ln_g_), p(g, dec_ln_b_));
  out.logits = g.linear(final_norm, p(g, out_w_), p(g, out_b_));
  return out;
}

// ------------------------------------------------------------------ inference

template <typename T>
EncoderStates<T> encode_with_order(const Transformer<T>& model, const SourceInput& src) {
  Graph<T> g(false);
  const auto enc = model.encode(g, std::span<const SourceInput>(&src, 1), nullptr);
  EncoderStates<T> out;
  out.length = enc.src_len;
  out.hidden = model.config().hidden_size;
  out.body = g.value(enc.body);
  out.states = g.value(enc.states);
  return out;
}

namespace {

template <typename T>
struct BatchForward {
  Graph<T> graph{false};
  typename Transformer<T>::Decoded dec;
};

/// Decoder over `prefixes` (equal length) against one shared encoding.
template <typename T>
void run_decoder(const Transformer<T>& model, const EncoderStates<T>& enc, std::span<const std::vector<int>> prefixes,
                 BatchForward<T>& fw) {
  const int batch = static_cast<int>(prefixes.size());
  const int h = enc.hidden;
  std::vector<T> states(static_cast<std::size_t>(batch) * enc.length * h);
  for (int b = 0; b < batch; ++b)
    std::copy(enc.states.begin(), enc.states.end(),
              states.begin() + static_cast<std::ptrdiff_t>(b) * enc.length * h);
  Var st = fw.graph.input(batch * enc.length, h, std::move(states));
  std::vector<char> valid(static_cast<std::size_t>(batch) * enc.length, 1);
  fw.dec = model.decode(fw.graph, st, valid, batch, enc.length, prefixes, nullptr);
}

template <typename T>
std::vector<double> log_softmax(const T* row, int n) {
  double mx = row[0];
  for (int j = 1; j < n; ++j) mx = std::max(mx, static_cast<double>(row[j]));
  double z = 0;
  for (int j = 0; j < n; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
  const double lz = mx + std::log(z);
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(j)] = static_cast<double>(row[j]) - lz;
  return out;
}

}  // namespace

template <typename T>
StepOutput<T> decode_step(const Transformer<T>& model, const EncoderStates<T>& enc, std::span<const int> prefix) {
  SOWREAP_REQUIRE(!prefix.empty(), "decode_step: prefix must start with BOS");
  SOWREAP_REQUIRE(static_cast<int>(prefix.size()) <= model.config().max_positions,
                  "decode_step: prefix exceeds max_positions");
  std::vector<std::vector<int>> one{std::vector<int>(prefix.begin(), prefix.end())};
  BatchForward<T> fw;
  run_decoder(model, enc, one, fw);
  const int v = model.config().vocab_size;
  const int len = static_cast<int>(prefix.size());
  StepOutput<T> out;
  const auto& lv = fw.graph.value(fw.dec.logits);
  out.logits.assign(lv.begin() + static_cast<std::ptrdiff_t>(len - 1) * v, lv.begin() + static_cast<std::ptrdiff_t>(len) * v);
  const auto& pv = fw.graph.value(fw.dec.cross_probs);
  const int heads = model.config().heads;
  for (int hd = 0; hd < heads; ++hd) {
    const auto row = pv.begin() + static_cast<std::ptrdiff_t>(hd * len + len - 1) * enc.length;
    out.attention.emplace_back(row, row + enc.length);
  }
  return out;
}

template <typename T>
std::vector<std::vector<T>> next_log_probs(const Transformer<T>& model, const EncoderStates<T>& enc,
                                           std::span<const std::vector<int>> prefixes) {
  BatchForward<T> fw;
  run_decoder(model, enc, prefixes, fw);
  const int v = model.config().vocab_size;
  const int len = static_cast<int>(prefixes.front().size());
  const auto& lv = fw.graph.value(fw.dec.logits);
  std::vector<std::vector<T>> out;
  out.reserve(prefixes.size());
  for (std::size_t b = 0; b < prefixes.size(); ++b) {
    const auto lp = log_softmax(&lv[(b * len + static_cast<std::size_t>(len - 1)) * v], v);
    out.emplace_back(lp.begin(), lp.end());
  }
  return out;
}

template <typename T>
Hypothesis beam_decode(const Transformer<T>& model, const EncoderStates<T>& enc, int beam, int max_len) {
  SOWREAP_REQUIRE(beam >= 1, "beam_decode: beam must be >= 1");
  max_len = std::min(max_len, model.config().max_positions - 1);
  struct Item {
    std::vector<int> seq;  // starts with BOS
    double score;
  };
  std::vector<Item> alive{{{kBosId}, 0.0}};
  Hypothesis best;
  best.log_prob = -std::numeric_limits<double>::infinity();
  const int v = model.config().vocab_size;
  for (int step = 0; step < max_len && !alive.empty(); ++step) {
    std::vector<std::vector<int>> prefixes;
    for (const auto& it : alive) prefixes.push_back(it.seq);
    const auto lps = next_log_probs(model, enc, prefixes);
    struct Cand {
      double score;
      int from;
      int token;
    };
    std::vector<Cand> cands;
    cands.reserve(alive.size() * static_cast<std::size_t>(v));
    for (std::size_t a = 0; a < alive.size(); ++a)
      for (int tok = 0; tok < v; ++tok) {
        if (tok == kPadId || tok == kBosId) continue;
        cands.push_back({alive[a].score + static_cast<double>(lps[a][static_cast<std::size_t>(tok)]),
                         static_cast<int>(a), tok});
      }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) { return x.score > y.score; });
    std::vector<Item> next;
    for (const auto& c : cands) {
      if (static_cast<int>(next.size()) >= beam) break;
      // Everything later scores lower than the finished best: stop early.
      if (c.score <= best.log_prob) break;
      if (c.token == kEosId) {
        best.ids.assign(alive[static_cast<std::size_t>(c.from)].seq.begin() + 1,
                        alive[static_cast<std::size_t>(c.from)].seq.end());
        best.log_prob = c.score;
        best.finished = true;
        continue;
      }
      auto seq = alive[static_cast<std::size_t>(c.from)].seq;
      seq.push_back(c.token);
      next.push_back({std::move(seq), c.score});
    }
    // Log-probabilities only decrease, so alive items below the best finished
    // hypothesis can never overtake it.
    std::erase_if(next, [&](const Item& it) { return it.score <= best.log_prob; });
    alive = std::move(next);
  }
  if (!best.finished && !alive.empty()) {
    // Length limit reached without EOS: return the best unfinished prefix.
    best.ids.assign(alive.front().seq.begin() + 1, alive.front().seq.end());
    best.log_prob = alive.front().score;
  }
  return best;
}

template <typename T>
Hypothesis greedy_decode(const Transformer<T>& model, const EncoderStates<T>& enc, int max_len) {
  return beam_decode(model, enc, 1, max_len);
}

template <typename T>
Hypothesis sample_top_k(const Transformer<T>& model, const EncoderStates<T>& enc, int k, std::uint64_t seed,
                        int max_len) {
  SOWREAP_REQUIRE(k >= 1, "sample_top_k: k must be >= 1");
  max_len = std::min(max_len, model.config().max_positions - 1);
  Rng rng(seed);
  std::vector<int> seq{kBosId};
  Hypothesis out;
  const int v = model.config().vocab_size;
  for (int step = 0; step < max_len; ++step) {
    std::vector<std::vector<int>> one{seq};
    const auto lp = next_log_probs(model, enc, one).front();
    std::vector<int> order;
    for (int tok = 0; tok < v; ++tok)
      if (tok != kPadId && tok != kBosId) order.push_back(tok);
    const int kk = std::min<int>(k, static_cast<int>(order.size()));
    std::partial_sort(order.begin(), order.begin() + kk, order.end(), [&](int a, int b) {
      if (lp[static_cast<std::size_t>(a)] != lp[static_cast<std::size_t>(b)])
        return lp[static_cast<std::size_t>(a)] > lp[static_cast<std::size_t>(b)];
      return a < b;
    });
    order.resize(static_cast<std::size_t>(kk));
    int choice = order.front();
    if (kk > 1) {
      double z = 0;
      for (int tok : order) z += std::exp(static_cast<double>(lp[static_cast<std::size_t>(tok)]));
      double u = rng.uniform() * z;
      for (int tok : order) {
        u -= std::exp(static_cast<double>(lp[static_cast<std::size_t>(tok)]));
        choice = tok;
        if (u <= 0) break;
      }
    }
    out.log_prob += static_cast<double>(lp[static_cast<std::size_t>(choice)]);
    if (choice == kEosId) {
      out.finished = true;
      break;
    }
    seq.push_back(choice);
  }
  out.ids.assign(seq.begin() + 1, seq.end());
  return out;
}

namespace {

template <typename T>
std::vector<std::vector<int>> decoder_inputs(std::span<const Example> batch, std::vector<int>& targets, int& len) {
  len = 0;
  for (const auto& ex : batch) len = std::max(len, static_cast<int>(ex.tgt.size()) + 1);
  std::vector<std::vector<int>> tgt_in;
  targets.assign(batch.size() * static_cast<std::size_t>(len), -1);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    std::vector<int> in{kBosId};
    in.insert(in.end(), batch[b].tgt.begin(), batch[b].tgt.end());
    for (std::size_t i = 0; i < batch[b].tgt.size(); ++i) targets[b * len + i] = batch[b].tgt[i];
    targets[b * len + batch[b].tgt.size()] = kEosId;
    tgt_in.push_back(std::move(in));
  }
  return tgt_in;
}

template <typename T>
std::vector<SourceInput> sources_of(std::span<const Example> batch) {
  std::vector<SourceInput> out;
  out.reserve(batch.size());
  for (const auto& ex : batch) out.push_back(ex.src);
  return out;
}

template <typename T>
struct ForwardLoss {
  Var loss;
  LossParts parts;
  std::vector<T> row_nll;
  int tgt_len = 0;
};

template <typename T>
ForwardLoss<T> forward_loss(Graph<T>& g, const Transformer<T>& model, std::span<const Example> batch,
                            double coverage_coeff, Rng* dropout) {
  SOWREAP_REQUIRE(!batch.empty(), "empty batch");
  ForwardLoss<T> out;
  const auto sources = sources_of<T>(batch);
  auto enc = model.encode(g, sources, dropout);
  std::vector<int> targets;
  const auto tgt_in = decoder_inputs<T>(batch, targets, out.tgt_len);
  auto dec = model.decode(g, enc.states, enc.src_valid, enc.batch, enc.src_len, tgt_in, dropout);
  Var nll = g.cross_entropy_sum(dec.logits, targets, &out.row_nll);
  Var cov = g.coverage_sum(dec.cross_probs, dec.cross_shape, dec.tgt_valid);
  int tokens = 0;
  for (int t : targets) tokens += t >= 0 ? 1 : 0;
  const T inv = T(1) / static_cast<T>(tokens);
  out.loss = g.combine(nll, inv, cov, static_cast<T>(coverage_coeff) * inv);
  out.parts.tokens = tokens;
  out.parts.nll = static_cast<double>(g.scalar(nll)) / tokens;
  out.parts.coverage = static_cast<double>(g.scalar(cov)) / tokens;
  out.parts.loss = static_cast<double>(g.scalar(out.loss));
  return out;
}

}  // namespace

template <typename T>
std::vector<double> batch_nll(const Transformer<T>& model, std::span<const Example> batch) {
  Graph<T> g(false);
  const auto fl = forward_loss(g, model, batch, 0.0, nullptr);
  std::vector<double> out;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    double s = 0;
    const std::size_t n = batch[b].tgt.size() + 1;
    for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(fl.row_nll[b * fl.tgt_len + i]);
    out.push_back(s / static_cast<double>(n));
  }
  return out;
}

template <typename T>
double sequence_nll(const Transformer<T>& model, const SourceInput& src, std::span<const int> tgt) {
  SOWREAP_REQUIRE(!tgt.empty(), "sequence_nll: empty target");
  Example ex{src, std::vector<int>(tgt.begin(), tgt.end())};
  return batch_nll(model, std::span<const Example>(&ex, 1)).front();
}

template <typename T>
double sequence_log_prob(const Transformer<T>& model, const SourceInput& src, std::span<const int> tgt) {
  Example ex{src, std::vector<int>(tgt.begin(), tgt.end())};
  Graph<T> g(false);
  const auto fl = forward_loss(g, model, std::span<const Example>(&ex, 1), 0.0, nullptr);
  double s = 0;
  for (std::size_t i = 0; i <= tgt.size(); ++i) s -= static_cast<double>(fl.row_nll[i]);
  return s;
}

double coverage_loss(const std::vector<std::vector<double>>& attention_history) {
  double total = 0;
  std::vector<double> cov;
  for (const auto& row : attention_history) {
    if (cov.empty()) cov.assign(row.size(), 0.0);
    SOWREAP_REQUIRE(row.size() == cov.size(), "coverage_loss: ragged attention history");
    for (std::size_t i = 0; i < row.size(); ++i) total += std::min(row[i], cov[i]);
    for (std::size_t i = 0; i < row.size(); ++i) cov[i] += row[i];
  }
  return total;
}

template <typename T>
void Adam<T>::step(std::vector<Parameter<T>>& params) {
  if (m_.size() != params.size()) {
    m_.clear();
    v_.clear();
    for (const auto& prm : params) {
      m_.emplace_back(prm.size(), T(0));
      v_.emplace_back(prm.size(), T(0));
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
  const T step_size = static_cast<T>(cfg_.lr / bc1);
  const T inv_bc2 = static_cast<T>(1.0 / bc2);
  const T eps = static_cast<T>(cfg_.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& prm = params[i];
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < prm.size(); ++j) {
      const T gr = prm.grad[j];
      m[j] = b1 * m[j] + (T(1) - b1) * gr;
      v[j] = b2 * v[j] + (T(1) - b2) * gr * gr;
      prm.value[j] -= step_size * m[j] / (std::sqrt(v[j] * inv_bc2) + eps);
    }
  }
}

template <typename T>
LossParts compute_gradients(Transformer<T>& model, std::span<const Example> batch, double coverage_coeff,
                            Rng* dropout) {
  model.zero_grad();
  Graph<T> g(true);
  auto fl = forward_loss(g, model, batch, coverage_coeff, dropout);
  if (!std::isfinite(fl.parts.loss)) {
    throw NumericalError("non-finite loss (nll=" + std::to_string(fl.parts.nll) +
                         ", coverage=" + std::to_string(fl.parts.coverage) + ")");
  }
  g.backward(fl.loss);
  return fl.parts;
}

template <typename T>
LossParts compute_loss(const Transformer<T>& model, std::span<const Example> batch, double coverage_coeff) {
  Graph<T> g(false);
  return forward_loss(g, model, batch, coverage_coeff, nullptr).parts;
}

template <typename T>
LossParts train_step(Transformer<T>& model, std::span<const Example> batch, Adam<T>& optimizer,
                     double coverage_coeff, Rng* dropout) {
  auto parts = compute_gradients(model, batch, coverage_coeff, dropout);
  optimizer.step(model.parameters());
  return parts;
}

#define SOWREAP_INSTANTIATE(T)                                                                                    \
  template class Transformer<T>;                                                                                  \
  template class Adam<T>;                                                                                         \
  template EncoderStates<T> encode_with_order(const Transformer<T>&, const SourceInput&);                         \
  template StepOutput<T> decode_step(const Transformer<T>&, const EncoderStates<T>&, std::span<const int>);       \
  template std::vector<std::vector<T>> next_log_probs(const Transformer<T>&, const EncoderStates<T>&,              \
                                                     std::span<const std::vector<int>>);                          \
  template Hypothesis beam_decode(const Transformer<T>&, const EncoderStates<T>&, int, int);                      \
  template Hypothesis greedy_decode(const Transformer<T>&, const EncoderStates<T>&, int);                         \
  template Hypothesis sample_top_k(const Transformer<T>&, const EncoderStates<T>&, int, std::uint64_t, int);      \
  template double sequence_nll(const Transformer<T>&, const SourceInput&, std::span<const int>);                  \
  template std::vector<double> batch_nll(const Transformer<T>&, std::span<const Example>);                        \
  template double sequence_log_prob(const Transformer<T>&, const SourceInput&, std::span<const int>);             \
  template LossParts compute_gradients(Transformer<T>&, std::span<const Example>, double, Rng*);                  \
  template LossParts compute_loss(const Transformer<T>&, std::span<const Example>, double);                       \
  template LossParts train_step(Transformer<T>&, std::span<const Example>, Adam<T>&, double, Rng*);

SOWREAP_INSTANTIATE(float)
SOWREAP_INSTANTIATE(double)

}  // namespace sowreap::nn
