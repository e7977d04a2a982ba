#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sowreap/autograd.hpp"
#include "sowreap/order.hpp"
#include "sowreap/rng.hpp"

namespace sowreap::nn {

/// REAP: reordering positions added to the final encoder output.
/// SOW: tag embeddings at the input plus MONOTONE/FLIP marker positions.
enum class Variant { Reap, Sow };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);

struct ModelConfig {
  int hidden_size = 256;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int heads = 8;
  double dropout = 0.1;
  int vocab_size = 0;
  int max_positions = 128;
  int ff_size = 0;  // 0 means 4 * hidden_size
  Variant variant = Variant::Reap;

  int feed_forward() const { return ff_size > 0 ? ff_size : 4 * hidden_size; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;

/// One encoder input. `order` has one entry per id; `tags` is required for
/// the SOW variant and must be empty for REAP.
struct SourceInput {
  std::vector<int> ids;
  std::vector<int> order;
  std::vector<int> tags;
};

/// Target ids exclude BOS/EOS; the model predicts tgt followed by EOS.
struct Example {
  SourceInput src;
  std::vector<int> tgt;
};

template <typename T>
class Transformer {
 public:
  Transformer(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::vector<Parameter<T>>& parameters() { return params_; }
  const std::vector<Parameter<T>>& parameters() const { return params_; }
  Parameter<T>* find(std::string_view name);
  std::size_t parameter_count() const;
  void zero_grad();
  bool all_finite() const;

  struct Encoded {
    Var body;     // E_M, output of the final encoder layer (after layer norm)
    Var states;   // E = E_M + PE(order)
    int batch = 0;
    int src_len = 0;
    std::vector<char> src_valid;  // batch * src_len
  };

  struct Decoded {
    Var logits;       // [batch * tgt_len, vocab]
    Var cross_probs;  // last decoder layer, [batch * heads * tgt_len, src_len]
    AttentionShape cross_shape;
    std::vector<char> tgt_valid;  // batch * tgt_len
  };

  /// Builds the encoder for a padded batch. `dropout` null means eval mode.
  Encoded encode(Graph<T>& g, std::span<const SourceInput> batch, Rng* dropout) const;

  /// Runs the decoder over teacher-forced inputs (each row starts with BOS).
  Decoded decode(Graph<T>& g, Var states, std::span<const char> src_valid, int batch, int src_len,
                 std::span<const std::vector<int>> tgt_in, Rng* dropout) const;

  /// Sinusoid row cache for positions 0..max_positions.
  const std::vector<T>& position_row(int pos) const;

 private:
  struct AttnIdx {
    int wq, bq, wk, bk, wv, bv, wo, bo;
  };
  struct EncLayer {
    int ln1_g, ln1_b;
    AttnIdx self;
    int ln2_g, ln2_b, w1, b1, w2, b2;
  };
  struct DecLayer {
    int ln1_g, ln1_b;
    AttnIdx self;
    int ln2_g, ln2_b;
    AttnIdx cross;
    int ln3_g, ln3_b, w1, b1, w2, b2;
  };

  int add_param(const std::string& name, int rows, int cols);
  AttnIdx add_attention(const std::string& prefix);
  void init(std::uint64_t seed);
  Var p(Graph<T>& g, int idx) const;
  Var attention_block(Graph<T>& g, const AttnIdx& a, Var query_in, Var key_in, const AttentionShape& s,
                      std::span<const char> key_valid, bool causal, Var* probs_out) const;
  Var feed_forward(Graph<T>& g, int w1, int b1, int w2, int b2, Var x, Rng* dropout) const;

  ModelConfig config_;
  std::vector<Parameter<T>> params_;
  int tok_emb_ = -1;
  int tag_emb_ = -1;
  std::vector<EncLayer> enc_;
  int enc_ln_g_ = -1, enc_ln_b_ = -1;
  std::vector<DecLayer> dec_;
  int dec_ln_g_ = -1, dec_ln_b_ = -1;
  int out_w_ = -1, out_b_ = -1;
  std::vector<std::vector<T>> pe_rows_;
};

// ------------------------------------------------------------------ inference

template <typename T>
struct EncoderStates {
  int length = 0;
  int hidden = 0;
  std::vector<T> body;    // E_M, row-major [length, hidden]
  std::vector<T> states;  // E
};

template <typename T>
struct StepOutput {
  std::vector<T> logits;                  // [vocab]
  std::vector<std::vector<T>> attention;  // [heads][src_len], last decoder layer
};

template <typename T>
EncoderStates<T> encode_with_order(const Transformer<T>& model, const SourceInput& src);

template <typename T>
StepOutput<T> decode_step(const Transformer<T>& model, const EncoderStates<T>& enc, std::span<const int> prefix);

/// Next-token log-probabilities for several equal-length prefixes sharing one
/// encoding; prefixes start with BOS.
template <typename T>
std::vector<std::vector<T>> next_log_probs(const Transformer<T>& model, const EncoderStates<T>& enc,
                                           std::span<const std::vector<int>> prefixes);

struct Hypothesis {
  std::vector<int> ids;  // without BOS/EOS
  double log_prob = 0.0;
  bool finished = false;
};

template <typename T>
Hypothesis beam_decode(const Transformer<T>& model, const EncoderStates<T>& enc, int beam, int max_len);

template <typename T>
Hypothesis greedy_decode(const Transformer<T>& model, const EncoderStates<T>& enc, int max_len);

template <typename T>
Hypothesis sample_top_k(const Transformer<T>& model, const EncoderStates<T>& enc, int k, std::uint64_t seed,
                        int max_len);

/// Mean per-token negative log-likelihood of tgt (+EOS) given the source.
template <typename T>
double sequence_nll(const Transformer<T>& model, const SourceInput& src, std::span<const int> tgt);

/// Batched version: one mean NLL per example.
template <typename T>
std::vector<double> batch_nll(const Transformer<T>& model, std::span<const Example> batch);

/// Summed log-probability of tgt followed by EOS (the beam score convention).
template <typename T>
double sequence_log_prob(const Transformer<T>& model, const SourceInput& src, std::span<const int> tgt);

/// sum_t sum_i min(a_t,i, c_t,i) with c_t the sum of earlier attention rows.
double coverage_loss(const std::vector<std::vector<double>>& attention_history);

// ------------------------------------------------------------------ training

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
  void step(std::vector<Parameter<T>>& params);
  const AdamConfig& config() const { return cfg_; }
  AdamConfig& config() { return cfg_; }
  std::int64_t steps() const { return t_; }

  // State access for checkpointing.
  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

struct LossParts {
  double loss = 0.0;      // nll + coeff * coverage
  double nll = 0.0;       // per target token
  double coverage = 0.0;  // per target token
  int tokens = 0;
};

/// Forward + backward; parameter gradients are overwritten (not accumulated).
template <typename T>
LossParts compute_gradients(Transformer<T>& model, std::span<const Example> batch, double coverage_coeff,
                            Rng* dropout);

/// Forward only, eval mode.
template <typename T>
LossParts compute_loss(const Transformer<T>& model, std::span<const Example> batch, double coverage_coeff);

/// One optimiser update. Throws NumericalError on a non-finite loss.
template <typename T>
LossParts train_step(Transformer<T>& model, std::span<const Example> batch, Adam<T>& optimizer,
                     double coverage_coeff, Rng* dropout);

}  // namespace sowreap::nn
