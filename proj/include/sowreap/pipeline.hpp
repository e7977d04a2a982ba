#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <iosfwd>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "sowreap/align.hpp"
#include "sowreap/bpe.hpp"
#include "sowreap/checkpoint.hpp"
#include "sowreap/config.hpp"
#include "sowreap/metrics.hpp"
#include "sowreap/sow.hpp"
#include "sowreap/transformer.hpp"

namespace sowreap {

// ------------------------------------------------------------------ workers

/// Runs f(i) for i in [0, n) on `workers` threads. Callers write results by
/// index, so output order never depends on scheduling. The first exception
/// (lowest index) is rethrown.
template <typename F>
void parallel_for(std::size_t n, int workers, F&& f) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  const auto count = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  for (std::size_t w = 0; w < count; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          f(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ------------------------------------------------------------------ JSONL

/// Parses one JSON object per non-blank line; errors name file and line.
std::vector<Json> read_jsonl(const std::string& path);
void write_jsonl(const std::string& path, const std::vector<Json>& rows);
void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

CorpusRecord corpus_record_from_json(const Json& j);
Json to_json(const CorpusRecord& r);

struct ReapRecord {
  std::string id;
  Tokens src;
  Tokens tgt;
  std::vector<int> r_star;
};

struct SowRecord {
  Tokens x_abs;
  Tokens y_abs;
  OrderPreference o = OrderPreference::Monotone;
  std::vector<std::string> labels;
  std::vector<std::string> pos_tags;

  /// Non-terminal flags recovered from tags: a position is abstracted when
  /// its token equals its tag and is one of the two labels.
  std::vector<char> nonterminals() const;
};

Json to_json(const ReapRecord& r);
ReapRecord reap_record_from_json(const Json& j);
Json to_json(const SowRecord& r);
SowRecord sow_record_from_json(const Json& j);
SowRecord to_sow_record(const SowTrainingTuple& t);
Json to_json(const Reordering& r, const std::string& sentence_id);

// ------------------------------------------------------------------ data

struct BuildOutput {
  std::vector<ReapRecord> reap;
  std::vector<SowRecord> sow;
  FilterCounts filter;
  BpeVocab vocab;
  Json stats;
};

/// Filter, word/phrase alignment, SOW tuple extraction and pseudo-ground-
/// truth reorderings. Throws FormatError on malformed parses.
BuildOutput build_data(std::span<const CorpusRecord> records, const RunConfig& cfg, const EmbeddingProvider& provider);

nn::SourceInput reap_input(const BpeVocab& vocab, const Tokens& src, std::span<const int> perm);
nn::Example reap_example(const BpeVocab& vocab, const ReapRecord& r);
nn::Example sow_example(const BpeVocab& vocab, const SowRecord& r);

// ------------------------------------------------------------------ training

struct EpochReport {
  int epoch = 0;  // 0-based
  double coverage_coeff = 0.0;
  double train_loss = 0.0;
  double train_nll = 0.0;
  double train_coverage = 0.0;
  double valid_nll = 0.0;
  bool improved = false;
};

Json to_json(const EpochReport& e);

/// Called after every epoch with the updated state.
using EpochHook = std::function<void(const EpochReport&, const TrainingState&)>;

/// Continues training from `state` until max_epochs, early stopping, or
/// `epochs_this_run` further epochs. Shuffling and dropout draw from per-
/// epoch sub-streams of `seed`, so an interrupted run resumes exactly.
TrainingState train_model(nn::Transformer<float>& model, nn::Adam<float>& optimizer, TrainingState state,
                          std::span<const nn::Example> train, std::span<const nn::Example> valid,
                          const TrainingConfig& cfg, nn::Variant variant, std::uint64_t seed,
                          const EpochHook& hook = {}, int epochs_this_run = -1);

/// Token-weighted mean NLL (no dropout, no coverage).
double corpus_nll(const nn::Transformer<float>& model, std::span<const nn::Example> data, int batch_size = 64);

/// Deterministic train/validation split.
void split_examples(std::vector<nn::Example> all, double valid_fraction, std::uint64_t seed,
                    std::vector<nn::Example>& train, std::vector<nn::Example>& valid);

// ------------------------------------------------------------------ generation

Tokens generate_paraphrase(const nn::Transformer<float>& reap, const BpeVocab& vocab, const Tokens& src,
                           std::span<const int> perm, const GenerationConfig& cfg, std::uint64_t sample_seed);

/// Per-ordering mean NLL of `reference` given src and each ordering.
std::vector<double> reference_nll(const nn::Transformer<float>& reap, const BpeVocab& vocab, const Tokens& src,
                                  const Tokens& reference, const std::vector<std::vector<int>>& orderings);

/// Kendall's tau of an output against its input: output tokens are aligned
/// to input positions with align_words.
double generated_tau(const Tokens& input, const Tokens& output, const EmbeddingProvider& provider);

struct OrderingCase {
  Tokens source;
  Tokens reference;
  std::vector<int> ground_truth;
  std::vector<std::vector<int>> sow;
};

struct OrderingRow {
  std::string name;
  double oracle_perplexity = 0.0;
  std::optional<double> oracle_bleu;
  std::vector<double> per_input_bleu;
};

/// Ordering comparison: Monotone, Random (k random orderings), Sow and
/// Ground Truth rows.
std::vector<OrderingRow> ordering_comparison(const nn::Transformer<float>& reap, const BpeVocab& vocab,
                                             std::span<const OrderingCase> cases, int k, std::uint64_t seed,
                                             const GenerationConfig* bleu_decoding, int workers);

// ------------------------------------------------------------------ commands

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumerical = 3;

int cmd_synth(const RunConfig& cfg, std::size_t n, std::ostream& log);
int cmd_build_data(const RunConfig& cfg, std::ostream& log);
int cmd_train(const RunConfig& cfg, nn::Variant which, std::ostream& log, int stop_after_epochs = -1);
int cmd_generate(const RunConfig& cfg, std::ostream& log, bool echo_sow = false);
int cmd_evaluate(const RunConfig& cfg, std::ostream& log);
int cmd_reorder(const RunConfig& cfg, std::ostream& log);

std::string checkpoint_path(const RunConfig& cfg, nn::Variant which, bool best);

}  // namespace sowreap
