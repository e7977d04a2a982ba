#include "sowreap/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "sowreap/error.hpp"
#include "sowreap/synthetic.hpp"

namespace sowreap {

namespace fs = std::filesystem;

// ------------------------------------------------------------------ JSONL

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out << text;
}

std::vector<Json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::vector<Json> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(Json::parse(line));
    } catch (const Json::parse_error& e) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": " + e.what(), e.byte);
    }
    if (!rows.back().is_object()) throw FormatError(path + ":" + std::to_string(line_no) + ": expected a JSON object");
  }
  return rows;
}

void write_jsonl(const std::string& path, const std::vector<Json>& rows) {
  std::string text;
  for (const auto& r : rows) text += r.dump() + "\n";
  write_text(path, text);
}

namespace {

std::string id_of(const Json& j) {
  if (!j.contains("id") && j.contains("sentence_id")) return id_of(Json{{"id", j["sentence_id"]}});
  if (!j.contains("id")) return "";
  const auto& v = j["id"];
  return v.is_string() ? v.get<std::string>() : v.dump();
}

std::string string_field(const Json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return "";
  if (!j[key].is_string()) throw FormatError(std::string("field '") + key + "' must be a string");
  return j[key].get<std::string>();
}

Tokens tokens_field(const Json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return {};
  if (j[key].is_string()) return split_whitespace(j[key].get<std::string>());
  return j[key].get<Tokens>();
}

}  // namespace

CorpusRecord corpus_record_from_json(const Json& j) {
  CorpusRecord r;
  r.id = id_of(j);
  r.source = tokens_field(j, "source");
  r.target = tokens_field(j, "target");
  r.source_parse = string_field(j, "source_parse");
  r.target_parse = string_field(j, "target_parse");
  r.source_dep = string_field(j, "source_dep");
  if (j.contains("para_score") && j["para_score"].is_number()) r.para_score = j["para_score"].get<double>();
  return r;
}

Json to_json(const CorpusRecord& r) {
  Json j{{"id", r.id},
         {"source", join(r.source)},
         {"target", join(r.target)},
         {"source_parse", r.source_parse},
         {"target_parse", r.target_parse},
         {"source_dep", r.source_dep}};
  if (r.para_score) j["para_score"] = *r.para_score;
  return j;
}

std::vector<char> SowRecord::nonterminals() const {
  std::vector<char> nt(x_abs.size(), 0);
  for (std::size_t i = 0; i < x_abs.size(); ++i)
    nt[i] = i < pos_tags.size() && x_abs[i] == pos_tags[i] &&
            std::find(labels.begin(), labels.end(), x_abs[i]) != labels.end();
  return nt;
}

Json to_json(const ReapRecord& r) {
  return Json{{"id", r.id}, {"src", join(r.src)}, {"tgt", join(r.tgt)}, {"r_star", r.r_star}};
}

ReapRecord reap_record_from_json(const Json& j) {
  ReapRecord r;
  r.id = id_of(j);
  r.src = tokens_field(j, "src");
  r.tgt = tokens_field(j, "tgt");
  r.r_star = j.at("r_star").get<std::vector<int>>();
  if (r.r_star.size() != r.src.size()) throw FormatError("REAP record '" + r.id + "': r_star length != src length");
  check_permutation(r.r_star);
  return r;
}

Json to_json(const SowRecord& r) {
  return Json{{"x_abs", join(r.x_abs)},
              {"y_abs", join(r.y_abs)},
              {"o", std::string(to_string(r.o))},
              {"labels", r.labels},
              {"pos_tags", r.pos_tags}};
}

SowRecord sow_record_from_json(const Json& j) {
  SowRecord r;
  r.x_abs = tokens_field(j, "x_abs");
  r.y_abs = tokens_field(j, "y_abs");
  r.o = parse_order_preference(j.at("o").get<std::string>());
  r.labels = j.at("labels").get<std::vector<std::string>>();
  r.pos_tags = j.at("pos_tags").get<std::vector<std::string>>();
  if (r.pos_tags.size() != r.x_abs.size()) throw FormatError("SOW tuple: pos_tags length != x_abs length");
  return r;
}

SowRecord to_sow_record(const SowTrainingTuple& t) { return {t.x_abs, t.y_abs, t.o, t.labels, t.pos_tags}; }

Json to_json(const Reordering& r, const std::string& sentence_id) {
  Json rules = Json::array();
  for (const auto& rule : r.provenance)
    rules.push_back({{"level", rule.level}, {"abstracted_input", rule.abstracted_input}, {"output", rule.output}});
  return Json{{"sentence_id", sentence_id}, {"perm", r.perm}, {"score", r.score}, {"rules", rules}};
}

// ------------------------------------------------------------------ data

BuildOutput build_data(std::span<const CorpusRecord> records, const RunConfig& cfg, const EmbeddingProvider& provider) {
  BuildOutput out;
  std::vector<CorpusRecord> complete;
  std::size_t missing = 0;
  for (const auto& r : records) {
    if (r.source_parse.empty() || r.target_parse.empty() || r.source_dep.empty()) ++missing;
    else complete.push_back(r);
  }
  auto filtered = filter_corpus(complete, cfg.filter, provider);
  out.filter = filtered.counts;
  out.filter.input = records.size();
  out.filter.missing_fields += missing;
  const auto& kept = filtered.kept;

  CorpusStats stats;
  for (const auto& r : kept) {
    stats.add(r.source);
    stats.add(r.target);
  }
  const ExtractOptions extract{cfg.engine.abstraction_threshold, cfg.engine.ignored_tags};
  std::vector<ReapRecord> reap(kept.size());
  std::vector<std::vector<SowRecord>> sow(kept.size());
  std::vector<std::set<std::string>> labels(kept.size());
  parallel_for(kept.size(), cfg.workers, [&](std::size_t i) {
    const auto& r = kept[i];
    auto where = [&](const std::string& what) { return "record '" + r.id + "': " + what; };
    ConstituencyTree st, tt;
    try {
      st = parse_ptb(r.source_parse);
      tt = parse_ptb(r.target_parse);
    } catch (const FormatError& e) {
      throw FormatError(where(e.what()), e.offset());
    }
    const auto dep = parse_dependencies(r.source_dep);
    if (surfaces(yield_of(st)) != r.source) throw FormatError(where("source_parse yield differs from source"));
    if (surfaces(yield_of(tt)) != r.target) throw FormatError(where("target_parse yield differs from target"));
    if (surfaces(dep.tokens()) != r.source) throw FormatError(where("source_dep tokens differ from source"));
    const auto wa = align_words(r.source, r.target, provider);
    reap[i] = {r.id, r.source, r.target, derive_pseudo_ground_truth(dep, wa).perm};
    const auto pairs = align_phrases(st, tt, provider, stats);
    for (const auto& t : extract_sow_tuples(pairs, st, tt, extract)) sow[i].push_back(to_sow_record(t));
    for (const auto* tree : {&st, &tt})
      for_each_node(*tree, [&](const ConstituencyTree& n, int) { labels[i].insert(n.label); });
  });

  std::set<std::string> all_labels;
  std::vector<std::vector<std::string>> corpus;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    all_labels.insert(labels[i].begin(), labels[i].end());
    corpus.push_back(kept[i].source);
    corpus.push_back(kept[i].target);
    out.reap.push_back(std::move(reap[i]));
    for (auto& s : sow[i]) out.sow.push_back(std::move(s));
  }
  if (!corpus.empty())
    out.vocab = BpeVocab::train(corpus, cfg.bpe_merges, {all_labels.begin(), all_labels.end()});

  std::size_t mono = 0;
  for (const auto& s : out.sow) mono += s.o == OrderPreference::Monotone ? 1 : 0;
  out.stats = Json{{"input_records", out.filter.input},
                   {"missing_fields", out.filter.missing_fields},
                   {"too_short", out.filter.too_short},
                   {"low_quality", out.filter.low_quality},
                   {"low_reordering", out.filter.low_reordering},
                   {"kept_records", out.filter.kept},
                   {"reap_records", out.reap.size()},
                   {"sow_tuples", out.sow.size()},
                   {"sow_monotone", mono},
                   {"sow_flip", out.sow.size() - mono},
                   {"vocab_size", out.vocab.size()}};
  return out;
}

nn::SourceInput reap_input(const BpeVocab& vocab, const Tokens& src, std::span<const int> perm) {
  SOWREAP_REQUIRE(perm.size() == src.size(), "REAP input: ordering length must match the source");
  const auto enc = vocab.encode_words(src);
  nn::SourceInput in;
  in.ids = enc.ids;
  in.order = expand_to_pieces(reordering_positions(perm).positions, enc.pieces, true);
  return in;
}

nn::Example reap_example(const BpeVocab& vocab, const ReapRecord& r) {
  return {reap_input(vocab, r.src, r.r_star), vocab.encode_words(r.tgt).ids};
}

nn::Example sow_example(const BpeVocab& vocab, const SowRecord& r) {
  return {NeuralTransducer::make_input(vocab, r.x_abs, r.pos_tags, r.nonterminals(), r.o),
          vocab.encode_words(r.y_abs).ids};
}

// ------------------------------------------------------------------ training

Json to_json(const EpochReport& e) {
  return Json{{"epoch", e.epoch},           {"coverage_coeff", e.coverage_coeff}, {"train_loss", e.train_loss},
              {"train_nll", e.train_nll},   {"train_coverage", e.train_coverage}, {"valid_nll", e.valid_nll},
              {"improved", e.improved}};
}

double corpus_nll(const nn::Transformer<float>& model, std::span<const nn::Example> data, int batch_size) {
  double total = 0.0;
  long tokens = 0;
  for (std::size_t i = 0; i < data.size(); i += static_cast<std::size_t>(batch_size)) {
    const auto batch = data.subspan(i, std::min<std::size_t>(static_cast<std::size_t>(batch_size), data.size() - i));
    const auto parts = nn::compute_loss(model, batch, 0.0);
    total += parts.nll * parts.tokens;
    tokens += parts.tokens;
  }
  return tokens > 0 ? total / static_cast<double>(tokens) : 0.0;
}

void split_examples(std::vector<nn::Example> all, double valid_fraction, std::uint64_t seed,
                    std::vector<nn::Example>& train, std::vector<nn::Example>& valid) {
  train.clear();
  valid.clear();
  std::vector<std::size_t> idx(all.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng = Rng::stream(seed, "split");
  shuffle(idx.begin(), idx.end(), rng);
  std::size_t n_valid = all.size() >= 2 ? static_cast<std::size_t>(std::ceil(valid_fraction * all.size())) : 0;
  n_valid = std::min(n_valid, all.size() - (all.empty() ? 0 : 1));
  for (std::size_t i = 0; i < idx.size(); ++i) (i < n_valid ? valid : train).push_back(std::move(all[idx[i]]));
}

TrainingState train_model(nn::Transformer<float>& model, nn::Adam<float>& optimizer, TrainingState state,
                          std::span<const nn::Example> train, std::span<const nn::Example> valid,
                          const TrainingConfig& cfg, nn::Variant variant, std::uint64_t seed, const EpochHook& hook,
                          int epochs_this_run) {
  SOWREAP_REQUIRE(!train.empty(), "train_model: no training examples");
  optimizer.config() = {cfg.lr, cfg.beta1, cfg.beta2, cfg.eps};
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  int ran = 0;
  while (!state.stopped && state.epochs_completed < cfg.max_epochs && (epochs_this_run < 0 || ran < epochs_this_run)) {
    EpochReport rep;
    rep.epoch = state.epochs_completed;
    rep.coverage_coeff = variant == nn::Variant::Reap ? coverage_coefficient(cfg.coverage_schedule, rep.epoch) : 0.0;
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffler = Rng::stream(seed, "shuffle", static_cast<std::uint64_t>(rep.epoch));
    shuffle(order.begin(), order.end(), shuffler);
    Rng dropout = Rng::stream(seed, "dropout", static_cast<std::uint64_t>(rep.epoch));
    double loss = 0, nll = 0, cov = 0;
    long tokens = 0;
    std::vector<nn::Example> batch;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) batch.push_back(train[order[i]]);
      const auto parts = nn::train_step(model, std::span<const nn::Example>(batch), optimizer, rep.coverage_coeff,
                                        &dropout);
      loss += parts.loss * parts.tokens;
      nll += parts.nll * parts.tokens;
      cov += parts.coverage * parts.tokens;
      tokens += parts.tokens;
    }
    if (!model.all_finite()) throw NumericalError("non-finite parameters after epoch " + std::to_string(rep.epoch));
    rep.train_loss = loss / static_cast<double>(tokens);
    rep.train_nll = nll / static_cast<double>(tokens);
    rep.train_coverage = cov / static_cast<double>(tokens);
    rep.valid_nll = valid.empty() ? rep.train_nll : corpus_nll(model, valid);
    if (!std::isfinite(rep.valid_nll)) throw NumericalError("non-finite validation NLL at epoch " + std::to_string(rep.epoch));
    rep.improved = state.best_epoch < 0 || rep.valid_nll < state.best_valid_nll;
    if (rep.improved) {
      state.best_valid_nll = rep.valid_nll;
      state.best_epoch = rep.epoch;
      state.bad_epochs = 0;
    } else {
      ++state.bad_epochs;
    }
    ++state.epochs_completed;
    state.history.push_back(to_json(rep));
    if ((cfg.patience > 0 && state.bad_epochs >= cfg.patience) || state.epochs_completed >= cfg.max_epochs)
      state.stopped = true;
    ++ran;
    if (hook) hook(rep, state);
  }
  return state;
}

// ------------------------------------------------------------------ generation

Tokens generate_paraphrase(const nn::Transformer<float>& reap, const BpeVocab& vocab, const Tokens& src,
                           std::span<const int> perm, const GenerationConfig& cfg, std::uint64_t sample_seed) {
  const auto in = reap_input(vocab, src, perm);
  const auto enc = nn::encode_with_order(reap, in);
  const int max_len = std::min(cfg.max_len, reap.config().max_positions - 1);
  const auto hyp = cfg.decoding == "beam" ? nn::beam_decode(reap, enc, cfg.beam, max_len)
                                          : nn::sample_top_k(reap, enc, cfg.top_k, sample_seed, max_len);
  return vocab.decode_words(hyp.ids);
}

std::vector<double> reference_nll(const nn::Transformer<float>& reap, const BpeVocab& vocab, const Tokens& src,
                                  const Tokens& reference, const std::vector<std::vector<int>>& orderings) {
  const auto tgt = vocab.encode_words(reference).ids;
  std::vector<nn::Example> batch;
  for (const auto& perm : orderings) batch.push_back({reap_input(vocab, src, perm), tgt});
  return nn::batch_nll(reap, batch);
}

double generated_tau(const Tokens& input, const Tokens& output, const EmbeddingProvider& provider) {
  SOWREAP_REQUIRE(output.size() >= 2, "generated_tau: output needs at least two tokens");
  return kendall_tau_sequence(align_words(output, input, provider));
}

std::vector<OrderingRow> ordering_comparison(const nn::Transformer<float>& reap, const BpeVocab& vocab,
                                             std::span<const OrderingCase> cases, int k, std::uint64_t seed,
                                             const GenerationConfig* bleu_decoding, int workers) {
  const std::vector<std::string> names = {"Monotone", "Random", "Sow", "Ground Truth"};
  const std::size_t n = cases.size();
  std::vector<std::vector<std::vector<double>>> nll(4, std::vector<std::vector<double>>(n));
  std::vector<std::vector<double>> bleus(4, std::vector<double>(n, 0.0));
  parallel_for(n, workers, [&](std::size_t i) {
    const auto& c = cases[i];
    const int len = static_cast<int>(c.source.size());
    std::vector<std::vector<std::vector<int>>> sets(4);
    sets[0] = {identity_permutation(len)};
    Rng rng = Rng::stream(seed, "random-orderings", i);
    for (int j = 0; j < k; ++j) {
      auto p = identity_permutation(len);
      shuffle(p.begin(), p.end(), rng);
      sets[1].push_back(std::move(p));
    }
    sets[2] = c.sow.empty() ? std::vector<std::vector<int>>{identity_permutation(len)} : c.sow;
    sets[3] = {c.ground_truth};
    for (std::size_t row = 0; row < 4; ++row) {
      nll[row][i] = reference_nll(reap, vocab, c.source, c.reference, sets[row]);
      if (!bleu_decoding) continue;
      double best = 0.0;
      for (const auto& p : sets[row]) {
        const auto out = generate_paraphrase(reap, vocab, c.source, p, *bleu_decoding, 0);
        best = std::max(best, bleu(out, c.reference));
      }
      bleus[row][i] = best;
    }
  });
  std::vector<OrderingRow> rows;
  for (std::size_t row = 0; row < 4; ++row) {
    OrderingRow r;
    r.name = names[row];
    r.oracle_perplexity = n > 0 ? oracle_perplexity(nll[row]) : 0.0;
    if (bleu_decoding) {
      double s = 0.0;
      for (double b : bleus[row]) s += b;
      r.oracle_bleu = n > 0 ? s / static_cast<double>(n) : 0.0;
      r.per_input_bleu = bleus[row];
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

// ------------------------------------------------------------------ commands

namespace {

void echo_config(const RunConfig& cfg, const std::string& dir) {
  write_text((fs::path(dir) / "effective_config.json").string(), to_json(cfg).dump(2) + "\n");
}

std::string variant_name(nn::Variant v) { return std::string(nn::to_string(v)); }

Checkpoint load_model(const RunConfig& cfg, nn::Variant which) {
  const auto best = checkpoint_path(cfg, which, true);
  const auto latest = checkpoint_path(cfg, which, false);
  auto ck = load_checkpoint(fs::exists(best) ? best : latest);
  if (ck.model->config().variant != which)
    throw FormatError("checkpoint for " + variant_name(which) + " holds a " +
                      variant_name(ck.model->config().variant) + " model");
  return ck;
}

std::uint64_t sample_seed(std::uint64_t seed, const std::string& id, std::size_t j) {
  return Rng::stream(seed, "sampling", fnv1a(id) + j)();
}

}  // namespace

std::string checkpoint_path(const RunConfig& cfg, nn::Variant which, bool best) {
  return (fs::path(cfg.paths.checkpoint_dir) / (variant_name(which) + (best ? ".best.ckpt" : ".ckpt"))).string();
}

int cmd_synth(const RunConfig& cfg, std::size_t n, std::ostream& log) {
  const auto pairs = synthesize_corpus(n, cfg.seed);
  std::vector<Json> rows;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    rows.push_back(to_json(to_corpus_record(pairs[i], "s" + std::to_string(i))));
  const auto path = (fs::path(cfg.paths.output_dir) / "corpus.jsonl").string();
  write_jsonl(path, rows);
  echo_config(cfg, cfg.paths.output_dir);
  log << "wrote " << rows.size() << " synthetic pairs to " << path << "\n";
  return kExitOk;
}

int cmd_build_data(const RunConfig& cfg, std::ostream& log) {
  if (cfg.paths.corpus.empty()) {
    log << "error: paths.corpus is not set\n";
    return kExitInput;
  }
  std::vector<CorpusRecord> records;
  {
    const auto rows = read_jsonl(cfg.paths.corpus);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      try {
        records.push_back(corpus_record_from_json(rows[i]));
      } catch (const std::exception& e) {
        throw FormatError(cfg.paths.corpus + ": record " + std::to_string(i + 1) + ": " + e.what());
      }
    }
  }
  const auto provider = make_embedding_provider(cfg.paths.embeddings, cfg.seed);
  const auto out = build_data(records, cfg, *provider);
  const fs::path dir(cfg.paths.data_dir);
  std::vector<Json> reap, sow;
  for (const auto& r : out.reap) reap.push_back(to_json(r));
  for (const auto& s : out.sow) sow.push_back(to_json(s));
  write_jsonl((dir / "reap_records.jsonl").string(), reap);
  write_jsonl((dir / "sow_tuples.jsonl").string(), sow);
  write_text((dir / "bpe.txt").string(), out.vocab.serialize());
  write_text((dir / "stats.json").string(), out.stats.dump(2) + "\n");
  echo_config(cfg, cfg.paths.data_dir);
  if (out.filter.missing_fields > 0)
    log << "warning: " << out.filter.missing_fields << " record(s) skipped for missing fields\n";
  if (out.filter.input > 0 && out.filter.kept == 0)
    log << "warning: every record was filtered out (" << out.filter.too_short << " shorter than "
        << cfg.filter.min_len << " tokens)\n";
  log << "build-data: " << out.filter.kept << "/" << out.filter.input << " records kept, " << out.reap.size()
      << " REAP records, " << out.sow.size() << " SOW tuples, vocab " << out.vocab.size() << "\n";
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, nn::Variant which, std::ostream& log, int stop_after_epochs) {
  const fs::path data(cfg.paths.data_dir);
  const auto vocab = BpeVocab::deserialize(read_text((data / "bpe.txt").string()));
  std::vector<nn::Example> examples;
  if (which == nn::Variant::Reap) {
    for (const auto& j : read_jsonl((data / "reap_records.jsonl").string()))
      examples.push_back(reap_example(vocab, reap_record_from_json(j)));
  } else {
    for (const auto& j : read_jsonl((data / "sow_tuples.jsonl").string()))
      examples.push_back(sow_example(vocab, sow_record_from_json(j)));
  }
  if (examples.empty()) {
    log << "error: no " << variant_name(which) << " training data in " << data << "\n";
    return kExitInput;
  }
  nn::ModelConfig mc = which == nn::Variant::Reap ? cfg.reap_model : cfg.sow_model;
  mc.variant = which;
  if (mc.vocab_size != 0 && mc.vocab_size != vocab.size()) {
    log << "error: config vocab_size " << mc.vocab_size << " does not match the data vocabulary (" << vocab.size()
        << ")\n";
    return kExitInput;
  }
  mc.vocab_size = vocab.size();
  try {
    mc.validate();
  } catch (const ContractViolation& e) {
    log << "error: invalid model config: " << e.what() << "\n";
    return kExitInput;
  }
  for (const auto& ex : examples) {
    if (static_cast<int>(ex.src.ids.size()) > mc.max_positions ||
        static_cast<int>(ex.tgt.size()) + 1 > mc.max_positions) {
      log << "error: an example exceeds max_positions " << mc.max_positions << "\n";
      return kExitInput;
    }
  }
  std::vector<nn::Example> train, valid;
  split_examples(std::move(examples), cfg.training.valid_fraction, cfg.seed, train, valid);

  fs::create_directories(cfg.paths.checkpoint_dir);
  const auto latest = checkpoint_path(cfg, which, false);
  const auto best = checkpoint_path(cfg, which, true);
  std::unique_ptr<nn::Transformer<float>> model;
  nn::Adam<float> optimizer;
  TrainingState state;
  if (fs::exists(latest)) {
    auto ck = load_checkpoint(latest);
    if (!(ck.model->config() == mc)) {
      log << "error: existing checkpoint " << latest << " has a different model config\n";
      return kExitInput;
    }
    model = std::move(ck.model);
    if (ck.optimizer) optimizer = *ck.optimizer;
    state = ck.state;
    log << "resuming " << variant_name(which) << " from epoch " << state.epochs_completed << "\n";
  } else {
    model = std::make_unique<nn::Transformer<float>>(mc, splitmix64(cfg.seed ^ fnv1a(variant_name(which))));
  }
  const Json extra{{"run_config", to_json(cfg)}};
  const auto log_path = (fs::path(cfg.paths.checkpoint_dir) / (variant_name(which) + "_train_log.jsonl")).string();
  auto hook = [&](const EpochReport& rep, const TrainingState& st) {
    save_checkpoint(latest, *model, vocab, &optimizer, st, extra);
    if (rep.improved) save_checkpoint(best, *model, vocab, nullptr, st, extra);
    std::vector<Json> rows(st.history.begin(), st.history.end());
    write_jsonl(log_path, rows);
    log << variant_name(which) << " epoch " << rep.epoch << " coverage_coeff " << rep.coverage_coeff << " train_loss "
        << std::fixed << std::setprecision(4) << rep.train_loss << " train_nll " << rep.train_nll << " valid_nll "
        << rep.valid_nll << (rep.improved ? " *" : "") << std::defaultfloat << "\n";
  };
  echo_config(cfg, cfg.paths.checkpoint_dir);
  log << "training " << variant_name(which) << ": " << train.size() << " train / " << valid.size()
      << " valid examples, " << model->parameter_count() << " parameters\n";
  state = train_model(*model, optimizer, state, train, valid, cfg.training, which, cfg.seed, hook, stop_after_epochs);
  if (state.stopped)
    log << variant_name(which) << " finished after " << state.epochs_completed << " epochs (best epoch "
        << state.best_epoch << ", valid_nll " << state.best_valid_nll << ")\n";
  return kExitOk;
}

int cmd_generate(const RunConfig& cfg, std::ostream& log, bool echo_sow) {
  if (cfg.paths.input.empty()) {
    log << "error: paths.input is not set\n";
    return kExitInput;
  }
  const auto rows = read_jsonl(cfg.paths.input);
  auto reap = load_model(cfg, nn::Variant::Reap);
  std::optional<Checkpoint> sow;
  if (!echo_sow) sow = load_model(cfg, nn::Variant::Sow);
  const auto provider = make_embedding_provider(cfg.paths.embeddings, cfg.seed);
  std::unique_ptr<PhraseTransducer> transducer;
  if (echo_sow) transducer = std::make_unique<EchoTransducer>();
  else transducer = std::make_unique<NeuralTransducer>(*sow->model, sow->vocab, cfg.engine.beam, cfg.engine.max_phrase_len);
  const LexicalOverlapScorer scorer;

  std::vector<std::optional<Json>> out(rows.size());
  std::vector<std::string> skipped(rows.size());
  parallel_for(rows.size(), cfg.workers, [&](std::size_t i) {
    const auto id = id_of(rows[i]);
    const auto parse = string_field(rows[i], "source_parse");
    if (parse.empty()) {
      skipped[i] = id;
      return;
    }
    const auto tree = parse_ptb(parse);
    const auto source = surfaces(yield_of(tree));
    const auto reorderings = reorder_sentence(tree, *transducer, *provider, cfg.engine);
    std::vector<Tokens> paraphrases;
    Json cands = Json::array();
    for (std::size_t j = 0; j < reorderings.size(); ++j) {
      paraphrases.push_back(generate_paraphrase(*reap.model, reap.vocab, source, reorderings[j].perm, cfg.generation,
                                                sample_seed(cfg.seed, id, j)));
    }
    const auto rej = rejection_filter(source, paraphrases, scorer, cfg.generation.rejection_threshold);
    std::set<std::size_t> kept(rej.kept.begin(), rej.kept.end());
    for (std::size_t j = 0; j < reorderings.size(); ++j) {
      Json c = to_json(reorderings[j], id);
      c.erase("sentence_id");
      c["paraphrase"] = join(paraphrases[j]);
      c["similarity"] = scorer.score(source, paraphrases[j]);
      c["kept"] = kept.count(j) > 0;
      cands.push_back(std::move(c));
    }
    out[i] = Json{{"id", id}, {"input", join(source)}, {"candidates", cands}, {"rejected_fraction", rej.rejected_fraction}};
  });
  std::vector<Json> records;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (out[i]) records.push_back(std::move(*out[i]));
    else log << "warning: input '" << skipped[i] << "' has no source_parse; skipped\n";
  }
  const auto path = (fs::path(cfg.paths.output_dir) / "generations.jsonl").string();
  write_jsonl(path, records);
  echo_config(cfg, cfg.paths.output_dir);
  log << "generate: " << records.size() << " inputs written to " << path << "\n";
  return kExitOk;
}

int cmd_evaluate(const RunConfig& cfg, std::ostream& log) {
  const auto gen_path = cfg.paths.generations.empty()
                            ? (fs::path(cfg.paths.output_dir) / "generations.jsonl").string()
                            : cfg.paths.generations;
  if (cfg.paths.references.empty()) {
    log << "error: paths.references is not set\n";
    return kExitInput;
  }
  const auto gens = read_jsonl(gen_path);
  const auto refs = read_jsonl(cfg.paths.references);
  std::map<std::string, const Json*> ref_by_id;
  for (const auto& r : refs) ref_by_id[id_of(r)] = &r;
  std::vector<std::string> missing;
  std::set<std::string> gen_ids;
  for (const auto& g : gens) {
    gen_ids.insert(id_of(g));
    if (!ref_by_id.count(id_of(g))) missing.push_back(id_of(g));
  }
  if (!missing.empty()) {
    log << "error: " << missing.size() << " generation id(s) have no reference:";
    for (const auto& m : missing) log << ' ' << m;
    log << "\n";
    return kExitInput;
  }
  const auto provider = make_embedding_provider(cfg.paths.embeddings, cfg.seed);
  const LexicalOverlapScorer scorer;

  const std::size_t n = gens.size();
  std::vector<SentenceEval> evals(n);
  std::vector<Tokens> inputs(n), references(n);
  std::vector<std::vector<Tokens>> candidates(n);
  std::vector<std::vector<std::vector<int>>> perms(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& g = gens[i];
    const auto& r = *ref_by_id.at(id_of(g));
    inputs[i] = tokens_field(g, "input");
    references[i] = r.contains("reference") ? tokens_field(r, "reference") : tokens_field(r, "target");
    for (const auto& c : g.at("candidates")) {
      candidates[i].push_back(tokens_field(c, "paraphrase"));
      perms[i].push_back(c.at("perm").get<std::vector<int>>());
    }
  }
  parallel_for(n, cfg.workers, [&](std::size_t i) {
    evals[i] = evaluate_sentence(inputs[i], candidates[i], references[i], scorer, cfg.generation.rejection_threshold);
  });
  const auto sys = aggregate(evals);
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  Json report;
  report["systems"]["sow_reap"] = {{"oracle_bleu", sys.oracle_bleu},  {"rouge1", sys.rouge1},
                                   {"rouge2", sys.rouge2},            {"rougeL", sys.rougeL},
                                   {"pct_rejected", sys.pct_rejected}, {"self_bleu", opt(sys.self_bleu)},
                                   {"self_wer", opt(sys.self_wer)},   {"sentences", sys.sentences},
                                   {"candidates", sys.candidates}};
  report["settings"] = {{"rejection_threshold", cfg.generation.rejection_threshold},
                        {"compliance_bins", cfg.compliance_bins}};

  std::vector<Json> per_sentence;
  for (std::size_t i = 0; i < n; ++i)
    per_sentence.push_back({{"id", id_of(gens[i])},
                            {"oracle_bleu", evals[i].oracle_bleu},
                            {"rouge1", evals[i].rouge1},
                            {"rouge2", evals[i].rouge2},
                            {"rougeL", evals[i].rougeL},
                            {"candidates", evals[i].candidates},
                            {"rejected", evals[i].rejected},
                            {"self_bleu", opt(evals[i].self_bleu)},
                            {"self_wer", opt(evals[i].self_wer)}});

  std::vector<ComplianceRecord> compliance;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < candidates[i].size(); ++j) {
      if (perms[i][j].size() < 2 || candidates[i][j].size() < 2) continue;
      compliance.push_back({kendall_tau_sequence(perms[i][j]), generated_tau(inputs[i], candidates[i][j], *provider)});
    }
  const auto curve = compliance_curve(compliance, cfg.compliance_bins);

  // The ordering comparison needs the REAP model and dependency parses.
  const auto reap_ckpt = checkpoint_path(cfg, nn::Variant::Reap, false);
  if (fs::exists(reap_ckpt) || fs::exists(checkpoint_path(cfg, nn::Variant::Reap, true))) {
    auto reap = load_model(cfg, nn::Variant::Reap);
    std::vector<OrderingCase> cases;
    std::vector<std::size_t> case_index;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& r = *ref_by_id.at(id_of(gens[i]));
      const auto dep_text = string_field(r, "source_dep");
      if (dep_text.empty() || inputs[i].size() < 2) continue;
      const auto dep = parse_dependencies(dep_text);
      if (surfaces(dep.tokens()) != inputs[i]) throw FormatError("reference '" + id_of(r) + "': source_dep tokens differ from input");
      OrderingCase c{inputs[i], references[i], derive_pseudo_ground_truth(dep, align_words(inputs[i], references[i], *provider)).perm, perms[i]};
      cases.push_back(std::move(c));
      case_index.push_back(i);
    }
    GenerationConfig decoding = cfg.generation;
    decoding.decoding = "beam";
    const auto rows = ordering_comparison(*reap.model, reap.vocab, cases, cfg.engine.k, cfg.seed, &decoding, cfg.workers);
    Json table = Json::array();
    for (const auto& row : rows)
      table.push_back({{"ordering", row.name}, {"oracle_perplexity", row.oracle_perplexity}, {"oracle_bleu", opt(row.oracle_bleu)}});
    report["ordering_comparison"] = {{"inputs", cases.size()}, {"rows", table}};
    if (!cases.empty())
      report["bootstrap"] = {{"sow_vs_monotone_oracle_bleu",
                              paired_bootstrap(rows[0].per_input_bleu, rows[2].per_input_bleu,
                                               cfg.bootstrap_resamples, cfg.seed)},
                             {"resamples", cfg.bootstrap_resamples}};
  } else {
    log << "note: no REAP checkpoint in " << cfg.paths.checkpoint_dir << "; ordering comparison skipped\n";
  }

  const fs::path dir(cfg.paths.output_dir);
  write_text((dir / "report.json").string(), report.dump(2) + "\n");
  write_text((dir / "compliance.tsv").string(), compliance_tsv(curve));
  write_jsonl((dir / "per_sentence.jsonl").string(), per_sentence);
  echo_config(cfg, cfg.paths.output_dir);
  log << "evaluate: " << n << " sentences, oracle BLEU " << sys.oracle_bleu << ", rejected " << sys.pct_rejected
      << "\n";
  return kExitOk;
}

int cmd_reorder(const RunConfig& cfg, std::ostream& log) {
  if (cfg.paths.input.empty()) {
    log << "error: paths.input is not set\n";
    return kExitInput;
  }
  const auto rows = read_jsonl(cfg.paths.input);
  auto sow = load_model(cfg, nn::Variant::Sow);
  const auto provider = make_embedding_provider(cfg.paths.embeddings, cfg.seed);
  const NeuralTransducer transducer(*sow.model, sow.vocab, cfg.engine.beam, cfg.engine.max_phrase_len);
  std::vector<std::vector<Json>> out(rows.size());
  parallel_for(rows.size(), cfg.workers, [&](std::size_t i) {
    const auto parse = string_field(rows[i], "source_parse");
    if (parse.empty()) return;
    const auto id = id_of(rows[i]);
    for (const auto& r : reorder_sentence(parse_ptb(parse), transducer, *provider, cfg.engine))
      out[i].push_back(to_json(r, id));
  });
  std::vector<Json> flat;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (out[i].empty()) log << "warning: input '" << id_of(rows[i]) << "' has no source_parse; skipped\n";
    for (auto& j : out[i]) flat.push_back(std::move(j));
  }
  const auto path = (fs::path(cfg.paths.output_dir) / "reorderings.jsonl").string();
  write_jsonl(path, flat);
  echo_config(cfg, cfg.paths.output_dir);
  log << "reorder: " << flat.size() << " reorderings written to " << path << "\n";
  return kExitOk;
}

}  // namespace sowreap
