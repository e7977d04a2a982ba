#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "sowreap/pipeline.hpp"
#include "sowreap/synthetic.hpp"

using namespace sowreap;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "sowreap_test_pipeline" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RunConfig small_config(const fs::path& root) {
  RunConfig cfg;
  cfg.seed = 5;
  cfg.bpe_merges = 80;
  for (auto* m : {&cfg.sow_model, &cfg.reap_model}) {
    m->hidden_size = 16;
    m->encoder_layers = 1;
    m->decoder_layers = 1;
    m->heads = 2;
    m->max_positions = 96;
  }
  cfg.training.lr = 1e-3;
  cfg.training.max_epochs = 2;
  cfg.training.batch_size = 16;
  cfg.engine.k = 3;
  cfg.engine.beam = 2;
  cfg.generation.max_len = 24;
  cfg.generation.top_k = 5;
  cfg.paths.corpus = (root / "corpus" / "corpus.jsonl").string();
  cfg.paths.data_dir = (root / "data").string();
  cfg.paths.checkpoint_dir = (root / "ck").string();
  cfg.paths.output_dir = (root / "out").string();
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(const std::string& cmd) {
  const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* cli() { return std::getenv("SOWREAP_CLI"); }

}  // namespace

TEST_CASE("JSONL round trip and line-numbered errors") {
  const auto dir = scratch("jsonl");
  const auto path = (dir / "rows.jsonl").string();
  write_jsonl(path, {Json{{"a", 1}}, Json{{"b", "x y"}}});
  const auto rows = read_jsonl(path);
  REQUIRE(rows.size() == 2);
  CHECK(rows[1]["b"] == "x y");
  write_text(path, "{\"a\": 1}\n\n{not json}\n");
  try {
    read_jsonl(path);
    FAIL("expected a FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find(":3") != std::string::npos);
  }
  CHECK_THROWS_AS(read_jsonl((dir / "missing.jsonl").string()), FormatError);
}

TEST_CASE("config JSON round trip and unknown keys") {
  RunConfig cfg = small_config("/tmp/x");
  cfg.training.coverage_schedule = {{0, 2.0}, {3, 0.25}};
  cfg.engine.ignored_tags = {"DT"};
  cfg.generation.decoding = "beam";
  const auto back = run_config_from_json(to_json(cfg));
  CHECK(back == cfg);
  CHECK(run_config_from_json(Json::object()) == RunConfig{});
  CHECK_THROWS_AS(run_config_from_json(Json{{"sede", 3}}), FormatError);
  CHECK_THROWS_AS(run_config_from_json(Json{{"training", {{"learning_rate", 3}}}}), FormatError);
  CHECK(coverage_coefficient(RunConfig{}.training.coverage_schedule, 0) == 1.0);
  CHECK(coverage_coefficient(RunConfig{}.training.coverage_schedule, 9) == 1.0);
  CHECK(coverage_coefficient(RunConfig{}.training.coverage_schedule, 10) == 0.5);
  CHECK(coverage_coefficient(RunConfig{}.training.coverage_schedule, 49) == 0.0);
}

TEST_CASE("corpus and REAP/SOW records survive JSON") {
  const auto pairs = synthesize_corpus(5, 3);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto rec = to_corpus_record(pairs[i], "r" + std::to_string(i));
    const auto back = corpus_record_from_json(to_json(rec));
    CHECK(back.id == rec.id);
    CHECK(back.source == rec.source);
    CHECK(back.target_parse == rec.target_parse);
    CHECK(back.para_score == rec.para_score);
  }
  const ReapRecord r{"x", fixtures::words("a b c"), fixtures::words("c a b"), {3, 1, 2}};
  const auto rb = reap_record_from_json(to_json(r));
  CHECK(rb.r_star == r.r_star);
  CHECK(rb.tgt == r.tgt);
  CHECK_THROWS_AS(reap_record_from_json(Json{{"id", "y"}, {"src", "a b"}, {"tgt", "b a"}, {"r_star", {1}}}),
                  FormatError);
  const SowRecord s{fixtures::words("NP saw NP"), fixtures::words("NP was seen by NP"), OrderPreference::Flip,
                    {"NP", "NP"}, fixtures::words("NP VBD NP")};
  const auto sb = sow_record_from_json(to_json(s));
  CHECK(sb.o == OrderPreference::Flip);
  CHECK(sb.nonterminals() == std::vector<char>{1, 0, 1});
}

TEST_CASE("synthetic pairs are consistent") {
  std::set<std::vector<int>> distinct;
  for (const auto& p : synthesize_corpus(300, 9)) {
    CHECK(p.source.size() >= 8);
    CHECK(p.source.size() <= 16);
    CHECK(std::set<std::string>(p.source.begin(), p.source.end()).size() == p.source.size());
    CHECK(fixtures::is_perm_of_n(p.perm));
    CHECK(apply_permutation<std::string>(p.source, p.perm) == p.target);
    CHECK(surfaces(yield_of(p.source_tree)) == p.source);
    CHECK(surfaces(yield_of(p.target_tree)) == p.target);
    CHECK(surfaces(p.source_dep.tokens()) == p.source);
    distinct.insert(p.perm);
  }
  CHECK(distinct.size() > 50);
  // Same seed, same corpus.
  const auto a = synthesize_corpus(20, 4), b = synthesize_corpus(20, 4);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].target == b[i].target);
}

TEST_CASE("build_data matches a direct pass over the corpus") {
  const auto dir = scratch("build");
  auto cfg = small_config(dir);
  const auto pairs = synthesize_corpus(80, 12);
  std::vector<CorpusRecord> records;
  for (std::size_t i = 0; i < pairs.size(); ++i) records.push_back(to_corpus_record(pairs[i], "s" + std::to_string(i)));
  records.push_back(CorpusRecord{"short", fixtures::words("a b"), fixtures::words("b a"), "(S (X a) (Y b))",
                                 "(S (Y b) (X a))", "1\ta\t_\t_\t_\t_\t0\t_\t_\t_\n2\tb\t_\t_\t_\t_\t1\t_\t_\t_\n", 1.0});
  CorpusRecord bare;
  bare.id = "bare";
  bare.source = fixtures::words("a b c d e f g h");
  bare.target = bare.source;
  records.push_back(bare);

  const HashEmbeddings emb(64, cfg.seed);
  const auto out = build_data(records, cfg, emb);
  const auto filtered = filter_corpus(records, cfg.filter, emb);
  CHECK(out.filter.input == records.size());
  CHECK(out.filter.missing_fields == 1);
  CHECK(out.filter.too_short == 1);
  CHECK(out.filter.kept == filtered.kept.size());
  REQUIRE(out.reap.size() == filtered.kept.size());
  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < pairs.size(); ++i) by_id["s" + std::to_string(i)] = i;
  for (const auto& r : out.reap) {
    const auto& p = pairs.at(by_id.at(r.id));
    CHECK(r.r_star == derive_pseudo_ground_truth(p.source_dep, align_words(p.source, p.target, emb)).perm);
    CHECK(r.r_star == p.perm);
  }
  CHECK(out.stats["kept_records"] == out.filter.kept);
  CHECK(out.stats["sow_tuples"] == out.sow.size());
  CHECK(out.stats["sow_monotone"].get<std::size_t>() + out.stats["sow_flip"].get<std::size_t>() == out.sow.size());
  CHECK(out.vocab.size() == out.stats["vocab_size"].get<int>());
  for (const auto& s : out.sow) {
    CHECK(s.labels.size() == 2);
    const auto nt = s.nonterminals();
    CHECK(std::count(nt.begin(), nt.end(), 1) == 2);
    const auto ex = sow_example(out.vocab, s);
    CHECK(ex.src.tags.size() == ex.src.ids.size());
    for (const auto& l : s.labels) CHECK(out.vocab.label_id(l) >= 0);
  }
  for (const auto& r : out.reap) {
    const auto ex = reap_example(out.vocab, r);
    CHECK(fixtures::is_perm_of_n(ex.src.order));
  }
}

TEST_CASE("build_data on an empty corpus") {
  const auto out = build_data({}, RunConfig{}, HashEmbeddings(8));
  CHECK(out.reap.empty());
  CHECK(out.sow.empty());
  CHECK(out.stats["input_records"] == 0);
}

TEST_CASE("mismatched parses are reported with the record id") {
  const auto pairs = synthesize_corpus(20, 2);
  const auto it = std::find_if(pairs.begin(), pairs.end(), [](const SyntheticPair& p) {
    return p.perm != identity_permutation(static_cast<int>(p.perm.size()));
  });
  REQUIRE(it != pairs.end());
  auto rec = to_corpus_record(*it, "broken");
  std::swap(rec.source_parse, rec.target_parse);
  RunConfig cfg;
  cfg.filter.reorder_score_max = 2.0;
  try {
    build_data(std::vector<CorpusRecord>{rec}, cfg, HashEmbeddings(16));
    FAIL("expected a FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("broken") != std::string::npos);
  }
}

TEST_CASE("parallel_for writes by index and rethrows") {
  std::vector<int> out(100, 0);
  parallel_for(out.size(), 4, [&](std::size_t i) { out[i] = static_cast<int>(i * i); });
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == static_cast<int>(i * i));
  CHECK_THROWS_AS(parallel_for(10, 3,
                               [](std::size_t i) {
                                 if (i == 7) throw FormatError("seven");
                               }),
                  FormatError);
}

TEST_CASE("commands: build, train with resume, generate, evaluate, reorder") {
  const auto dir = scratch("commands");
  auto cfg = small_config(dir);
  std::ostringstream log;
  {
    auto synth = cfg;
    synth.paths.output_dir = (dir / "corpus").string();
    REQUIRE(cmd_synth(synth, 60, log) == kExitOk);
  }
  REQUIRE(cmd_build_data(cfg, log) == kExitOk);
  const auto stats = Json::parse(slurp(dir / "data" / "stats.json"));
  CHECK(stats["reap_records"].get<int>() > 20);
  CHECK(fs::exists(dir / "data" / "effective_config.json"));

  // Interrupted and resumed training ends in the same state as one run.
  REQUIRE(cmd_train(cfg, nn::Variant::Reap, log, 1) == kExitOk);
  CHECK(load_checkpoint(checkpoint_path(cfg, nn::Variant::Reap, false)).state.epochs_completed == 1);
  REQUIRE(cmd_train(cfg, nn::Variant::Reap, log) == kExitOk);
  auto straight = cfg;
  straight.paths.checkpoint_dir = (dir / "ck_straight").string();
  REQUIRE(cmd_train(straight, nn::Variant::Reap, log) == kExitOk);
  {
    const auto a = load_checkpoint(checkpoint_path(cfg, nn::Variant::Reap, false));
    const auto b = load_checkpoint(checkpoint_path(straight, nn::Variant::Reap, false));
    CHECK(a.state.epochs_completed == 2);
    REQUIRE(a.model->parameters().size() == b.model->parameters().size());
    for (std::size_t i = 0; i < a.model->parameters().size(); ++i)
      CHECK(a.model->parameters()[i].value == b.model->parameters()[i].value);
    CHECK(a.state.history == b.state.history);
    CHECK(a.state.history[0]["epoch"] == 0);
  }
  const auto train_log = read_jsonl((dir / "ck" / "reap_train_log.jsonl").string());
  CHECK(train_log.size() == 2);

  // A different architecture cannot resume from the existing checkpoint.
  auto other = cfg;
  other.reap_model.hidden_size = 8;
  CHECK(cmd_train(other, nn::Variant::Reap, log) == kExitInput);
  auto wrong_vocab = cfg;
  wrong_vocab.reap_model.vocab_size = 7;
  CHECK(cmd_train(wrong_vocab, nn::Variant::Reap, log) == kExitInput);

  REQUIRE(cmd_train(cfg, nn::Variant::Sow, log) == kExitOk);

  // Generate for the first few corpus records.
  const auto corpus = read_jsonl(cfg.paths.corpus);
  std::vector<Json> inputs(corpus.begin(), corpus.begin() + 4);
  cfg.paths.input = (dir / "inputs.jsonl").string();
  write_jsonl(cfg.paths.input, inputs);
  REQUIRE(cmd_generate(cfg, log) == kExitOk);
  const auto gen_text = slurp(dir / "out" / "generations.jsonl");
  const auto gens = read_jsonl((dir / "out" / "generations.jsonl").string());
  REQUIRE(gens.size() == 4);
  for (const auto& g : gens) {
    CHECK(g["candidates"].size() >= 1);
    CHECK(g["candidates"].size() <= static_cast<std::size_t>(cfg.engine.k));
    for (const auto& c : g["candidates"]) {
      const auto perm = c["perm"].get<std::vector<int>>();
      CHECK(fixtures::is_perm_of_n(perm));
      CHECK(perm.size() == split_whitespace(g["input"].get<std::string>()).size());
    }
  }
  REQUIRE(cmd_generate(cfg, log) == kExitOk);
  CHECK(slurp(dir / "out" / "generations.jsonl") == gen_text);

  cfg.paths.references = cfg.paths.corpus;
  REQUIRE(cmd_evaluate(cfg, log) == kExitOk);
  const auto report = Json::parse(slurp(dir / "out" / "report.json"));
  CHECK(report["systems"]["sow_reap"]["sentences"] == 4);
  REQUIRE(report.contains("ordering_comparison"));
  const auto& rows = report["ordering_comparison"]["rows"];
  REQUIRE(rows.size() == 4);
  CHECK(rows[0]["ordering"] == "Monotone");
  CHECK(rows[3]["ordering"] == "Ground Truth");
  for (const auto& r : rows) CHECK(r["oracle_perplexity"].get<double>() >= 1.0);
  CHECK(fs::exists(dir / "out" / "compliance.tsv"));
  const auto per_sentence = read_jsonl((dir / "out" / "per_sentence.jsonl").string());
  REQUIRE(per_sentence.size() == 4);
  double bleu_sum = 0;
  std::size_t cand_sum = 0;
  for (const auto& p : per_sentence) bleu_sum += p["oracle_bleu"].get<double>(), cand_sum += p["candidates"].get<std::size_t>();
  CHECK(report["systems"]["sow_reap"]["oracle_bleu"].get<double>() == doctest::Approx(bleu_sum / 4));
  CHECK(report["systems"]["sow_reap"]["candidates"] == cand_sum);

  REQUIRE(cmd_reorder(cfg, log) == kExitOk);
  const auto reord = read_jsonl((dir / "out" / "reorderings.jsonl").string());
  CHECK(reord.size() >= 4);
  for (const auto& r : reord) CHECK(r.contains("sentence_id"));

  // References without the generated ids.
  auto bad = cfg;
  bad.paths.references = (dir / "refs.jsonl").string();
  write_jsonl(bad.paths.references, {Json{{"id", "nobody"}, {"target", "x"}}});
  CHECK(cmd_evaluate(bad, log) == kExitInput);
}

TEST_CASE("evaluate: generations equal to the references score perfectly") {
  const auto dir = scratch("perfect");
  auto cfg = small_config(dir);
  const auto pairs = synthesize_corpus(6, 21);
  std::vector<Json> refs, gens;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto id = "p" + std::to_string(i);
    refs.push_back(to_json(to_corpus_record(pairs[i], id)));
    gens.push_back({{"id", id},
                    {"input", join(pairs[i].source)},
                    {"candidates", Json::array({Json{{"perm", pairs[i].perm}, {"paraphrase", join(pairs[i].target)}}})}});
  }
  cfg.paths.references = (dir / "refs.jsonl").string();
  cfg.paths.generations = (dir / "gens.jsonl").string();
  write_jsonl(cfg.paths.references, refs);
  write_jsonl(cfg.paths.generations, gens);
  std::ostringstream log;
  REQUIRE(cmd_evaluate(cfg, log) == kExitOk);
  const auto report = Json::parse(slurp(dir / "out" / "report.json"));
  const auto& s = report["systems"]["sow_reap"];
  CHECK(s["oracle_bleu"].get<double>() == doctest::Approx(1.0));
  CHECK(s["rougeL"].get<double>() == doctest::Approx(1.0));
  CHECK(s["pct_rejected"].get<double>() == 0.0);
  CHECK(s["self_bleu"].is_null());
  CHECK_FALSE(report.contains("ordering_comparison"));
}

TEST_CASE("command-line exit codes and determinism") {
  if (!cli()) {
    MESSAGE("SOWREAP_CLI not set; skipping");
    return;
  }
  const std::string exe = cli();
  const auto dir = scratch("cli");
  CHECK(run(exe + " --help") == 0);
  CHECK(run(exe + " train --model xyz") == 2);
  CHECK(run(exe + " no-such-command") == 2);
  CHECK(run(exe + " build-data --config " + (dir / "missing.json").string()) == 2);
  write_text((dir / "bad.json").string(), "{\"seed\": ");
  CHECK(run(exe + " build-data --config " + (dir / "bad.json").string()) == 2);
  write_text((dir / "unknown.json").string(), "{\"speed\": 1}");
  CHECK(run(exe + " build-data --config " + (dir / "unknown.json").string()) == 2);
  CHECK(run(exe + " generate --out " + (dir / "g").string()) == 2);

  CHECK(run(exe + " synth --n 30 --seed 3 --out " + (dir / "a").string()) == 0);
  CHECK(run(exe + " synth --n 30 --seed 3 --out " + (dir / "b").string()) == 0);
  CHECK(run(exe + " synth --n 30 --seed 4 --out " + (dir / "c").string()) == 0);
  CHECK(slurp(dir / "a" / "corpus.jsonl") == slurp(dir / "b" / "corpus.jsonl"));
  CHECK(slurp(dir / "a" / "corpus.jsonl") != slurp(dir / "c" / "corpus.jsonl"));

  // Non-finite parameters from a diverging run map to exit code 3.
  auto cfg = small_config(dir);
  cfg.paths.corpus = (dir / "a" / "corpus.jsonl").string();
  cfg.training.lr = 1e30;
  cfg.training.max_epochs = 1;
  write_text((dir / "diverge.json").string(), to_json(cfg).dump());
  CHECK(run(exe + " build-data --config " + (dir / "diverge.json").string()) == 0);
  const int code = run(exe + " train --model reap --config " + (dir / "diverge.json").string());
  CHECK((code == 3 || code == 0));
  if (code == 0) MESSAGE("lr 1e30 did not produce non-finite parameters");
}
