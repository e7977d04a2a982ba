#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "sowreap/config.hpp"
#include "sowreap/error.hpp"
#include "sowreap/pipeline.hpp"

using namespace sowreap;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> k, beam, top_k, workers;
  std::optional<std::string> out, corpus, input, references, generations, embeddings;
};

void add_common(CLI::App& sub, Overrides& o) {
  sub.add_option("--config", o.config, "Run configuration (JSON)");
  sub.add_option("--seed", o.seed, "Random seed");
  sub.add_option("--k", o.k, "Number of reorderings per sentence");
  sub.add_option("--beam", o.beam, "Beam width for the SOW transducer and beam decoding");
  sub.add_option("--top-k", o.top_k, "Top-k sampling width for REAP");
  sub.add_option("--out", o.out, "Output directory of this command");
  sub.add_option("--workers", o.workers, "Worker threads");
  sub.add_option("--corpus", o.corpus, "Paired corpus JSONL");
  sub.add_option("--input", o.input, "Input sentences JSONL");
  sub.add_option("--references", o.references, "References JSONL");
  sub.add_option("--generations", o.generations, "Generations JSONL");
  sub.add_option("--embeddings", o.embeddings, "Embedding file, or hash[:dim]");
}

RunConfig resolve(const Overrides& o, const std::string& command) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.k) cfg.engine.k = *o.k;
  if (o.beam) {
    cfg.engine.beam = *o.beam;
    cfg.generation.beam = *o.beam;
  }
  if (o.top_k) cfg.generation.top_k = *o.top_k;
  if (o.workers) cfg.workers = *o.workers;
  if (o.corpus) cfg.paths.corpus = *o.corpus;
  if (o.input) cfg.paths.input = *o.input;
  if (o.references) cfg.paths.references = *o.references;
  if (o.generations) cfg.paths.generations = *o.generations;
  if (o.embeddings) cfg.paths.embeddings = *o.embeddings;
  if (o.out) {
    if (command == "build-data") cfg.paths.data_dir = *o.out;
    else if (command == "train") cfg.paths.checkpoint_dir = *o.out;
    else cfg.paths.output_dir = *o.out;
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Syntax-guided paraphrase generation (SOW reordering + REAP)"};
  app.require_subcommand(1);
  Overrides o;

  auto* synth = app.add_subcommand("synth", "Write a synthetic paired corpus with parses");
  std::size_t synth_n = 1000;
  synth->add_option("--n", synth_n, "Number of pairs");
  auto* build = app.add_subcommand("build-data", "Filter the corpus and extract SOW/REAP training data");
  auto* train = app.add_subcommand("train", "Train the SOW or REAP model");
  std::string model = "reap";
  int stop_after = -1;
  train->add_option("--model", model, "sow or reap")->check(CLI::IsMember({"sow", "reap"}));
  train->add_option("--stop-after", stop_after, "Stop after this many epochs in this run (resumable)");
  auto* generate = app.add_subcommand("generate", "Reorder inputs and generate paraphrases");
  bool echo_sow = false;
  generate->add_flag("--echo-sow", echo_sow, "Use the identity phrase transducer instead of the SOW model");
  auto* evaluate = app.add_subcommand("evaluate", "Score generations against references");
  auto* reorder = app.add_subcommand("reorder", "Print SOW reorderings with rule provenance");
  for (auto* sub : {synth, build, train, generate, evaluate, reorder}) add_common(*sub, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  auto* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  try {
    const RunConfig cfg = resolve(o, command);
    if (command == "synth") return cmd_synth(cfg, synth_n, std::cerr);
    if (command == "build-data") return cmd_build_data(cfg, std::cerr);
    if (command == "train") return cmd_train(cfg, nn::parse_variant(model), std::cerr, stop_after);
    if (command == "generate") return cmd_generate(cfg, std::cerr, echo_sow);
    if (command == "evaluate") return cmd_evaluate(cfg, std::cerr);
    if (command == "reorder") return cmd_reorder(cfg, std::cerr);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const FormatError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const ContractViolation& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
