#include "sowreap/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "sowreap/error.hpp"

namespace sowreap {

double coverage_coefficient(const std::vector<std::pair<int, double>>& schedule, int epoch) {
  double c = 0.0;
  for (const auto& [start, value] : schedule)
    if (epoch >= start) c = value;
  return c;
}

bool RunConfig::operator==(const RunConfig& o) const {
  return seed == o.seed && workers == o.workers && bpe_merges == o.bpe_merges &&
         compliance_bins == o.compliance_bins && bootstrap_resamples == o.bootstrap_resamples && paths == o.paths &&
         sow_model == o.sow_model && reap_model == o.reap_model && training == o.training && engine == o.engine &&
         generation == o.generation && filter.min_len == o.filter.min_len &&
         filter.para_score_min == o.filter.para_score_min && filter.reorder_score_max == o.filter.reorder_score_max;
}

namespace {

void check_keys(const Json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw FormatError("config: '" + where + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw FormatError("config: unknown key '" + where + "." + k + "'");
}

template <typename T>
void read(const Json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw FormatError("config: bad value for '" + where + "." + key + "': " + e.what());
  }
}

}  // namespace

Json to_json(const nn::ModelConfig& c) {
  return Json{{"hidden_size", c.hidden_size},       {"encoder_layers", c.encoder_layers},
              {"decoder_layers", c.decoder_layers}, {"heads", c.heads},
              {"dropout", c.dropout},               {"vocab_size", c.vocab_size},
              {"max_positions", c.max_positions},   {"ff_size", c.ff_size},
              {"variant", std::string(nn::to_string(c.variant))}};
}

nn::ModelConfig model_config_from_json(const Json& j, nn::Variant variant) {
  check_keys(j, "model", {"hidden_size", "encoder_layers", "decoder_layers", "heads", "dropout", "vocab_size",
                          "max_positions", "ff_size", "variant"});
  nn::ModelConfig c;
  c.variant = variant;
  read(j, "hidden_size", c.hidden_size, "model");
  read(j, "encoder_layers", c.encoder_layers, "model");
  read(j, "decoder_layers", c.decoder_layers, "model");
  read(j, "heads", c.heads, "model");
  read(j, "dropout", c.dropout, "model");
  read(j, "vocab_size", c.vocab_size, "model");
  read(j, "max_positions", c.max_positions, "model");
  read(j, "ff_size", c.ff_size, "model");
  if (j.contains("variant")) {
    std::string v;
    read(j, "variant", v, "model");
    if (nn::parse_variant(v) != variant) throw FormatError("config: model variant '" + v + "' in the wrong block");
  }
  return c;
}

Json to_json(const RunConfig& c) {
  Json schedule = Json::array();
  for (const auto& [e, v] : c.training.coverage_schedule) schedule.push_back({e, v});
  return Json{
      {"seed", c.seed},
      {"workers", c.workers},
      {"bpe_merges", c.bpe_merges},
      {"compliance_bins", c.compliance_bins},
      {"bootstrap_resamples", c.bootstrap_resamples},
      {"paths",
       {{"corpus", c.paths.corpus},
        {"embeddings", c.paths.embeddings},
        {"data_dir", c.paths.data_dir},
        {"checkpoint_dir", c.paths.checkpoint_dir},
        {"output_dir", c.paths.output_dir},
        {"input", c.paths.input},
        {"generations", c.paths.generations},
        {"references", c.paths.references}}},
      {"sow_model", to_json(c.sow_model)},
      {"reap_model", to_json(c.reap_model)},
      {"training",
       {{"lr", c.training.lr},
        {"beta1", c.training.beta1},
        {"beta2", c.training.beta2},
        {"eps", c.training.eps},
        {"batch_size", c.training.batch_size},
        {"max_epochs", c.training.max_epochs},
        {"patience", c.training.patience},
        {"valid_fraction", c.training.valid_fraction},
        {"coverage_schedule", schedule}}},
      {"engine",
       {{"abstraction_threshold", c.engine.abstraction_threshold},
        {"ignored_tags", c.engine.ignored_tags},
        {"max_candidates", c.engine.max_candidates},
        {"max_rules", c.engine.max_rules},
        {"k", c.engine.k},
        {"beam", c.engine.beam},
        {"max_phrase_len", c.engine.max_phrase_len}}},
      {"generation",
       {{"decoding", c.generation.decoding},
        {"top_k", c.generation.top_k},
        {"beam", c.generation.beam},
        {"max_len", c.generation.max_len},
        {"rejection_threshold", c.generation.rejection_threshold}}},
      {"filter",
       {{"min_len", c.filter.min_len},
        {"para_score_min", c.filter.para_score_min},
        {"reorder_score_max", c.filter.reorder_score_max}}},
  };
}

RunConfig run_config_from_json(const Json& j) {
  check_keys(j, "config", {"seed", "workers", "bpe_merges", "compliance_bins", "bootstrap_resamples", "paths",
                           "sow_model", "reap_model", "training", "engine", "generation", "filter"});
  RunConfig c;
  read(j, "seed", c.seed, "config");
  read(j, "workers", c.workers, "config");
  read(j, "bpe_merges", c.bpe_merges, "config");
  read(j, "compliance_bins", c.compliance_bins, "config");
  read(j, "bootstrap_resamples", c.bootstrap_resamples, "config");
  if (j.contains("paths")) {
    const auto& p = j["paths"];
    check_keys(p, "paths", {"corpus", "embeddings", "data_dir", "checkpoint_dir", "output_dir", "input",
                            "generations", "references"});
    read(p, "corpus", c.paths.corpus, "paths");
    read(p, "embeddings", c.paths.embeddings, "paths");
    read(p, "data_dir", c.paths.data_dir, "paths");
    read(p, "checkpoint_dir", c.paths.checkpoint_dir, "paths");
    read(p, "output_dir", c.paths.output_dir, "paths");
    read(p, "input", c.paths.input, "paths");
    read(p, "generations", c.paths.generations, "paths");
    read(p, "references", c.paths.references, "paths");
  }
  if (j.contains("sow_model")) c.sow_model = model_config_from_json(j["sow_model"], nn::Variant::Sow);
  if (j.contains("reap_model")) c.reap_model = model_config_from_json(j["reap_model"], nn::Variant::Reap);
  if (j.contains("training")) {
    const auto& t = j["training"];
    check_keys(t, "training", {"lr", "beta1", "beta2", "eps", "batch_size", "max_epochs", "patience",
                               "valid_fraction", "coverage_schedule"});
    read(t, "lr", c.training.lr, "training");
    read(t, "beta1", c.training.beta1, "training");
    read(t, "beta2", c.training.beta2, "training");
    read(t, "eps", c.training.eps, "training");
    read(t, "batch_size", c.training.batch_size, "training");
    read(t, "max_epochs", c.training.max_epochs, "training");
    read(t, "patience", c.training.patience, "training");
    read(t, "valid_fraction", c.training.valid_fraction, "training");
    if (t.contains("coverage_schedule")) {
      c.training.coverage_schedule.clear();
      for (const auto& step : t["coverage_schedule"]) {
        if (!step.is_array() || step.size() != 2)
          throw FormatError("config: coverage_schedule entries are [epoch, coefficient]");
        c.training.coverage_schedule.emplace_back(step[0].get<int>(), step[1].get<double>());
      }
    }
  }
  if (j.contains("engine")) {
    const auto& e = j["engine"];
    check_keys(e, "engine",
               {"abstraction_threshold", "ignored_tags", "max_candidates", "max_rules", "k", "beam", "max_phrase_len"});
    read(e, "abstraction_threshold", c.engine.abstraction_threshold, "engine");
    read(e, "ignored_tags", c.engine.ignored_tags, "engine");
    read(e, "max_candidates", c.engine.max_candidates, "engine");
    read(e, "max_rules", c.engine.max_rules, "engine");
    read(e, "k", c.engine.k, "engine");
    read(e, "beam", c.engine.beam, "engine");
    read(e, "max_phrase_len", c.engine.max_phrase_len, "engine");
  }
  if (j.contains("generation")) {
    const auto& g = j["generation"];
    check_keys(g, "generation", {"decoding", "top_k", "beam", "max_len", "rejection_threshold"});
    read(g, "decoding", c.generation.decoding, "generation");
    read(g, "top_k", c.generation.top_k, "generation");
    read(g, "beam", c.generation.beam, "generation");
    read(g, "max_len", c.generation.max_len, "generation");
    read(g, "rejection_threshold", c.generation.rejection_threshold, "generation");
    if (c.generation.decoding != "top-k" && c.generation.decoding != "beam")
      throw FormatError("config: generation.decoding must be 'top-k' or 'beam'");
  }
  if (j.contains("filter")) {
    const auto& f = j["filter"];
    check_keys(f, "filter", {"min_len", "para_score_min", "reorder_score_max"});
    read(f, "min_len", c.filter.min_len, "filter");
    read(f, "para_score_min", c.filter.para_score_min, "filter");
    read(f, "reorder_score_max", c.filter.reorder_score_max, "filter");
  }
  if (c.workers < 1) throw FormatError("config: workers must be >= 1");
  if (c.training.batch_size < 1) throw FormatError("config: training.batch_size must be >= 1");
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config file '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw FormatError("config '" + path + "': " + e.what(), e.byte);
  }
  return run_config_from_json(j);
}

}  // namespace sowreap
