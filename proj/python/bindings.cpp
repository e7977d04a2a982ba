#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "sowreap/checkpoint.hpp"
#include "sowreap/config.hpp"
#include "sowreap/error.hpp"
#include "sowreap/metrics.hpp"
#include "sowreap/order.hpp"
#include "sowreap/pipeline.hpp"
#include "sowreap/sow.hpp"
#include "sowreap/synthetic.hpp"

namespace py = pybind11;
using namespace sowreap;

namespace {

RougeMode rouge_mode(const std::string& m) {
  if (m == "1") return RougeMode::One;
  if (m == "2") return RougeMode::Two;
  if (m == "l" || m == "L") return RougeMode::L;
  throw ContractViolation("rouge: mode must be \"1\", \"2\" or \"l\"");
}

RunConfig config_from(const std::string& json_text) {
  return json_text.empty() ? RunConfig{} : run_config_from_json(Json::parse(json_text));
}

// Runs a pipeline command and returns (exit code, log text).
template <typename F>
py::tuple command(F&& f) {
  std::ostringstream log;
  int rc;
  {
    py::gil_scoped_release release;
    rc = f(log);
  }
  return py::make_tuple(rc, log.str());
}

std::vector<py::dict> reorderings_of(const std::vector<Reordering>& rs) {
  std::vector<py::dict> out;
  for (const auto& r : rs) {
    py::dict d;
    d["perm"] = r.perm;
    d["score"] = r.score;
    std::vector<py::dict> rules;
    for (const auto& a : r.provenance) {
      py::dict rule;
      rule["level"] = a.level;
      rule["input"] = a.abstracted_input;
      rule["output"] = a.output;
      rules.push_back(rule);
    }
    d["rules"] = rules;
    out.push_back(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Syntax-guided reordering and rearrangement-aware paraphrasing";

  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<ContractViolation>(m, "ContractViolation", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def("bleu", [](const Tokens& c, const Tokens& r, int max_n) { return bleu(c, r, max_n); }, py::arg("candidate"),
        py::arg("reference"), py::arg("max_n") = 4);
  m.def("rouge", [](const Tokens& c, const Tokens& r, const std::string& mode) { return rouge(c, r, rouge_mode(mode)); },
        py::arg("candidate"), py::arg("reference"), py::arg("mode") = "l");
  m.def("wer", [](const Tokens& c, const Tokens& r) { return wer(c, r); }, py::arg("candidate"), py::arg("reference"));
  m.def("kendall_tau", [](const std::vector<int>& a, const std::vector<int>& b) { return kendall_tau(a, b); });
  m.def("kendall_tau_sequence", [](const std::vector<int>& p) { return kendall_tau_sequence(p); });
  m.def("apply_permutation", [](const Tokens& seq, const std::vector<int>& perm) {
    return apply_permutation(std::span<const std::string>(seq), std::span<const int>(perm));
  });
  m.def("sinusoidal_embedding", &sinusoidal_embedding, py::arg("position"), py::arg("dim"));

  m.def(
      "parse_tree_yield",
      [](const std::string& ptb) { return surfaces(yield_of(parse_ptb(ptb))); }, py::arg("ptb"),
      "Tokens of a bracketed parse.");

  m.def(
      "reorder",
      [](const std::string& ptb, const std::string& sow_checkpoint, int k, int beam, const std::string& embeddings,
         std::uint64_t seed) {
        const auto tree = parse_ptb(ptb);
        EngineConfig eng;
        eng.k = k;
        eng.beam = beam;
        const auto provider = make_embedding_provider(embeddings, seed);
        if (sow_checkpoint.empty()) return reorderings_of(reorder_sentence(tree, EchoTransducer{}, *provider, eng));
        const auto ck = load_checkpoint(sow_checkpoint);
        const NeuralTransducer t(*ck.model, ck.vocab, beam, eng.max_phrase_len);
        return reorderings_of(reorder_sentence(tree, t, *provider, eng));
      },
      py::arg("ptb"), py::arg("sow_checkpoint") = "", py::arg("k") = 10, py::arg("beam") = 10,
      py::arg("embeddings") = "hash", py::arg("seed") = 1,
      "Top-k reorderings of a parsed sentence; without a checkpoint only the identity is proposed.");

  m.def(
      "synthesize",
      [](std::size_t n, std::uint64_t seed) {
        std::vector<std::string> rows;
        const auto pairs = synthesize_corpus(n, seed);
        for (std::size_t i = 0; i < pairs.size(); ++i)
          rows.push_back(to_json(to_corpus_record(pairs[i], "s" + std::to_string(i))).dump());
        return rows;
      },
      py::arg("n"), py::arg("seed"), "Synthetic corpus records as JSON strings.");

  m.def("default_config", [] { return to_json(RunConfig{}).dump(); }, "Default run configuration as JSON text.");

  m.def("synth", [](const std::string& cfg, std::size_t n) {
    return command([&](std::ostream& log) { return cmd_synth(config_from(cfg), n, log); });
  });
  m.def("build_data", [](const std::string& cfg) {
    return command([&](std::ostream& log) { return cmd_build_data(config_from(cfg), log); });
  });
  m.def(
      "train",
      [](const std::string& cfg, const std::string& model, int stop_after) {
        const auto v = nn::parse_variant(model);
        return command([&](std::ostream& log) { return cmd_train(config_from(cfg), v, log, stop_after); });
      },
      py::arg("config"), py::arg("model"), py::arg("stop_after") = -1);
  m.def("generate", [](const std::string& cfg) {
    return command([&](std::ostream& log) { return cmd_generate(config_from(cfg), log); });
  });
  m.def("evaluate", [](const std::string& cfg) {
    return command([&](std::ostream& log) { return cmd_evaluate(config_from(cfg), log); });
  });
}
