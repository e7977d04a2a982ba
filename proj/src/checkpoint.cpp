#include "sowreap/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "sowreap/error.hpp"

namespace sowreap {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

struct TensorRef {
  std::string name;
  std::string kind;  // param | adam_m | adam_v
  int rows;
  int cols;
  const std::vector<float>* data;
};

}  // namespace

void save_checkpoint(const std::string& path, const nn::Transformer<float>& model, const BpeVocab& vocab,
                     const nn::Adam<float>* optimizer, const TrainingState& state, const Json& extra) {
  std::vector<TensorRef> tensors;
  for (const auto& p : model.parameters()) tensors.push_back({p.name, "param", p.rows, p.cols, &p.value});
  const auto* opt = optimizer;
  const bool with_opt = opt && opt->first_moments().size() == model.parameters().size();
  if (with_opt) {
    for (std::size_t i = 0; i < model.parameters().size(); ++i) {
      const auto& p = model.parameters()[i];
      tensors.push_back({p.name, "adam_m", p.rows, p.cols, &opt->first_moments()[i]});
      tensors.push_back({p.name, "adam_v", p.rows, p.cols, &opt->second_moments()[i]});
    }
  }
  Json dir = Json::array();
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    dir.push_back({{"name", t.name}, {"kind", t.kind}, {"rows", t.rows}, {"cols", t.cols}, {"offset", offset}});
    offset += t.data->size();
  }
  Json header{{"model", to_json(model.config())},
              {"vocab", vocab.serialize()},
              {"tensors", dir},
              {"training",
               {{"epochs_completed", state.epochs_completed},
                {"best_valid_nll", state.best_valid_nll},
                {"best_epoch", state.best_epoch},
                {"bad_epochs", state.bad_epochs},
                {"stopped", state.stopped},
                {"history", state.history}}},
              {"extra", extra}};
  if (optimizer) {
    const auto& c = optimizer->config();
    header["optimizer"] = {{"steps", optimizer->steps()},
                           {"lr", c.lr},
                           {"beta1", c.beta1},
                           {"beta2", c.beta2},
                           {"eps", c.eps},
                           {"has_moments", with_opt}};
  }
  const std::string text = header.dump();

  // Write to a temporary file first so an interrupted save never clobbers
  // the previous checkpoint.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write checkpoint '" + tmp + "'");
    out.write(kCheckpointMagic, sizeof kCheckpointMagic);
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : tensors)
      out.write(reinterpret_cast<const char*>(t.data->data()), static_cast<std::streamsize>(t.data->size() * 4));
    if (!out) throw FormatError("short write on checkpoint '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint '" + path + "'");
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw FormatError("'" + path + "' is not a checkpoint (bad magic)", 0);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in) throw FormatError("truncated checkpoint header", 8);
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version), 8);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw FormatError("truncated checkpoint header", 20);
  Json header;
  try {
    header = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what(), 20 + e.byte);
  }
  const auto variant = nn::parse_variant(header.at("model").at("variant").get<std::string>());
  Checkpoint ck;
  ck.vocab = BpeVocab::deserialize(header.at("vocab").get<std::string>());
  ck.model = std::make_unique<nn::Transformer<float>>(model_config_from_json(header.at("model"), variant), 0);
  if (ck.model->config().vocab_size != ck.vocab.size())
    throw FormatError("checkpoint: vocab size does not match model config");

  const bool has_opt = header.contains("optimizer");
  const bool has_moments = has_opt && header["optimizer"].value("has_moments", false);
  auto& params = ck.model->parameters();
  std::vector<std::vector<float>> m(params.size()), v(params.size());
  const std::uint64_t data_start = 20 + len;
  std::size_t param_i = 0, m_i = 0, v_i = 0;
  for (const auto& t : header.at("tensors")) {
    const auto name = t.at("name").get<std::string>();
    const auto kind = t.at("kind").get<std::string>();
    const int rows = t.at("rows").get<int>();
    const int cols = t.at("cols").get<int>();
    std::vector<float>* dst = nullptr;
    std::size_t idx = 0;
    if (kind == "param") idx = param_i++;
    else if (kind == "adam_m") idx = m_i++;
    else if (kind == "adam_v") idx = v_i++;
    else throw FormatError("checkpoint: unknown tensor kind '" + kind + "'");
    if (idx >= params.size() || params[idx].name != name || params[idx].rows != rows || params[idx].cols != cols)
      throw FormatError("checkpoint: tensor '" + name + "' does not match the model layout");
    if (kind == "param") dst = &params[idx].value;
    else if (kind == "adam_m") dst = &(m[idx] = std::vector<float>(params[idx].size()));
    else dst = &(v[idx] = std::vector<float>(params[idx].size()));
    in.seekg(static_cast<std::streamoff>(data_start + 4 * t.at("offset").get<std::uint64_t>()));
    in.read(reinterpret_cast<char*>(dst->data()), static_cast<std::streamsize>(dst->size() * 4));
    if (!in) throw FormatError("checkpoint: truncated data for '" + name + "'");
  }
  if (param_i != params.size()) throw FormatError("checkpoint: missing parameter tensors");
  if (has_opt) {
    const auto& o = header["optimizer"];
    nn::AdamConfig cfg{o.at("lr").get<double>(), o.at("beta1").get<double>(), o.at("beta2").get<double>(),
                       o.at("eps").get<double>()};
    ck.optimizer.emplace(cfg);
    ck.optimizer->set_steps(o.at("steps").get<std::int64_t>());
    if (has_moments) {
      if (m_i != params.size() || v_i != params.size()) throw FormatError("checkpoint: incomplete optimizer state");
      ck.optimizer->first_moments() = std::move(m);
      ck.optimizer->second_moments() = std::move(v);
    }
  }
  const auto& tr = header.at("training");
  ck.state.epochs_completed = tr.at("epochs_completed").get<int>();
  ck.state.best_valid_nll = tr.at("best_valid_nll").get<double>();
  ck.state.best_epoch = tr.at("best_epoch").get<int>();
  ck.state.bad_epochs = tr.at("bad_epochs").get<int>();
  ck.state.stopped = tr.at("stopped").get<bool>();
  ck.state.history = tr.at("history");
  if (header.contains("extra")) ck.extra = header["extra"];
  return ck;
}

}  // namespace sowreap
