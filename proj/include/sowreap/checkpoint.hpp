#pragma once

#include <memory>
#include <optional>
#include <string>

#include "sowreap/bpe.hpp"
#include "sowreap/config.hpp"
#include "sowreap/transformer.hpp"

namespace sowreap {

inline constexpr char kCheckpointMagic[8] = {'S', 'O', 'W', 'R', 'E', 'A', 'P', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainingState {
  int epochs_completed = 0;
  double best_valid_nll = 0.0;
  int best_epoch = -1;
  int bad_epochs = 0;
  bool stopped = false;
  Json history = Json::array();  // one object per finished epoch
};

struct Checkpoint {
  std::unique_ptr<nn::Transformer<float>> model;
  BpeVocab vocab;
  std::optional<nn::Adam<float>> optimizer;
  TrainingState state;
  Json extra = Json::object();
};

/// Layout: 8-byte magic, uint32 version, uint64 header length, JSON header
/// (model config, vocab, tensor directory, training state), then float32
/// row-major arrays in directory order. Little-endian.
void save_checkpoint(const std::string& path, const nn::Transformer<float>& model, const BpeVocab& vocab,
                     const nn::Adam<float>* optimizer, const TrainingState& state, const Json& extra = Json::object());

Checkpoint load_checkpoint(const std::string& path);

}  // namespace sowreap
