#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "model_helpers.hpp"
#include "sowreap/checkpoint.hpp"
#include "sowreap/error.hpp"

using namespace sowreap;
using namespace sowreap::nn;

namespace {

std::string temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "sowreap_test_checkpoint";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

BpeVocab small_vocab() {
  return BpeVocab::train({split_whitespace("the cat sat on the mat")}, 5, {"NP", "VP"});
}

}  // namespace

TEST_CASE("checkpoint round trip: parameters, optimiser and state") {
  const auto vocab = small_vocab();
  auto c = helpers::tiny_config(Variant::Sow, 16, 1, 2, vocab.size());
  Transformer<float> model(c, 1);
  Rng rng(2);
  std::vector<Example> batch = {helpers::random_example(rng, c, 4, 3)};
  Adam<float> opt;
  for (int i = 0; i < 3; ++i) train_step(model, std::span<const Example>(batch), opt, 0.0, nullptr);
  TrainingState st;
  st.epochs_completed = 3;
  st.best_valid_nll = 1.25;
  st.best_epoch = 2;
  st.bad_epochs = 1;
  st.history = Json::array({Json{{"epoch", 0}}, Json{{"epoch", 1}}});
  const auto path = temp_path("model.ckpt");
  save_checkpoint(path, model, vocab, &opt, st, Json{{"note", "x"}});
  const auto ck = load_checkpoint(path);
  CHECK(ck.model->config() == c);
  CHECK(ck.vocab == vocab);
  REQUIRE(ck.model->parameters().size() == model.parameters().size());
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    CHECK(ck.model->parameters()[i].name == model.parameters()[i].name);
    CHECK(ck.model->parameters()[i].value == model.parameters()[i].value);
  }
  REQUIRE(ck.optimizer.has_value());
  CHECK(ck.optimizer->steps() == 3);
  CHECK(ck.optimizer->first_moments() == opt.first_moments());
  CHECK(ck.optimizer->second_moments() == opt.second_moments());
  CHECK(ck.state.epochs_completed == 3);
  CHECK(ck.state.best_valid_nll == 1.25);
  CHECK(ck.state.best_epoch == 2);
  CHECK(ck.state.bad_epochs == 1);
  CHECK(ck.state.history.size() == 2);
  CHECK(ck.extra["note"] == "x");
}

TEST_CASE("checkpoint resume continues the same trajectory") {
  const auto vocab = small_vocab();
  auto c = helpers::tiny_config(Variant::Reap, 16, 1, 2, vocab.size());
  Rng rng(3);
  std::vector<Example> batch = {helpers::random_example(rng, c, 5, 3), helpers::random_example(rng, c, 3, 4)};
  Transformer<float> straight(c, 4);
  Adam<float> opt;
  for (int i = 0; i < 6; ++i) train_step(straight, std::span<const Example>(batch), opt, 1.0, nullptr);

  Transformer<float> first(c, 4);
  Adam<float> opt1;
  for (int i = 0; i < 3; ++i) train_step(first, std::span<const Example>(batch), opt1, 1.0, nullptr);
  const auto path = temp_path("resume.ckpt");
  save_checkpoint(path, first, vocab, &opt1, TrainingState{});
  auto ck = load_checkpoint(path);
  for (int i = 0; i < 3; ++i) train_step(*ck.model, std::span<const Example>(batch), *ck.optimizer, 1.0, nullptr);
  for (std::size_t i = 0; i < straight.parameters().size(); ++i)
    CHECK(ck.model->parameters()[i].value == straight.parameters()[i].value);
}

TEST_CASE("checkpoint without optimiser state") {
  const auto vocab = small_vocab();
  auto c = helpers::tiny_config(Variant::Reap, 16, 1, 2, vocab.size());
  Transformer<float> model(c, 5);
  const auto path = temp_path("plain.ckpt");
  save_checkpoint(path, model, vocab, nullptr, TrainingState{});
  CHECK_FALSE(load_checkpoint(path).optimizer.has_value());
}

TEST_CASE("checkpoint: malformed files") {
  CHECK_THROWS_AS(load_checkpoint(temp_path("missing.ckpt")), FormatError);
  const auto bad = temp_path("bad.ckpt");
  std::ofstream(bad) << "not a checkpoint at all";
  CHECK_THROWS_AS(load_checkpoint(bad), FormatError);

  const auto vocab = small_vocab();
  Transformer<float> model(helpers::tiny_config(Variant::Reap, 16, 1, 2, vocab.size()), 6);
  const auto good = temp_path("good.ckpt");
  save_checkpoint(good, model, vocab, nullptr, TrainingState{});
  const auto size = std::filesystem::file_size(good);
  std::filesystem::copy_file(good, temp_path("short.ckpt"), std::filesystem::copy_options::overwrite_existing);
  std::filesystem::resize_file(temp_path("short.ckpt"), size - 100);
  CHECK_THROWS_AS(load_checkpoint(temp_path("short.ckpt")), FormatError);

  // Vocabulary size must agree with the model.
  Transformer<float> other(helpers::tiny_config(Variant::Reap, 16, 1, 2, vocab.size() + 3), 7);
  save_checkpoint(temp_path("mismatch.ckpt"), other, vocab, nullptr, TrainingState{});
  CHECK_THROWS_AS(load_checkpoint(temp_path("mismatch.ckpt")), FormatError);
}
