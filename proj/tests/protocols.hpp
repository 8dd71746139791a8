#pragma once

// Experiment settings shared by the unit tests and the acceptance binary.

#include "cada/ablation.hpp"
#include "cada/synthetic.hpp"

namespace cada::testing {

/// 32 template dialogues, one question each, mixing every question kind.
inline Corpus overfit_corpus() {
  SyntheticSpec s;
  s.dialogues = 32;
  s.coref_fraction = 0.4;
  s.discourse_fraction = 0.3;
  s.unanswerable_fraction = 0.1;
  s.seed = 5;
  return generate_synthetic(s);
}

inline ModelConfig overfit_model() {
  ModelConfig c;
  c.hidden = 16;
  c.heads = 2;
  c.base_layers = 1;
  c.interlocutor_layers = 1;
  c.discourse_layers = 1;
  c.max_len = 96;
  c.max_answer_len = 4;
  return c;
}

/// Scores the training set itself every 25 steps.
inline TrainConfig overfit_training(std::uint64_t seed = 3) {
  TrainConfig t;
  t.batch_size = 8;
  t.learning_rate = 3e-3;
  t.weight_decay = 0.0;
  t.epochs = 75;
  t.max_steps = 300;
  t.eval_every = 25;
  t.seed = seed;
  return t;
}

/// First logged step whose dev EM is 100, or -1.
inline long first_perfect_step(const std::vector<std::string>& log) {
  for (const auto& line : log) {
    const auto j = nlohmann::json::parse(line);
    if (j.contains("dev_em") && j["dev_em"].get<double>() >= 100.0) return j["step"].get<long>();
  }
  return -1;
}

/// 500 dialogues: 400 train, 100 dev.
inline std::pair<Corpus, Corpus> ablation_corpora(double coref, double discourse) {
  SyntheticSpec s;
  s.dialogues = 500;
  s.coref_fraction = coref;
  s.discourse_fraction = discourse;
  s.seed = 7;
  return split_corpus(generate_synthetic(s), 400);
}

inline ModelConfig ablation_model() {
  ModelConfig c;
  c.hidden = 32;
  c.heads = 4;
  c.base_layers = 2;
  c.interlocutor_layers = 1;
  c.discourse_layers = 1;
  c.max_len = 96;
  c.max_answer_len = 4;
  c.biaffine_bias_init = 8.0;
  return c;
}

inline TrainConfig ablation_training() {
  TrainConfig t;
  t.batch_size = 8;
  t.learning_rate = 2e-3;
  t.epochs = 10;
  return t;
}

inline const std::vector<std::uint64_t> kAblationSeeds = {1, 2, 3};

}  // namespace cada::testing
