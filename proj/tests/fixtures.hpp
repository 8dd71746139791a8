#pragma once

#include "cada/model.hpp"
#include "support.hpp"

#include <memory>

namespace cada::testing {

/// A small dialogue with clusters, arcs and three speakers, plus its encoding.
struct MicroFixture {
  Dialogue dialogue;
  Vocabulary vocab;
  EncodedSequence seq;
  StructureMatrices structures;
};

inline MicroFixture micro_fixture(int max_len = 12) {
  MicroFixture f;
  f.dialogue.id = "micro";
  f.dialogue.utterances = {{"ann", "he fixed it", 0}, {"bo", "no", 1}, {"ann", "ok", 2}};
  f.dialogue.edges = {{1, 0, "QAP"}};
  f.dialogue.clusters = {{{{0, 0, 1}, {0, 2, 3}}}};
  QAPair qa;
  qa.id = "micro#0";
  qa.question = "who ?";
  qa.answerable = true;
  qa.answer = AnswerSpan{0, 1, 2, "fixed"};
  f.dialogue.qas = {qa};
  f.vocab = Vocabulary::build({f.dialogue}, 1, false);
  f.seq = encode_input(f.dialogue, f.dialogue.qas[0], f.vocab, {max_len, false});
  f.structures = build_structures(f.dialogue, f.seq, {gamma_from_paper(1), true});
  return f;
}

inline ModelConfig micro_config(int vocab_size, int max_len = 12) {
  ModelConfig c;
  c.hidden = 8;
  c.heads = 2;
  c.base_layers = 1;
  c.interlocutor_layers = 1;
  c.discourse_layers = 1;
  c.max_len = max_len;
  c.vocab_size = vocab_size;
  c.speaker_prefix = false;
  return c;
}

/// Gives the zero-initialized heads random weights so gradients reach every layer.
inline void randomize_heads(CadaModel& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (Parameter* p : {&m.w_start, &m.b_start, &m.w_end, &m.b_end, &m.w_type, &m.b_type}) {
    p->value = random_matrix(rng, p->value.rows(), p->value.cols());
  }
}

/// Norm-wise relative error between backprop and central differences over
/// every parameter of `model` for the loss on one example; worst parameter.
inline double model_gradient_error(CadaModel& model, const EncodedSequence& seq, const StructureMatrices& s,
                                   const GoldSpan& gold, std::string* worst_name = nullptr, double h = 1e-5) {
  auto eval = [&]() {
    Tape t;
    const PredictionVars pv = model.forward(t, seq, s);
    return loss(std::span(&pv, 1), std::span(&gold, 1)).item();
  };
  const auto params = model.parameters();
  for (Parameter* p : params) p->zero_grad();
  {
    Tape t;
    const PredictionVars pv = model.forward(t, seq, s);
    t.backward(loss(std::span(&pv, 1), std::span(&gold, 1)));
  }
  double worst = 0.0;
  for (Parameter* p : params) {
    Matrix numeric(p->value.rows(), p->value.cols());
    for (Index i = 0; i < p->value.size(); ++i) {
      const double orig = p->value.data()[i];
      p->value.data()[i] = orig + h;
      const double up = eval();
      p->value.data()[i] = orig - h;
      const double down = eval();
      p->value.data()[i] = orig;
      numeric.data()[i] = (up - down) / (2.0 * h);
    }
    // The floor keeps exactly-zero gradients (e.g. key biases under a
    // shift-invariant softmax) from comparing round-off against round-off.
    const double err = (p->grad - numeric).norm() / std::max(p->grad.norm() + numeric.norm(), 1e-5);
    if (err > worst) {
      worst = err;
      if (worst_name) *worst_name = p->name;
    }
  }
  return worst;
}

}  // namespace cada::testing
