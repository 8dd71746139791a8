#pragma once

// Template dialogues for probing which structure a model actually uses.
//
// Each dialogue holds one question, "what does the <e> need ?", one answer
// turn and `distractors` other turns:
//
//   coref      anchor "i brought the <e> today", answer "it needs <adj> <noun>"
//              (pronoun clustered with <e>); every distractor "it needs ..."
//              has its pronoun clustered with "that" in a filler turn.
//   discourse  anchor "anyone know what the <e> needs ?", answer
//              "<adj> <noun> i guess" joined to the anchor by a QAP arc;
//              distractors are joined to filler turns only, never within
//              reach of the anchor.
//   control    answer "the <e> needs <adj> <noun>", distractors
//              "i like the <e'>" naming other entities (surface match).
//
// Answer and distractors occupy random slots after the anchor and speakers are
// random, so position and speaker carry no information about the answer.

#include "cada/corpus.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cada {

struct SyntheticSpec {
  int dialogues = 500;
  int utterances_per_dialogue = 8;
  int speakers_per_dialogue = 3;
  /// Size of the pseudo-word pool shared by entities, attributes and speaker
  /// names.
  int vocabulary_size = 120;
  double coref_fraction = 0.0;
  double discourse_fraction = 0.0;
  /// Fraction of questions about an entity absent from the dialogue.
  double unanswerable_fraction = 0.0;
  int distractors = 2;
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument for infeasible specs.
  void validate() const;
};

Corpus generate_synthetic(const SyntheticSpec& spec);

/// Problems found in a generated corpus; empty when every question is
/// answerable only through its declared structure and the corpus survives a
/// JSON round trip unchanged.
std::vector<std::string> audit_synthetic(const Corpus& corpus);

}  // namespace cada
