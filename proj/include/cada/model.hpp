#pragma once

// Coreference-aware double-channel attention network.
//
//   tokens -> embeddings -> base encoder (graph-biaffine attention over M1) -> H1
//   H1 -> interlocutor channel (graph-biaffine attention over M2)          -> H2
//   H1 -> discourse channel (softmax(QK^T/sqrt(d) + G) attention)          -> H3
//   [H1, H2, H3] -> start / end / answerability heads

#include "cada/corpus.hpp"
#include "cada/graphs.hpp"
#include "cada/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cada {

/// Which structure matrices reach the model. A disabled channel keeps its
/// parameters but sees a zero matrix (M1 = 0, M2 = 0, G = 0).
struct ChannelSwitches {
  bool coref = true;
  bool interlocutor = true;
  bool discourse = true;
};

struct ModelConfig {
  int hidden = 64;
  int heads = 4;
  int base_layers = 2;
  int interlocutor_layers = 2;
  int discourse_layers = 2;
  /// Discourse threshold in hops between distinct utterances; the stored
  /// threshold is gamma_from_paper(gamma_paper).
  int gamma_paper = 2;
  int max_len = 256;
  int vocab_size = 0;
  int max_answer_len = 30;
  double dropout = 0.0;
  double answer_threshold = 0.5;
  double biaffine_bias_init = 0.5;
  /// Base layers (counted from the bottom) that use coreference attention;
  /// -1 means all of them.
  int coref_layers = -1;
  bool question_node = true;
  bool speaker_prefix = true;
  /// Initialize position embeddings with sinusoids instead of noise.
  bool sinusoidal_positions = true;
  /// Ablation switches; a disabled channel keeps its capacity.
  ChannelSwitches channels;

  int head_dim() const { return hidden / heads; }
  int gamma() const { return gamma_from_paper(gamma_paper); }
  GraphOptions graph_options() const { return {gamma(), question_node}; }
  EncodeOptions encode_options() const { return {max_len, speaker_prefix}; }

  void validate() const;
  /// "key = value" lines, one per field.
  std::string to_text() const;
  /// Accepts the output of to_text(); unknown keys are an error, missing keys
  /// keep their defaults.
  static ModelConfig from_text(const std::string& text);
  /// Applies one "key = value" assignment. Returns false for an unknown key.
  bool set(const std::string& key, const std::string& value);
};

void apply_switches(StructureMatrices& s, const ChannelSwitches& sw);

enum class AttentionKind { Biaffine, Masked };

struct AttentionParams {
  Parameter wq, bq, wk, bk, wv, bv, wo, bo;
  /// Per-head d x d biaffine matrices; empty for masked attention.
  std::vector<Parameter> biaffine_w;
  /// 1 x heads prior bias; empty (0x0) for masked attention.
  Parameter biaffine_b;
};

struct BlockParams {
  AttentionKind kind = AttentionKind::Masked;
  AttentionParams attn;
  Parameter ln1_gain, ln1_bias;
  Parameter ff_w1, ff_b1, ff_w2, ff_b2;
  Parameter ln2_gain, ln2_bias;
};

/// Per-head attention probabilities in layer order, filled when requested.
struct AttentionTrace {
  std::vector<Matrix> maps;
};

/// Differentiable head outputs for one example.
struct PredictionVars {
  Var p_start;  // 1 x N
  Var p_end;    // 1 x N
  Var p_type;   // 1 x 1
};

/// Gold targets; unanswerable pairs point both ends at [CLS] (index 0).
struct GoldSpan {
  int start = 0;
  int end = 0;  // inclusive
  bool answerable = false;
};

/// Decoded answer for one example.
struct Prediction {
  RowVector p_start;
  RowVector p_end;
  double p_type = 0.0;
  bool answerable = false;
  int start = -1;  // inclusive global positions
  int end = -1;
  double score = 0.0;
  std::string text;
};

inline constexpr const char* kUnanswerable = "unanswerable";
inline constexpr double kProbabilityFloor = 1e-12;

/// e[i,j] = (q_i . k_j + (q_i W k_j^T + b) * M[i,j]) / sqrt(d)
Var graph_biaffine_scores(const Var& q, const Var& k, const Var& w, const Var& b, const Matrix& m, int d);

class CadaModel {
public:
  CadaModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::size_t parameter_count() const;

  Var encode_base(Tape& tape, const EncodedSequence& seq, const Matrix& m1, AttentionTrace* trace = nullptr);
  Var encode_interlocutor(Tape& tape, const Var& h1, const Matrix& m2, AttentionTrace* trace = nullptr);
  Var encode_discourse(Tape& tape, const Var& h1, const Matrix& g, AttentionTrace* trace = nullptr);
  PredictionVars predict(Tape& tape, const Var& h1, const Var& h2, const Var& h3);

  PredictionVars forward(Tape& tape, const EncodedSequence& seq, const StructureMatrices& s);

  // Parameter blocks, exposed for tests and inspection.
  Parameter token_embedding, position_embedding;
  std::vector<BlockParams> base_blocks, interlocutor_blocks, discourse_blocks;
  Parameter w_start, b_start, w_end, b_end, w_type, b_type;

private:
  Var run_block(Tape& tape, const Var& x, BlockParams& block, const Matrix& structure, bool use_structure,
                AttentionTrace* trace);

  ModelConfig config_;
};

/// Multi-head attention sublayer of one block. `structure` is M for
/// biaffine blocks and G for masked blocks; `use_structure` false drops the
/// biaffine term entirely.
Var multi_head_attention(Tape& tape, const Var& x, AttentionParams& p, AttentionKind kind, const Matrix& structure,
                         bool use_structure, int heads, AttentionTrace* trace);

/// Mean over the batch of -(log p_s[start] + log p_e[end] + log p_t-or-(1-p_t)),
/// probabilities floored at kProbabilityFloor.
Var loss(std::span<const PredictionVars> preds, std::span<const GoldSpan> golds);

GoldSpan gold_for(const EncodedSequence& seq, const QAPair& qa);

/// Best span over text tokens of one utterance with start <= end <=
/// start + max_answer_len, or unanswerable when p_type < threshold.
Prediction decode(const PredictionVars& pv, const EncodedSequence& seq, int max_answer_len, double threshold);
Prediction decode(const RowVector& p_start, const RowVector& p_end, double p_type, const EncodedSequence& seq,
                  int max_answer_len, double threshold);

}  // namespace cada
