#pragma once

// Mini-batch training with decoupled-weight-decay Adam.
//
// Output layout under TrainConfig::out_dir (when set):
//   metrics.jsonl   one JSON object per line:
//                   {"step", "loss", "seed"} plus "dev_em"/"dev_f1" on eval lines
//   best.ckpt       parameters with the best dev F1 so far (final weights
//                   when there is no dev set)

#include "cada/checkpoint.hpp"
#include "cada/corpus.hpp"
#include "cada/eval.hpp"
#include "cada/graphs.hpp"
#include "cada/model.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cada {

struct OptimState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  long step = 0;
  double learning_rate = 3e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  /// Zero moments shaped like `params`.
  void reset(std::span<Parameter* const> params);
};

/// One bias-corrected Adam update; decay is applied to the weights directly
/// (w -= lr * wd * w), never folded into the gradient.
void adamw_step(std::span<Parameter* const> params, OptimState& state);

/// Rescales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping. max_norm <= 0 disables clipping.
double clip_grad_norm(std::span<Parameter* const> params, double max_norm);

struct TrainConfig {
  int batch_size = 8;
  double learning_rate = 3e-4;
  int epochs = 3;
  std::uint64_t seed = 13;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  /// Evaluate on dev every this many steps; 0 means once per epoch.
  int eval_every = 0;
  /// Stop after this many evaluations without a dev-F1 gain; 0 disables.
  int patience = 0;
  /// Hard cap on optimizer steps; 0 means no cap.
  int max_steps = 0;
  /// Linear learning-rate warmup length in steps; 0 disables.
  int warmup_steps = 0;
  int min_freq = 1;
  std::filesystem::path out_dir;

  void validate() const;
  bool set(const std::string& key, const std::string& value);
};

/// A QA pair ready for the model: encoded input, structure matrices, gold.
struct Example {
  std::string id;
  const Dialogue* dialogue = nullptr;
  const QAPair* qa = nullptr;
  EncodedSequence seq;
  StructureMatrices structures;
  GoldSpan gold;
};

/// Encodes every QA pair of `corpus`; config.channels zeroes the matrices
/// of disabled channels. Pairs whose answers were truncated
/// away are dropped when `drop_truncated` is set.
std::vector<Example> prepare_examples(const Corpus& corpus, const Vocabulary& vocab, const ModelConfig& config,
                                      bool drop_truncated);

Prediction predict_example(CadaModel& model, const Example& ex);
PredictionMap predict_all(CadaModel& model, std::span<const Example> examples);

/// Loads a checkpoint written by train() into a ready model + vocabulary.
struct LoadedModel {
  CadaModel model;
  Vocabulary vocab;
  std::uint64_t seed = 0;
};
LoadedModel load_model(const std::filesystem::path& path);
void save_model(const std::filesystem::path& path, const CadaModel& model, const Vocabulary& vocab, std::uint64_t seed);

struct TrainResult {
  CadaModel model;  // best-dev weights
  Vocabulary vocab;
  std::vector<std::string> metric_log;  // JSON lines
  std::optional<std::filesystem::path> checkpoint;
  double best_dev_em = 0.0;
  double best_dev_f1 = -1.0;
  long steps = 0;
};

/// Throws TensorError on a non-finite loss, naming the step and example ids.
TrainResult train(const Corpus& train_corpus, const Corpus& dev_corpus, ModelConfig model_config,
                  const TrainConfig& train_config);

}  // namespace cada
