#include "cada/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace cada {

void OptimState::reset(std::span<Parameter* const> params) {
  first_moment.clear();
  second_moment.clear();
  for (const Parameter* p : params) {
    first_moment.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    second_moment.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
  step = 0;
}

void adamw_step(std::span<Parameter* const> params, OptimState& s) {
  if (s.first_moment.size() != params.size()) s.reset(params);
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    Matrix& m = s.first_moment[i];
    Matrix& v = s.second_moment[i];
    if (m.rows() != p.value.rows() || m.cols() != p.value.cols()) {
      throw TensorError("adamw_step: optimizer state does not match parameter " + p.name);
    }
    m = s.beta1 * m + (1.0 - s.beta1) * p.grad;
    v = s.beta2 * v + (1.0 - s.beta2) * p.grad.cwiseProduct(p.grad);
    const auto mhat = m.array() / c1;
    const auto vhat = v.array() / c2;
    p.value.array() -= s.learning_rate * s.weight_decay * p.value.array();
    p.value.array() -= s.learning_rate * mhat / (vhat.sqrt() + s.eps);
  }
}

double clip_grad_norm(std::span<Parameter* const> params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params) sq += p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double k = max_norm / norm;
    for (Parameter* p : params) p->grad *= k;
  }
  return norm;
}

void TrainConfig::validate() const {
  auto bad = [](const std::string& m) { throw std::invalid_argument("train config: " + m); };
  if (batch_size < 1) bad("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) bad("learning_rate must be > 0");
  if (epochs < 0) bad("epochs must be >= 0");
  if (weight_decay < 0.0) bad("weight_decay must be >= 0");
  if (eval_every < 0 || patience < 0 || max_steps < 0 || warmup_steps < 0) bad("counts must be >= 0");
  if (min_freq < 1) bad("min_freq must be >= 1");
}

bool TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "batch_size") batch_size = std::stoi(value);
  else if (key == "learning_rate") learning_rate = std::stod(value);
  else if (key == "epochs") epochs = std::stoi(value);
  else if (key == "seed") seed = std::stoull(value);
  else if (key == "weight_decay") weight_decay = std::stod(value);
  else if (key == "clip_norm") clip_norm = std::stod(value);
  else if (key == "eval_every") eval_every = std::stoi(value);
  else if (key == "patience") patience = std::stoi(value);
  else if (key == "max_steps") max_steps = std::stoi(value);
  else if (key == "warmup_steps") warmup_steps = std::stoi(value);
  else if (key == "min_freq") min_freq = std::stoi(value);
  else if (key == "out_dir") out_dir = value;
  else return false;
  return true;
}

std::vector<Example> prepare_examples(const Corpus& corpus, const Vocabulary& vocab, const ModelConfig& config,
                                      bool drop_truncated) {
  std::vector<Example> out;
  for (const auto& d : corpus) {
    for (const auto& qa : d.qas) {
      Example ex;
      ex.id = qa.id;
      ex.dialogue = &d;
      ex.qa = &qa;
      ex.seq = encode_input(d, qa, vocab, config.encode_options());
      if (drop_truncated && ex.seq.truncated_out) continue;
      ex.structures = build_structures(d, ex.seq, config.graph_options());
      apply_switches(ex.structures, config.channels);
      ex.gold = gold_for(ex.seq, qa);
      out.push_back(std::move(ex));
    }
  }
  return out;
}

Prediction predict_example(CadaModel& model, const Example& ex) {
  Tape tape;
  const PredictionVars pv = model.forward(tape, ex.seq, ex.structures);
  return decode(pv, ex.seq, model.config().max_answer_len, model.config().answer_threshold);
}

PredictionMap predict_all(CadaModel& model, std::span<const Example> examples) {
  PredictionMap out;
  for (const auto& ex : examples) out[ex.id] = predict_example(model, ex).text;
  return out;
}

void save_model(const std::filesystem::path& path, const CadaModel& model, const Vocabulary& vocab,
                std::uint64_t seed) {
  CheckpointHeader h;
  h.seed = seed;
  h.config_text = model.config().to_text();
  h.vocabulary_text = vocab.serialize();
  const auto params = model.parameters();
  save_checkpoint(path, h, params);
}

LoadedModel load_model(const std::filesystem::path& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  LoadedModel lm{CadaModel(ModelConfig::from_text(ckpt.header.config_text), ckpt.header.seed),
                 Vocabulary::deserialize(ckpt.header.vocabulary_text), ckpt.header.seed};
  if (lm.vocab.size() != lm.model.config().vocab_size) {
    throw std::runtime_error("checkpoint " + path.string() + ": vocabulary has " + std::to_string(lm.vocab.size()) +
                             " tokens but the config says " + std::to_string(lm.model.config().vocab_size));
  }
  const auto params = lm.model.parameters();
  restore_parameters(ckpt, params);
  return lm;
}

namespace {

std::vector<Matrix> snapshot(const std::vector<Parameter*>& params) {
  std::vector<Matrix> out;
  out.reserve(params.size());
  for (const Parameter* p : params) out.push_back(p->value);
  return out;
}

void restore(const std::vector<Parameter*>& params, const std::vector<Matrix>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

}  // namespace

TrainResult train(const Corpus& train_corpus, const Corpus& dev_corpus, ModelConfig model_config,
                  const TrainConfig& tc) {
  tc.validate();
  Vocabulary vocab = Vocabulary::build(train_corpus, tc.min_freq, model_config.speaker_prefix);
  model_config.vocab_size = vocab.size();
  CadaModel model(model_config, tc.seed);

  const auto train_examples = prepare_examples(train_corpus, vocab, model_config, true);
  const auto dev_examples = prepare_examples(dev_corpus, vocab, model_config, false);
  if (train_examples.empty()) throw std::invalid_argument("train: no usable training examples");

  const auto params = model.parameters();
  OptimState opt;
  opt.learning_rate = tc.learning_rate;
  opt.weight_decay = tc.weight_decay;
  opt.reset(params);

  std::ofstream metrics;
  std::optional<std::filesystem::path> ckpt_path;
  if (!tc.out_dir.empty()) {
    std::filesystem::create_directories(tc.out_dir);
    metrics.open(tc.out_dir / "metrics.jsonl");
    if (!metrics) throw std::runtime_error("train: cannot write " + (tc.out_dir / "metrics.jsonl").string());
    ckpt_path = tc.out_dir / "best.ckpt";
  }

  std::vector<std::string> log;
  auto emit = [&](const nlohmann::json& j) {
    log.push_back(j.dump());
    if (metrics) metrics << log.back() << '\n' << std::flush;
  };

  std::vector<Matrix> best = snapshot(params);
  double best_f1 = -1.0, best_em = 0.0;
  int stale = 0;
  bool stop = false;

  auto evaluate = [&](long step) {
    if (dev_examples.empty()) return;
    const EvalReport r = score(predict_all(model, dev_examples), dev_corpus);
    emit({{"step", step}, {"dev_em", r.em}, {"dev_f1", r.f1}, {"seed", tc.seed}});
    if (r.f1 > best_f1) {
      best_f1 = r.f1;
      best_em = r.em;
      best = snapshot(params);
      stale = 0;
      if (ckpt_path) save_model(*ckpt_path, model, vocab, tc.seed);
    } else if (tc.patience > 0 && ++stale >= tc.patience) {
      stop = true;
    }
  };

  std::mt19937_64 rng(tc.seed);
  std::vector<std::size_t> order(train_examples.size());
  std::iota(order.begin(), order.end(), 0);
  long step = 0;
  for (int epoch = 0; epoch < tc.epochs && !stop; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < order.size() && !stop; b += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(tc.batch_size));
      Tape tape;
      tape.seed(tc.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(step + 1)));
      std::vector<PredictionVars> preds;
      std::vector<GoldSpan> golds;
      for (std::size_t i = b; i < e; ++i) {
        const Example& ex = train_examples[order[i]];
        preds.push_back(model.forward(tape, ex.seq, ex.structures));
        golds.push_back(ex.gold);
      }
      const Var l = loss(preds, golds);
      const double value = l.item();
      if (!std::isfinite(value)) {
        std::string ids;
        for (std::size_t i = b; i < e; ++i) ids += " " + train_examples[order[i]].id;
        throw TensorError("train: non-finite loss at step " + std::to_string(step + 1) + " on examples:" + ids);
      }
      for (Parameter* p : params) p->zero_grad();
      tape.backward(l);
      clip_grad_norm(params, tc.clip_norm);
      ++step;
      opt.learning_rate = tc.warmup_steps > 0
                              ? tc.learning_rate * std::min(1.0, static_cast<double>(step) / tc.warmup_steps)
                              : tc.learning_rate;
      adamw_step(params, opt);
      emit({{"step", step}, {"loss", value}, {"seed", tc.seed}});
      if (tc.eval_every > 0 && step % tc.eval_every == 0) evaluate(step);
      if (tc.max_steps > 0 && step >= tc.max_steps) stop = true;
    }
    if (tc.eval_every == 0) evaluate(step);
  }
  if (tc.eval_every > 0 && step % tc.eval_every != 0 && !dev_examples.empty()) evaluate(step);

  if (dev_examples.empty()) {
    best = snapshot(params);
    if (ckpt_path) save_model(*ckpt_path, model, vocab, tc.seed);
  } else {
    restore(params, best);
  }
  TrainResult result{std::move(model), std::move(vocab), std::move(log), ckpt_path, best_em, best_f1, step};
  return result;
}

}  // namespace cada
