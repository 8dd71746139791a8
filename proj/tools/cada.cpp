// Command-line entry point.
//
//   cada train         --corpus train.json [--dev dev.json] --out run/
//   cada predict       --checkpoint run/best.ckpt --corpus dev.json --out preds.json
//   cada eval          --corpus dev.json (--checkpoint ckpt | --predictions preds.json)
//   cada ablate        --corpus train.json (--dev dev.json | --split N) --seeds 1,2,3
//   cada gen-synthetic --dialogues 500 --coref 0.8 --out syn.json
//   cada dump-graphs   --corpus c.json --dialogue ID [--question K] [--matrix m1|m2|g|all]
//
// --config names a file of "key = value" lines for model and training
// fields; --set key=value applies one more assignment after it.

#include "cada/ablation.hpp"
#include "cada/synthetic.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace cada;

struct Settings {
  std::string config_path;
  std::vector<std::string> assignments;
  std::uint64_t seed = 13;
  bool seed_given = false;
  int gamma_paper = 2;
  bool gamma_given = false;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

void assign(ModelConfig& mc, TrainConfig& tc, const std::string& line, const std::string& where) {
  const auto eq = line.find('=');
  if (eq == std::string::npos) throw std::invalid_argument(where + ": expected key = value, got '" + line + "'");
  const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
  if (!mc.set(key, value) && !tc.set(key, value)) throw std::invalid_argument(where + ": unknown key '" + key + "'");
}

std::pair<ModelConfig, TrainConfig> load_settings(const Settings& s) {
  ModelConfig mc;
  TrainConfig tc;
  if (!s.config_path.empty()) {
    std::ifstream in(s.config_path);
    if (!in) throw std::runtime_error("cannot read config " + s.config_path);
    std::string line;
    for (int n = 1; std::getline(in, line); ++n) {
      line = trim(line.substr(0, line.find('#')));
      if (!line.empty()) assign(mc, tc, line, s.config_path + ":" + std::to_string(n));
    }
  }
  for (const auto& a : s.assignments) assign(mc, tc, a, "--set");
  if (s.seed_given) tc.seed = s.seed;
  if (s.gamma_given) mc.gamma_paper = s.gamma_paper;
  tc.validate();
  return {mc, tc};
}

void add_shared(CLI::App* cmd, Settings& s) {
  cmd->add_option("--config", s.config_path, "File of key = value lines")->check(CLI::ExistingFile);
  cmd->add_option("--set", s.assignments, "Extra key=value assignment (repeatable)");
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&s](std::uint64_t v) { s.seed = v, s.seed_given = true; }, "Random seed");
  cmd->add_option_function<int>(
      "--gamma-paper", [&s](int v) { s.gamma_paper = v, s.gamma_given = true; },
      "Discourse threshold in hops (stored threshold is this + 1)");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

void print_report(const EvalReport& r, const std::string& json_path) {
  std::cout << r.to_table() << '\n' << r.to_json().dump(2) << '\n';
  if (!json_path.empty()) write_text(json_path, r.to_json().dump(2) + "\n");
}

PredictionMap predict_corpus(LoadedModel& lm, const Corpus& corpus, const Settings& s) {
  ModelConfig mc = lm.model.config();
  if (s.gamma_given) mc.gamma_paper = s.gamma_paper;
  const auto examples = prepare_examples(corpus, lm.vocab, mc, false);
  return predict_all(lm.model, examples);
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(std::stoull(trim(item)));
  if (out.empty()) throw std::invalid_argument("--seeds: empty list");
  return out;
}

const Dialogue& find_dialogue(const Corpus& corpus, const std::string& id) {
  for (const auto& d : corpus) {
    if (d.id == id) return d;
  }
  throw std::invalid_argument("no dialogue with id '" + id + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coreference-aware double-channel attention for dialogue reading comprehension"};
  app.require_subcommand(1);
  Settings s;
  std::string corpus_path, dev_path, checkpoint, predictions_path, out;

  auto* train_cmd = app.add_subcommand("train", "Train a model and keep the best dev checkpoint");
  add_shared(train_cmd, s);
  train_cmd->add_option("--corpus", corpus_path, "Training corpus")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--dev", dev_path, "Dev corpus for checkpoint selection")->check(CLI::ExistingFile);
  train_cmd->add_option("--out", out, "Output directory for metrics.jsonl and best.ckpt")->required();

  auto* predict_cmd = app.add_subcommand("predict", "Write a JSON map of qa-id to answer");
  add_shared(predict_cmd, s);
  predict_cmd->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--corpus", corpus_path)->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--out", out, "Predictions file")->required();

  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint or a predictions file");
  add_shared(eval_cmd, s);
  eval_cmd->add_option("--corpus", corpus_path, "Gold corpus")->required()->check(CLI::ExistingFile);
  auto* ck = eval_cmd->add_option("--checkpoint", checkpoint)->check(CLI::ExistingFile);
  auto* pr = eval_cmd->add_option("--predictions", predictions_path)->check(CLI::ExistingFile);
  ck->excludes(pr);
  eval_cmd->add_option("--out", out, "Also write the report JSON here");

  auto* ablate_cmd = app.add_subcommand("ablate", "Train channel ablations and compare dev scores");
  add_shared(ablate_cmd, s);
  std::size_t split = 0;
  std::string seeds_text, variants_text;
  bool parallel = false;
  ablate_cmd->add_option("--corpus", corpus_path)->required()->check(CLI::ExistingFile);
  auto* dev_opt = ablate_cmd->add_option("--dev", dev_path)->check(CLI::ExistingFile);
  ablate_cmd->add_option("--split", split, "Use the first N dialogues for training, the rest as dev")->excludes(dev_opt);
  ablate_cmd->add_option("--seeds", seeds_text, "Comma-separated seeds (default: --seed)");
  ablate_cmd->add_option("--variants", variants_text,
                         "Comma-separated subset of: full, w/o IPM, w/o DDM, w/o CAE, w/o all");
  ablate_cmd->add_flag("--parallel", parallel, "One thread per variant");
  ablate_cmd->add_option("--out", out, "Also write the table JSON here");

  auto* gen_cmd = app.add_subcommand("gen-synthetic", "Write a template corpus");
  SyntheticSpec spec;
  gen_cmd->add_option("--dialogues", spec.dialogues);
  gen_cmd->add_option("--utterances", spec.utterances_per_dialogue);
  gen_cmd->add_option("--speakers", spec.speakers_per_dialogue);
  gen_cmd->add_option("--vocabulary", spec.vocabulary_size);
  gen_cmd->add_option("--coref", spec.coref_fraction, "Fraction of coreference-hop questions");
  gen_cmd->add_option("--discourse", spec.discourse_fraction, "Fraction of discourse-hop questions");
  gen_cmd->add_option("--unanswerable", spec.unanswerable_fraction);
  gen_cmd->add_option("--distractors", spec.distractors);
  gen_cmd->add_option("--seed", spec.seed);
  gen_cmd->add_option("--out", out)->required();

  auto* dump_cmd = app.add_subcommand("dump-graphs", "Print M1, M2 and G for one question as text grids");
  add_shared(dump_cmd, s);
  std::string dialogue_id, matrix = "all";
  int question = 0;
  bool no_question_node = false;
  dump_cmd->add_option("--corpus", corpus_path)->required()->check(CLI::ExistingFile);
  dump_cmd->add_option("--checkpoint", checkpoint, "Take vocabulary and config from here")->check(CLI::ExistingFile);
  dump_cmd->add_option("--dialogue", dialogue_id)->required();
  dump_cmd->add_option("--question", question, "QA index within the dialogue");
  dump_cmd->add_option("--matrix", matrix)->check(CLI::IsMember({"m1", "m2", "g", "all"}));
  dump_cmd->add_flag("--no-question-node", no_question_node, "Leave question tokens out of the discourse graph");
  dump_cmd->add_option("--out", out, "Write the grids here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      auto [mc, tc] = load_settings(s);
      tc.out_dir = out;
      const Corpus train_corpus = load_corpus(corpus_path);
      const Corpus dev_corpus = dev_path.empty() ? Corpus{} : load_corpus(dev_path);
      const TrainResult r = train(train_corpus, dev_corpus, mc, tc);
      std::cout << "steps " << r.steps << "\ncheckpoint " << r.checkpoint->string() << '\n';
      if (!dev_corpus.empty()) std::cout << "best dev EM " << r.best_dev_em << " F1 " << r.best_dev_f1 << '\n';
    } else if (*predict_cmd) {
      LoadedModel lm = load_model(checkpoint);
      save_predictions(out, predict_corpus(lm, load_corpus(corpus_path), s));
    } else if (*eval_cmd) {
      if (checkpoint.empty() && predictions_path.empty()) throw CLI::RequiredError("--checkpoint or --predictions");
      const Corpus gold = load_corpus(corpus_path);
      PredictionMap preds;
      if (!checkpoint.empty()) {
        LoadedModel lm = load_model(checkpoint);
        preds = predict_corpus(lm, gold, s);
      } else {
        preds = load_predictions(predictions_path);
      }
      print_report(score(preds, gold), out);
    } else if (*ablate_cmd) {
      auto [mc, tc] = load_settings(s);
      const Corpus corpus = load_corpus(corpus_path);
      Corpus train_corpus, dev_corpus;
      if (!dev_path.empty()) {
        train_corpus = corpus;
        dev_corpus = load_corpus(dev_path);
      } else {
        if (split == 0) throw std::invalid_argument("ablate: give --dev or --split");
        std::tie(train_corpus, dev_corpus) = split_corpus(corpus, split);
      }
      std::vector<AblationVariant> variants;
      if (variants_text.empty()) {
        variants = standard_variants();
      } else {
        std::stringstream ss(variants_text);
        for (std::string name; std::getline(ss, name, ',');) variants.push_back(variant_by_name(trim(name)));
      }
      AblationOptions options;
      options.seeds = seeds_text.empty() ? std::vector<std::uint64_t>{tc.seed} : parse_seeds(seeds_text);
      options.parallel = parallel;
      const AblationTable table = run_ablation(train_corpus, dev_corpus, mc, tc, variants, options);
      std::cout << table.to_text() << '\n';
      if (!out.empty()) write_text(out, table.to_json().dump(2) + "\n");
    } else if (*gen_cmd) {
      const Corpus corpus = generate_synthetic(spec);
      save_corpus(out, corpus);
      std::cout << corpus.size() << " dialogues, " << question_count(corpus) << " questions -> " << out << '\n';
    } else if (*dump_cmd) {
      auto [mc, tc] = load_settings(s);
      const Corpus corpus = load_corpus(corpus_path);
      const Dialogue& d = find_dialogue(corpus, dialogue_id);
      if (question < 0 || question >= static_cast<int>(d.qas.size())) {
        throw std::invalid_argument("dialogue " + d.id + " has " + std::to_string(d.qas.size()) + " questions");
      }
      Vocabulary vocab;
      if (!checkpoint.empty()) {
        LoadedModel lm = load_model(checkpoint);
        const int gamma = mc.gamma_paper;
        mc = lm.model.config();
        if (s.gamma_given) mc.gamma_paper = gamma;
        vocab = std::move(lm.vocab);
      } else {
        vocab = Vocabulary::build(corpus, tc.min_freq, mc.speaker_prefix);
      }
      if (no_question_node) mc.question_node = false;
      const auto& qa = d.qas[static_cast<std::size_t>(question)];
      const EncodedSequence seq = encode_input(d, qa, vocab, mc.encode_options());
      const StructureMatrices sm = build_structures(d, seq, mc.graph_options());
      std::ostringstream text;
      text << "# dialogue " << d.id << " question " << qa.id << " gamma' " << mc.gamma() << '\n';
      text << "# tokens";
      for (int i = 0; i < seq.size(); ++i) text << ' ' << i << ':' << seq.tokens[static_cast<std::size_t>(i)];
      text << '\n';
      if (matrix == "m1" || matrix == "all") text << "# M1\n" << format_grid(sm.m1) << '\n';
      if (matrix == "m2" || matrix == "all") text << "# M2\n" << format_grid(sm.m2) << '\n';
      if (matrix == "g" || matrix == "all") text << "# G\n" << format_grid(sm.g) << '\n';
      if (out.empty()) {
        std::cout << text.str();
      } else {
        write_text(out, text.str());
      }
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
