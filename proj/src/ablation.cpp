#include "cada/ablation.hpp"

#include <cctype>
#include <chrono>
#include <cstdio>
#include <exception>
#include <thread>

namespace cada {

std::vector<AblationVariant> standard_variants() {
  return {{"full", {true, true, true}},
          {"w/o IPM", {true, false, true}},
          {"w/o DDM", {true, true, false}},
          {"w/o CAE", {false, true, true}},
          {"w/o all", {false, false, false}}};
}

AblationVariant variant_by_name(const std::string& name) {
  for (const auto& v : standard_variants()) {
    if (v.name == name) return v;
  }
  throw std::invalid_argument("unknown ablation variant '" + name + "'");
}

const AblationRow& AblationTable::row(const std::string& variant) const {
  for (const auto& r : rows) {
    if (r.variant == variant) return r;
  }
  throw std::out_of_range("ablation table has no row '" + variant + "'");
}

std::string AblationTable::to_text() const {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %8s %8s %6s %9s\n", "variant", "EM", "F1", "seeds", "seconds");
  out += line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-10s %8.2f %8.2f %6zu %9.1f\n", r.variant.c_str(), r.mean_em, r.mean_f1,
                  r.seeds.size(), r.seconds);
    out += line;
  }
  return out;
}

nlohmann::json AblationTable::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows) {
    j.push_back({{"variant", r.variant},
                 {"seeds", r.seeds},
                 {"em", r.em},
                 {"f1", r.f1},
                 {"mean_em", r.mean_em},
                 {"mean_f1", r.mean_f1},
                 {"seconds", r.seconds}});
  }
  return j;
}

namespace {

std::string slug(const std::string& name) {
  std::string s;
  for (const char c : name) s.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  return s;
}

AblationRow run_variant(const Corpus& train_corpus, const Corpus& dev_corpus, ModelConfig model_config,
                        const TrainConfig& train_config, const AblationVariant& variant,
                        const std::vector<std::uint64_t>& seeds) {
  AblationRow row;
  row.variant = variant.name;
  model_config.channels = variant.switches;
  const auto t0 = std::chrono::steady_clock::now();
  for (const std::uint64_t seed : seeds) {
    TrainConfig tc = train_config;
    tc.seed = seed;
    if (!tc.out_dir.empty()) tc.out_dir = tc.out_dir / (slug(variant.name) + "_seed" + std::to_string(seed));
    TrainResult result = train(train_corpus, dev_corpus, model_config, tc);
    const auto dev = prepare_examples(dev_corpus, result.vocab, result.model.config(), false);
    const EvalReport report = score(predict_all(result.model, dev), dev_corpus);
    row.seeds.push_back(seed);
    row.em.push_back(report.em);
    row.f1.push_back(report.f1);
  }
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    row.mean_em += row.em[i] / static_cast<double>(seeds.size());
    row.mean_f1 += row.f1[i] / static_cast<double>(seeds.size());
  }
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

}  // namespace

AblationTable run_ablation(const Corpus& train_corpus, const Corpus& dev_corpus, const ModelConfig& model_config,
                           const TrainConfig& train_config, const std::vector<AblationVariant>& variants,
                           const AblationOptions& options) {
  if (variants.size() < 2) {
    throw std::invalid_argument("run_ablation: need at least 2 variants, got " + std::to_string(variants.size()));
  }
  if (options.seeds.empty()) throw std::invalid_argument("run_ablation: no seeds");
  if (dev_corpus.empty()) throw std::invalid_argument("run_ablation: empty dev corpus");
  AblationTable table;
  table.rows.resize(variants.size());
  if (!options.parallel) {
    for (std::size_t v = 0; v < variants.size(); ++v) {
      table.rows[v] = run_variant(train_corpus, dev_corpus, model_config, train_config, variants[v], options.seeds);
    }
    return table;
  }
  std::vector<std::exception_ptr> errors(variants.size());
  std::vector<std::thread> workers;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    workers.emplace_back([&, v] {
      try {
        table.rows[v] = run_variant(train_corpus, dev_corpus, model_config, train_config, variants[v], options.seeds);
      } catch (...) {
        errors[v] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return table;
}

std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, std::size_t n) {
  n = std::min(n, corpus.size());
  return {Corpus(corpus.begin(), corpus.begin() + static_cast<std::ptrdiff_t>(n)),
          Corpus(corpus.begin() + static_cast<std::ptrdiff_t>(n), corpus.end())};
}

}  // namespace cada
