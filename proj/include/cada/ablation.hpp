#pragma once

// Channel ablations: each variant trains the full architecture with some
// structure matrices zeroed (M1 for CAE, M2 for IPM, G for DDM), so every
// variant has the same parameter count.

#include "cada/training.hpp"

#include <string>
#include <vector>

namespace cada {

struct AblationVariant {
  std::string name;
  ChannelSwitches switches;
};

/// full, w/o IPM, w/o DDM, w/o CAE, w/o all.
std::vector<AblationVariant> standard_variants();
/// Looks a name up in standard_variants(); throws std::invalid_argument.
AblationVariant variant_by_name(const std::string& name);

struct AblationRow {
  std::string variant;
  std::vector<std::uint64_t> seeds;
  std::vector<double> em;  // per seed, percent
  std::vector<double> f1;
  double mean_em = 0.0;
  double mean_f1 = 0.0;
  double seconds = 0.0;
};

struct AblationTable {
  std::vector<AblationRow> rows;

  const AblationRow& row(const std::string& variant) const;
  std::string to_text() const;
  nlohmann::json to_json() const;
};

struct AblationOptions {
  std::vector<std::uint64_t> seeds = {13};
  /// Train variants concurrently, one thread per variant.
  bool parallel = false;
};

/// Trains every variant for every seed with identical hyperparameters and
/// scores the best-dev weights on `dev`. Needs at least two variants.
AblationTable run_ablation(const Corpus& train_corpus, const Corpus& dev_corpus, const ModelConfig& model_config,
                           const TrainConfig& train_config, const std::vector<AblationVariant>& variants,
                           const AblationOptions& options = {});

/// First `n` dialogues and the rest.
std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, std::size_t n);

}  // namespace cada
