#pragma once

// Exact-match / bag-of-tokens F1 scoring with a per-question-type breakdown.
//
// Normalization: lowercase, drop ASCII punctuation, drop the articles
// "a", "an", "the", collapse whitespace. An unanswerable gold matches only
// the prediction "unanswerable"; F1 is 1 when both sides are unanswerable
// and 0 when exactly one is.

#include "cada/corpus.hpp"

#include "json.hpp"

#include <array>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace cada {

inline constexpr std::string_view kUnanswerableText = "unanswerable";

inline constexpr std::array<const char*, 7> kQuestionTypes = {"who", "when", "what", "where", "why", "how", "other"};

struct TypeStats {
  double em = 0.0;  // percent
  double f1 = 0.0;  // percent
  int count = 0;
};

struct EvalReport {
  double em = 0.0;  // percent
  double f1 = 0.0;  // percent
  /// Percent of questions whose answerable/unanswerable call is right.
  double answerable_accuracy = 0.0;
  int count = 0;
  std::map<std::string, TypeStats> by_type;

  std::string to_table() const;
  nlohmann::json to_json() const;
};

using PredictionMap = std::map<std::string, std::string>;

std::string normalize_answer(std::string_view text);
bool is_unanswerable(std::string_view text);

/// Both return values in [0, 1].
double exact_match(std::string_view prediction, std::string_view gold);
double f1_score(std::string_view prediction, std::string_view gold);

/// First question token if it is a wh-word, else "other".
std::string question_type(std::string_view question);

/// Gold answer string for a QA pair ("unanswerable" when it has none).
std::string gold_answer(const QAPair& qa);

/// Throws std::invalid_argument listing every gold id without a prediction.
EvalReport score(const PredictionMap& predictions, const Corpus& gold);

PredictionMap load_predictions(const std::string& path);
void save_predictions(const std::string& path, const PredictionMap& predictions);

}  // namespace cada
