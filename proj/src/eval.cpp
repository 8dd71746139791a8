#include "cada/eval.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace cada {

std::string normalize_answer(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::ispunct(c)) continue;
    cleaned.push_back(static_cast<char>(std::tolower(c)));
  }
  std::istringstream in(cleaned);
  std::string word, out;
  while (in >> word) {
    if (word == "a" || word == "an" || word == "the") continue;
    if (!out.empty()) out.push_back(' ');
    out += word;
  }
  return out;
}

bool is_unanswerable(std::string_view text) { return normalize_answer(text) == kUnanswerableText; }

namespace {

std::vector<std::string> words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

}  // namespace

double exact_match(std::string_view prediction, std::string_view gold) {
  const bool pu = is_unanswerable(prediction), gu = is_unanswerable(gold);
  if (pu || gu) return (pu && gu) ? 1.0 : 0.0;
  return normalize_answer(prediction) == normalize_answer(gold) ? 1.0 : 0.0;
}

double f1_score(std::string_view prediction, std::string_view gold) {
  const bool pu = is_unanswerable(prediction), gu = is_unanswerable(gold);
  if (pu || gu) return (pu && gu) ? 1.0 : 0.0;
  const auto p = words(normalize_answer(prediction));
  const auto g = words(normalize_answer(gold));
  if (p.empty() || g.empty()) return (p.empty() && g.empty()) ? 1.0 : 0.0;
  std::map<std::string, int> bag;
  for (const auto& w : g) ++bag[w];
  int common = 0;
  for (const auto& w : p) {
    auto it = bag.find(w);
    if (it != bag.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(p.size());
  const double recall = static_cast<double>(common) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

std::string question_type(std::string_view question) {
  const auto toks = tokenize(question);
  if (!toks.empty()) {
    for (const char* t : kQuestionTypes) {
      if (toks.front() == t) return t;
    }
  }
  return "other";
}

std::string gold_answer(const QAPair& qa) {
  return (qa.answerable && qa.answer) ? qa.answer->text : std::string(kUnanswerableText);
}

EvalReport score(const PredictionMap& predictions, const Corpus& gold) {
  std::vector<std::string> missing;
  for (const auto& d : gold) {
    for (const auto& qa : d.qas) {
      if (!predictions.contains(qa.id)) missing.push_back(qa.id);
    }
  }
  if (!missing.empty()) {
    std::string msg = "score: no prediction for " + std::to_string(missing.size()) + " question(s):";
    for (const auto& id : missing) msg += " " + id;
    throw std::invalid_argument(msg);
  }

  EvalReport r;
  for (const char* t : kQuestionTypes) r.by_type[t] = {};
  double em = 0.0, f1 = 0.0, type_ok = 0.0;
  for (const auto& d : gold) {
    for (const auto& qa : d.qas) {
      const std::string& pred = predictions.at(qa.id);
      const std::string g = gold_answer(qa);
      const double e = exact_match(pred, g), f = f1_score(pred, g);
      em += e;
      f1 += f;
      type_ok += (is_unanswerable(pred) == !qa.answerable) ? 1.0 : 0.0;
      TypeStats& ts = r.by_type[question_type(qa.question)];
      ts.em += e;
      ts.f1 += f;
      ++ts.count;
      ++r.count;
    }
  }
  if (r.count > 0) {
    r.em = 100.0 * em / r.count;
    r.f1 = 100.0 * f1 / r.count;
    r.answerable_accuracy = 100.0 * type_ok / r.count;
  }
  for (auto& [name, ts] : r.by_type) {
    if (ts.count > 0) {
      ts.em = 100.0 * ts.em / ts.count;
      ts.f1 = 100.0 * ts.f1 / ts.count;
    }
  }
  return r;
}

std::string EvalReport::to_table() const {
  std::string out;
  char line[128];
  std::snprintf(line, sizeof line, "%-8s %7s %7s %7s\n", "type", "count", "EM", "F1");
  out += line;
  for (const char* t : kQuestionTypes) {
    const TypeStats& ts = by_type.at(t);
    std::snprintf(line, sizeof line, "%-8s %7d %7.2f %7.2f\n", t, ts.count, ts.em, ts.f1);
    out += line;
  }
  std::snprintf(line, sizeof line, "%-8s %7d %7.2f %7.2f\n", "overall", count, em, f1);
  out += line;
  std::snprintf(line, sizeof line, "answerability accuracy: %.2f\n", answerable_accuracy);
  out += line;
  return out;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j{{"em", em}, {"f1", f1}, {"answerable_accuracy", answerable_accuracy}, {"count", count}};
  for (const auto& [name, ts] : by_type) j["by_type"][name] = {{"em", ts.em}, {"f1", ts.f1}, {"count", ts.count}};
  return j;
}

PredictionMap load_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open predictions file " + path);
  return nlohmann::json::parse(in).get<PredictionMap>();
}

void save_predictions(const std::string& path, const PredictionMap& predictions) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write predictions file " + path);
  out << nlohmann::json(predictions).dump(1) << '\n';
}

}  // namespace cada
