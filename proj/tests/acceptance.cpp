// Acceptance suite: one PASS/FAIL line per criterion.
//
//   cada_acceptance          run criteria 1-8
//   cada_acceptance 2 7      run only the listed criteria
//
// Exit status is nonzero when any selected criterion fails.

#include "checks.hpp"
#include "protocols.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

using namespace cada;
using namespace cada::testing;

namespace {

// Tolerances.
constexpr double kGradientTol = 1e-4;
constexpr double kGradientSeconds = 60.0;
constexpr int kMaskingInputs = 100;
constexpr double kRowSumTol = 1e-12;
constexpr double kReductionTol = 1e-10;
constexpr int kDistanceGraphs = 200;
constexpr int kMonotonicInstances = 100;
constexpr double kUniformLossTol = 1e-6;
constexpr double kBatchMeanTol = 1e-12;
constexpr long kOverfitSteps = 300;
constexpr double kOverfitSeconds = 300.0;
constexpr double kAblationGap = 3.0;
constexpr double kControlBand = 2.0;
constexpr double kAblationSeconds = 1800.0;
constexpr double kScoreTol = 1e-9;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_op;
  const auto ops = op_gradient_errors();
  for (const auto& [name, err] : ops) {
    if (err >= worst) worst = err, worst_op = name;
  }
  const auto [model_err, model_param] = micro_model_gradient_error();
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << ops.size() << " ops, worst " << worst_op << " " << fmt("%.2e", worst) << "; micro model worst " << model_param
    << " " << fmt("%.2e", model_err) << "; " << fmt("%.1f", secs) << " s";
  return {worst < kGradientTol && model_err < kGradientTol && secs < kGradientSeconds, d.str()};
}

Outcome masking() {
  const MaskingResult r = discourse_masking(kMaskingInputs);
  std::mt19937_64 rng(77);
  double softmax_err = 0.0;
  for (int trial = 0; trial < kMaskingInputs; ++trial) {
    const Matrix scores = random_matrix(rng, 7, 9, -20.0, 20.0);
    Matrix mask = (random_matrix(rng, 7, 9, 0.0, 1.0).array() < 0.4).select(kNegInf, Matrix::Zero(7, 9));
    for (Index i = 0; i < 7; ++i) mask(i, i) = 0.0;
    Tape t;
    const Matrix p = masked_softmax(t.constant(scores), mask).value();
    for (Index i = 0; i < 7; ++i) softmax_err = std::max(softmax_err, std::abs(p.row(i).sum() - 1.0));
    if (((mask.array() == kNegInf) && (p.array() != 0.0)).any()) softmax_err = 1.0;
  }
  std::ostringstream d;
  d << kMaskingInputs << " inputs, " << r.maps << " maps, " << r.leaked << " leaked weights, row sums "
    << fmt("%.1e", r.row_sum_error) << ", masked_softmax " << fmt("%.1e", softmax_err);
  return {r.leaked == 0 && r.row_sum_error < kRowSumTol && softmax_err < kRowSumTol, d.str()};
}

Outcome reduction() {
  const double gap = plain_transformer_gap();
  return {gap < kReductionTol, "max entry gap " + fmt("%.2e", gap)};
}

Outcome graph_oracles() {
  const int dist = distance_mismatches(kDistanceGraphs);
  const bool m1 = coref_fixture_matches();
  const bool m2 = role_fixture_matches();
  const int mono = monotonicity_violations(kMonotonicInstances);
  std::ostringstream d;
  d << "Floyd-Warshall mismatches " << dist << "/" << kDistanceGraphs << ", M1 fixture " << (m1 ? "ok" : "wrong")
    << ", M2 fixture " << (m2 ? "ok" : "wrong") << ", monotonicity violations " << mono << "/" << kMonotonicInstances;
  return {dist == 0 && m1 && m2 && mono == 0, d.str()};
}

Outcome loss_arithmetic() {
  const double u = uniform_loss_error(), b = batch_mean_error();
  return {u < kUniformLossTol && b < kBatchMeanTol,
          "uniform loss error " + fmt("%.2e", u) + ", batch mean error " + fmt("%.2e", b)};
}

Outcome overfit() {
  const Corpus corpus = overfit_corpus();
  const auto t0 = Clock::now();
  const TrainResult a = train(corpus, corpus, overfit_model(), overfit_training());
  const double secs = seconds_since(t0);
  const TrainResult b = train(corpus, corpus, overfit_model(), overfit_training());
  const long at = first_perfect_step(a.metric_log);
  const bool same = a.metric_log == b.metric_log;
  std::ostringstream d;
  d << question_count(corpus) << " examples, 100% train EM at step " << at << ", " << fmt("%.1f", secs)
    << " s per run, logs " << (same ? "identical" : "differ");
  return {at > 0 && at <= kOverfitSteps && secs < kOverfitSeconds && same, d.str()};
}

AblationTable ablate(double coref, double discourse, const std::vector<std::string>& names) {
  const auto [train_part, dev_part] = ablation_corpora(coref, discourse);
  std::vector<AblationVariant> variants;
  for (const auto& n : names) variants.push_back(variant_by_name(n));
  AblationOptions options;
  options.seeds = kAblationSeeds;
  const AblationTable table = run_ablation(train_part, dev_part, ablation_model(), ablation_training(), variants, options);
  std::cout << table.to_text() << std::flush;
  return table;
}

Outcome ablation() {
  const auto t0 = Clock::now();
  std::cout << "  coreference-hop corpus (80%)\n";
  const AblationTable coref = ablate(0.8, 0.0, {"full", "w/o CAE"});
  std::cout << "  discourse-hop corpus (80%)\n";
  const AblationTable disc = ablate(0.0, 0.8, {"full", "w/o DDM"});
  std::cout << "  control corpus\n";
  std::vector<std::string> all;
  for (const auto& v : standard_variants()) all.push_back(v.name);
  const AblationTable control = ablate(0.0, 0.0, all);
  const double secs = seconds_since(t0);

  const double cae_gap = coref.row("full").mean_f1 - coref.row("w/o CAE").mean_f1;
  const double ddm_gap = disc.row("full").mean_f1 - disc.row("w/o DDM").mean_f1;
  double spread = 0.0;
  for (const auto& r : control.rows) spread = std::max(spread, std::abs(r.mean_f1 - control.row("full").mean_f1));
  std::ostringstream d;
  d << "full - w/o CAE " << fmt("%+.2f", cae_gap) << " F1, full - w/o DDM " << fmt("%+.2f", ddm_gap)
    << " F1, control max |variant - full| " << fmt("%.2f", spread) << " F1, " << fmt("%.0f", secs) << " s";
  return {cae_gap >= kAblationGap && ddm_gap >= kAblationGap && spread <= kControlBand && secs < kAblationSeconds,
          d.str()};
}

Outcome scorer() {
  bool ok = true;
  auto near = [&](double got, double want) { ok = ok && std::abs(got - want) < kScoreTol; };
  near(100.0 * exact_match("Peter", "Peter"), 100.0);
  near(100.0 * f1_score("Peter", "Peter"), 100.0);
  near(100.0 * exact_match("the running PowerPC", "running PowerPC"), 100.0);
  near(100.0 * f1_score("the running PowerPC", "running PowerPC"), 100.0);
  // Three prediction tokens, two shared; "a" itself would be dropped as an article.
  near(100.0 * f1_score("x b c", "b c d"), 200.0 / 3.0);
  near(100.0 * exact_match("x b c", "b c d"), 0.0);

  SyntheticSpec s;
  s.dialogues = 300;
  s.coref_fraction = 0.3;
  s.discourse_fraction = 0.3;
  s.unanswerable_fraction = 0.2;
  const Corpus corpus = generate_synthetic(s);
  PredictionMap gold;
  for (const auto& dlg : corpus) {
    for (const auto& qa : dlg.qas) gold[qa.id] = gold_answer(qa);
  }
  const EvalReport self = score(gold, corpus);
  near(self.em, 100.0);
  near(self.f1, 100.0);

  // Typed questions: one per wh-word plus an untyped one, half answered wrong.
  Dialogue d;
  d.id = "types";
  d.utterances = {{"a", "alpha beta gamma", 0}};
  const std::vector<std::string> questions = {"who ?", "when ?", "what ?", "where ?", "why ?", "how many ?", "is it ?"};
  PredictionMap mixed;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    QAPair qa;
    qa.id = "t" + std::to_string(i);
    qa.question = questions[i];
    qa.answerable = true;
    qa.answer = AnswerSpan{0, 0, 1, "alpha"};
    d.qas.push_back(qa);
    mixed[qa.id] = i % 2 == 0 ? "alpha" : "beta";
  }
  const EvalReport typed = score(mixed, Corpus{d});
  int total = 0;
  for (const auto& [type, stats] : typed.by_type) {
    total += stats.count;
    ok = ok && stats.count == 1;
  }
  ok = ok && total == typed.count && typed.by_type.size() == kQuestionTypes.size();
  std::ostringstream out;
  out << "examples reproduce, gold-vs-gold EM " << self.em << " F1 " << self.f1 << ", per-type counts " << total
      << "/" << typed.count;
  return {ok, out.str()};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::pair<const char*, std::function<Outcome()>>> criteria = {
      {1, {"gradient suite", gradient_suite}},  {2, {"masking exactness", masking}},
      {3, {"reduction to plain transformer", reduction}}, {4, {"graph oracles", graph_oracles}},
      {5, {"loss arithmetic", loss_arithmetic}}, {6, {"overfit", overfit}},
      {7, {"ablation", ablation}},              {8, {"scorer", scorer}},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));
  if (selected.empty()) {
    for (const auto& [n, c] : criteria) selected.insert(n);
  }
  int failed = 0;
  for (const int n : selected) {
    const auto it = criteria.find(n);
    if (it == criteria.end()) {
      std::cerr << "unknown criterion " << n << '\n';
      return 2;
    }
    Outcome o;
    try {
      o = it->second.second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << " (" << it->second.first << "): " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
