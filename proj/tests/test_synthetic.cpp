#include "doctest.h"
#include "protocols.hpp"

#include <set>

using namespace cada;
using namespace cada::testing;

namespace {

SyntheticSpec mixed_spec(std::uint64_t seed) {
  SyntheticSpec s;
  s.dialogues = 200;
  s.coref_fraction = 0.35;
  s.discourse_fraction = 0.35;
  s.unanswerable_fraction = 0.1;
  s.seed = seed;
  return s;
}

/// Picks the utterance sharing the most tokens with the question and answers
/// with its tokens that the question lacks.
PredictionMap bag_of_words(const Corpus& corpus) {
  PredictionMap out;
  for (const auto& d : corpus) {
    for (const auto& qa : d.qas) {
      const auto q = tokenize(qa.question);
      const std::set<std::string> qset(q.begin(), q.end());
      int best = -1;
      std::vector<std::string> answer;
      for (const auto& u : d.utterances) {
        int overlap = 0;
        std::vector<std::string> rest;
        for (const auto& t : tokenize(u.text)) {
          if (qset.contains(t)) {
            ++overlap;
          } else {
            rest.push_back(t);
          }
        }
        if (overlap > best) best = overlap, answer = rest;
      }
      out[qa.id] = join_tokens(answer, 0, answer.size());
    }
  }
  return out;
}

}  // namespace

TEST_CASE("generator is deterministic per seed") {
  const auto a = to_json(generate_synthetic(mixed_spec(3))).dump();
  CHECK(a == to_json(generate_synthetic(mixed_spec(3))).dump());
  CHECK(a != to_json(generate_synthetic(mixed_spec(4))).dump());
}

TEST_CASE("generated corpora pass the self-audit") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    for (auto [c, d] : {std::pair{0.0, 0.0}, {0.8, 0.0}, {0.0, 0.8}, {0.35, 0.35}, {1.0, 0.0}}) {
      SyntheticSpec s = mixed_spec(seed);
      s.coref_fraction = c;
      s.discourse_fraction = d;
      const Corpus corpus = generate_synthetic(s);
      CHECK(corpus.size() == 200);
      const auto problems = audit_synthetic(corpus);
      CHECK_MESSAGE(problems.empty(), (problems.empty() ? "" : problems.front()));
    }
  }
}

TEST_CASE("coreference answers never share a turn with the anchor") {
  SyntheticSpec s = mixed_spec(9);
  s.coref_fraction = 1.0;
  s.discourse_fraction = 0.0;
  s.unanswerable_fraction = 0.0;
  int checked = 0;
  for (const auto& d : generate_synthetic(s)) {
    const auto& qa = d.qas.front();
    const std::string entity = tokenize(qa.question)[3];
    for (const auto& u : d.utterances) {
      const auto toks = tokenize(u.text);
      if (std::find(toks.begin(), toks.end(), entity) != toks.end()) {
        CHECK(u.index != qa.answer->utt);
        ++checked;
      }
    }
  }
  CHECK(checked == 200);
}

TEST_CASE("question kinds follow the requested fractions") {
  std::map<std::string, int> kinds;
  SyntheticSpec s = mixed_spec(2);
  s.dialogues = 1000;
  for (const auto& d : generate_synthetic(s)) ++kinds[d.qas.front().kind];
  CHECK(kinds["coref"] == doctest::Approx(0.35 * 0.9 * 1000).epsilon(0.15));
  CHECK(kinds["discourse"] == doctest::Approx(0.35 * 0.9 * 1000).epsilon(0.15));
  CHECK(kinds["control"] == doctest::Approx(0.3 * 0.9 * 1000).epsilon(0.15));
  CHECK(kinds["unanswerable"] == doctest::Approx(100).epsilon(0.3));
}

TEST_CASE("audit catches a broken corpus") {
  SyntheticSpec s = mixed_spec(5);
  s.coref_fraction = 1.0;
  s.discourse_fraction = 0.0;
  s.unanswerable_fraction = 0.0;
  Corpus corpus = generate_synthetic(s);
  corpus.front().clusters.clear();
  CHECK_FALSE(audit_synthetic(corpus).empty());

  s.coref_fraction = 0.0;
  s.discourse_fraction = 1.0;
  corpus = generate_synthetic(s);
  corpus.front().edges.clear();
  CHECK_FALSE(audit_synthetic(corpus).empty());
}

TEST_CASE("bag of words solves control questions only") {
  SyntheticSpec s = mixed_spec(6);
  s.coref_fraction = 0.0;
  s.discourse_fraction = 0.0;
  s.unanswerable_fraction = 0.0;
  const Corpus control = generate_synthetic(s);
  CHECK(score(bag_of_words(control), control).f1 >= 75.0);

  s.coref_fraction = 1.0;
  const Corpus coref = generate_synthetic(s);
  CHECK(score(bag_of_words(coref), coref).f1 <= 10.0);
  s.coref_fraction = 0.0;
  s.discourse_fraction = 1.0;
  const Corpus discourse = generate_synthetic(s);
  CHECK(score(bag_of_words(discourse), discourse).f1 <= 10.0);
}

TEST_CASE("infeasible specs are rejected") {
  SyntheticSpec s;
  s.speakers_per_dialogue = 9;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = {};
  s.coref_fraction = 0.7;
  s.discourse_fraction = 0.5;
  CHECK_THROWS_AS(generate_synthetic(s), std::invalid_argument);
  s = {};
  s.coref_fraction = -0.1;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = {};
  s.coref_fraction = 0.5;
  s.utterances_per_dialogue = 5;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = {};
  s.vocabulary_size = 10;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = {};
  s.dialogues = 0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("ablation variants and preconditions") {
  const auto variants = standard_variants();
  REQUIRE(variants.size() == 5);
  CHECK(variants[0].name == "full");
  const auto cae = variant_by_name("w/o CAE");
  CHECK_FALSE(cae.switches.coref);
  CHECK(cae.switches.interlocutor);
  CHECK(cae.switches.discourse);
  const auto none = variant_by_name("w/o all");
  CHECK_FALSE((none.switches.coref || none.switches.interlocutor || none.switches.discourse));
  CHECK_THROWS_AS(variant_by_name("w/o nothing"), std::invalid_argument);

  const Corpus corpus = overfit_corpus();
  const auto [train_part, dev_part] = split_corpus(corpus, 24);
  CHECK(train_part.size() == 24);
  CHECK(dev_part.size() == 8);
  CHECK(dev_part.front().id == corpus[24].id);
  CHECK_THROWS_AS(run_ablation(train_part, dev_part, overfit_model(), overfit_training(), {variants[0]}),
                  std::invalid_argument);
}

TEST_CASE("ablation trains every variant with the same settings") {
  const Corpus corpus = overfit_corpus();
  const auto [train_part, dev_part] = split_corpus(corpus, 24);
  TrainConfig tc = overfit_training();
  tc.max_steps = 8;
  tc.eval_every = 0;
  AblationOptions options;
  options.seeds = {1, 2};
  const std::vector<AblationVariant> variants = {variant_by_name("full"), variant_by_name("w/o all")};
  const AblationTable table = run_ablation(train_part, dev_part, overfit_model(), tc, variants, options);
  REQUIRE(table.rows.size() == 2);
  for (const auto& row : table.rows) {
    CHECK(row.seeds == options.seeds);
    CHECK(row.f1.size() == 2);
    CHECK(row.mean_f1 == doctest::Approx((row.f1[0] + row.f1[1]) / 2.0));
  }
  options.parallel = true;
  const AblationTable again = run_ablation(train_part, dev_part, overfit_model(), tc, variants, options);
  CHECK(again.to_json()[0]["f1"] == table.to_json()[0]["f1"]);
  CHECK(table.to_text().find("w/o all") != std::string::npos);
}
