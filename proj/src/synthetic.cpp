#include "cada/synthetic.hpp"

#include "cada/graphs.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>

namespace cada {

void SyntheticSpec::validate() const {
  auto bad = [](const std::string& m) { throw std::invalid_argument("synthetic spec: " + m); };
  if (dialogues < 1) bad("dialogues must be >= 1");
  if (distractors < 0) bad("distractors must be >= 0");
  if (speakers_per_dialogue < 1) bad("speakers_per_dialogue must be >= 1");
  for (const double f : {coref_fraction, discourse_fraction, unanswerable_fraction}) {
    if (!(f >= 0.0 && f <= 1.0)) bad("fractions must lie in [0, 1]");
  }
  if (coref_fraction + discourse_fraction > 1.0 + 1e-12) bad("coref_fraction + discourse_fraction exceeds 1");
  int needed = 1 + distractors;
  if (discourse_fraction > 0.0) needed = std::max(needed, 2 + distractors);
  if (coref_fraction > 0.0) needed = std::max(needed, 2 + 2 * distractors);
  if (utterances_per_dialogue < needed) {
    bad(std::to_string(utterances_per_dialogue) + " utterances cannot hold the answer, its anchor and " +
        std::to_string(distractors) + " distractors (need " + std::to_string(needed) + ")");
  }
  if (speakers_per_dialogue > utterances_per_dialogue) {
    bad(std::to_string(speakers_per_dialogue) + " speakers exceed " + std::to_string(utterances_per_dialogue) +
        " utterances");
  }
  // Pool split: 1/3 entities, 1/4 adjectives, 1/4 nouns, rest speaker names.
  const int entities = vocabulary_size / 3, attrs = vocabulary_size / 4;
  const int names = vocabulary_size - entities - 2 * attrs;
  if (entities < distractors + 2 || attrs < distractors + 1 || names < speakers_per_dialogue) {
    bad("vocabulary_size " + std::to_string(vocabulary_size) + " too small for " + std::to_string(distractors) +
        " distractors and " + std::to_string(speakers_per_dialogue) + " speakers");
  }
}

namespace {

const std::set<std::string>& template_words() {
  static const std::set<std::string> words = {
      "i",    "brought", "the",   "today", "it",    "needs", "anyone", "know", "what",  "does", "need",   "guess",
      "ok",   "thanks",  "sure",  "nice",  "haha",  "right", "see",    "got",  "sounds", "good", "lol",   "hmm",
      "yes",  "no",      "a",     "an",    "who",   "why",   "how",    "when", "where", "that", "was",    "fun",
      "is",   "odd",     "hard",  "would", "be",    "we", "like",    "you",    "me",   "to",    "do",   "so"};
  return words;
}

/// Deterministic pseudo-words built from consonant-vowel syllables.
std::vector<std::string> word_pool(int count) {
  static constexpr const char* kConsonants = "bdfgklmnprstvz";
  static constexpr const char* kVowels = "aeiou";
  constexpr int kSyl = 14 * 5;
  auto syllable = [](int k) { return std::string{kConsonants[k / 5], kVowels[k % 5]}; };
  std::vector<std::string> out;
  std::set<std::string> seen;
  // Stride through the two-syllable space so consecutive words look unrelated.
  for (int i = 0; static_cast<int>(out.size()) < count; ++i) {
    const int k = (i * 2377 + 11) % (kSyl * kSyl);
    std::string w = syllable(k / kSyl) + syllable(k % kSyl);
    if (i >= kSyl * kSyl) w += syllable(i % kSyl);
    if (!template_words().contains(w) && seen.insert(w).second) out.push_back(w);
  }
  return out;
}

class Rng {
public:
  explicit Rng(std::uint64_t seed) : g_(seed) {}
  int below(int n) { return static_cast<int>(g_() % static_cast<std::uint64_t>(n)); }
  double unit() { return static_cast<double>(g_() >> 11) * 0x1.0p-53; }
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[static_cast<std::size_t>(below(static_cast<int>(i)))]);
  }
  /// `k` distinct values from [0, n) in random order.
  std::vector<int> sample(int n, int k) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < k; ++i) {
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(i + below(n - i))]);
    }
    idx.resize(static_cast<std::size_t>(k));
    return idx;
  }
  template <class T>
  const T& pick(const std::vector<T>& v) {
    return v[static_cast<std::size_t>(below(static_cast<int>(v.size())))];
  }

private:
  std::mt19937_64 g_;
};

const std::vector<std::string> kFillers = {"ok", "thanks", "sounds good", "sure", "nice", "haha",
                                           "right", "i see", "got it", "lol", "hmm", "yes"};
const std::vector<std::string> kThatTails = {"was fun", "is odd", "sounds hard"};

enum class Kind { Coref, Discourse, Control };

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::Coref: return "coref";
    case Kind::Discourse: return "discourse";
    case Kind::Control: return "control";
  }
  return "control";
}

enum class Role { Filler, Anchor, Partner, Answer, Distractor };

struct Slot {
  Role role = Role::Filler;
  int index = 0;  // which partner / distractor
};

std::string question_for(const std::string& entity) { return "what does the " + entity + " need ?"; }

}  // namespace

Corpus generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const auto pool = word_pool(spec.vocabulary_size);
  const int n_ent = spec.vocabulary_size / 3, n_attr = spec.vocabulary_size / 4;
  const std::vector<std::string> entities(pool.begin(), pool.begin() + n_ent);
  const std::vector<std::string> adjectives(pool.begin() + n_ent, pool.begin() + n_ent + n_attr);
  const std::vector<std::string> nouns(pool.begin() + n_ent + n_attr, pool.begin() + n_ent + 2 * n_attr);
  const std::vector<std::string> names(pool.begin() + n_ent + 2 * n_attr, pool.end());

  Rng rng(spec.seed);
  Corpus corpus;
  corpus.reserve(static_cast<std::size_t>(spec.dialogues));
  const int n_utt = spec.utterances_per_dialogue, n_dis = spec.distractors;
  for (int di = 0; di < spec.dialogues; ++di) {
    char id[32];
    std::snprintf(id, sizeof id, "syn-%05d", di);
    Dialogue d;
    d.id = id;

    const double r = rng.unit();
    const Kind kind = r < spec.coref_fraction                             ? Kind::Coref
                      : r < spec.coref_fraction + spec.discourse_fraction ? Kind::Discourse
                                                                          : Kind::Control;
    // [0] asked about, [1] held back for unanswerable questions, the rest named by control distractors
    const auto ent = rng.sample(n_ent, 2 + n_dis);
    const auto adj = rng.sample(n_attr, n_dis + 1);
    const auto noun = rng.sample(n_attr, n_dis + 1);
    auto attribute = [&](int k) {
      return adjectives[static_cast<std::size_t>(adj[static_cast<std::size_t>(k)])] + " " +
             nouns[static_cast<std::size_t>(noun[static_cast<std::size_t>(k)])];
    };
    const std::string& entity = entities[static_cast<std::size_t>(ent[0])];

    // Setup turns (anchor, pronoun partners) precede the answer-like turns;
    // within each group the order is random and fillers fall anywhere.
    std::vector<Slot> early, late;
    if (kind != Kind::Control) early.push_back({Role::Anchor, 0});
    if (kind == Kind::Coref) {
      for (int k = 0; k < n_dis; ++k) early.push_back({Role::Partner, k});
    }
    late.push_back({Role::Answer, 0});
    for (int k = 0; k < n_dis; ++k) late.push_back({Role::Distractor, k});
    rng.shuffle(early);
    rng.shuffle(late);
    std::vector<Slot> content = early;
    content.insert(content.end(), late.begin(), late.end());
    const int n_fill = n_utt - static_cast<int>(content.size());
    std::vector<bool> is_fill(static_cast<std::size_t>(n_utt), false);
    for (int p : rng.sample(n_utt, n_fill)) is_fill[static_cast<std::size_t>(p)] = true;
    std::vector<Slot> slots;
    std::size_t next = 0;
    for (int p = 0; p < n_utt; ++p) slots.push_back(is_fill[static_cast<std::size_t>(p)] ? Slot{} : content[next++]);

    // Speakers: random, each one used at least once.
    std::vector<int> spk(static_cast<std::size_t>(n_utt));
    for (auto& s : spk) s = rng.below(spec.speakers_per_dialogue);
    const auto forced = rng.sample(n_utt, spec.speakers_per_dialogue);
    for (int s = 0; s < spec.speakers_per_dialogue; ++s) {
      spk[static_cast<std::size_t>(forced[static_cast<std::size_t>(s)])] = s;
    }
    const auto speaker_words = rng.sample(static_cast<int>(names.size()), spec.speakers_per_dialogue);

    int anchor_at = -1, answer_at = -1;
    std::vector<int> partner_at(static_cast<std::size_t>(n_dis), -1), distractor_at(static_cast<std::size_t>(n_dis), -1);
    std::vector<int> fillers;
    for (int p = 0; p < n_utt; ++p) {
      const Slot& s = slots[static_cast<std::size_t>(p)];
      const auto k = static_cast<std::size_t>(s.index);
      std::string text;
      switch (s.role) {
        case Role::Filler:
          text = rng.pick(kFillers);
          fillers.push_back(p);
          break;
        case Role::Anchor:
          text = kind == Kind::Coref ? "i brought the " + entity + " today" : "anyone know what the " + entity + " needs ?";
          anchor_at = p;
          break;
        case Role::Partner:
          text = "that " + rng.pick(kThatTails);
          partner_at[k] = p;
          break;
        case Role::Answer:
          text = kind == Kind::Coref       ? "it needs " + attribute(0)
                 : kind == Kind::Discourse ? attribute(0) + " i guess"
                                           : "the " + entity + " needs " + attribute(0);
          answer_at = p;
          break;
        case Role::Distractor:
          text = kind == Kind::Coref       ? "it needs " + attribute(s.index + 1)
                 : kind == Kind::Discourse ? attribute(s.index + 1) + " i guess"
                                           : "i like the " + entities[static_cast<std::size_t>(ent[k + 2])];
          distractor_at[k] = p;
          break;
      }
      const auto speaker = static_cast<std::size_t>(speaker_words[static_cast<std::size_t>(spk[static_cast<std::size_t>(p)])]);
      d.utterances.push_back({names[speaker], text, p});
    }

    if (kind == Kind::Discourse) {
      // Components: {anchor, answer, ...} and one per distractor; fillers join
      // exactly one component, distractors first so none is left isolated.
      d.edges.push_back({answer_at, anchor_at, "QAP"});
      rng.shuffle(fillers);
      for (std::size_t f = 0; f < fillers.size(); ++f) {
        const int comp = f < static_cast<std::size_t>(n_dis) ? static_cast<int>(f) : rng.below(n_dis + 1);
        const int target = comp < n_dis ? distractor_at[static_cast<std::size_t>(comp)] : (rng.below(2) ? anchor_at : answer_at);
        d.edges.push_back({std::max(fillers[f], target), std::min(fillers[f], target), "Comment"});
      }
    } else {
      for (int p = 1; p < n_utt; ++p) d.edges.push_back({p, p - 1, "Continuation"});
    }

    if (kind == Kind::Coref) {
      d.clusters.push_back({{{anchor_at, 3, 4}, {answer_at, 0, 1}}});
      for (int k = 0; k < n_dis; ++k) {
        const auto ki = static_cast<std::size_t>(k);
        d.clusters.push_back({{{partner_at[ki], 0, 1}, {distractor_at[ki], 0, 1}}});
      }
    }

    QAPair qa;
    qa.id = d.id + "#q0";
    if (rng.unit() < spec.unanswerable_fraction) {
      qa.question = question_for(entities[static_cast<std::size_t>(ent[1])]);
      qa.kind = "unanswerable";
    } else {
      qa.question = question_for(entity);
      qa.answerable = true;
      const int start = kind == Kind::Coref ? 2 : kind == Kind::Discourse ? 0 : 3;
      qa.answer = AnswerSpan{answer_at, start, start + 2, attribute(0)};
      qa.kind = kind_name(kind);
    }
    d.qas.push_back(std::move(qa));
    validate(d);
    corpus.push_back(std::move(d));
  }
  return corpus;
}

namespace {

bool contains_token(const Dialogue& d, int utt, const std::string& token) {
  const auto toks = tokenize(d.utterances[static_cast<std::size_t>(utt)].text);
  return std::find(toks.begin(), toks.end(), token) != toks.end();
}

/// Utterances other than `skip` containing `token`.
std::vector<int> utterances_with(const Dialogue& d, const std::string& token, int skip) {
  std::vector<int> out;
  for (const auto& u : d.utterances) {
    if (u.index != skip && contains_token(d, u.index, token)) out.push_back(u.index);
  }
  return out;
}

/// Utterances sharing a cluster with utterance `u`.
std::set<int> coreferent_utterances(const Dialogue& d, int u) {
  std::set<int> out;
  for (const auto& c : d.clusters) {
    const bool has = std::any_of(c.mentions.begin(), c.mentions.end(), [&](const Mention& m) { return m.utt == u; });
    if (!has) continue;
    for (const auto& m : c.mentions) {
      if (m.utt != u) out.insert(m.utt);
    }
  }
  return out;
}

/// Other utterances with the answer's template: same length and identical
/// tokens outside the answer span.
std::vector<int> look_alikes(const Dialogue& d, const AnswerSpan& a) {
  const auto ref = tokenize(d.utterances[static_cast<std::size_t>(a.utt)].text);
  std::vector<int> out;
  for (const auto& u : d.utterances) {
    if (u.index == a.utt) continue;
    const auto toks = tokenize(u.text);
    if (toks.size() != ref.size()) continue;
    bool same = true;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      const bool in_span = static_cast<int>(i) >= a.start && static_cast<int>(i) < a.end;
      if (!in_span && toks[i] != ref[i]) same = false;
    }
    if (same) out.push_back(u.index);
  }
  return out;
}

}  // namespace

std::vector<std::string> audit_synthetic(const Corpus& corpus) {
  std::vector<std::string> problems;
  const int reach = gamma_from_paper(2);
  for (const auto& d : corpus) {
    try {
      validate(d);
    } catch (const CorpusError& e) {
      problems.push_back(e.what());
      continue;
    }
    for (const auto& qa : d.qas) {
      const auto q = tokenize(qa.question);
      if (q.size() != 6 || q[0] != "what") {
        problems.push_back(qa.id + ": question does not follow the template");
        continue;
      }
      const std::string& entity = q[3];
      if (!qa.answerable) {
        if (!utterances_with(d, entity, -1).empty()) problems.push_back(qa.id + ": unanswerable entity occurs");
        continue;
      }
      const AnswerSpan& a = *qa.answer;
      const bool surface = contains_token(d, a.utt, entity);
      const auto anchors = utterances_with(d, entity, a.utt);
      const auto others = look_alikes(d, a);
      if (qa.kind == "control") {
        if (!surface) problems.push_back(qa.id + ": control answer turn lacks the entity");
        if (!anchors.empty()) problems.push_back(qa.id + ": entity named outside the answer turn");
        continue;
      }
      if (qa.kind != "coref" && qa.kind != "discourse") {
        problems.push_back(qa.id + ": unknown kind '" + qa.kind + "'");
        continue;
      }
      if (surface) problems.push_back(qa.id + ": answer turn names the entity");
      if (anchors.size() != 1) {
        problems.push_back(qa.id + ": expected one anchor turn, found " + std::to_string(anchors.size()));
        continue;
      }
      const int anchor = anchors.front();
      if (anchor == a.utt) problems.push_back(qa.id + ": anchor and answer share a turn");
      if (qa.kind == "coref") {
        const auto linked = coreferent_utterances(d, anchor);
        if (linked != std::set<int>{a.utt}) problems.push_back(qa.id + ": anchor cluster does not single out the answer");
        for (const int o : others) {
          if (coreferent_utterances(d, o).empty()) problems.push_back(qa.id + ": distractor pronoun is unclustered");
        }
      } else {
        const DistanceMatrix dist = utterance_distances(d, false);
        if (dist(a.utt, anchor) != 2) problems.push_back(qa.id + ": no arc joins anchor and answer");
        for (const int o : others) {
          const int l = dist(anchor, o);
          if (l > 0 && l <= reach) problems.push_back(qa.id + ": distractor within reach of the anchor");
        }
        if (!coreferent_utterances(d, a.utt).empty()) problems.push_back(qa.id + ": cluster reveals the answer");
      }
    }
  }
  try {
    const auto j = to_json(corpus);
    if (to_json(parse_corpus(j, "audit")) != j) problems.push_back("corpus changes under a JSON round trip");
  } catch (const CorpusError& e) {
    problems.push_back(std::string("round trip: ") + e.what());
  }
  return problems;
}

}  // namespace cada
