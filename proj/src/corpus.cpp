#include "cada/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace cada {

using nlohmann::json;

// ---- tokenizer --------------------------------------------------------------

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

std::string join_tokens(const std::vector<std::string>& tokens, std::size_t begin, std::size_t end) {
  std::string s;
  for (std::size_t i = begin; i < end && i < tokens.size(); ++i) {
    if (i > begin) s.push_back(' ');
    s += tokens[i];
  }
  return s;
}

// ---- validation ---------------------------------------------------------------

namespace {

[[noreturn]] void fail(const Dialogue& d, const std::string& what) {
  throw CorpusError("dialogue '" + d.id + "': " + what);
}

std::string span_str(int utt, int start, int end) {
  return "[" + std::to_string(utt) + "," + std::to_string(start) + "," + std::to_string(end) + "]";
}

}  // namespace

void validate(const Dialogue& d) {
  const int n = static_cast<int>(d.utterances.size());
  if (n < 1) fail(d, "has no utterances");
  std::vector<int> lengths;
  lengths.reserve(d.utterances.size());
  for (int i = 0; i < n; ++i) {
    const Utterance& u = d.utterances[static_cast<std::size_t>(i)];
    if (u.speaker.empty()) fail(d, "utterance " + std::to_string(i) + " has an empty speaker");
    if (u.index != i) fail(d, "utterance " + std::to_string(i) + " carries index " + std::to_string(u.index));
    lengths.push_back(static_cast<int>(tokenize(u.text).size()));
  }
  for (std::size_t e = 0; e < d.edges.size(); ++e) {
    const DiscourseEdge& edge = d.edges[e];
    const std::string where = "edge " + std::to_string(e) + " (" + std::to_string(edge.from_utt) + " -> " +
                              std::to_string(edge.to_utt) + ")";
    if (edge.from_utt < 0 || edge.from_utt >= n) fail(d, where + ": from index out of range");
    if (edge.to_utt < 0 || edge.to_utt >= n) fail(d, where + ": to index out of range");
    if (edge.from_utt == edge.to_utt) fail(d, where + ": self loop");
  }
  for (std::size_t c = 0; c < d.clusters.size(); ++c) {
    const auto& ms = d.clusters[c].mentions;
    const std::string where = "cluster " + std::to_string(c);
    if (ms.size() < 2) fail(d, where + ": needs at least 2 mentions");
    for (std::size_t k = 0; k < ms.size(); ++k) {
      const Mention& m = ms[k];
      if (m.utt < 0 || m.utt >= n) fail(d, where + " mention " + span_str(m.utt, m.start, m.end) + ": bad utterance");
      const int len = lengths[static_cast<std::size_t>(m.utt)];
      if (m.start < 0 || m.start >= m.end || m.end > len) {
        fail(d, where + " mention " + span_str(m.utt, m.start, m.end) + ": span outside utterance of " +
                    std::to_string(len) + " tokens");
      }
      for (std::size_t k2 = 0; k2 < k; ++k2) {
        if (ms[k2] == m) fail(d, where + ": duplicate mention " + span_str(m.utt, m.start, m.end));
      }
    }
  }
  for (std::size_t q = 0; q < d.qas.size(); ++q) {
    const QAPair& qa = d.qas[q];
    const std::string where = "qa " + std::to_string(q) + " ('" + qa.id + "')";
    if (qa.answerable != qa.answer.has_value()) fail(d, where + ": answerable flag disagrees with answer presence");
    if (!qa.answer) continue;
    const AnswerSpan& a = *qa.answer;
    if (a.utt < 0 || a.utt >= n) fail(d, where + ": answer utterance out of range");
    const auto toks = tokenize(d.utterances[static_cast<std::size_t>(a.utt)].text);
    if (a.start < 0 || a.start >= a.end || a.end > static_cast<int>(toks.size())) {
      fail(d, where + ": answer span " + span_str(a.utt, a.start, a.end) + " outside utterance");
    }
    const std::string covered = join_tokens(toks, static_cast<std::size_t>(a.start), static_cast<std::size_t>(a.end));
    const auto want = tokenize(a.text);
    if (covered != join_tokens(want, 0, want.size())) {
      fail(d, where + ": answer text '" + a.text + "' does not match span tokens '" + covered + "'");
    }
  }
}

// ---- JSON --------------------------------------------------------------------

namespace {

Dialogue dialogue_from_json(const json& j, std::size_t pos) {
  Dialogue d;
  d.id = j.contains("id") ? j.at("id").get<std::string>() : "#" + std::to_string(pos);
  for (const auto& u : j.at("utterances")) {
    d.utterances.push_back({u.at("speaker").get<std::string>(), u.at("text").get<std::string>(),
                            static_cast<int>(d.utterances.size())});
  }
  if (j.contains("edges")) {
    for (const auto& e : j.at("edges")) {
      d.edges.push_back({e.at("from").get<int>(), e.at("to").get<int>(), e.value("rel", std::string{})});
    }
  }
  if (j.contains("clusters")) {
    for (const auto& c : j.at("clusters")) {
      CoreferenceCluster cl;
      for (const auto& m : c) {
        if (!m.is_array() || m.size() != 3) throw CorpusError("dialogue '" + d.id + "': mention must be [utt, start, end]");
        cl.mentions.push_back({m[0].get<int>(), m[1].get<int>(), m[2].get<int>()});
      }
      d.clusters.push_back(std::move(cl));
    }
  }
  if (j.contains("qas")) {
    for (const auto& q : j.at("qas")) {
      QAPair qa;
      qa.id = q.contains("id") ? q.at("id").get<std::string>() : d.id + "#" + std::to_string(d.qas.size());
      qa.question = q.at("question").get<std::string>();
      qa.answerable = q.at("answerable").get<bool>();
      qa.kind = q.value("kind", std::string{});
      if (q.contains("answer") && !q.at("answer").is_null()) {
        const auto& a = q.at("answer");
        qa.answer = AnswerSpan{a.at("utt").get<int>(), a.at("start").get<int>(), a.at("end").get<int>(),
                               a.at("text").get<std::string>()};
      }
      d.qas.push_back(std::move(qa));
    }
  }
  return d;
}

}  // namespace

Corpus parse_corpus(const json& j, const std::string& source) {
  if (!j.is_array()) throw CorpusError(source + ": top level must be a list of dialogues");
  Corpus corpus;
  corpus.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    try {
      corpus.push_back(dialogue_from_json(j[i], i));
    } catch (const json::exception& e) {
      throw CorpusError(source + ": dialogue " + std::to_string(i) + ": " + e.what());
    }
    try {
      validate(corpus.back());
    } catch (const CorpusError& e) {
      throw CorpusError(source + ": " + e.what());
    }
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw CorpusError(path.string() + ": parse error: " + e.what());
  }
  return parse_corpus(j, path.string());
}

json to_json(const Corpus& corpus) {
  json out = json::array();
  for (const Dialogue& d : corpus) {
    json jd;
    jd["id"] = d.id;
    jd["utterances"] = json::array();
    for (const auto& u : d.utterances) jd["utterances"].push_back({{"speaker", u.speaker}, {"text", u.text}});
    jd["edges"] = json::array();
    for (const auto& e : d.edges) jd["edges"].push_back({{"from", e.from_utt}, {"to", e.to_utt}, {"rel", e.relation}});
    jd["clusters"] = json::array();
    for (const auto& c : d.clusters) {
      json jc = json::array();
      for (const auto& m : c.mentions) jc.push_back({m.utt, m.start, m.end});
      jd["clusters"].push_back(std::move(jc));
    }
    jd["qas"] = json::array();
    for (const auto& q : d.qas) {
      json jq{{"id", q.id}, {"question", q.question}, {"answerable", q.answerable}};
      if (!q.kind.empty()) jq["kind"] = q.kind;
      if (q.answer) {
        jq["answer"] = {{"utt", q.answer->utt}, {"start", q.answer->start}, {"end", q.answer->end}, {"text", q.answer->text}};
      }
      jd["qas"].push_back(std::move(jq));
    }
    out.push_back(std::move(jd));
  }
  return out;
}

void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot write corpus file " + path.string());
  out << to_json(corpus).dump(1) << '\n';
}

std::size_t question_count(const Corpus& corpus) {
  std::size_t n = 0;
  for (const auto& d : corpus) n += d.qas.size();
  return n;
}

// ---- vocabulary ---------------------------------------------------------------

Vocabulary::Vocabulary() {
  for (const char* t : {"[CLS]", "[SEP]", "[PAD]", "[UNK]"}) add(t);
}

void Vocabulary::add(const std::string& token) {
  if (ids_.contains(token)) return;
  ids_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(const Corpus& corpus, int min_freq, bool speaker_prefix) {
  if (min_freq < 1) throw CorpusError("vocabulary: min_freq must be >= 1");
  std::unordered_map<std::string, long> counts;
  auto count_text = [&](std::string_view text) {
    for (auto& t : tokenize(text)) ++counts[t];
  };
  for (const Dialogue& d : corpus) {
    for (const auto& u : d.utterances) {
      if (speaker_prefix) {
        count_text(u.speaker);
        ++counts[":"];
      }
      count_text(u.text);
    }
    for (const auto& q : d.qas) count_text(q.question);
  }
  std::vector<std::pair<std::string, long>> items(counts.begin(), counts.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocabulary v;
  for (const auto& [tok, c] : items) {
    if (c >= min_freq) v.add(tok);
  }
  return v;
}

Vocabulary Vocabulary::deserialize(const std::string& text) {
  Vocabulary v;
  std::istringstream in(text);
  std::string line;
  int expected = 0;
  while (std::getline(in, line)) {
    if (expected < 4) {
      if (v.token(expected) != line) throw CorpusError("vocabulary: reserved token mismatch at id " + std::to_string(expected));
    } else {
      v.add(line);
    }
    ++expected;
  }
  return v;
}

std::string Vocabulary::serialize() const {
  std::string s;
  for (const auto& t : tokens_) {
    s += t;
    s.push_back('\n');
  }
  return s;
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

// ---- input assembly -----------------------------------------------------------

std::vector<int> speaker_ids(const Dialogue& dialogue) {
  std::map<std::string, int> seen;
  std::vector<int> ids;
  ids.reserve(dialogue.utterances.size());
  for (const auto& u : dialogue.utterances) {
    auto [it, inserted] = seen.emplace(u.speaker, static_cast<int>(seen.size()));
    ids.push_back(it->second);
  }
  return ids;
}

std::optional<int> to_global(const EncodedSequence& seq, int utt, int offset) {
  if (utt < 0 || utt >= seq.retained_utterances) return std::nullopt;
  const int g = seq.utt_text_start[static_cast<std::size_t>(utt)] + offset;
  if (offset < 0 || g >= seq.size() || seq.global_to_local[static_cast<std::size_t>(g)] != LocalPosition{utt, offset}) {
    return std::nullopt;
  }
  return g;
}

EncodedSequence encode_input(const Dialogue& dialogue, const QAPair& qa, const Vocabulary& vocab,
                             const EncodeOptions& options) {
  const auto question = tokenize(qa.question);
  const int qlen = static_cast<int>(question.size());
  if (qlen + 3 > options.max_len) {
    throw CorpusError("dialogue '" + dialogue.id + "' qa '" + qa.id + "': question of " + std::to_string(qlen) +
                      " tokens does not fit max_len " + std::to_string(options.max_len));
  }
  EncodedSequence seq;
  auto push = [&](const std::string& tok, int utt, int spk, LocalPosition local) {
    seq.tokens.push_back(tok);
    seq.token_ids.push_back(vocab.id(tok));
    seq.token_utt.push_back(utt);
    seq.token_speaker.push_back(spk);
    seq.global_to_local.push_back(local);
  };
  push("[CLS]", -1, -1, {});
  for (const auto& t : question) push(t, -1, -1, {});
  seq.question_range = {1, 1 + qlen};
  push("[SEP]", -1, -1, {});

  const auto spk = speaker_ids(dialogue);
  for (std::size_t u = 0; u < dialogue.utterances.size(); ++u) {
    const Utterance& utt = dialogue.utterances[u];
    std::vector<std::string> prefix;
    if (options.speaker_prefix) {
      prefix = tokenize(utt.speaker);
      prefix.emplace_back(":");
    }
    const auto text = tokenize(utt.text);
    const std::size_t need = prefix.size() + text.size() + 1;
    if (seq.tokens.size() + need > static_cast<std::size_t>(options.max_len)) break;
    const int ui = static_cast<int>(u);
    const int si = spk[u];
    for (const auto& t : prefix) push(t, ui, si, {});
    seq.utt_text_start.push_back(static_cast<int>(seq.tokens.size()));
    for (std::size_t k = 0; k < text.size(); ++k) push(text[k], ui, si, {ui, static_cast<int>(k)});
    push("[SEP]", -1, -1, {});
    ++seq.retained_utterances;
  }

  if (qa.answer) {
    const auto s = to_global(seq, qa.answer->utt, qa.answer->start);
    const auto e = to_global(seq, qa.answer->utt, qa.answer->end - 1);
    if (s && e) seq.answer_span = std::make_pair(*s, *e + 1);
    else seq.truncated_out = true;
  }
  return seq;
}

}  // namespace cada
