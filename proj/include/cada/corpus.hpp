#pragma once

// Dialogue corpus model, JSON I/O, tokenizer, vocabulary and input assembly.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace cada {

class CorpusError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct Utterance {
  std::string speaker;
  std::string text;
  int index = 0;
};

/// Discourse arc between two utterances. The relation label is kept for
/// provenance only; the model ignores it.
struct DiscourseEdge {
  int from_utt = 0;
  int to_utt = 0;
  std::string relation;
};

/// Mention span in utterance-local token coordinates, end exclusive.
struct Mention {
  int utt = 0;
  int start = 0;
  int end = 0;
  friend bool operator==(const Mention&, const Mention&) = default;
};

struct CoreferenceCluster {
  std::vector<Mention> mentions;
};

struct AnswerSpan {
  int utt = 0;
  int start = 0;
  int end = 0;  // exclusive
  std::string text;
};

struct QAPair {
  std::string id;
  std::string question;
  bool answerable = false;
  std::optional<AnswerSpan> answer;
  /// Free-form tag carried through I/O (the synthetic generator writes the
  /// question kind here).
  std::string kind;
};

struct Dialogue {
  std::string id;
  std::vector<Utterance> utterances;
  std::vector<DiscourseEdge> edges;
  std::vector<CoreferenceCluster> clusters;
  std::vector<QAPair> qas;
};

using Corpus = std::vector<Dialogue>;

// ---- tokenizer --------------------------------------------------------------

/// Lowercases, splits on whitespace and emits each ASCII punctuation
/// character as its own token.
std::vector<std::string> tokenize(std::string_view text);

std::string join_tokens(const std::vector<std::string>& tokens, std::size_t begin, std::size_t end);

// ---- I/O and validation -----------------------------------------------------

/// Throws CorpusError naming the dialogue and offending element.
void validate(const Dialogue& d);

Corpus parse_corpus(const nlohmann::json& j, const std::string& source = "<memory>");
Corpus load_corpus(const std::filesystem::path& path);
nlohmann::json to_json(const Corpus& corpus);
void save_corpus(const std::filesystem::path& path, const Corpus& corpus);

std::size_t question_count(const Corpus& corpus);

// ---- vocabulary -------------------------------------------------------------

class Vocabulary {
public:
  static constexpr int kCls = 0;
  static constexpr int kSep = 1;
  static constexpr int kPad = 2;
  static constexpr int kUnk = 3;

  Vocabulary();

  /// Tokens from utterance texts and questions with count >= min_freq; ids
  /// assigned by descending frequency, then lexicographically. With
  /// `speaker_prefix`, speaker-name tokens and ":" are counted as well, as
  /// encode_input() emits them.
  static Vocabulary build(const Corpus& corpus, int min_freq, bool speaker_prefix = false);
  /// Inverse of serialize(): one token per line, id order.
  static Vocabulary deserialize(const std::string& text);

  int id(const std::string& token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(tokens_.size()); }
  bool contains(const std::string& token) const { return ids_.contains(token); }
  std::string serialize() const;

private:
  void add(const std::string& token);
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// ---- input assembly ---------------------------------------------------------

struct EncodeOptions {
  int max_len = 256;
  /// Prefix every utterance with "<speaker tokens> :".
  bool speaker_prefix = true;
};

struct LocalPosition {
  int utt = -1;
  int offset = -1;
  friend bool operator==(const LocalPosition&, const LocalPosition&) = default;
};

/// "[CLS] Q [SEP] U1 [SEP] ... Un [SEP]" with per-token alignment maps.
struct EncodedSequence {
  std::vector<int> token_ids;
  std::vector<std::string> tokens;
  /// Utterance index per token; -1 for question and special tokens.
  std::vector<int> token_utt;
  /// Dialogue-local speaker id per token; -1 where token_utt is -1.
  std::vector<int> token_speaker;
  /// Utterance-local text position per token; {-1,-1} for question, special
  /// and speaker-prefix tokens.
  std::vector<LocalPosition> global_to_local;
  /// [start, end) of the question tokens.
  std::pair<int, int> question_range{0, 0};
  int retained_utterances = 0;
  /// Global position of each retained utterance's first text token.
  std::vector<int> utt_text_start;
  /// Gold span in global coordinates, half-open [start, end), when
  /// answerable and retained.
  std::optional<std::pair<int, int>> answer_span;
  /// The gold answer was cut by truncation; the pair must not be trained on.
  bool truncated_out = false;

  int size() const { return static_cast<int>(token_ids.size()); }
  /// Position i is a text token of an utterance (a valid answer position).
  bool is_text_token(int i) const { return global_to_local[static_cast<std::size_t>(i)].utt >= 0; }
};

/// Global position of an utterance-local text position, if retained.
std::optional<int> to_global(const EncodedSequence& seq, int utt, int offset);

EncodedSequence encode_input(const Dialogue& dialogue, const QAPair& qa, const Vocabulary& vocab,
                             const EncodeOptions& options);

/// Dialogue-local speaker ids, assigned in order of first appearance.
std::vector<int> speaker_ids(const Dialogue& dialogue);

}  // namespace cada
