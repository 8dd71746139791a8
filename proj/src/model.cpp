#include "cada/model.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace cada {

// ---- config -------------------------------------------------------------------

void ModelConfig::validate() const {
  auto bad = [](const std::string& m) { throw std::invalid_argument("model config: " + m); };
  if (hidden < 1 || heads < 1) bad("hidden and heads must be positive");
  if (hidden % heads != 0) bad("hidden (" + std::to_string(hidden) + ") not divisible by heads (" + std::to_string(heads) + ")");
  if (base_layers < 1 || interlocutor_layers < 1 || discourse_layers < 1) bad("every channel needs at least one layer");
  if (gamma_paper < 0) bad("gamma_paper must be >= 0");
  if (max_len < 4) bad("max_len must be >= 4");
  if (vocab_size < 5) bad("vocab_size must cover the reserved tokens");
  if (max_answer_len < 0) bad("max_answer_len must be >= 0");
  if (dropout < 0.0 || dropout >= 1.0) bad("dropout must be in [0,1)");
  if (answer_threshold <= 0.0 || answer_threshold >= 1.0) bad("answer_threshold must be in (0,1)");
  if (coref_layers < -1 || coref_layers > base_layers) bad("coref_layers out of range");
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "hidden = " << hidden << '\n'
     << "heads = " << heads << '\n'
     << "base_layers = " << base_layers << '\n'
     << "interlocutor_layers = " << interlocutor_layers << '\n'
     << "discourse_layers = " << discourse_layers << '\n'
     << "gamma_paper = " << gamma_paper << '\n'
     << "max_len = " << max_len << '\n'
     << "vocab_size = " << vocab_size << '\n'
     << "max_answer_len = " << max_answer_len << '\n'
     << "dropout = " << dropout << '\n'
     << "answer_threshold = " << answer_threshold << '\n'
     << "biaffine_bias_init = " << biaffine_bias_init << '\n'
     << "coref_layers = " << coref_layers << '\n'
     << "question_node = " << (question_node ? 1 : 0) << '\n'
     << "speaker_prefix = " << (speaker_prefix ? 1 : 0) << '\n'
     << "sinusoidal_positions = " << (sinusoidal_positions ? 1 : 0) << '\n'
     << "channel_coref = " << (channels.coref ? 1 : 0) << '\n'
     << "channel_interlocutor = " << (channels.interlocutor ? 1 : 0) << '\n'
     << "channel_discourse = " << (channels.discourse ? 1 : 0) << '\n';
  return os.str();
}

namespace {

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw std::invalid_argument("expected a boolean, got '" + v + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

bool ModelConfig::set(const std::string& key, const std::string& value) {
  if (key == "hidden") hidden = std::stoi(value);
  else if (key == "heads") heads = std::stoi(value);
  else if (key == "base_layers") base_layers = std::stoi(value);
  else if (key == "interlocutor_layers") interlocutor_layers = std::stoi(value);
  else if (key == "discourse_layers") discourse_layers = std::stoi(value);
  else if (key == "gamma_paper") gamma_paper = std::stoi(value);
  else if (key == "max_len") max_len = std::stoi(value);
  else if (key == "vocab_size") vocab_size = std::stoi(value);
  else if (key == "max_answer_len") max_answer_len = std::stoi(value);
  else if (key == "dropout") dropout = std::stod(value);
  else if (key == "answer_threshold") answer_threshold = std::stod(value);
  else if (key == "biaffine_bias_init") biaffine_bias_init = std::stod(value);
  else if (key == "coref_layers") coref_layers = std::stoi(value);
  else if (key == "question_node") question_node = parse_bool(value);
  else if (key == "speaker_prefix") speaker_prefix = parse_bool(value);
  else if (key == "sinusoidal_positions") sinusoidal_positions = parse_bool(value);
  else if (key == "channel_coref") channels.coref = parse_bool(value);
  else if (key == "channel_interlocutor") channels.interlocutor = parse_bool(value);
  else if (key == "channel_discourse") channels.discourse = parse_bool(value);
  else return false;
  return true;
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig c;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("model config: malformed line '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    if (!c.set(key, trim(line.substr(eq + 1)))) throw std::invalid_argument("model config: unknown key '" + key + "'");
  }
  return c;
}

void apply_switches(StructureMatrices& s, const ChannelSwitches& sw) {
  if (!sw.coref) s.m1.setZero();
  if (!sw.interlocutor) s.m2.setZero();
  if (!sw.discourse) s.g.setZero();
}

// ---- initialization -------------------------------------------------------------

namespace {

class Initializer {
public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  Matrix normal(Index r, Index c, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng_);
    return m;
  }

  Parameter linear(const std::string& name, Index in, Index out) {
    return {name, normal(in, out, 1.0 / std::sqrt(static_cast<double>(in)))};
  }

private:
  std::mt19937_64 rng_;
};

Parameter zeros(const std::string& name, Index r, Index c) { return {name, Matrix::Zero(r, c)}; }
Parameter ones(const std::string& name, Index r, Index c) { return {name, Matrix::Ones(r, c)}; }

Matrix sinusoids(Index positions, Index width) {
  Matrix m(positions, width);
  for (Index p = 0; p < positions; ++p) {
    for (Index i = 0; i < width; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(width));
      m(p, i) = (i % 2 == 0) ? std::sin(static_cast<double>(p) * rate) : std::cos(static_cast<double>(p) * rate);
    }
  }
  return m;
}

BlockParams make_block(Initializer& init, const std::string& prefix, AttentionKind kind, const ModelConfig& cfg) {
  const Index f = cfg.hidden, d = cfg.head_dim();
  BlockParams b;
  b.kind = kind;
  auto& a = b.attn;
  a.wq = init.linear(prefix + ".attn.wq", f, f);
  a.bq = zeros(prefix + ".attn.bq", 1, f);
  a.wk = init.linear(prefix + ".attn.wk", f, f);
  a.bk = zeros(prefix + ".attn.bk", 1, f);
  a.wv = init.linear(prefix + ".attn.wv", f, f);
  a.bv = zeros(prefix + ".attn.bv", 1, f);
  a.wo = init.linear(prefix + ".attn.wo", f, f);
  a.bo = zeros(prefix + ".attn.bo", 1, f);
  if (kind == AttentionKind::Biaffine) {
    for (int h = 0; h < cfg.heads; ++h) {
      a.biaffine_w.emplace_back(prefix + ".attn.biaffine_w" + std::to_string(h),
                                init.normal(d, d, 1.0 / static_cast<double>(d)));
    }
    a.biaffine_b = Parameter(prefix + ".attn.biaffine_b", Matrix::Constant(1, cfg.heads, cfg.biaffine_bias_init));
  }
  b.ln1_gain = ones(prefix + ".ln1.gain", 1, f);
  b.ln1_bias = zeros(prefix + ".ln1.bias", 1, f);
  b.ff_w1 = init.linear(prefix + ".ff.w1", f, 4 * f);
  b.ff_b1 = zeros(prefix + ".ff.b1", 1, 4 * f);
  b.ff_w2 = init.linear(prefix + ".ff.w2", 4 * f, f);
  b.ff_b2 = zeros(prefix + ".ff.b2", 1, f);
  b.ln2_gain = ones(prefix + ".ln2.gain", 1, f);
  b.ln2_bias = zeros(prefix + ".ln2.bias", 1, f);
  return b;
}

void collect(BlockParams& b, std::vector<Parameter*>& out) {
  auto& a = b.attn;
  for (Parameter* p : {&a.wq, &a.bq, &a.wk, &a.bk, &a.wv, &a.bv, &a.wo, &a.bo}) out.push_back(p);
  for (auto& w : a.biaffine_w) out.push_back(&w);
  if (a.biaffine_b.size() > 0) out.push_back(&a.biaffine_b);
  for (Parameter* p : {&b.ln1_gain, &b.ln1_bias, &b.ff_w1, &b.ff_b1, &b.ff_w2, &b.ff_b2, &b.ln2_gain, &b.ln2_bias}) {
    out.push_back(p);
  }
}

}  // namespace

CadaModel::CadaModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Initializer init(seed);
  const Index f = config_.hidden;
  token_embedding = Parameter("embed.token", init.normal(config_.vocab_size, f, 1.0));
  position_embedding = Parameter("embed.position", config_.sinusoidal_positions ? sinusoids(config_.max_len, f)
                                                                                 : init.normal(config_.max_len, f, 1.0));
  for (int l = 0; l < config_.base_layers; ++l) {
    base_blocks.push_back(make_block(init, "base." + std::to_string(l), AttentionKind::Biaffine, config_));
  }
  for (int l = 0; l < config_.interlocutor_layers; ++l) {
    interlocutor_blocks.push_back(make_block(init, "interlocutor." + std::to_string(l), AttentionKind::Biaffine, config_));
  }
  for (int l = 0; l < config_.discourse_layers; ++l) {
    discourse_blocks.push_back(make_block(init, "discourse." + std::to_string(l), AttentionKind::Masked, config_));
  }
  // Zero heads start every distribution uniform and p_type at 1/2.
  w_start = zeros("head.w_start", 3 * f, 1);
  b_start = zeros("head.b_start", 1, 1);
  w_end = zeros("head.w_end", 3 * f, 1);
  b_end = zeros("head.b_end", 1, 1);
  w_type = zeros("head.w_type", 3 * f, 1);
  b_type = zeros("head.b_type", 1, 1);
}

std::vector<Parameter*> CadaModel::parameters() {
  std::vector<Parameter*> out{&token_embedding, &position_embedding};
  for (auto* blocks : {&base_blocks, &interlocutor_blocks, &discourse_blocks}) {
    for (auto& b : *blocks) collect(b, out);
  }
  for (Parameter* p : {&w_start, &b_start, &w_end, &b_end, &w_type, &b_type}) out.push_back(p);
  return out;
}

std::vector<const Parameter*> CadaModel::parameters() const {
  auto ps = const_cast<CadaModel*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

std::size_t CadaModel::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter* p : parameters()) n += static_cast<std::size_t>(p->size());
  return n;
}

// ---- attention --------------------------------------------------------------------

Var graph_biaffine_scores(const Var& q, const Var& k, const Var& w, const Var& b, const Matrix& m, int d) {
  if (q.cols() != d || k.cols() != d || w.rows() != d || w.cols() != d || b.value().size() != 1) {
    throw TensorError("graph_biaffine_scores: inconsistent shapes for head dim " + std::to_string(d));
  }
  if (m.rows() != q.rows() || m.cols() != k.rows()) throw TensorError("graph_biaffine_scores: structure matrix shape");
  const Var kt = transpose(k);
  Var e = matmul(q, kt);
  if (!m.isZero(0.0)) {
    const Var lambda = add_scalar(matmul(matmul(q, w), kt), b);
    e = add(e, mul_const(lambda, m));
  }
  return scale(e, 1.0 / std::sqrt(static_cast<double>(d)));
}

Var multi_head_attention(Tape& tape, const Var& x, AttentionParams& p, AttentionKind kind, const Matrix& structure,
                         bool use_structure, int heads, AttentionTrace* trace) {
  const Index f = x.cols();
  const int d = static_cast<int>(f / heads);
  const Var q = add_row(matmul(x, tape.param(p.wq)), tape.param(p.bq));
  const Var k = add_row(matmul(x, tape.param(p.wk)), tape.param(p.bk));
  const Var v = add_row(matmul(x, tape.param(p.wv)), tape.param(p.bv));
  const Var bias_row = kind == AttentionKind::Biaffine ? tape.param(p.biaffine_b) : Var{};
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<Var> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Var qh = slice_cols(q, h * d, d);
    const Var kh = slice_cols(k, h * d, d);
    const Var vh = slice_cols(v, h * d, d);
    Var probs;
    if (kind == AttentionKind::Biaffine) {
      const Matrix zero = Matrix::Zero(x.rows(), x.rows());
      const Var scores = graph_biaffine_scores(qh, kh, tape.param(p.biaffine_w[static_cast<std::size_t>(h)]),
                                               pick(bias_row, 0, h), use_structure ? structure : zero, d);
      probs = softmax_rows(scores);
    } else {
      const Var scores = scale(matmul(qh, transpose(kh)), inv_sqrt_d);
      probs = use_structure ? masked_softmax(scores, structure) : softmax_rows(scores);
    }
    if (trace != nullptr) trace->maps.push_back(probs.value());
    outs.push_back(matmul(probs, vh));
  }
  const Var merged = heads == 1 ? outs.front() : concat_cols(outs);
  return add_row(matmul(merged, tape.param(p.wo)), tape.param(p.bo));
}

Var CadaModel::run_block(Tape& tape, const Var& x, BlockParams& block, const Matrix& structure, bool use_structure,
                         AttentionTrace* trace) {
  const double rate = config_.dropout;
  const Var attn = dropout(
      multi_head_attention(tape, x, block.attn, block.kind, structure, use_structure, config_.heads, trace), rate);
  const Var h = layer_norm(add(x, attn), tape.param(block.ln1_gain), tape.param(block.ln1_bias));
  Var ff = gelu(add_row(matmul(h, tape.param(block.ff_w1)), tape.param(block.ff_b1)));
  ff = dropout(add_row(matmul(ff, tape.param(block.ff_w2)), tape.param(block.ff_b2)), rate);
  return layer_norm(add(h, ff), tape.param(block.ln2_gain), tape.param(block.ln2_bias));
}

Var CadaModel::encode_base(Tape& tape, const EncodedSequence& seq, const Matrix& m1, AttentionTrace* trace) {
  const int n = seq.size();
  if (n > config_.max_len) {
    throw TensorError("encode_base: sequence of " + std::to_string(n) + " tokens exceeds max_len " +
                      std::to_string(config_.max_len));
  }
  if (m1.rows() != n || m1.cols() != n) throw TensorError("encode_base: M1 must be N x N");
  std::vector<int> positions(static_cast<std::size_t>(n));
  std::iota(positions.begin(), positions.end(), 0);
  Var x = add(embedding(tape.param(token_embedding), seq.token_ids),
              embedding(tape.param(position_embedding), positions));
  x = dropout(x, config_.dropout);
  const int coref_layers = config_.coref_layers < 0 ? config_.base_layers : config_.coref_layers;
  for (int l = 0; l < config_.base_layers; ++l) {
    x = run_block(tape, x, base_blocks[static_cast<std::size_t>(l)], m1, l < coref_layers, trace);
  }
  return x;
}

Var CadaModel::encode_interlocutor(Tape& tape, const Var& h1, const Matrix& m2, AttentionTrace* trace) {
  if (m2.rows() != h1.rows() || m2.cols() != h1.rows()) throw TensorError("encode_interlocutor: M2 must be N x N");
  Var x = h1;
  for (auto& block : interlocutor_blocks) x = run_block(tape, x, block, m2, true, trace);
  return x;
}

Var CadaModel::encode_discourse(Tape& tape, const Var& h1, const Matrix& g, AttentionTrace* trace) {
  if (g.rows() != h1.rows() || g.cols() != h1.rows()) throw TensorError("encode_discourse: G must be N x N");
  for (Index i = 0; i < g.rows(); ++i) {
    if ((g.row(i).array() == kNegInf).all()) {
      throw TensorError("encode_discourse: row " + std::to_string(i) + " of G is fully masked");
    }
  }
  Var x = h1;
  for (auto& block : discourse_blocks) x = run_block(tape, x, block, g, true, trace);
  return x;
}

PredictionVars CadaModel::predict(Tape& tape, const Var& h1, const Var& h2, const Var& h3) {
  if (h1.rows() != h2.rows() || h1.rows() != h3.rows() || h1.cols() != config_.hidden || h2.cols() != config_.hidden ||
      h3.cols() != config_.hidden) {
    throw TensorError("predict: channel outputs must all be N x F");
  }
  const Var fused = concat_cols({h1, h2, h3});
  const Var start_logits = add_scalar(matmul(fused, tape.param(w_start)), tape.param(b_start));
  const Var end_logits = add_scalar(matmul(fused, tape.param(w_end)), tape.param(b_end));
  const Var cls = slice_rows(fused, 0, 1);
  const Var type_logit = add_scalar(matmul(cls, tape.param(w_type)), tape.param(b_type));
  return {softmax_rows(transpose(start_logits)), softmax_rows(transpose(end_logits)), sigmoid(type_logit)};
}

PredictionVars CadaModel::forward(Tape& tape, const EncodedSequence& seq, const StructureMatrices& s) {
  const Var h1 = encode_base(tape, seq, s.m1);
  const Var h2 = encode_interlocutor(tape, h1, s.m2);
  const Var h3 = encode_discourse(tape, h1, s.g);
  return predict(tape, h1, h2, h3);
}

// ---- objective and decoding -----------------------------------------------------------

Var loss(std::span<const PredictionVars> preds, std::span<const GoldSpan> golds) {
  if (preds.empty() || preds.size() != golds.size()) throw TensorError("loss: need one gold per prediction, K >= 1");
  Var total;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    const PredictionVars& p = preds[k];
    const GoldSpan& g = golds[k];
    const Index n = p.p_start.cols();
    if (g.start < 0 || g.start >= n || g.end < 0 || g.end >= n) throw TensorError("loss: gold index out of range");
    const Var ls = log(pick(p.p_start, 0, g.start), kProbabilityFloor);
    const Var le = log(pick(p.p_end, 0, g.end), kProbabilityFloor);
    const Var pt = g.answerable ? p.p_type : affine(p.p_type, -1.0, 1.0);
    const Var lt = log(pt, kProbabilityFloor);
    const Var term = add(add(ls, le), lt);
    total = total.valid() ? add(total, term) : term;
  }
  return scale(total, -1.0 / static_cast<double>(preds.size()));
}

GoldSpan gold_for(const EncodedSequence& seq, const QAPair& qa) {
  if (qa.answerable && seq.answer_span) return {seq.answer_span->first, seq.answer_span->second - 1, true};
  return {0, 0, false};
}

Prediction decode(const RowVector& p_start, const RowVector& p_end, double p_type, const EncodedSequence& seq,
                  int max_answer_len, double threshold) {
  Prediction out;
  out.p_start = p_start;
  out.p_end = p_end;
  out.p_type = p_type;
  out.text = kUnanswerable;
  if (p_type < threshold) return out;
  const int n = seq.size();
  double best = -1.0;
  for (int i = 0; i < n; ++i) {
    if (!seq.is_text_token(i)) continue;
    const int utt = seq.global_to_local[static_cast<std::size_t>(i)].utt;
    for (int j = i; j < n && j <= i + max_answer_len; ++j) {
      if (!seq.is_text_token(j) || seq.global_to_local[static_cast<std::size_t>(j)].utt != utt) break;
      const double s = p_start(i) * p_end(j);
      if (s > best) {
        best = s;
        out.start = i;
        out.end = j;
      }
    }
  }
  if (out.start < 0) return out;
  out.answerable = true;
  out.score = best;
  out.text = join_tokens(seq.tokens, static_cast<std::size_t>(out.start), static_cast<std::size_t>(out.end) + 1);
  return out;
}

Prediction decode(const PredictionVars& pv, const EncodedSequence& seq, int max_answer_len, double threshold) {
  return decode(pv.p_start.value().row(0), pv.p_end.value().row(0), pv.p_type.item(), seq, max_answer_len, threshold);
}

}  // namespace cada
