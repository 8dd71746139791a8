#include "cada/graphs.hpp"

#include <queue>
#include <sstream>

namespace cada {

Matrix build_coref_matrix(const Dialogue& dialogue, const EncodedSequence& seq) {
  const int n = seq.size();
  Matrix m = Matrix::Zero(n, n);
  std::vector<int> a_tokens, b_tokens;
  auto globals = [&](const Mention& men, std::vector<int>& out) {
    out.clear();
    for (int k = men.start; k < men.end; ++k) {
      if (auto g = to_global(seq, men.utt, k)) out.push_back(*g);
    }
  };
  for (const auto& cluster : dialogue.clusters) {
    const auto& ms = cluster.mentions;
    for (std::size_t a = 0; a < ms.size(); ++a) {
      globals(ms[a], a_tokens);
      if (a_tokens.empty()) continue;
      for (std::size_t b = a + 1; b < ms.size(); ++b) {
        globals(ms[b], b_tokens);
        for (int i : a_tokens) {
          for (int j : b_tokens) {
            if (i == j) continue;
            m(i, j) = 1.0;
            m(j, i) = 1.0;
          }
        }
      }
    }
  }
  return m;
}

Matrix build_role_matrix(const EncodedSequence& seq) {
  const int n = seq.size();
  Matrix m = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const int si = seq.token_speaker[static_cast<std::size_t>(i)];
    if (si < 0) continue;
    for (int j = 0; j < n; ++j) {
      if (seq.token_speaker[static_cast<std::size_t>(j)] == si) m(i, j) = 1.0;
    }
  }
  return m;
}

DistanceMatrix utterance_distances(const Dialogue& dialogue, bool question_node) {
  const int n = static_cast<int>(dialogue.utterances.size());
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
  for (const auto& e : dialogue.edges) {
    adj[static_cast<std::size_t>(e.from_utt)].push_back(e.to_utt);
    adj[static_cast<std::size_t>(e.to_utt)].push_back(e.from_utt);
  }
  DistanceMatrix dist = DistanceMatrix::Zero(n + 1, n + 1);
  std::vector<int> hops(static_cast<std::size_t>(n));
  std::queue<int> frontier;
  for (int src = 0; src < n; ++src) {
    std::fill(hops.begin(), hops.end(), -1);
    hops[static_cast<std::size_t>(src)] = 0;
    frontier.push(src);
    while (!frontier.empty()) {
      const int u = frontier.front();
      frontier.pop();
      for (int v : adj[static_cast<std::size_t>(u)]) {
        if (hops[static_cast<std::size_t>(v)] < 0) {
          hops[static_cast<std::size_t>(v)] = hops[static_cast<std::size_t>(u)] + 1;
          frontier.push(v);
        }
      }
    }
    for (int v = 0; v < n; ++v) {
      if (hops[static_cast<std::size_t>(v)] >= 0) dist(src, v) = 1 + hops[static_cast<std::size_t>(v)];
    }
  }
  dist(n, n) = 1;
  if (question_node) {
    for (int u = 0; u < n; ++u) dist(n, u) = dist(u, n) = 2;
  }
  return dist;
}

int token_node(const EncodedSequence& seq, int i, int utterance_count) {
  const int u = seq.token_utt[static_cast<std::size_t>(i)];
  return u >= 0 ? u : utterance_count;
}

DiscourseMask::DiscourseMask(const DistanceMatrix& utt_dist, const EncodedSequence& seq, int gamma) {
  if (gamma < 1) throw std::invalid_argument("discourse mask: gamma must be >= 1");
  if (utt_dist.rows() != utt_dist.cols() || utt_dist.rows() < 1) {
    throw std::invalid_argument("discourse mask: distance matrix must be square and non-empty");
  }
  const int utterances = static_cast<int>(utt_dist.rows()) - 1;
  allowed_ = ((utt_dist.array() > 0) && (utt_dist.array() <= gamma)).matrix();
  nodes_.resize(static_cast<std::size_t>(seq.size()));
  for (int i = 0; i < seq.size(); ++i) {
    const int node = token_node(seq, i, utterances);
    if (node > utterances) throw std::invalid_argument("discourse mask: token utterance outside distance matrix");
    nodes_[static_cast<std::size_t>(i)] = node;
  }
}

Matrix DiscourseMask::materialize() const {
  const int n = size();
  Matrix g(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) g(i, j) = (*this)(i, j);
  }
  return g;
}

Matrix build_discourse_mask(const DistanceMatrix& utt_dist, const EncodedSequence& seq, int gamma) {
  return DiscourseMask(utt_dist, seq, gamma).materialize();
}

StructureMatrices build_structures(const Dialogue& dialogue, const EncodedSequence& seq, const GraphOptions& options) {
  StructureMatrices s;
  s.m1 = build_coref_matrix(dialogue, seq);
  s.m2 = build_role_matrix(seq);
  s.utt_dist = utterance_distances(dialogue, options.question_node);
  s.g = build_discourse_mask(s.utt_dist, seq, options.gamma);
  return s;
}

std::string format_grid(const Matrix& m) {
  std::ostringstream os;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) os << ' ';
      const Scalar v = m(i, j);
      if (v == kNegInf) os << "-inf";
      else if (v == 0.0) os << '0';
      else if (v == 1.0) os << '1';
      else os << v;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace cada
