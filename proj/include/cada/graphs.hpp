#pragma once

// Token-level structure matrices for one encoded (dialogue, question) pair:
//   m1  coreference links between distinct mentions of a cluster
//   m2  same-speaker token pairs
//   g   additive discourse mask over {0, -inf}

#include "cada/corpus.hpp"
#include "cada/tensor.hpp"

#include <Eigen/Dense>

#include <limits>
#include <string>

namespace cada {

using DistanceMatrix = Eigen::MatrixXi;

/// gamma value that admits every connected pair.
inline constexpr int kUnboundedGamma = std::numeric_limits<int>::max();

/// Stored distances are 1 + hop count, so a threshold quoted in hops between
/// distinct utterances maps to hops + 1 here.
constexpr int gamma_from_paper(int gamma_paper) { return gamma_paper + 1; }

struct GraphOptions {
  /// Threshold on stored distance (1 + hops).
  int gamma = gamma_from_paper(2);
  /// Link the virtual question node to every utterance. The node never acts
  /// as a transit point between two utterances.
  bool question_node = true;
};

struct StructureMatrices {
  Matrix m1;
  Matrix m2;
  Matrix g;
  DistanceMatrix utt_dist;
};

/// Binary N x N coreference matrix in global token coordinates.
Matrix build_coref_matrix(const Dialogue& dialogue, const EncodedSequence& seq);

/// M2[i,j] = 1 iff both tokens carry the same non-negative speaker id.
Matrix build_role_matrix(const EncodedSequence& seq);

/// (n+1) x (n+1) distances; index n is the virtual question node.
/// dist[a,a] = 1; dist[a,b] = 1 + shortest undirected hop count; 0 if none.
DistanceMatrix utterance_distances(const Dialogue& dialogue, bool question_node = true);

/// Graph node of token i: its utterance, or the question node (index n) for
/// question and special tokens.
int token_node(const EncodedSequence& seq, int i, int utterance_count);

/// Utterance-level view of the token-level discourse mask. Entries are
/// computed on demand; materialize() builds the dense N x N matrix.
class DiscourseMask {
public:
  DiscourseMask(const DistanceMatrix& utt_dist, const EncodedSequence& seq, int gamma);

  Scalar operator()(int i, int j) const {
    return allowed_(nodes_[static_cast<std::size_t>(i)], nodes_[static_cast<std::size_t>(j)]) ? 0.0 : kNegInf;
  }
  int size() const { return static_cast<int>(nodes_.size()); }
  Matrix materialize() const;

private:
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> allowed_;
  std::vector<int> nodes_;
};

/// G[i,j] = 0 iff 0 < utt_dist[node(i), node(j)] <= gamma, else -inf.
Matrix build_discourse_mask(const DistanceMatrix& utt_dist, const EncodedSequence& seq, int gamma);

StructureMatrices build_structures(const Dialogue& dialogue, const EncodedSequence& seq,
                                   const GraphOptions& options = {});

/// Text grid with one row per line; entries "0", "1" or "-inf".
std::string format_grid(const Matrix& m);

}  // namespace cada
