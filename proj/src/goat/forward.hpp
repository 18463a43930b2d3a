#pragma once

#include "goat/graph.hpp"
#include "goat/model.hpp"

#include <vector>

namespace goat {

/// One affine map followed by an elementwise activation.
/// pattern(i,j) = post(i,j) / pre(i,j) where pre != 0, else 0.
struct LayerRecord {
  Matrix pre;
  Matrix post;
  Matrix pattern;
  Activation activation = Activation::Relu;
};

/// Everything an attribution pass reads back from inference.
struct ForwardTrace {
  Arch arch = Arch::Gcn;
  Pooling pooling = Pooling::Mean;
  /// The adjacency operand the architecture multiplies by: V for GCN,
  /// A + I for GIN, A for GraphSAGE. All zeros in the baseline trace.
  Matrix propagation;
  Matrix features;
  /// conv[l][s]: sublayer s of conv layer l (GIN has one per MLP layer).
  std::vector<std::vector<LayerRecord>> conv;
  std::vector<LayerRecord> classifier;
  /// Pooled 1 x h graph embedding, or the N x h node embeddings without pooling.
  Matrix embedding;
  /// 1 x C with pooling, N x C without.
  Matrix logits;
  Matrix probs;

  int num_nodes() const { return static_cast<int>(features.rows()); }
};

/// D^{-1/2} (A + I) D^{-1/2}, D the degree matrix of A + I.
Matrix normalize_adjacency(const Graph& graph);

/// The architecture's adjacency operand for a graph.
Matrix propagation_matrix(Arch arch, const Graph& graph);

ForwardTrace run_forward(const ModelSpec& model, const Graph& graph);

/// Inference with explicit operands; the baseline passes zeros for both.
ForwardTrace run_forward(const ModelSpec& model, const Matrix& propagation, const Matrix& features);

/// f(0, 0): zero adjacency operand and zero features on n nodes.
ForwardTrace run_zero_baseline(const ModelSpec& model, int n, int d);

/// Row-wise softmax.
Matrix softmax_rows(const Matrix& logits);

}  // namespace goat
