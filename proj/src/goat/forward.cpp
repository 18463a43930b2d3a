#include "goat/forward.hpp"

#include "goat/error.hpp"

#include <cmath>

namespace goat {

Matrix normalize_adjacency(const Graph& graph) {
  const int n = graph.num_nodes();
  Matrix a_hat = graph.adjacency() + Matrix::Identity(n, n);
  const Vector inv_sqrt_deg = a_hat.rowwise().sum().cwiseSqrt().cwiseInverse();
  return inv_sqrt_deg.asDiagonal() * a_hat * inv_sqrt_deg.asDiagonal();
}

Matrix propagation_matrix(Arch arch, const Graph& graph) {
  switch (arch) {
    case Arch::Gcn: return normalize_adjacency(graph);
    case Arch::Gin: return graph.adjacency() + Matrix::Identity(graph.num_nodes(), graph.num_nodes());
    case Arch::Sage: return graph.adjacency();
  }
  return graph.adjacency();
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double top = logits.row(r).maxCoeff();
    const RowVector e = (logits.row(r).array() - top).exp().matrix();
    out.row(r) = e / e.sum();
  }
  return out;
}

namespace {

LayerRecord activate(Matrix pre, Activation activation) {
  LayerRecord rec;
  rec.activation = activation;
  rec.post = activation == Activation::Relu ? Matrix(pre.cwiseMax(0.0)) : pre;
  rec.pattern = Matrix::Zero(pre.rows(), pre.cols());
  for (Eigen::Index i = 0; i < pre.rows(); ++i) {
    for (Eigen::Index j = 0; j < pre.cols(); ++j) {
      if (pre(i, j) != 0.0) rec.pattern(i, j) = rec.post(i, j) / pre(i, j);
    }
  }
  rec.pre = std::move(pre);
  return rec;
}

Matrix affine(const Matrix& h, const Matrix& w, const std::optional<RowVector>& bias) {
  Matrix out = h * w;
  if (bias) out.rowwise() += *bias;
  return out;
}

}  // namespace

ForwardTrace run_forward(const ModelSpec& model, const Matrix& propagation, const Matrix& features) {
  const auto n = features.rows();
  if (propagation.rows() != n || propagation.cols() != n) {
    throw invalid_argument("propagation matrix must be " + std::to_string(n) + "x" + std::to_string(n));
  }
  if (features.cols() != model.input_dim()) {
    throw invalid_argument("graph has feature dimension " + std::to_string(features.cols()) + " but the model expects " +
                           std::to_string(model.input_dim()));
  }
  ForwardTrace t;
  t.arch = model.arch;
  t.pooling = model.pooling;
  t.propagation = propagation;
  t.features = features;
  Matrix h = features;
  for (const ConvLayer& layer : model.conv_layers) {
    std::vector<LayerRecord> records;
    if (const auto* gcn = std::get_if<GcnConv>(&layer)) {
      Matrix pre = propagation * h * gcn->linear.weight;
      if (gcn->linear.bias) pre.rowwise() += *gcn->linear.bias;
      records.push_back(activate(std::move(pre), gcn->linear.activation));
    } else if (const auto* sage = std::get_if<SageConv>(&layer)) {
      Matrix pre = propagation * h * sage->w_neighbor + h * sage->w_self;
      if (sage->bias) pre.rowwise() += *sage->bias;
      records.push_back(activate(std::move(pre), sage->activation));
    } else {
      const auto& gin = std::get<GinConv>(layer);
      Matrix z = propagation * h + gin.eps * h;
      for (const DenseLayer& d : gin.mlp) {
        records.push_back(activate(affine(z, d.weight, d.bias), d.activation));
        z = records.back().post;
      }
    }
    h = records.back().post;
    t.conv.push_back(std::move(records));
  }
  t.embedding = model.pooling == Pooling::Mean ? Matrix(h.colwise().mean()) : h;
  Matrix z = t.embedding;
  for (const DenseLayer& d : model.classifier) {
    t.classifier.push_back(activate(affine(z, d.weight, d.bias), d.activation));
    z = t.classifier.back().post;
  }
  t.logits = z;
  t.probs = softmax_rows(t.logits);
  return t;
}

ForwardTrace run_forward(const ModelSpec& model, const Graph& graph) {
  return run_forward(model, propagation_matrix(model.arch, graph), graph.features());
}

ForwardTrace run_zero_baseline(const ModelSpec& model, int n, int d) {
  if (n <= 0 || d <= 0) throw invalid_argument("baseline needs positive node count and feature dimension");
  return run_forward(model, Matrix::Zero(n, n), Matrix::Zero(n, d));
}

}  // namespace goat
