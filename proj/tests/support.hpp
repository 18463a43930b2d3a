#pragma once

#include "goat/forward.hpp"
#include "goat/graph.hpp"
#include "goat/model.hpp"

#include <random>
#include <vector>

namespace goat::test {

inline ModelSpec small_model(Arch arch, std::uint64_t seed, int conv_layers = 2, int input_dim = 3, int hidden = 4,
                             Pooling pooling = Pooling::Mean, int classes = 2) {
  RandomModelOptions o;
  o.arch = arch;
  o.seed = seed;
  o.conv_layers = conv_layers;
  o.input_dim = input_dim;
  o.hidden = hidden;
  o.pooling = pooling;
  o.num_classes = classes;
  o.bias_scale = 0.5;
  o.gin_eps = arch == Arch::Gin ? 0.3 : 0.0;
  return random_model(o);
}

inline Graph path_graph(int n, int d = 1) {
  std::vector<Edge> edges;
  for (int i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1});
  return Graph::from_edges(n, edges, false, Matrix::Ones(n, d));
}

inline Matrix relu(const Matrix& m) { return m.cwiseMax(0.0); }

// Plain reading of the layer equations, written without the engine's helpers.
inline Matrix straight_line_logits(const ModelSpec& model, const Graph& g) {
  const int n = g.num_nodes();
  const Matrix a = g.adjacency();
  const Matrix a_hat = a + Matrix::Identity(n, n);
  Matrix h = g.features();
  for (const ConvLayer& layer : model.conv_layers) {
    if (const auto* gcn = std::get_if<GcnConv>(&layer)) {
      Vector deg = a_hat.rowwise().sum();
      Matrix v(n, n);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) v(i, j) = a_hat(i, j) / std::sqrt(deg(i) * deg(j));
      }
      Matrix z = v * h * gcn->linear.weight;
      if (gcn->linear.bias) z.rowwise() += *gcn->linear.bias;
      h = gcn->linear.activation == Activation::Relu ? relu(z) : z;
    } else if (const auto* sage = std::get_if<SageConv>(&layer)) {
      Matrix z = a * h * sage->w_neighbor + h * sage->w_self;
      if (sage->bias) z.rowwise() += *sage->bias;
      h = sage->activation == Activation::Relu ? relu(z) : z;
    } else {
      const auto& gin = std::get<GinConv>(layer);
      Matrix z = a_hat * h + gin.eps * h;
      for (const DenseLayer& d : gin.mlp) {
        z = z * d.weight;
        if (d.bias) z.rowwise() += *d.bias;
        if (d.activation == Activation::Relu) z = relu(z);
      }
      h = z;
    }
  }
  if (model.pooling == Pooling::Mean) h = Matrix(h.colwise().mean());
  for (const DenseLayer& d : model.classifier) {
    h = h * d.weight;
    if (d.bias) h.rowwise() += *d.bias;
    if (d.activation == Activation::Relu) h = relu(h);
  }
  return h;
}

inline double rel_err(double got, double want) { return std::abs(got - want) / std::max(1.0, std::abs(want)); }

}  // namespace goat::test
