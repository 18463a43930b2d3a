#include "doctest.h"

#include "goat/error.hpp"
#include "goat/forward.hpp"
#include "support.hpp"

#include <cmath>

using namespace goat;

TEST_CASE("normalized adjacency on tiny graphs") {
  const Graph one = Graph::from_edges(1, {}, false, Matrix::Ones(1, 1));
  CHECK(normalize_adjacency(one) == Matrix::Ones(1, 1));

  const Matrix two = normalize_adjacency(test::path_graph(2));
  CHECK((two.array() - 0.5).abs().maxCoeff() <= 1e-15);

  const Vector rows = normalize_adjacency(test::path_graph(3)).rowwise().sum();
  const double s6 = 1.0 / std::sqrt(6.0);
  CHECK(rows(0) == doctest::Approx(0.5 + s6).epsilon(1e-14));
  CHECK(rows(1) == doctest::Approx(1.0 / 3.0 + 2 * s6).epsilon(1e-14));
  CHECK(rows(2) == doctest::Approx(0.5 + s6).epsilon(1e-14));
}

TEST_CASE("zero weights leave only the bias chain") {
  ModelSpec m = test::small_model(Arch::Gcn, 1);
  for (ConvLayer& layer : m.conv_layers) std::get<GcnConv>(layer).linear.weight.setZero();
  const Graph g = test::path_graph(4, 3);
  const ForwardTrace t = run_forward(m, g);
  const auto& last = std::get<GcnConv>(m.conv_layers.back()).linear;
  const RowVector h = last.bias->cwiseMax(0.0);
  RowVector z = h;
  for (const DenseLayer& d : m.classifier) {
    z = z * d.weight + *d.bias;
    if (d.activation == Activation::Relu) z = z.cwiseMax(0.0);
  }
  CHECK((t.logits - z).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("forward pass matches a straight-line evaluation") {
  for (Arch arch : {Arch::Gcn, Arch::Sage, Arch::Gin}) {
    for (Pooling pooling : {Pooling::Mean, Pooling::None}) {
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const ModelSpec m = test::small_model(arch, seed, 3, 3, 4, pooling, 3);
        const Graph g = random_graph(6, 0.4, 3, seed + 100);
        const ForwardTrace t = run_forward(m, g);
        const Matrix want = test::straight_line_logits(m, g);
        CHECK((t.logits - want).cwiseAbs().maxCoeff() <= 1e-12);
        for (Eigen::Index r = 0; r < t.probs.rows(); ++r) CHECK(std::abs(t.probs.row(r).sum() - 1.0) <= 1e-12);
      }
    }
  }
}

TEST_CASE("activation patterns reproduce post-activation values") {
  const ModelSpec m = test::small_model(Arch::Gin, 4);
  const ForwardTrace t = run_forward(m, random_graph(5, 0.5, 3, 2));
  for (const auto& layer : t.conv) {
    for (const LayerRecord& r : layer) {
      CHECK((r.pattern.cwiseProduct(r.pre) - r.post).cwiseAbs().maxCoeff() <= 1e-15);
      CHECK(((r.pattern.array() == 0.0) || (r.pattern.array() == 1.0)).all());
    }
  }
}

TEST_CASE("zero baseline") {
  SUBCASE("all biases zero gives zero output") {
    for (Arch arch : {Arch::Gcn, Arch::Sage, Arch::Gin}) {
      RandomModelOptions o;
      o.arch = arch;
      o.input_dim = 3;
      o.hidden = 4;
      o.bias_scale = 0.0;
      const ForwardTrace t = run_zero_baseline(random_model(o), 5, 3);
      CHECK(t.logits.cwiseAbs().maxCoeff() == 0.0);
    }
  }
  SUBCASE("gcn baseline is the bias chain") {
    const ModelSpec m = test::small_model(Arch::Gcn, 8, 3);
    RowVector h = std::get<GcnConv>(m.conv_layers.back()).linear.bias->cwiseMax(0.0);
    for (const DenseLayer& d : m.classifier) {
      h = h * d.weight + *d.bias;
      if (d.activation == Activation::Relu) h = h.cwiseMax(0.0);
    }
    CHECK((run_zero_baseline(m, 7, 3).logits - h).cwiseAbs().maxCoeff() <= 1e-14);
  }
  SUBCASE("pooled baseline does not depend on the node count") {
    for (Arch arch : {Arch::Gcn, Arch::Sage, Arch::Gin}) {
      const ModelSpec m = test::small_model(arch, 9);
      const Matrix a = run_zero_baseline(m, 3, 3).logits;
      const Matrix b = run_zero_baseline(m, 11, 3).logits;
      CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-14);
    }
  }
  CHECK_THROWS_AS(run_zero_baseline(test::small_model(Arch::Gcn, 1), 0, 3), Error);
}

TEST_CASE("feature dimension mismatch is rejected") {
  const ModelSpec m = test::small_model(Arch::Gcn, 1);
  CHECK_THROWS_AS(run_forward(m, test::path_graph(3, 2)), Error);
}
