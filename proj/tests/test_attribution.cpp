#include "doctest.h"

#include "goat/attribution.hpp"
#include "goat/error.hpp"
#include "goat/json_util.hpp"
#include "support.hpp"

#include <algorithm>

using namespace goat;

namespace {

ModelSpec random_shape(Arch arch, std::mt19937_64& rng, Pooling pooling = Pooling::Mean) {
  RandomModelOptions o;
  o.arch = arch;
  o.input_dim = 1 + static_cast<int>(rng() % 3);
  o.hidden = 2 + static_cast<int>(rng() % 4);
  o.conv_layers = 1 + static_cast<int>(rng() % 3);
  o.classifier_layers = 1 + static_cast<int>(rng() % 2);
  o.num_classes = 2 + static_cast<int>(rng() % 2);
  o.pooling = pooling;
  o.gin_eps = arch == Arch::Gin ? 0.25 : 0.0;
  o.bias_scale = 0.5;
  o.seed = rng();
  return random_model(o);
}

}  // namespace

TEST_CASE("every slot sweep sums to its term value") {
  std::mt19937_64 rng(17);
  for (Arch arch : {Arch::Gcn, Arch::Sage, Arch::Gin}) {
    for (int trial = 0; trial < 20; ++trial) {
      const ModelSpec m = random_shape(arch, rng, trial % 3 == 0 ? Pooling::None : Pooling::Mean);
      const int n = 3 + trial % 6;
      const Graph g = random_graph(n, 0.4, m.input_dim(), rng());
      const ForwardTrace t = run_forward(m, g);
      const OutputIndex out{m.pooling == Pooling::None ? trial % n : 0, trial % m.num_classes};
      for (const TermClass& term : enumerate_terms(m)) {
        const double value = evaluate_term(m, term, t)(out.row, out.cls);
        const auto slots = sweep_all_slots(m, term, t, out);
        CHECK(slots.size() == term_slots(term).size());
        for (const SlotContribution& c : slots) {
          CHECK(std::abs(c.entries.sum() - value) <= 1e-8 * std::max(1.0, std::abs(value)));
        }
      }
    }
  }
}

TEST_CASE("absent adjacency entries receive nothing") {
  const ModelSpec m = test::small_model(Arch::Sage, 3, 2);
  const Graph g = random_graph(6, 0.3, 3, 5);
  const ForwardTrace t = run_forward(m, g);
  const VariableAttribution v = attribute_variables(m, enumerate_terms(m), t, {0, 1}, false);
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) {
      if (g.adjacency()(i, j) == 0.0) CHECK(v.adjacency(i, j) == 0.0);
    }
  }
}

TEST_CASE("adjacency slot entries match masked chains") {
  // One conv layer, one classifier layer: term X is mean(P1 ⊙ (V X W1)) Wc1.
  ModelSpec m = test::small_model(Arch::Gcn, 12, 1);
  m.classifier.resize(1);
  m.classifier[0].weight = Matrix::Random(4, 2);
  m.classifier[0].bias = RowVector::Constant(2, 0.1);
  m.classifier[0].activation = Activation::None;
  const Graph g = random_graph(5, 0.5, 3, 4);
  const ForwardTrace t = run_forward(m, g);
  const TermClass x = enumerate_terms(m).front();
  const auto slots = sweep_all_slots(m, x, t, {0, 1});
  const auto it = std::find_if(slots.begin(), slots.end(), [](const SlotContribution& c) { return c.slot.kind == Slot::Kind::Adjacency; });
  REQUIRE(it != slots.end());
  const Matrix& w1 = std::get<GcnConv>(m.conv_layers[0]).linear.weight;
  const Matrix& p1 = t.conv[0][0].pattern;
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      Matrix masked = Matrix::Zero(5, 5);
      masked(i, j) = t.propagation(i, j);
      const Matrix h = p1.cwiseProduct(masked * g.features() * w1);
      const double want = (h.colwise().mean() * m.classifier[0].weight)(0, 1);
      CHECK(std::abs(it->entries(i, j) - want) <= 1e-14);
    }
  }
}

TEST_CASE("completeness with calibration") {
  std::mt19937_64 rng(99);
  for (Arch arch : {Arch::Gcn, Arch::Sage, Arch::Gin}) {
    for (int trial = 0; trial < 20; ++trial) {
      const bool node_level = trial % 4 == 3;
      const ModelSpec m = random_shape(arch, rng, node_level ? Pooling::None : Pooling::Mean);
      const Graph g = random_graph(3 + trial % 8, 0.35, m.input_dim(), rng());
      AttributionOptions o;
      o.features_as_variables = trial % 2 == 1;
      if (node_level) o.target_node = trial % g.num_nodes();
      const AttributionResult r = attribute(m, g, o);
      CHECK(r.max_relative_residual() <= 1e-6);
      const Matrix logits = run_forward(m, g).logits;
      CHECK(r.output(0) == logits(o.target_node.value_or(0), 0));
    }
  }
}

TEST_CASE("uncalibrated attribution sums to f(G) minus the unattributed part") {
  const ModelSpec m = test::small_model(Arch::Gcn, 2);
  const Graph g = random_graph(6, 0.5, 3, 3);
  AttributionOptions o;
  o.calibrate = false;
  o.classes = {1};
  const AttributionResult r = attribute(m, g, o);
  const ForwardTrace t = run_forward(m, g);
  const VariableAttribution v = attribute_variables(m, enumerate_terms(m), t, {0, 1}, false);
  const double total = r.edge_scores.sum() + r.diagonal_scores.sum();
  CHECK(std::abs(total + v.unattributed - t.logits(0, 1)) <= 1e-10);
}

TEST_CASE("hop neighborhoods") {
  SUBCASE("star") {
    const Graph star = Graph::from_edges(5, {{0, 1}, {0, 2}, {0, 3}, {0, 4}}, false, Matrix::Ones(5, 1));
    CHECK(hop_neighborhood(star, 1, 1) == std::vector<Edge>{{0, 1}, {1, 0}});
    CHECK(hop_neighborhood(star, 1, 2).size() == 8);
    CHECK(hop_neighborhood(star, 0, 1).size() == 8);
  }
  SUBCASE("path") {
    const Graph path = test::path_graph(4);
    CHECK(hop_neighborhood(path, 0, 1) == std::vector<Edge>{{0, 1}, {1, 0}});
    CHECK(hop_neighborhood(path, 0, 2) == std::vector<Edge>{{0, 1}, {1, 0}, {1, 2}, {2, 1}});
    CHECK(hop_neighborhood(path, 0, 3).size() == 6);
    CHECK(hop_neighborhood(path, 0, 9).size() == 6);
  }
  SUBCASE("isolated node and bad radius") {
    const Graph g = Graph::from_edges(3, {{0, 1}}, false, Matrix::Ones(3, 1));
    CHECK(hop_neighborhood(g, 2, 3).empty());
    CHECK_THROWS_AS(hop_neighborhood(g, 0, 0), Error);
  }
}

TEST_CASE("edgeless graph puts every share on the diagonal") {
  const ModelSpec m = test::small_model(Arch::Gcn, 5);
  const Graph g = Graph::from_edges(3, {}, false, Matrix::Ones(3, 3));
  const AttributionResult r = attribute(m, g, {});
  CHECK(r.edges.empty());
  CHECK(r.max_relative_residual() <= 1e-12);
}

TEST_CASE("attribution options are validated") {
  const ModelSpec pooled = test::small_model(Arch::Gcn, 1);
  const ModelSpec nodes = test::small_model(Arch::Gcn, 1, 2, 3, 4, Pooling::None);
  const Graph g = test::path_graph(3, 3);
  AttributionOptions o;
  o.target_node = 0;
  CHECK_THROWS_AS(attribute(pooled, g, o), Error);
  CHECK_THROWS_AS(attribute(nodes, g, {}), Error);
  o.target_node = 3;
  CHECK_THROWS_AS(attribute(nodes, g, o), Error);
  AttributionOptions c;
  c.classes = {2};
  CHECK_THROWS_AS(attribute(pooled, g, c), Error);
}

TEST_CASE("attribution JSON shape") {
  const ModelSpec m = test::small_model(Arch::Gin, 3);
  const Graph g = test::path_graph(4, 3);
  AttributionOptions o;
  o.features_as_variables = true;
  const auto j = detail::json::parse(attribution_to_json(attribute(m, g, o)));
  CHECK(j["edges"].size() == 3);
  CHECK(j["edges"][0]["score_per_class"].size() == 2);
  CHECK(j["diagonal"].size() == 4);
  CHECK(j["residual"].size() == 2);
  CHECK(j["mode"]["features_as_variables"] == true);
  CHECK(j["feature_scores"].size() == 2);
  CHECK(j["target_node"].is_null());
}
