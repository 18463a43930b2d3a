#include "doctest.h"

#include "goat/error.hpp"
#include "goat/metrics.hpp"
#include "support.hpp"

#include <algorithm>
#include <sstream>

using namespace goat;

namespace {

AttributionResult with_scores(const Graph& g, std::vector<double> scores) {
  AttributionResult r;
  r.edges = g.edges();
  r.classes = {0};
  r.edge_scores = Matrix::Zero(static_cast<Eigen::Index>(scores.size()), 1);
  for (std::size_t i = 0; i < scores.size(); ++i) r.edge_scores(static_cast<Eigen::Index>(i), 0) = scores[i];
  return r;
}

Graph cycle(int n) {
  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i) edges.push_back({i, (i + 1) % n});
  return Graph::from_edges(n, edges, false, Matrix::Ones(n, 3));
}

Explanation grouped(std::uint64_t hash) {
  Explanation e;
  e.canonical_hash = hash;
  return e;
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("explanation size") {
  CHECK(explanation_size(10, 0.9) == 1);
  CHECK(explanation_size(10, 0.0) == 10);
  CHECK(explanation_size(10, 0.7) == 3);
  CHECK(explanation_size(7, 0.5) == 4);
  CHECK_THROWS_AS(explanation_size(10, 1.0), Error);
  CHECK_THROWS_AS(explanation_size(0, 0.5), Error);
}

TEST_CASE("top edges are picked by score with lexicographic ties") {
  const Graph g = cycle(5);  // edges (0,1) (0,4) (1,2) (2,3) (3,4)
  const auto e = extract_explanation(with_scores(g, {1.0, 3.0, 1.0, 1.0, 2.0}), g, 0.4, 0);
  CHECK(e.edges == std::vector<Edge>{{0, 4}, {3, 4}, {0, 1}});
  CHECK(e.sparsity == doctest::Approx(0.4));

  const auto scaled = extract_explanation(with_scores(g, {2.5, 7.5, 2.5, 2.5, 5.0}), g, 0.4, 0);
  CHECK(scaled.edges == e.edges);
  CHECK(scaled.canonical_hash == e.canonical_hash);

  const auto ties = extract_explanation(with_scores(g, {0, 0, 0, 0, 0}), g, 0.6, 0);
  CHECK(ties.edges == std::vector<Edge>{{0, 1}, {0, 4}});
}

TEST_CASE("random explanation has the same size and is deterministic") {
  const Graph g = cycle(10);
  const auto a = random_explanation(g, 0.7, 0, 4);
  CHECK(a.edges.size() == 3);
  CHECK(random_explanation(g, 0.7, 0, 4).edges == a.edges);
}

TEST_CASE("fidelity") {
  const ModelSpec m = test::small_model(Arch::Gcn, 3);
  const Graph g = random_graph(6, 0.5, 3, 2);
  Explanation none;
  CHECK(fidelity(m, g, none) == 0.0);

  Explanation all;
  all.edges = g.edges();
  const ForwardTrace full = run_forward(m, g);
  Eigen::Index y = 0;
  full.probs.row(0).maxCoeff(&y);
  const Graph bare = Graph::from_edges(6, {}, false, g.features());
  const double want = full.probs(0, y) - run_forward(m, bare).probs(0, y);
  CHECK(std::abs(fidelity(m, g, all) - want) <= 1e-15);

  CHECK_THROWS_AS(fidelity(test::small_model(Arch::Gcn, 3, 2, 3, 4, Pooling::None), g, none), Error);
}

TEST_CASE("subgraph embeddings") {
  const ModelSpec m = test::small_model(Arch::Sage, 7, 2, 3, 4, Pooling::Mean);
  const Graph g = random_graph(6, 0.5, 3, 11);
  Explanation all;
  all.edges = g.edges();
  CHECK(embed_subgraph(m, g, all) == RowVector(run_forward(m, g).embedding));
  const Graph bare = Graph::from_edges(6, {}, false, g.features());
  CHECK(embed_subgraph(m, g, Explanation{}) == RowVector(run_forward(m, bare).embedding));
  CHECK(embed_subgraph(m, g, all, EmbeddingPoint::PreClassifier).size() == m.classifier.back().in_dim());

  // Relabelling nodes leaves the pooled embedding unchanged.
  const std::vector<int> perm{3, 0, 5, 1, 4, 2};
  std::vector<Edge> moved;
  Matrix x(6, 3);
  for (int i = 0; i < 6; ++i) x.row(perm[static_cast<std::size_t>(i)]) = g.features().row(i);
  for (const Edge& e : g.edges()) moved.push_back({perm[static_cast<std::size_t>(e.u)], perm[static_cast<std::size_t>(e.v)]});
  const Graph h = Graph::from_edges(6, moved, false, x);
  Explanation all_h;
  all_h.edges = h.edges();
  CHECK((embed_subgraph(m, g, all) - embed_subgraph(m, h, all_h)).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(wl_hash(g, g.edges()) == wl_hash(h, h.edges()));
}

TEST_CASE("discriminability") {
  auto sample = [](std::vector<double> v, int cls, int pred) {
    RowVector r(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) r(static_cast<Eigen::Index>(i)) = v[i];
    return EmbeddedSample{r, cls, pred};
  };
  const std::vector<EmbeddedSample> same{sample({1, 2}, 0, 0), sample({1, 2}, 1, 1), sample({9, 9}, 1, 0)};
  CHECK(discriminability(same, 0, 1) == 0.0);

  const std::vector<EmbeddedSample> ortho{sample({1, 0}, 0, 0), sample({0, 1}, 1, 1)};
  CHECK(std::abs(discriminability(ortho, 0, 1) - std::sqrt(2.0)) <= 1e-12);
  CHECK(discriminability(ortho, 1, 0) == discriminability(ortho, 0, 1));

  const std::vector<EmbeddedSample> misses{sample({1, 0}, 0, 0), sample({0, 1}, 1, 0)};
  try {
    discriminability(misses, 0, 1);
    FAIL("expected domain error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Domain);
    CHECK(std::string(e.what()).find("class 1") != std::string::npos);
  }
}

TEST_CASE("stability") {
  std::vector<Explanation> identical(6, grouped(42));
  CHECK(stability(identical, 1) == 1.0);

  std::vector<Explanation> distinct;
  for (std::uint64_t i = 0; i < 8; ++i) distinct.push_back(grouped(i));
  for (int k = 1; k <= 8; ++k) CHECK(stability(distinct, k) == doctest::Approx(k / 8.0));
  CHECK(stability(distinct, 20) == 1.0);

  std::vector<Explanation> mixed;
  for (std::uint64_t h : {1, 1, 1, 2, 2, 3, 4, 4, 4, 4}) mixed.push_back(grouped(h));
  CHECK(stability(mixed, 1) == doctest::Approx(0.4));
  CHECK(stability(mixed, 2) == doctest::Approx(0.7));
  std::mt19937_64 rng(1);
  double prev = 0.0;
  for (int k = 1; k <= 5; ++k) {
    std::shuffle(mixed.begin(), mixed.end(), rng);
    const double s = stability(mixed, k);
    CHECK(s >= prev);
    prev = s;
  }
  CHECK_THROWS_AS(stability(mixed, 0), Error);
}

TEST_CASE("wl hash groups isomorphic subgraphs") {
  const Graph g = cycle(6);
  CHECK(wl_hash(g, {{0, 1}, {1, 2}}) == wl_hash(g, {{3, 4}, {4, 5}}));
  CHECK(wl_hash(g, {{0, 1}, {1, 2}}) != wl_hash(g, {{0, 1}, {2, 3}}));
}

TEST_CASE("dataset reports") {
  const Dataset d = generate_ba2motifs(6, 8, 3);
  RandomModelOptions o;
  o.input_dim = kBa2MotifsFeatureDim;
  o.hidden = 8;
  o.conv_layers = 2;
  const ModelSpec m = random_model(o);

  MetricsOptions opts;
  const MetricsReport fid = fidelity_curve(m, d, opts);
  CHECK(fid.fidelity.size() == 5);
  CHECK(lines(fid.summary_csv()) == 6);
  CHECK(lines(fid.samples_csv()) == 1 + 5 * 6);

  MetricsOptions single;
  single.sparsities = {0.0};
  Dataset one;
  one.graphs = {d.graphs[0]};
  one.num_classes = d.num_classes;
  const MetricsReport f1 = fidelity_curve(m, one, single);
  CHECK(f1.fidelity[0].std == 0.0);
  CHECK(f1.fidelity[0].count == 1);

  MetricsOptions st;
  st.sparsities = {0.7};
  st.max_k = 10;
  const MetricsReport stab = stability_report(m, d, st);
  CHECK(stab.stability.size() == 10);
  CHECK(stab.stability.back().coverage == 1.0);
  CHECK(lines(stab.samples_csv()) == 7);

  MetricsOptions par = opts;
  par.jobs = 3;
  CHECK(fidelity_curve(m, d, par).samples_csv() == fid.samples_csv());
}
