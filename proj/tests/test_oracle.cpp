#include "doctest.h"

#include "goat/error.hpp"
#include "goat/oracle.hpp"
#include "support.hpp"

#include <algorithm>

using namespace goat;

namespace {

ScalarProduct product(double value, std::vector<VariableId> vars) {
  std::sort(vars.begin(), vars.end());
  ScalarProduct z;
  z.value = value;
  z.constant = value;
  z.variables = std::move(vars);
  return z;
}

VariableId a(int i, int j) { return VariableId::adjacency(i, j); }

}  // namespace

TEST_CASE("worked toy products") {
  const std::vector<ScalarProduct> single{product(10.0, {a(1, 1), a(1, 2), a(2, 3)})};
  for (OracleMode mode : {OracleMode::EqualShare, OracleMode::OccurrenceWeighted}) {
    for (const VariableId& v : single[0].variables) CHECK(std::abs(oracle_attribute(single, mode, v) - 10.0 / 3.0) <= 1e-12);
  }

  const std::vector<ScalarProduct> y13{product(10.0, {a(1, 1), a(1, 2), a(2, 3)}),
                                       product(8.0, {a(1, 1), a(1, 3), a(3, 3)}),
                                       product(11.0, {a(1, 2), a(2, 1), a(1, 3)})};
  CHECK(std::abs(oracle_attribute(y13, OracleMode::EqualShare, a(1, 1)) - 6.0) <= 1e-12);
  CHECK(std::abs(oracle_attribute(y13, OracleMode::OccurrenceWeighted, a(1, 1)) - 6.0) <= 1e-12);
  CHECK(oracle_attribute(y13, OracleMode::EqualShare, a(3, 1)) == 0.0);

  double total = 0.0;
  for (const auto& [v, s] : oracle_attribute_all(y13, OracleMode::EqualShare)) total += s;
  CHECK(std::abs(total - 29.0) <= 1e-12);
}

TEST_CASE("repeated variables") {
  const ScalarProduct z = product(6.0, {a(0, 0), a(0, 0), a(0, 1)});
  CHECK(unique_variable_count(z) == 2);
  CHECK(occurrence_count(z, a(0, 0)) == 2);
  CHECK(product_share(z, OracleMode::EqualShare, a(0, 0)) == 3.0);
  CHECK(product_share(z, OracleMode::OccurrenceWeighted, a(0, 0)) == 4.0);
  CHECK(product_share(z, OracleMode::OccurrenceWeighted, a(0, 1)) == 2.0);
  CHECK(product_share(z, OracleMode::EqualShare, a(1, 1)) == 0.0);
}

TEST_CASE("expansion of a one-layer model reconstructs the logits") {
  for (Arch arch : {Arch::Gcn, Arch::Sage, Arch::Gin}) {
    for (Pooling pooling : {Pooling::Mean, Pooling::None}) {
      const ModelSpec m = test::small_model(arch, 21, 1, 2, 3, pooling);
      const Graph g = random_graph(4, 0.5, 2, 8);
      const ForwardTrace t = run_forward(m, g);
      const auto all = expand_all(m, g, true);
      CHECK(static_cast<double>(all.size()) == count_products(m, t));
      for (Eigen::Index r = 0; r < t.logits.rows(); ++r) {
        for (Eigen::Index c = 0; c < t.logits.cols(); ++c) {
          double sum = 0.0;
          for (const ScalarProduct& z : products_for(all, static_cast<int>(r), static_cast<int>(c))) sum += z.value;
          CHECK(std::abs(sum - t.logits(r, c)) <= 1e-12 * std::max(1.0, std::abs(t.logits(r, c))));
        }
      }
    }
  }
}

TEST_CASE("zero weights leave only bias products non-zero") {
  ModelSpec m = test::small_model(Arch::Gcn, 4, 1, 2, 3);
  std::get<GcnConv>(m.conv_layers[0]).linear.weight.setZero();
  const auto all = expand_all(m, test::path_graph(3, 2), true);
  for (const ScalarProduct& z : all) {
    const bool from_features = std::any_of(z.variables.begin(), z.variables.end(),
                                           [](const VariableId& v) { return v.kind == VariableId::Kind::Feature; });
    if (from_features) CHECK(z.value == 0.0);
  }
}

TEST_CASE("both modes agree on repeat-free products") {
  const ModelSpec m = test::small_model(Arch::Sage, 6, 2, 2, 2);
  const auto all = expand_all(m, random_graph(4, 0.5, 2, 1), true);
  int checked = 0;
  for (const ScalarProduct& z : all) {
    if (unique_variable_count(z) != static_cast<int>(z.variables.size())) continue;
    for (const VariableId& v : z.variables) {
      CHECK(product_share(z, OracleMode::EqualShare, v) == product_share(z, OracleMode::OccurrenceWeighted, v));
    }
    ++checked;
  }
  CHECK(checked > 0);
}

TEST_CASE("size guards") {
  const ModelSpec deep = test::small_model(Arch::Gcn, 1, 3, 2, 3);
  CHECK_THROWS_AS(expand_all(deep, test::path_graph(3, 2), false), Error);
  const ModelSpec m = test::small_model(Arch::Gcn, 1, 1, 2, 3);
  CHECK_THROWS_AS(expand_all(m, test::path_graph(7, 2), false), Error);
  OracleLimits tight;
  tight.max_products = 10;
  CHECK_THROWS_AS(expand_all(m, test::path_graph(4, 2), false, tight), Error);
  try {
    expand_all(deep, test::path_graph(3, 2), false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Domain);
  }
}

TEST_CASE("oracle suite passes and catches a perturbed weight") {
  OracleSuiteConfig cfg;
  cfg.models_per_arch = 2;
  cfg.nodes = 4;
  const OracleReport ok = run_oracle_suite(cfg);
  CHECK(ok.passed());
  CHECK(ok.suites.size() == 5);
  cfg.inject_perturbation = true;
  CHECK_FALSE(run_oracle_suite(cfg).passed());
}
