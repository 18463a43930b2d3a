#pragma once

// Brute-force expansion of small networks into individual scalar products.
// Built directly from the layer equations, not from the term-class machinery
// it is used to check.

#include "goat/expansion.hpp"
#include "goat/forward.hpp"
#include "goat/graph.hpp"
#include "goat/model.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace goat {

struct VariableId {
  enum class Kind : std::uint8_t { Adjacency, Pattern, Feature };
  Kind kind = Kind::Adjacency;
  StageRef stage;  // pattern stage; unused otherwise
  int i = 0;
  int j = 0;
  auto operator<=>(const VariableId&) const = default;

  static VariableId adjacency(int i, int j) { return {Kind::Adjacency, {}, i, j}; }
  static VariableId feature(int i, int j) { return {Kind::Feature, {}, i, j}; }
  static VariableId pattern(StageRef stage, int i, int j) { return {Kind::Pattern, stage, i, j}; }
};

/// value = constant * prod(variable values). `variables` is a sorted multiset.
struct ScalarProduct {
  double value = 0.0;
  double constant = 1.0;
  int row = 0;
  int cls = 0;
  std::vector<VariableId> variables;
};

/// |V(z)|: distinct variables.
int unique_variable_count(const ScalarProduct& z);
/// O(v, z).
int occurrence_count(const ScalarProduct& z, const VariableId& v);

struct OracleLimits {
  int max_nodes = 6;
  int max_features = 3;
  int max_conv_layers = 2;
  int max_width = 4;
  std::size_t max_products = 2'000'000;
};

/// Every scalar product of every output entry. Products whose value is 0 are
/// kept. Throws a domain error when a size guard is exceeded.
std::vector<ScalarProduct> expand_all(const ModelSpec& model, const Graph& graph, bool features_as_variables,
                                      const OracleLimits& limits = {});

/// Same, with the adjacency operand and patterns taken from a given trace
/// (e.g. the zero baseline).
std::vector<ScalarProduct> expand_trace(const ModelSpec& model, const ForwardTrace& trace, bool features_as_variables,
                                        const OracleLimits& limits = {});

/// Number of products expand_trace would create, without building them.
double count_products(const ModelSpec& model, const ForwardTrace& trace);

enum class OracleMode { EqualShare, OccurrenceWeighted };

/// Share of product z credited to variable v (0 if v is absent from z).
double product_share(const ScalarProduct& z, OracleMode mode, const VariableId& v);

/// Sum of the shares of v over the given products.
double oracle_attribute(std::span<const ScalarProduct> products, OracleMode mode, const VariableId& variable);

/// Attribution of every variable at once.
std::map<VariableId, double> oracle_attribute_all(std::span<const ScalarProduct> products, OracleMode mode);

/// Products of one output entry.
std::vector<ScalarProduct> products_for(std::span<const ScalarProduct> products, int row, int cls);

struct OracleSuiteConfig {
  int nodes = 5;
  int conv_layers = 2;
  int feature_dim = 2;
  int width = 3;
  int models_per_arch = 10;
  std::uint64_t seed = 7;
  double tolerance = 1e-8;
  /// Negative control: perturb one weight after the trace is captured.
  bool inject_perturbation = false;
};

struct OracleSuiteResult {
  std::string name;
  int cases = 0;
  double max_deviation = 0.0;
  double tolerance = 0.0;
  bool passed = true;
};

struct OracleReport {
  std::vector<OracleSuiteResult> suites;
  bool passed() const;
  std::string to_json() const;
};

/// Reconstruction, mode agreement, equal contribution, per-variable
/// equivalence and end-to-end equivalence against the efficient path.
OracleReport run_oracle_suite(const OracleSuiteConfig& config);

}  // namespace goat
