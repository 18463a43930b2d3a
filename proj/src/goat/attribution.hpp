#pragma once

#include "goat/expansion.hpp"
#include "goat/forward.hpp"
#include "goat/graph.hpp"
#include "goat/model.hpp"

#include <optional>
#include <string>
#include <vector>

namespace goat {

/// A variable position inside a term: the feature origin, an adjacency
/// operand, or a pattern. `op_index` is -1 for the feature origin.
struct Slot {
  enum class Kind { Feature, Adjacency, Pattern };
  Kind kind = Kind::Adjacency;
  int op_index = -1;
  StageRef stage;
};

/// Variable slots of a term in chain order (feature origin first).
std::vector<Slot> term_slots(const TermClass& term);

/// Selects one scalar of the output: `row` is 0 for pooled models, the
/// explained node otherwise.
struct OutputIndex {
  int row = 0;
  int cls = 0;
};

/// Per-entry contributions of the factor in one slot. Entries are N x N for
/// adjacency slots, N x width (or 1 x width) for patterns, N x d for features,
/// and sum to the term's value at the selected output.
struct SlotContribution {
  int term = -1;
  Slot slot;
  Matrix entries;
};

/// One forward partial pass plus one adjoint pass; all entries of the slot
/// at once.
SlotContribution slot_sweep(const ModelSpec& model, const TermClass& term, const ForwardTrace& trace, const Slot& slot,
                            OutputIndex output);

/// Every slot of the term from the same two passes.
std::vector<SlotContribution> sweep_all_slots(const ModelSpec& model, const TermClass& term, const ForwardTrace& trace,
                                              OutputIndex output);

/// Occurrence-weighted contributions of every variable entry to one output,
/// before patterns are handed on to adjacency and features.
struct VariableAttribution {
  Matrix adjacency;                             // N x N, entries of the adjacency operand
  std::vector<std::vector<Matrix>> conv_patterns;  // [layer][sublayer]
  std::vector<Matrix> classifier_patterns;      // [layer]; the last one stays zero
  Matrix features;                              // N x d, zero unless features are variables
  /// Value of terms with no variable slot (e.g. the final bias).
  double unattributed = 0.0;
  /// Per-term value at the output, in enumerate_terms order.
  std::vector<double> term_values;
};

VariableAttribution attribute_variables(const ModelSpec& model, const std::vector<TermClass>& terms,
                                        const ForwardTrace& trace, OutputIndex output, bool features_as_variables);

/// Directed adjacency entries (i, j), i != j, that lie within r hops of
/// `node`: at least one endpoint at distance <= r - 1 from it (distances on
/// the underlying undirected graph). Sorted.
std::vector<Edge> hop_neighborhood(const Graph& graph, int node, int r);

struct AttributionOptions {
  bool features_as_variables = false;
  bool calibrate = true;
  /// Explained node row for models without pooling.
  std::optional<int> target_node;
  /// Output classes to attribute; empty means all.
  std::vector<int> classes;
};

struct AttributionResult {
  /// Undirected edges (u < v), or directed entries for directed graphs.
  std::vector<Edge> edges;
  /// edges.size() x classes.size()
  Matrix edge_scores;
  /// N x classes.size(): shares landing on the self-loop entries (a, a).
  Matrix diagonal_scores;
  /// Per class, N x d; only with features_as_variables.
  std::optional<std::vector<Matrix>> feature_scores;
  std::vector<int> classes;
  std::optional<int> target_node;
  bool features_as_variables = false;
  bool calibrated = true;
  /// f(G) and f(0, 0) at the explained row, per attributed class.
  Vector output;
  Vector baseline;
  /// |sum of all scores - (f(G) - f(0,0))| per class.
  Vector completeness_residual;
  /// Per class: term values (enumeration order) and the share of the total
  /// that flowed through activation patterns before redistribution.
  std::vector<std::vector<double>> term_values;
  std::vector<double> pattern_share;

  /// Score of an edge for the k-th attributed class.
  double score(std::size_t edge, std::size_t k) const { return edge_scores(static_cast<Eigen::Index>(edge), static_cast<Eigen::Index>(k)); }
  /// Column of `cls` in the score matrices; throws if it was not attributed.
  std::size_t class_column(int cls) const;
  /// Largest residual relative to max(1, |f(G)|, |f(0,0)|).
  double max_relative_residual() const;
};

AttributionResult attribute(const ModelSpec& model, const Graph& graph, const AttributionOptions& options);

std::string attribution_to_json(const AttributionResult& result);

}  // namespace goat
