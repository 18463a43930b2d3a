#pragma once

#include "goat/attribution.hpp"
#include "goat/graph.hpp"
#include "goat/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace goat {

/// A retained edge subset S with the scores that selected it.
struct Explanation {
  int graph_id = 0;
  /// Sorted by score descending, ties lexicographic.
  std::vector<Edge> edges;
  std::vector<double> scores;
  /// 1 - |S| / |E|
  double sparsity = 0.0;
  int predicted_class = 0;
  int num_graph_edges = 0;
  /// WL-1 hash of the subgraph S induces; equal hashes group together.
  std::uint64_t canonical_hash = 0;
};

/// Top ceil((1 - sparsity_target) |E|) edges by score for `cls`.
Explanation extract_explanation(const AttributionResult& attr, const Graph& graph, double sparsity_target, int cls,
                                int graph_id = 0);

/// Uniformly random edge subset of the same size extract_explanation would pick.
Explanation random_explanation(const Graph& graph, double sparsity_target, int cls, std::uint64_t seed,
                               int graph_id = 0);

/// Number of edges retained for a sparsity target.
int explanation_size(int num_edges, double sparsity_target);

/// WL-1 hash of the subgraph on the endpoints of `edges`, labels from
/// quantized node features, 3 refinement rounds.
std::uint64_t wl_hash(const Graph& graph, const std::vector<Edge>& edges, int rounds = 3);

int predicted_class(const ModelSpec& model, const Graph& graph);

/// p_y(G) - p_y(G \ S), y the predicted class on G; features untouched.
double fidelity(const ModelSpec& model, const Graph& graph, const Explanation& expl);

enum class EmbeddingPoint {
  PostConv,       // pooled output of the last conv layer
  PreClassifier,  // input of the last classifier layer
};

/// Forward pass on the graph keeping only S's edges; node set unchanged.
RowVector embed_subgraph(const ModelSpec& model, const Graph& graph, const Explanation& expl,
                         EmbeddingPoint point = EmbeddingPoint::PostConv);

struct EmbeddedSample {
  RowVector embedding;
  int true_class = 0;
  int predicted_class = 0;
};

/// || mean(c1) - mean(c2) || over correctly predicted samples.
double discriminability(const std::vector<EmbeddedSample>& samples, int c1, int c2);

/// Share of explanations covered by the k largest canonical groups.
double stability(const std::vector<Explanation>& explanations, int k);

struct MetricsOptions {
  std::vector<double> sparsities{0.5, 0.6, 0.7, 0.8, 0.9};
  AttributionOptions attribution;
  EmbeddingPoint embedding = EmbeddingPoint::PostConv;
  std::vector<std::pair<int, int>> class_pairs{{0, 1}};
  int max_k = 10;
  int jobs = 1;
};

struct FidelityRecord {
  int graph_id = 0;
  double sparsity = 0.0;
  int num_edges = 0;
  int selected = 0;
  int predicted_class = 0;
  double fidelity = 0.0;
};

struct FidelityPoint {
  double sparsity = 0.0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for one sample
  int count = 0;
};

struct EmbeddingRecord {
  int graph_id = 0;
  double sparsity = 0.0;
  int true_class = 0;
  int predicted_class = 0;
  RowVector embedding;
};

struct DiscriminabilityPoint {
  double sparsity = 0.0;
  int c1 = 0;
  int c2 = 0;
  double value = 0.0;
  int count_c1 = 0;
  int count_c2 = 0;
};

struct StabilityRecord {
  int graph_id = 0;
  double sparsity = 0.0;
  int predicted_class = 0;
  std::uint64_t canonical_hash = 0;
};

struct StabilityPoint {
  double sparsity = 0.0;
  int k = 0;
  double coverage = 0.0;
  int groups = 0;
};

struct MetricsReport {
  std::string metric;
  int samples = 0;
  std::vector<FidelityPoint> fidelity;
  std::vector<FidelityRecord> fidelity_records;
  std::vector<DiscriminabilityPoint> discriminability;
  std::vector<EmbeddingRecord> embedding_records;
  std::vector<StabilityPoint> stability;
  std::vector<StabilityRecord> stability_records;

  std::string to_json() const;
  /// One row per aggregate point.
  std::string summary_csv() const;
  /// One row per sample per sparsity.
  std::string samples_csv() const;
};

/// Explanations of the predicted class for every graph and sparsity;
/// result[g][s]. Graph-level models only.
std::vector<std::vector<Explanation>> explain_dataset(const ModelSpec& model, const Dataset& dataset,
                                                     const std::vector<double>& sparsities,
                                                     const AttributionOptions& attribution, int jobs);

MetricsReport fidelity_curve(const ModelSpec& model, const Dataset& dataset, const MetricsOptions& options);
MetricsReport discriminability_report(const ModelSpec& model, const Dataset& dataset, const MetricsOptions& options);
MetricsReport stability_report(const ModelSpec& model, const Dataset& dataset, const MetricsOptions& options);

std::string explanation_to_json(const Explanation& expl);

}  // namespace goat
