#pragma once

#include <Eigen/Dense>

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace goat {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// An adjacency entry or an undirected edge. For undirected graphs edges are
/// always reported with u < v.
struct Edge {
  int u = 0;
  int v = 0;
  auto operator<=>(const Edge&) const = default;
};

/// An explained instance: 0/1 adjacency without self-loops plus an N x d
/// feature matrix. Immutable once built; every constructor path validates.
class Graph {
 public:
  /// Builds from an edge list. Undirected inputs are symmetrized.
  static Graph from_edges(int num_nodes, const std::vector<Edge>& edges, bool directed, Matrix features,
                          std::optional<int> graph_label = std::nullopt,
                          std::optional<std::vector<int>> node_labels = std::nullopt);

  /// Builds from a dense adjacency. Rejects asymmetric input when undirected.
  static Graph from_adjacency(Matrix adjacency, bool directed, Matrix features,
                              std::optional<int> graph_label = std::nullopt,
                              std::optional<std::vector<int>> node_labels = std::nullopt);

  int num_nodes() const { return static_cast<int>(adjacency_.rows()); }
  int feature_dim() const { return static_cast<int>(features_.cols()); }
  bool directed() const { return directed_; }
  const Matrix& adjacency() const { return adjacency_; }
  const Matrix& features() const { return features_; }
  const std::optional<int>& graph_label() const { return graph_label_; }
  const std::optional<std::vector<int>>& node_labels() const { return node_labels_; }

  /// Undirected edges (u < v) or directed entries, in lexicographic order.
  std::vector<Edge> edges() const;
  int num_edges() const;

  /// Same nodes and features, only the listed edges kept.
  Graph with_edges(const std::vector<Edge>& keep) const;
  /// Same nodes and features, the listed edges removed (both directions when undirected).
  Graph without_edges(const std::vector<Edge>& remove) const;

  bool operator==(const Graph& other) const;

 private:
  Graph() = default;
  void validate() const;

  Matrix adjacency_;
  Matrix features_;
  bool directed_ = false;
  std::optional<int> graph_label_;
  std::optional<std::vector<int>> node_labels_;
};

enum class Task { GraphClassification, NodeClassification };

struct Dataset {
  std::vector<Graph> graphs;
  Task task = Task::GraphClassification;
  int num_classes = 1;

  /// Shared feature dimension and label range.
  void validate() const;
  bool operator==(const Dataset& other) const = default;
};

enum class GraphFormat { Json, EdgeCsv };

/// Reads a Dataset JSON, a single Graph JSON, or an edge CSV whose features
/// live in the sibling file with the same stem and a `.json` extension.
Dataset load_graphs(const std::filesystem::path& path, GraphFormat format);

std::string dataset_to_json(const Dataset& dataset);
Dataset dataset_from_json(const std::string& text);
void save_json(const Dataset& dataset, const std::filesystem::path& path);

/// Barabasi-Albert base (one edge per new node) with a house (label 1) or a
/// 5-cycle (label 0) attached by one bridging edge. Features are all-ones,
/// 10 columns. Labels alternate so the classes are balanced.
Dataset generate_ba2motifs(int count, int base_size, std::uint64_t seed);

inline constexpr int kBa2MotifsFeatureDim = 10;

/// Erdos-Renyi undirected graph with features uniform in [-1, 1].
Graph random_graph(int num_nodes, double edge_prob, int feature_dim, std::uint64_t seed);

}  // namespace goat
