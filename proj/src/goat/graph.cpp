#include "goat/graph.hpp"

#include "goat/error.hpp"

#include "goat/json_util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace goat {

using detail::json;
using detail::as_int;
using detail::matrix_to_json;
using detail::parse_matrix;
using detail::parse_text;
using detail::read_file;
using detail::require;

Graph Graph::from_edges(int num_nodes, const std::vector<Edge>& edges, bool directed, Matrix features,
                        std::optional<int> graph_label, std::optional<std::vector<int>> node_labels) {
  if (num_nodes <= 0) throw validation_error("num_nodes must be positive, got " + std::to_string(num_nodes));
  Matrix adjacency = Matrix::Zero(num_nodes, num_nodes);
  for (const Edge& e : edges) {
    if (e.u < 0 || e.v < 0 || e.u >= num_nodes || e.v >= num_nodes) {
      throw validation_error("edge [" + std::to_string(e.u) + "," + std::to_string(e.v) + "] out of range for " +
                             std::to_string(num_nodes) + " nodes");
    }
    if (e.u == e.v) throw validation_error("self-loop on node " + std::to_string(e.u) + " is not allowed");
    adjacency(e.u, e.v) = 1.0;
    if (!directed) adjacency(e.v, e.u) = 1.0;
  }
  return from_adjacency(std::move(adjacency), directed, std::move(features), graph_label, std::move(node_labels));
}

Graph Graph::from_adjacency(Matrix adjacency, bool directed, Matrix features, std::optional<int> graph_label,
                            std::optional<std::vector<int>> node_labels) {
  Graph g;
  g.adjacency_ = std::move(adjacency);
  g.features_ = std::move(features);
  g.directed_ = directed;
  g.graph_label_ = graph_label;
  g.node_labels_ = std::move(node_labels);
  g.validate();
  return g;
}

void Graph::validate() const {
  const auto n = adjacency_.rows();
  if (n <= 0 || adjacency_.cols() != n) throw validation_error("adjacency must be a non-empty square matrix");
  if (features_.rows() != n) {
    throw validation_error("feature matrix has " + std::to_string(features_.rows()) + " rows, expected " +
                           std::to_string(n));
  }
  if (features_.cols() <= 0) throw validation_error("feature dimension must be positive");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (adjacency_(i, i) != 0.0) throw validation_error("adjacency diagonal must be 0 (node " + std::to_string(i) + ")");
    for (Eigen::Index j = 0; j < n; ++j) {
      const double a = adjacency_(i, j);
      if (a != 0.0 && a != 1.0) {
        throw validation_error("adjacency entry (" + std::to_string(i) + "," + std::to_string(j) + ") is not 0 or 1");
      }
      if (!directed_ && a != adjacency_(j, i)) {
        throw validation_error("undirected graph has asymmetric adjacency at (" + std::to_string(i) + "," +
                               std::to_string(j) + ")");
      }
    }
  }
  if (!features_.allFinite()) throw validation_error("features contain non-finite values");
  if (node_labels_ && static_cast<Eigen::Index>(node_labels_->size()) != n) {
    throw validation_error("node_labels has " + std::to_string(node_labels_->size()) + " entries, expected " +
                           std::to_string(n));
  }
}

std::vector<Edge> Graph::edges() const {
  std::vector<Edge> out;
  const int n = num_nodes();
  for (int i = 0; i < n; ++i) {
    for (int j = directed_ ? 0 : i + 1; j < n; ++j) {
      if (adjacency_(i, j) != 0.0) out.push_back({i, j});
    }
  }
  return out;
}

int Graph::num_edges() const {
  const auto nnz = static_cast<int>((adjacency_.array() != 0.0).count());
  return directed_ ? nnz : nnz / 2;
}

Graph Graph::with_edges(const std::vector<Edge>& keep) const {
  Matrix adjacency = Matrix::Zero(adjacency_.rows(), adjacency_.cols());
  for (const Edge& e : keep) {
    if (e.u < 0 || e.v < 0 || e.u >= num_nodes() || e.v >= num_nodes() || adjacency_(e.u, e.v) == 0.0) {
      throw invalid_argument("edge (" + std::to_string(e.u) + "," + std::to_string(e.v) + ") is not in the graph");
    }
    adjacency(e.u, e.v) = 1.0;
    if (!directed_) adjacency(e.v, e.u) = 1.0;
  }
  return from_adjacency(std::move(adjacency), directed_, features_, graph_label_, node_labels_);
}

Graph Graph::without_edges(const std::vector<Edge>& remove) const {
  Matrix adjacency = adjacency_;
  for (const Edge& e : remove) {
    if (e.u < 0 || e.v < 0 || e.u >= num_nodes() || e.v >= num_nodes() || adjacency_(e.u, e.v) == 0.0) {
      throw invalid_argument("edge (" + std::to_string(e.u) + "," + std::to_string(e.v) + ") is not in the graph");
    }
    adjacency(e.u, e.v) = 0.0;
    if (!directed_) adjacency(e.v, e.u) = 0.0;
  }
  return from_adjacency(std::move(adjacency), directed_, features_, graph_label_, node_labels_);
}

bool Graph::operator==(const Graph& other) const {
  return directed_ == other.directed_ && graph_label_ == other.graph_label_ && node_labels_ == other.node_labels_ &&
         adjacency_.rows() == other.adjacency_.rows() && features_.cols() == other.features_.cols() &&
         adjacency_ == other.adjacency_ && features_ == other.features_;
}

void Dataset::validate() const {
  if (num_classes <= 0) throw validation_error("num_classes must be positive");
  if (graphs.empty()) return;
  const int d = graphs.front().feature_dim();
  for (std::size_t g = 0; g < graphs.size(); ++g) {
    const Graph& graph = graphs[g];
    const std::string where = "graphs[" + std::to_string(g) + "]";
    if (graph.feature_dim() != d) {
      throw validation_error(where + " has feature dimension " + std::to_string(graph.feature_dim()) + ", expected " +
                             std::to_string(d));
    }
    if (graph.graph_label() && (*graph.graph_label() < 0 || *graph.graph_label() >= num_classes)) {
      throw validation_error(where + ".label out of range");
    }
    if (graph.node_labels()) {
      for (int label : *graph.node_labels()) {
        if (label < 0 || label >= num_classes) throw validation_error(where + ".node_labels out of range");
      }
    }
  }
}

namespace {

struct GraphExtras {
  bool directed = false;
  std::optional<int> label;
  std::optional<std::vector<int>> node_labels;
};

GraphExtras parse_extras(const json& j, const std::string& where) {
  GraphExtras e;
  if (auto it = j.find("directed"); it != j.end()) {
    if (!it->is_boolean()) throw parse_error(where + ".directed: expected boolean");
    e.directed = it->get<bool>();
  }
  if (auto it = j.find("label"); it != j.end() && !it->is_null()) e.label = as_int(*it, where + ".label");
  if (auto it = j.find("node_labels"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw parse_error(where + ".node_labels: expected array");
    std::vector<int> labels;
    for (std::size_t i = 0; i < it->size(); ++i) {
      labels.push_back(as_int((*it)[i], where + ".node_labels[" + std::to_string(i) + "]"));
    }
    e.node_labels = std::move(labels);
  }
  return e;
}

Graph graph_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw parse_error(where + ": expected object");
  const int n = as_int(require(j, "num_nodes", where), where + ".num_nodes");
  Matrix x = parse_matrix(require(j, "x", where), where + ".x");
  GraphExtras extras = parse_extras(j, where);
  if (auto it = j.find("adjacency"); it != j.end()) {
    Matrix a = parse_matrix(*it, where + ".adjacency");
    if (a.rows() != n) throw validation_error(where + ".adjacency: expected " + std::to_string(n) + " rows");
    return Graph::from_adjacency(std::move(a), extras.directed, std::move(x), extras.label,
                                 std::move(extras.node_labels));
  }
  const json& ej = require(j, "edges", where);
  if (!ej.is_array()) throw parse_error(where + ".edges: expected array");
  std::vector<Edge> edges;
  for (std::size_t k = 0; k < ej.size(); ++k) {
    const std::string ew = where + ".edges[" + std::to_string(k) + "]";
    if (!ej[k].is_array() || ej[k].size() != 2) throw parse_error(ew + ": expected [i,j]");
    edges.push_back({as_int(ej[k][0], ew), as_int(ej[k][1], ew)});
  }
  return Graph::from_edges(n, edges, extras.directed, std::move(x), extras.label, std::move(extras.node_labels));
}

json graph_to_json(const Graph& g) {
  json j;
  j["num_nodes"] = g.num_nodes();
  j["directed"] = g.directed();
  json edges = json::array();
  for (const Edge& e : g.edges()) edges.push_back({e.u, e.v});
  j["edges"] = std::move(edges);
  j["x"] = matrix_to_json(g.features());
  if (g.graph_label()) j["label"] = *g.graph_label();
  if (g.node_labels()) j["node_labels"] = *g.node_labels();
  return j;
}

int infer_num_classes(const std::vector<Graph>& graphs) {
  int top = 0;
  for (const Graph& g : graphs) {
    if (g.graph_label()) top = std::max(top, *g.graph_label() + 1);
    if (g.node_labels()) {
      for (int l : *g.node_labels()) top = std::max(top, l + 1);
    }
  }
  return std::max(top, 1);
}

Dataset dataset_from_parsed(const json& j, const std::string& where) {
  if (!j.is_object()) throw parse_error(where + ": expected object");
  Dataset ds;
  if (j.contains("graphs")) {
    const json& task = require(j, "task", where);
    if (task == "graph") {
      ds.task = Task::GraphClassification;
    } else if (task == "node") {
      ds.task = Task::NodeClassification;
    } else {
      throw parse_error(where + ".task: expected \"graph\" or \"node\"");
    }
    ds.num_classes = as_int(require(j, "num_classes", where), where + ".num_classes");
    const json& graphs = j["graphs"];
    if (!graphs.is_array()) throw parse_error(where + ".graphs: expected array");
    for (std::size_t g = 0; g < graphs.size(); ++g) {
      ds.graphs.push_back(graph_from_json(graphs[g], where + ".graphs[" + std::to_string(g) + "]"));
    }
  } else {
    ds.graphs.push_back(graph_from_json(j, where));
    ds.task = ds.graphs.front().node_labels() && !ds.graphs.front().graph_label() ? Task::NodeClassification
                                                                                  : Task::GraphClassification;
    ds.num_classes = infer_num_classes(ds.graphs);
  }
  ds.validate();
  return ds;
}

Dataset load_edge_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw parse_error(path.string() + ":1: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "src,dst") throw parse_error(path.string() + ":1: expected header \"src,dst\"");
  std::vector<Edge> edges;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (comma == std::string::npos) throw parse_error(where + ": expected \"src,dst\"");
    try {
      std::size_t used = 0;
      const int u = std::stoi(line.substr(0, comma), &used);
      if (used != comma) throw std::invalid_argument("src");
      const std::string rest = line.substr(comma + 1);
      const int v = std::stoi(rest, &used);
      if (used != rest.size()) throw std::invalid_argument("dst");
      edges.push_back({u, v});
    } catch (const std::logic_error&) {
      throw parse_error(where + ": src and dst must be integers");
    }
  }
  std::filesystem::path sibling = path;
  sibling.replace_extension(".json");
  const std::string where = sibling.string();
  const json j = parse_text(read_file(sibling), where);
  if (!j.is_object()) throw parse_error(where + ": expected object");
  Matrix x = parse_matrix(require(j, "x", where), where + ".x");
  GraphExtras extras = parse_extras(j, where);
  const int n = j.contains("num_nodes") ? as_int(j["num_nodes"], where + ".num_nodes") : static_cast<int>(x.rows());
  Dataset ds;
  ds.graphs.push_back(Graph::from_edges(n, edges, extras.directed, std::move(x), extras.label,
                                        std::move(extras.node_labels)));
  ds.task = ds.graphs.front().node_labels() ? Task::NodeClassification : Task::GraphClassification;
  ds.num_classes = infer_num_classes(ds.graphs);
  ds.validate();
  return ds;
}

}  // namespace

Dataset load_graphs(const std::filesystem::path& path, GraphFormat format) {
  if (format == GraphFormat::EdgeCsv) return load_edge_csv(path);
  return dataset_from_parsed(parse_text(read_file(path), path.string()), path.string());
}

std::string dataset_to_json(const Dataset& dataset) {
  json j;
  j["task"] = dataset.task == Task::GraphClassification ? "graph" : "node";
  j["num_classes"] = dataset.num_classes;
  json graphs = json::array();
  for (const Graph& g : dataset.graphs) graphs.push_back(graph_to_json(g));
  j["graphs"] = std::move(graphs);
  return j.dump();
}

Dataset dataset_from_json(const std::string& text) { return dataset_from_parsed(parse_text(text, "dataset"), "dataset"); }

void save_json(const Dataset& dataset, const std::filesystem::path& path) {
  detail::write_file(path, dataset_to_json(dataset) + "\n");
}

namespace {

// Preferential attachment with one edge per arriving node, seeded by a single
// edge between nodes 0 and 1.
std::vector<Edge> barabasi_albert_tree(int n, std::mt19937_64& rng) {
  std::vector<Edge> edges{{0, 1}};
  std::vector<int> endpoints{0, 1};
  for (int v = 2; v < n; ++v) {
    std::uniform_int_distribution<std::size_t> pick(0, endpoints.size() - 1);
    const int target = endpoints[pick(rng)];
    edges.push_back({target, v});
    endpoints.push_back(target);
    endpoints.push_back(v);
  }
  return edges;
}

}  // namespace

Dataset generate_ba2motifs(int count, int base_size, std::uint64_t seed) {
  if (count <= 0) throw invalid_argument("count must be positive");
  if (base_size < 5) throw invalid_argument("base_size must be at least 5, got " + std::to_string(base_size));
  std::mt19937_64 rng(seed);
  Dataset ds;
  ds.task = Task::GraphClassification;
  ds.num_classes = 2;
  ds.graphs.reserve(static_cast<std::size_t>(count));
  const int n = base_size + 5;
  for (int g = 0; g < count; ++g) {
    const int label = g % 2;
    std::vector<Edge> edges = barabasi_albert_tree(base_size, rng);
    const int m = base_size;
    for (int k = 0; k < 5; ++k) edges.push_back({m + k, m + (k + 1) % 5});
    if (label == 1) {
      // Square m..m+3 closed by the chord (m, m+3), roof m+4 over (m, m+3).
      edges.pop_back();
      edges.pop_back();
      edges.push_back({m, m + 3});
      edges.push_back({m + 4, m});
      edges.push_back({m + 4, m + 3});
    }
    std::uniform_int_distribution<int> motif_node(m, m + 4);
    std::uniform_int_distribution<int> base_node(0, m - 1);
    const int a = motif_node(rng);
    const int b = base_node(rng);
    edges.push_back({b, a});
    ds.graphs.push_back(Graph::from_edges(n, edges, false, Matrix::Ones(n, kBa2MotifsFeatureDim), label));
  }
  return ds;
}

Graph random_graph(int num_nodes, double edge_prob, int feature_dim, std::uint64_t seed) {
  if (num_nodes <= 0 || feature_dim <= 0) throw invalid_argument("random graph needs positive sizes");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(edge_prob);
  std::uniform_real_distribution<double> value(-1.0, 1.0);
  std::vector<Edge> edges;
  for (int i = 0; i < num_nodes; ++i) {
    for (int j = i + 1; j < num_nodes; ++j) {
      if (coin(rng)) edges.push_back({i, j});
    }
  }
  Matrix x = Matrix::NullaryExpr(num_nodes, feature_dim, [&] { return value(rng); });
  return Graph::from_edges(num_nodes, edges, false, std::move(x));
}

}  // namespace goat
