#include "goat/attribution.hpp"

#include "goat/error.hpp"
#include "goat/json_util.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace goat {

std::vector<Slot> term_slots(const TermClass& term) {
  std::vector<Slot> out;
  if (term.origin == TermClass::Origin::Features) out.push_back({Slot::Kind::Feature, -1, {}});
  for (std::size_t k = 0; k < term.ops.size(); ++k) {
    const Op& op = term.ops[k];
    if (op.kind == OpKind::Propagate) out.push_back({Slot::Kind::Adjacency, static_cast<int>(k), op.stage});
    if (op.kind == OpKind::Pattern) out.push_back({Slot::Kind::Pattern, static_cast<int>(k), op.stage});
  }
  return out;
}

namespace {

struct Sweep {
  double value = 0.0;
  std::vector<SlotContribution> slots;
};

Sweep sweep(const ModelSpec& model, const TermClass& term, const ForwardTrace& trace, OutputIndex output) {
  const std::size_t K = term.ops.size();
  std::vector<Matrix> partial;
  partial.reserve(K + 1);
  partial.push_back(origin_value(model, term, trace));
  for (const Op& op : term.ops) partial.push_back(apply_op(model, op, partial.back(), trace));
  const Matrix& out = partial.back();
  if (output.row < 0 || output.row >= out.rows() || output.cls < 0 || output.cls >= out.cols()) {
    throw invalid_argument("output index (" + std::to_string(output.row) + "," + std::to_string(output.cls) +
                           ") outside the " + std::to_string(out.rows()) + "x" + std::to_string(out.cols()) +
                           " output");
  }
  Sweep s;
  s.value = out(output.row, output.cls);
  Matrix adjoint = Matrix::Zero(out.rows(), out.cols());
  adjoint(output.row, output.cls) = 1.0;
  for (std::size_t k = K; k-- > 0;) {
    const Op& op = term.ops[k];
    if (op.kind == OpKind::Propagate) {
      s.slots.push_back({-1, {Slot::Kind::Adjacency, static_cast<int>(k), op.stage},
                         trace.propagation.cwiseProduct(adjoint * partial[k].transpose())});
    } else if (op.kind == OpKind::Pattern) {
      // pattern ⊙ input is the op's own output.
      s.slots.push_back({-1, {Slot::Kind::Pattern, static_cast<int>(k), op.stage},
                         partial[k + 1].cwiseProduct(adjoint)});
    }
    adjoint = apply_op_adjoint(model, op, adjoint, trace);
  }
  if (term.origin == TermClass::Origin::Features) {
    s.slots.push_back({-1, {Slot::Kind::Feature, -1, {}}, trace.features.cwiseProduct(adjoint)});
  }
  std::reverse(s.slots.begin(), s.slots.end());
  return s;
}

}  // namespace

std::vector<SlotContribution> sweep_all_slots(const ModelSpec& model, const TermClass& term, const ForwardTrace& trace,
                                              OutputIndex output) {
  check_trace(model, trace);
  return sweep(model, term, trace, output).slots;
}

SlotContribution slot_sweep(const ModelSpec& model, const TermClass& term, const ForwardTrace& trace, const Slot& slot,
                            OutputIndex output) {
  for (auto& c : sweep_all_slots(model, term, trace, output)) {
    if (c.slot.kind == slot.kind && c.slot.op_index == slot.op_index) return std::move(c);
  }
  throw invalid_argument("slot is not part of term " + term.signature());
}

VariableAttribution attribute_variables(const ModelSpec& model, const std::vector<TermClass>& terms,
                                        const ForwardTrace& trace, OutputIndex output, bool features_as_variables) {
  check_trace(model, trace);
  const auto n = trace.features.rows();
  VariableAttribution v;
  v.adjacency = Matrix::Zero(n, n);
  v.features = Matrix::Zero(n, trace.features.cols());
  for (const auto& layer : trace.conv) {
    std::vector<Matrix> subs;
    for (const auto& rec : layer) subs.push_back(Matrix::Zero(rec.pattern.rows(), rec.pattern.cols()));
    v.conv_patterns.push_back(std::move(subs));
  }
  for (const auto& rec : trace.classifier) v.classifier_patterns.push_back(Matrix::Zero(rec.pattern.rows(), rec.pattern.cols()));

  for (const TermClass& term : terms) {
    Sweep s = sweep(model, term, trace, output);
    v.term_values.push_back(s.value);
    const int denom = count_occurrences(term).denominator(features_as_variables);
    if (denom == 0) {
      v.unattributed += s.value;
      continue;
    }
    const double inv = 1.0 / denom;
    for (const SlotContribution& c : s.slots) {
      switch (c.slot.kind) {
        case Slot::Kind::Feature:
          if (features_as_variables) v.features += c.entries * inv;
          break;
        case Slot::Kind::Adjacency: v.adjacency += c.entries * inv; break;
        case Slot::Kind::Pattern: {
          const StageRef& st = c.slot.stage;
          Matrix& dst = st.section == StageRef::Section::Classifier
                            ? v.classifier_patterns[static_cast<std::size_t>(st.layer)]
                            : v.conv_patterns[static_cast<std::size_t>(st.layer)][static_cast<std::size_t>(st.sublayer)];
          dst += c.entries * inv;
          break;
        }
      }
    }
  }
  return v;
}

std::vector<Edge> hop_neighborhood(const Graph& graph, int node, int r) {
  const int n = graph.num_nodes();
  if (node < 0 || node >= n) throw invalid_argument("node index out of range");
  if (r < 1) throw invalid_argument("hop count must be at least 1");
  const Matrix& a = graph.adjacency();
  constexpr int kUnreached = std::numeric_limits<int>::max();
  std::vector<int> dist(static_cast<std::size_t>(n), kUnreached);
  std::deque<int> queue{node};
  dist[static_cast<std::size_t>(node)] = 0;
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    if (dist[static_cast<std::size_t>(u)] >= r - 1) continue;
    for (int w = 0; w < n; ++w) {
      if ((a(u, w) != 0.0 || a(w, u) != 0.0) && dist[static_cast<std::size_t>(w)] == kUnreached) {
        dist[static_cast<std::size_t>(w)] = dist[static_cast<std::size_t>(u)] + 1;
        queue.push_back(w);
      }
    }
  }
  std::vector<Edge> out;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j || a(i, j) == 0.0) continue;
      if (std::min(dist[static_cast<std::size_t>(i)], dist[static_cast<std::size_t>(j)]) <= r - 1) out.push_back({i, j});
    }
  }
  return out;
}

namespace {

// Inputs that can move one pattern entry: adjacency entries and, when
// features are variables, the non-zero features of the owning node(s).
struct InfluenceSet {
  std::vector<Edge> entries;
  std::vector<std::pair<int, int>> features;
  std::vector<int> fallback_nodes;  // receive the share on (a, a) when the set is empty
  std::size_t size() const { return entries.size() + features.size(); }
};

class Redistributor {
 public:
  Redistributor(const ModelSpec& model, const Graph& graph, bool features_as_variables)
      : graph_(graph), fav_(features_as_variables), layers_(static_cast<int>(model.conv_layers.size())) {
    const int n = graph.num_nodes();
    for (int r = 1; r <= layers_; ++r) {
      std::vector<InfluenceSet> per_node;
      for (int a = 0; a < n; ++a) {
        InfluenceSet s;
        s.entries = hop_neighborhood(graph, a, r);
        if (fav_) add_features(a, s);
        s.fallback_nodes = {a};
        per_node.push_back(std::move(s));
      }
      by_radius_.push_back(std::move(per_node));
    }
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i != j && graph.adjacency()(i, j) != 0.0) whole_graph_.entries.push_back({i, j});
      }
      if (fav_) add_features(i, whole_graph_);
      whole_graph_.fallback_nodes.push_back(i);
    }
  }

  /// Adds sign * (pattern attributions) onto adjacency and feature scores.
  void apply(const VariableAttribution& v, bool pooled, double sign, Matrix& adjacency, Matrix& features) const {
    for (std::size_t l = 0; l < v.conv_patterns.size(); ++l) {
      for (const Matrix& p : v.conv_patterns[l]) spread_rows(p, static_cast<int>(l) + 1, sign, adjacency, features);
    }
    for (const Matrix& p : v.classifier_patterns) {
      if (pooled) {
        spread(whole_graph_, sign * p.sum(), adjacency, features);
      } else {
        spread_rows(p, layers_, sign, adjacency, features);
      }
    }
  }

 private:
  void add_features(int a, InfluenceSet& s) const {
    for (int f = 0; f < graph_.feature_dim(); ++f) {
      if (graph_.features()(a, f) != 0.0) s.features.emplace_back(a, f);
    }
  }

  void spread_rows(const Matrix& p, int radius, double sign, Matrix& adjacency, Matrix& features) const {
    const auto& sets = by_radius_[static_cast<std::size_t>(radius - 1)];
    for (Eigen::Index a = 0; a < p.rows(); ++a) {
      spread(sets[static_cast<std::size_t>(a)], sign * p.row(a).sum(), adjacency, features);
    }
  }

  static void spread(const InfluenceSet& s, double total, Matrix& adjacency, Matrix& features) {
    if (total == 0.0) return;
    if (s.size() == 0) {
      const double share = total / static_cast<double>(s.fallback_nodes.size());
      for (int a : s.fallback_nodes) adjacency(a, a) += share;
      return;
    }
    const double share = total / static_cast<double>(s.size());
    for (const Edge& e : s.entries) adjacency(e.u, e.v) += share;
    for (const auto& [a, f] : s.features) features(a, f) += share;
  }

  const Graph& graph_;
  bool fav_;
  int layers_;
  std::vector<std::vector<InfluenceSet>> by_radius_;
  InfluenceSet whole_graph_;
};

double pattern_total(const VariableAttribution& v) {
  double t = 0.0;
  for (const auto& layer : v.conv_patterns) {
    for (const Matrix& p : layer) t += p.sum();
  }
  for (const Matrix& p : v.classifier_patterns) t += p.sum();
  return t;
}

}  // namespace

std::size_t AttributionResult::class_column(int cls) const {
  for (std::size_t k = 0; k < classes.size(); ++k) {
    if (classes[k] == cls) return k;
  }
  throw invalid_argument("class " + std::to_string(cls) + " was not attributed");
}

double AttributionResult::max_relative_residual() const {
  double worst = 0.0;
  for (Eigen::Index k = 0; k < completeness_residual.size(); ++k) {
    const double scale = std::max({1.0, std::abs(output(k)), std::abs(baseline(k))});
    worst = std::max(worst, completeness_residual(k) / scale);
  }
  return worst;
}

AttributionResult attribute(const ModelSpec& model, const Graph& graph, const AttributionOptions& options) {
  const bool pooled = model.pooling == Pooling::Mean;
  int row = 0;
  if (!pooled) {
    if (!options.target_node) throw invalid_argument("node-level models need a target node row");
    if (*options.target_node < 0 || *options.target_node >= graph.num_nodes()) {
      throw invalid_argument("target node " + std::to_string(*options.target_node) + " out of range");
    }
    row = *options.target_node;
  } else if (options.target_node) {
    throw invalid_argument("a target node row only applies to models without pooling");
  }
  std::vector<int> classes = options.classes;
  if (classes.empty()) {
    for (int c = 0; c < model.num_classes; ++c) classes.push_back(c);
  }
  for (int c : classes) {
    if (c < 0 || c >= model.num_classes) throw invalid_argument("class " + std::to_string(c) + " out of range");
  }

  const ForwardTrace trace = run_forward(model, graph);
  const std::vector<TermClass> terms = enumerate_terms(model);
  const ForwardTrace baseline = run_zero_baseline(model, graph.num_nodes(), graph.feature_dim());
  const Redistributor redistribute(model, graph, options.features_as_variables);

  const int n = graph.num_nodes();
  const auto num_cls = static_cast<Eigen::Index>(classes.size());
  AttributionResult res;
  res.edges = graph.edges();
  res.edge_scores = Matrix::Zero(static_cast<Eigen::Index>(res.edges.size()), num_cls);
  res.diagonal_scores = Matrix::Zero(n, num_cls);
  res.classes = classes;
  res.target_node = options.target_node;
  res.features_as_variables = options.features_as_variables;
  res.calibrated = options.calibrate;
  res.output = Vector::Zero(num_cls);
  res.baseline = Vector::Zero(num_cls);
  res.completeness_residual = Vector::Zero(num_cls);
  if (options.features_as_variables) res.feature_scores.emplace();

  for (Eigen::Index k = 0; k < num_cls; ++k) {
    const OutputIndex out{row, classes[static_cast<std::size_t>(k)]};
    const VariableAttribution raw = attribute_variables(model, terms, trace, out, options.features_as_variables);
    Matrix adjacency = raw.adjacency;
    Matrix features = raw.features;
    redistribute.apply(raw, pooled, 1.0, adjacency, features);
    if (options.calibrate) {
      const VariableAttribution base =
          attribute_variables(model, terms, baseline, out, options.features_as_variables);
      redistribute.apply(base, pooled, -1.0, adjacency, features);
    }

    double total = 0.0;
    for (std::size_t e = 0; e < res.edges.size(); ++e) {
      const Edge& edge = res.edges[e];
      double s = adjacency(edge.u, edge.v);
      if (!graph.directed()) s += adjacency(edge.v, edge.u);
      res.edge_scores(static_cast<Eigen::Index>(e), k) = s;
      total += s;
    }
    for (int a = 0; a < n; ++a) {
      res.diagonal_scores(a, k) = adjacency(a, a);
      total += adjacency(a, a);
    }
    if (res.feature_scores) {
      res.feature_scores->push_back(features);
      total += features.sum();
    }
    res.output(k) = trace.logits(out.row, out.cls);
    res.baseline(k) = baseline.logits(out.row, out.cls);
    res.completeness_residual(k) = std::abs(total - (res.output(k) - res.baseline(k)));

    const double pat = pattern_total(raw);
    const double all = pat + raw.adjacency.sum() + raw.features.sum();
    res.pattern_share.push_back(all != 0.0 ? pat / all : 0.0);
    res.term_values.push_back(raw.term_values);
  }
  return res;
}

std::string attribution_to_json(const AttributionResult& r) {
  using detail::json;
  json j;
  json edges = json::array();
  for (std::size_t e = 0; e < r.edges.size(); ++e) {
    json row;
    row["u"] = r.edges[e].u;
    row["v"] = r.edges[e].v;
    row["score_per_class"] = detail::vector_to_json(r.edge_scores.row(static_cast<Eigen::Index>(e)));
    edges.push_back(std::move(row));
  }
  j["edges"] = std::move(edges);
  json diag = json::array();
  for (Eigen::Index a = 0; a < r.diagonal_scores.rows(); ++a) diag.push_back(detail::vector_to_json(r.diagonal_scores.row(a)));
  j["diagonal"] = std::move(diag);
  j["residual"] = detail::vector_to_json(r.completeness_residual);
  j["classes"] = r.classes;
  j["output"] = detail::vector_to_json(r.output);
  j["baseline"] = detail::vector_to_json(r.baseline);
  j["mode"] = {{"features_as_variables", r.features_as_variables}, {"calibrated", r.calibrated}};
  j["target_node"] = r.target_node ? json(*r.target_node) : json(nullptr);
  if (r.feature_scores) {
    json fs = json::array();
    for (const Matrix& m : *r.feature_scores) fs.push_back(detail::matrix_to_json(m));
    j["feature_scores"] = std::move(fs);
  }
  j["pattern_share"] = r.pattern_share;
  return j.dump();
}

}  // namespace goat
