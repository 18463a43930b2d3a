#include "goat/oracle.hpp"

#include "goat/attribution.hpp"
#include "goat/error.hpp"
#include "goat/json_util.hpp"

#include <algorithm>
#include <cmath>

namespace goat {

namespace {

struct Mono {
  double constant = 1.0;
  double value = 1.0;
  std::vector<VariableId> vars;
};
using Poly = std::vector<Mono>;

// Entry algebra: full polynomials, or just their monomial counts.
struct PolyOps {
  using Entry = Poly;
  static Entry leaf(double constant, double value, const VariableId* var) {
    Mono m{constant, value, {}};
    if (var) m.vars.push_back(*var);
    return {std::move(m)};
  }
  static void accumulate(Entry& dst, const Entry& src, double coef, const VariableId* var, double var_value) {
    for (const Mono& m : src) {
      Mono out{m.constant * coef, m.value * coef, m.vars};
      if (var) {
        out.value *= var_value;
        out.vars.push_back(*var);
      }
      dst.push_back(std::move(out));
    }
  }
};

struct CountOps {
  using Entry = double;
  static Entry leaf(double, double, const VariableId*) { return 1.0; }
  static void accumulate(Entry& dst, const Entry& src, double, const VariableId*, double) { dst += src; }
};

template <class Ops>
struct Grid {
  int rows = 0;
  int cols = 0;
  std::vector<typename Ops::Entry> data;
  Grid(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c)) {}
  typename Ops::Entry& at(int i, int j) { return data[static_cast<std::size_t>(i) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(j)]; }
  const typename Ops::Entry& at(int i, int j) const {
    return data[static_cast<std::size_t>(i) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(j)];
  }
};

template <class Ops>
class Expander {
 public:
  using G = Grid<Ops>;

  Expander(const ModelSpec& model, const ForwardTrace& trace, bool fav) : model_(model), trace_(trace), fav_(fav) {}

  G run() {
    const Matrix& x = trace_.features;
    const int n = static_cast<int>(x.rows());
    G h(n, static_cast<int>(x.cols()));
    for (int i = 0; i < n; ++i) {
      for (int f = 0; f < h.cols; ++f) {
        const VariableId v = VariableId::feature(i, f);
        h.at(i, f) = fav_ ? Ops::leaf(1.0, x(i, f), &v) : Ops::leaf(x(i, f), x(i, f), nullptr);
      }
    }
    for (std::size_t l = 0; l < model_.conv_layers.size(); ++l) {
      const int li = static_cast<int>(l);
      const auto& recs = trace_.conv[l];
      if (const auto* gcn = std::get_if<GcnConv>(&model_.conv_layers[l])) {
        h = dense(propagate(h), gcn->linear, {StageRef::Section::Conv, li, 0}, recs[0]);
      } else if (const auto* sage = std::get_if<SageConv>(&model_.conv_layers[l])) {
        G z = matmul(propagate(h), sage->w_neighbor);
        append(z, matmul(h, sage->w_self));
        if (sage->bias) add_bias(z, *sage->bias);
        h = pattern(z, sage->activation, {StageRef::Section::Conv, li, 0}, recs[0]);
      } else {
        const auto& gin = std::get<GinConv>(model_.conv_layers[l]);
        G z = propagate(h);
        append(z, scale(h, gin.eps));
        for (std::size_t s = 0; s < gin.mlp.size(); ++s) {
          z = dense(z, gin.mlp[s], {StageRef::Section::Conv, li, static_cast<int>(s)}, recs[s]);
        }
        h = std::move(z);
      }
    }
    if (model_.pooling == Pooling::Mean) h = pool(h);
    for (std::size_t k = 0; k < model_.classifier.size(); ++k) {
      h = dense(h, model_.classifier[k], {StageRef::Section::Classifier, static_cast<int>(k), 0}, trace_.classifier[k]);
    }
    return h;
  }

 private:
  G propagate(const G& h) const {
    const Matrix& p = trace_.propagation;
    G out(h.rows, h.cols);
    for (int i = 0; i < h.rows; ++i) {
      for (int k = 0; k < h.rows; ++k) {
        if (p(i, k) == 0.0) continue;
        const VariableId v = VariableId::adjacency(i, k);
        for (int j = 0; j < h.cols; ++j) Ops::accumulate(out.at(i, j), h.at(k, j), 1.0, &v, p(i, k));
      }
    }
    return out;
  }

  static G matmul(const G& h, const Matrix& w) {
    G out(h.rows, static_cast<int>(w.cols()));
    for (int i = 0; i < h.rows; ++i) {
      for (int j = 0; j < out.cols; ++j) {
        for (int f = 0; f < h.cols; ++f) Ops::accumulate(out.at(i, j), h.at(i, f), w(f, j), nullptr, 1.0);
      }
    }
    return out;
  }

  static G scale(const G& h, double c) {
    G out(h.rows, h.cols);
    for (std::size_t e = 0; e < h.data.size(); ++e) Ops::accumulate(out.data[e], h.data[e], c, nullptr, 1.0);
    return out;
  }

  static void append(G& dst, const G& src) {
    for (std::size_t e = 0; e < dst.data.size(); ++e) Ops::accumulate(dst.data[e], src.data[e], 1.0, nullptr, 1.0);
  }

  static void add_bias(G& h, const RowVector& b) {
    for (int i = 0; i < h.rows; ++i) {
      for (int j = 0; j < h.cols; ++j) Ops::accumulate(h.at(i, j), Ops::leaf(b(j), b(j), nullptr), 1.0, nullptr, 1.0);
    }
  }

  static G pattern(const G& h, Activation act, StageRef stage, const LayerRecord& rec) {
    if (act == Activation::None) return h;
    G out(h.rows, h.cols);
    for (int i = 0; i < h.rows; ++i) {
      for (int j = 0; j < h.cols; ++j) {
        const VariableId v = VariableId::pattern(stage, i, j);
        Ops::accumulate(out.at(i, j), h.at(i, j), 1.0, &v, rec.pattern(i, j));
      }
    }
    return out;
  }

  static G dense(const G& h, const DenseLayer& layer, StageRef stage, const LayerRecord& rec) {
    G z = matmul(h, layer.weight);
    if (layer.bias) add_bias(z, *layer.bias);
    return pattern(z, layer.activation, stage, rec);
  }

  static G pool(const G& h) {
    G out(1, h.cols);
    const double inv = 1.0 / h.rows;
    for (int i = 0; i < h.rows; ++i) {
      for (int j = 0; j < h.cols; ++j) Ops::accumulate(out.at(0, j), h.at(i, j), inv, nullptr, 1.0);
    }
    return out;
  }

  const ModelSpec& model_;
  const ForwardTrace& trace_;
  bool fav_;
};

void check_limits(const ModelSpec& model, const ForwardTrace& trace, const OracleLimits& limits) {
  auto fail = [](const std::string& what, long long got, long long max) {
    throw domain_error("oracle expansion limited to " + what + " <= " + std::to_string(max) + ", got " +
                       std::to_string(got));
  };
  if (trace.num_nodes() > limits.max_nodes) fail("nodes", trace.num_nodes(), limits.max_nodes);
  if (trace.features.cols() > limits.max_features) fail("feature columns", trace.features.cols(), limits.max_features);
  const auto layers = static_cast<long long>(model.conv_layers.size());
  if (layers > limits.max_conv_layers) fail("conv layers", layers, limits.max_conv_layers);
  auto width = [&](int w) {
    if (w > limits.max_width) fail("layer width", w, limits.max_width);
  };
  for (const ConvLayer& c : model.conv_layers) {
    width(conv_out_dim(c));
    if (const auto* gin = std::get_if<GinConv>(&c)) {
      for (const DenseLayer& d : gin->mlp) width(d.out_dim());
    }
  }
  for (const DenseLayer& d : model.classifier) width(d.out_dim());
}

}  // namespace

int unique_variable_count(const ScalarProduct& z) {
  int n = 0;
  for (std::size_t k = 0; k < z.variables.size(); ++k) {
    if (k == 0 || z.variables[k] != z.variables[k - 1]) ++n;
  }
  return n;
}

int occurrence_count(const ScalarProduct& z, const VariableId& v) {
  const auto [lo, hi] = std::equal_range(z.variables.begin(), z.variables.end(), v);
  return static_cast<int>(hi - lo);
}

double count_products(const ModelSpec& model, const ForwardTrace& trace) {
  check_trace(model, trace);
  const auto out = Expander<CountOps>(model, trace, false).run();
  double total = 0.0;
  for (double c : out.data) total += c;
  return total;
}

std::vector<ScalarProduct> expand_trace(const ModelSpec& model, const ForwardTrace& trace, bool features_as_variables,
                                        const OracleLimits& limits) {
  check_limits(model, trace, limits);
  const double count = count_products(model, trace);
  if (count > static_cast<double>(limits.max_products)) {
    throw domain_error("oracle expansion would create " + std::to_string(static_cast<long long>(count)) +
                       " products, limit is " + std::to_string(limits.max_products));
  }
  const auto out = Expander<PolyOps>(model, trace, features_as_variables).run();
  std::vector<ScalarProduct> products;
  products.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < out.rows; ++i) {
    for (int c = 0; c < out.cols; ++c) {
      for (const Mono& m : out.at(i, c)) {
        ScalarProduct z{m.value, m.constant, i, c, m.vars};
        std::sort(z.variables.begin(), z.variables.end());
        products.push_back(std::move(z));
      }
    }
  }
  return products;
}

std::vector<ScalarProduct> expand_all(const ModelSpec& model, const Graph& graph, bool features_as_variables,
                                      const OracleLimits& limits) {
  return expand_trace(model, run_forward(model, graph), features_as_variables, limits);
}

double product_share(const ScalarProduct& z, OracleMode mode, const VariableId& v) {
  const int o = occurrence_count(z, v);
  if (o == 0) return 0.0;
  if (mode == OracleMode::EqualShare) return z.value / unique_variable_count(z);
  return (o * z.value) / static_cast<double>(z.variables.size());
}

double oracle_attribute(std::span<const ScalarProduct> products, OracleMode mode, const VariableId& variable) {
  double total = 0.0;
  for (const ScalarProduct& z : products) total += product_share(z, mode, variable);
  return total;
}

std::map<VariableId, double> oracle_attribute_all(std::span<const ScalarProduct> products, OracleMode mode) {
  std::map<VariableId, double> out;
  for (const ScalarProduct& z : products) {
    const auto& vars = z.variables;
    for (std::size_t k = 0; k < vars.size();) {
      std::size_t e = k;
      while (e < vars.size() && vars[e] == vars[k]) ++e;
      out[vars[k]] += product_share(z, mode, vars[k]);
      k = e;
    }
  }
  return out;
}

std::vector<ScalarProduct> products_for(std::span<const ScalarProduct> products, int row, int cls) {
  std::vector<ScalarProduct> out;
  for (const ScalarProduct& z : products) {
    if (z.row == row && z.cls == cls) out.push_back(z);
  }
  return out;
}

bool OracleReport::passed() const {
  return std::all_of(suites.begin(), suites.end(), [](const OracleSuiteResult& s) { return s.passed; });
}

std::string OracleReport::to_json() const {
  detail::json j;
  j["passed"] = passed();
  detail::json arr = detail::json::array();
  for (const auto& s : suites) {
    arr.push_back({{"name", s.name},
                   {"cases", s.cases},
                   {"max_deviation", s.max_deviation},
                   {"tolerance", s.tolerance},
                   {"passed", s.passed}});
  }
  j["suites"] = std::move(arr);
  return j.dump(2);
}

namespace {

// Per-entry scores on the adjacency operand (N x N) and the features (N x d),
// pattern attributions handed on by a plain reading of the influence sets.
struct OracleScores {
  Matrix adjacency;
  Matrix features;
};

void hand_on(const Graph& graph, const std::vector<Edge>& entries, const std::vector<int>& owners, bool fav,
             double total, OracleScores& s) {
  std::vector<std::pair<int, int>> feats;
  if (fav) {
    for (int a : owners) {
      for (int f = 0; f < graph.feature_dim(); ++f) {
        if (graph.features()(a, f) != 0.0) feats.emplace_back(a, f);
      }
    }
  }
  const std::size_t size = entries.size() + feats.size();
  if (size == 0) {
    for (int a : owners) s.adjacency(a, a) += total / static_cast<double>(owners.size());
    return;
  }
  const double share = total / static_cast<double>(size);
  for (const Edge& e : entries) s.adjacency(e.u, e.v) += share;
  for (const auto& [a, f] : feats) s.features(a, f) += share;
}

void add_scores(const ModelSpec& model, const Graph& graph, std::span<const ScalarProduct> products, bool fav,
                double sign, OracleScores& s) {
  const int n = graph.num_nodes();
  const int layers = static_cast<int>(model.conv_layers.size());
  const bool pooled = model.pooling == Pooling::Mean;
  // Pattern totals per (radius, owner node); radius 0 marks the whole graph.
  std::map<std::pair<int, int>, double> pattern_totals;
  for (const auto& [v, value] : oracle_attribute_all(products, OracleMode::OccurrenceWeighted)) {
    switch (v.kind) {
      case VariableId::Kind::Adjacency: s.adjacency(v.i, v.j) += sign * value; break;
      case VariableId::Kind::Feature: s.features(v.i, v.j) += sign * value; break;
      case VariableId::Kind::Pattern:
        if (v.stage.section == StageRef::Section::Conv) {
          pattern_totals[{v.stage.layer + 1, v.i}] += sign * value;
        } else if (pooled) {
          pattern_totals[{0, 0}] += sign * value;
        } else {
          pattern_totals[{layers, v.i}] += sign * value;
        }
        break;
    }
  }
  for (const auto& [key, total] : pattern_totals) {
    if (total == 0.0) continue;
    const auto [radius, a] = key;
    if (radius == 0) {
      std::vector<Edge> all;
      std::vector<int> owners;
      for (int i = 0; i < n; ++i) {
        owners.push_back(i);
        for (int j = 0; j < n; ++j) {
          if (i != j && graph.adjacency()(i, j) != 0.0) all.push_back({i, j});
        }
      }
      hand_on(graph, all, owners, fav, total, s);
    } else {
      hand_on(graph, hop_neighborhood(graph, a, radius), {a}, fav, total, s);
    }
  }
}

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

ModelSpec perturbed(ModelSpec model) {
  std::visit(
      [](auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, GcnConv>) {
          c.linear.weight(0, 0) += 0.5;
        } else if constexpr (std::is_same_v<T, SageConv>) {
          c.w_neighbor(0, 0) += 0.5;
        } else {
          c.mlp.front().weight(0, 0) += 0.5;
        }
      },
      model.conv_layers.front());
  return model;
}

struct Tracker {
  OracleSuiteResult r;
  void observe(double deviation) {
    ++r.cases;
    if (!(deviation <= r.max_deviation)) r.max_deviation = std::isnan(deviation) ? INFINITY : deviation;
  }
};

}  // namespace

OracleReport run_oracle_suite(const OracleSuiteConfig& config) {
  if (config.nodes < 2 || config.conv_layers < 1 || config.feature_dim < 1 || config.width < 1 ||
      config.models_per_arch < 1) {
    throw invalid_argument("oracle suite sizes must be positive (and at least 2 nodes)");
  }
  Tracker recon{{"reconstruction"}};
  Tracker agree{{"mode-agreement"}};
  Tracker equal{{"equal-contribution"}};
  Tracker vars{{"variable-equivalence"}};
  Tracker e2e{{"end-to-end"}};

  std::uint64_t seed = config.seed;
  for (Arch arch : {Arch::Gcn, Arch::Sage, Arch::Gin}) {
    for (int m = 0; m < config.models_per_arch; ++m) {
      RandomModelOptions opts;
      opts.arch = arch;
      opts.input_dim = config.feature_dim;
      opts.hidden = config.width;
      opts.conv_layers = config.conv_layers;
      opts.classifier_layers = 2;
      opts.num_classes = 2;
      opts.pooling = m % 2 == 0 ? Pooling::Mean : Pooling::None;
      opts.bias_scale = 0.5;
      opts.gin_eps = arch == Arch::Gin ? 0.25 : 0.0;
      opts.seed = ++seed;
      const ModelSpec model = random_model(opts);
      const Graph graph = random_graph(config.nodes, 0.45, config.feature_dim, ++seed);
      const ModelSpec expanded = config.inject_perturbation ? perturbed(model) : model;
      const ForwardTrace trace = run_forward(model, graph);
      const ForwardTrace base = run_zero_baseline(model, graph.num_nodes(), graph.feature_dim());
      const bool pooled = opts.pooling == Pooling::Mean;
      const int rows = pooled ? 1 : graph.num_nodes();
      const std::vector<TermClass> terms = enumerate_terms(model);

      for (bool fav : {false, true}) {
        const auto products = expand_trace(expanded, trace, fav);
        const auto base_products = expand_trace(expanded, base, fav);

        for (int row = 0; row < rows; ++row) {
          for (int cls = 0; cls < model.num_classes; ++cls) {
            const auto zs = products_for(products, row, cls);
            const auto bzs = products_for(base_products, row, cls);

            double sum = 0.0;
            for (const auto& z : zs) sum += z.value;
            recon.observe(std::abs(sum - trace.logits(row, cls)));

            for (const auto& z : zs) {
              const int u = unique_variable_count(z);
              if (u == 0) continue;
              double spread_lo = INFINITY, spread_hi = -INFINITY, share_sum = 0.0, occ_sum = 0.0;
              for (std::size_t k = 0; k < z.variables.size(); ++k) {
                if (k > 0 && z.variables[k] == z.variables[k - 1]) continue;
                const double s_equal = product_share(z, OracleMode::EqualShare, z.variables[k]);
                const double s_occ = product_share(z, OracleMode::OccurrenceWeighted, z.variables[k]);
                spread_lo = std::min(spread_lo, s_equal);
                spread_hi = std::max(spread_hi, s_equal);
                share_sum += s_equal;
                occ_sum += s_occ;
                if (u == static_cast<int>(z.variables.size())) agree.observe(s_equal == s_occ ? 0.0 : std::abs(s_equal - s_occ) + 1.0);
              }
              equal.observe(std::max({spread_hi - spread_lo, std::abs(share_sum - z.value), std::abs(occ_sum - z.value)}));
            }

            {
              const VariableAttribution va = attribute_variables(model, terms, trace, {row, cls}, fav);
              Matrix adjacency = Matrix::Zero(va.adjacency.rows(), va.adjacency.cols());
              Matrix features = Matrix::Zero(va.features.rows(), va.features.cols());
              std::vector<std::vector<Matrix>> conv;
              for (const auto& layer : va.conv_patterns) {
                conv.emplace_back();
                for (const Matrix& p : layer) conv.back().push_back(Matrix::Zero(p.rows(), p.cols()));
              }
              std::vector<Matrix> cls_patterns;
              for (const Matrix& p : va.classifier_patterns) cls_patterns.push_back(Matrix::Zero(p.rows(), p.cols()));
              for (const auto& [v, value] : oracle_attribute_all(zs, OracleMode::OccurrenceWeighted)) {
                switch (v.kind) {
                  case VariableId::Kind::Adjacency: adjacency(v.i, v.j) = value; break;
                  case VariableId::Kind::Feature: features(v.i, v.j) = value; break;
                  case VariableId::Kind::Pattern:
                    if (v.stage.section == StageRef::Section::Conv) {
                      conv[static_cast<std::size_t>(v.stage.layer)][static_cast<std::size_t>(v.stage.sublayer)](v.i, v.j) = value;
                    } else {
                      cls_patterns[static_cast<std::size_t>(v.stage.layer)](v.i, v.j) = value;
                    }
                    break;
                }
              }
              double unattributed = 0.0;
              for (const auto& z : zs) {
                if (z.variables.empty()) unattributed += z.value;
              }
              double dev = std::max({max_abs(adjacency - va.adjacency), max_abs(features - va.features),
                                     std::abs(unattributed - va.unattributed)});
              for (std::size_t l = 0; l < conv.size(); ++l) {
                for (std::size_t s = 0; s < conv[l].size(); ++s) dev = std::max(dev, max_abs(conv[l][s] - va.conv_patterns[l][s]));
              }
              for (std::size_t k = 0; k < cls_patterns.size(); ++k) dev = std::max(dev, max_abs(cls_patterns[k] - va.classifier_patterns[k]));
              vars.observe(dev);
            }

            for (bool calibrate : {false, true}) {
              const int n = graph.num_nodes();
              OracleScores s{Matrix::Zero(n, n), Matrix::Zero(n, graph.feature_dim())};
              add_scores(model, graph, zs, fav, 1.0, s);
              if (calibrate) add_scores(model, graph, bzs, fav, -1.0, s);

              AttributionOptions ao;
              ao.features_as_variables = fav;
              ao.calibrate = calibrate;
              ao.classes = {cls};
              if (!pooled) ao.target_node = row;
              const AttributionResult res = attribute(model, graph, ao);
              double dev = 0.0;
              for (std::size_t e = 0; e < res.edges.size(); ++e) {
                const Edge& edge = res.edges[e];
                double want = s.adjacency(edge.u, edge.v);
                if (!graph.directed()) want += s.adjacency(edge.v, edge.u);
                dev = std::max(dev, std::abs(want - res.edge_scores(static_cast<Eigen::Index>(e), 0)));
              }
              dev = std::max(dev, max_abs(res.diagonal_scores.col(0) - s.adjacency.diagonal()));
              if (fav) dev = std::max(dev, max_abs(res.feature_scores->front() - s.features));
              e2e.observe(dev);
            }
          }
        }
      }
    }
  }

  OracleReport report;
  for (Tracker* t : {&recon, &agree, &equal, &vars, &e2e}) {
    t->r.tolerance = t == &agree ? 0.0 : config.tolerance;
    t->r.passed = t->r.max_deviation <= t->r.tolerance;
    report.suites.push_back(t->r);
  }
  return report;
}

}  // namespace goat
