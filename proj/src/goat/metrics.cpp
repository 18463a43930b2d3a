#include "goat/metrics.hpp"

#include "goat/error.hpp"
#include "goat/forward.hpp"
#include "goat/json_util.hpp"
#include "goat/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace goat {

namespace {

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  // splitmix64 finalizer over the running state
  std::uint64_t z = h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string fmt(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return {buf, res.ptr};
}

void check_sparsity(double s) {
  if (!(s >= 0.0 && s < 1.0)) throw invalid_argument("sparsity target must lie in [0, 1), got " + fmt(s));
}

Explanation finish(const Graph& graph, std::vector<Edge> edges, std::vector<double> scores, int cls, int graph_id) {
  Explanation e;
  e.graph_id = graph_id;
  e.num_graph_edges = graph.num_edges();
  e.sparsity = 1.0 - static_cast<double>(edges.size()) / e.num_graph_edges;
  e.predicted_class = cls;
  e.canonical_hash = wl_hash(graph, edges);
  e.edges = std::move(edges);
  e.scores = std::move(scores);
  return e;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

void require_pooled(const ModelSpec& model) {
  if (model.pooling != Pooling::Mean) throw invalid_argument("explanation metrics need a graph-level (pooled) model");
}

}  // namespace

int explanation_size(int num_edges, double sparsity_target) {
  check_sparsity(sparsity_target);
  if (num_edges <= 0) throw invalid_argument("cannot explain a graph without edges");
  const double want = (1.0 - sparsity_target) * num_edges;
  return std::clamp(static_cast<int>(std::ceil(want - 1e-9)), 0, num_edges);
}

Explanation extract_explanation(const AttributionResult& attr, const Graph& graph, double sparsity_target, int cls,
                                int graph_id) {
  const int k = explanation_size(graph.num_edges(), sparsity_target);
  if (attr.edges != graph.edges()) throw invalid_argument("attribution does not belong to this graph");
  const std::size_t col = attr.class_column(cls);
  std::vector<std::size_t> order(attr.edges.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double sa = attr.score(a, col);
    const double sb = attr.score(b, col);
    if (sa != sb) return sa > sb;
    return attr.edges[a] < attr.edges[b];
  });
  std::vector<Edge> edges;
  std::vector<double> scores;
  for (int i = 0; i < k; ++i) {
    edges.push_back(attr.edges[order[static_cast<std::size_t>(i)]]);
    scores.push_back(attr.score(order[static_cast<std::size_t>(i)], col));
  }
  return finish(graph, std::move(edges), std::move(scores), cls, graph_id);
}

Explanation random_explanation(const Graph& graph, double sparsity_target, int cls, std::uint64_t seed, int graph_id) {
  const int k = explanation_size(graph.num_edges(), sparsity_target);
  std::vector<Edge> all = graph.edges();
  std::mt19937_64 rng(seed);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(static_cast<std::size_t>(k));
  return finish(graph, std::move(all), std::vector<double>(static_cast<std::size_t>(k), 0.0), cls, graph_id);
}

std::uint64_t wl_hash(const Graph& graph, const std::vector<Edge>& edges, int rounds) {
  std::map<int, std::vector<int>> adj;
  for (const Edge& e : edges) {
    adj[e.u].push_back(e.v);
    adj[e.v].push_back(e.u);
  }
  std::map<int, std::uint64_t> label;
  for (const auto& [node, nb] : adj) {
    std::uint64_t h = 0x51ed27;
    for (int f = 0; f < graph.feature_dim(); ++f) {
      h = mix(h, static_cast<std::uint64_t>(std::llround(graph.features()(node, f) * 1e6)));
    }
    label[node] = h;
  }
  for (int r = 0; r < rounds; ++r) {
    std::map<int, std::uint64_t> next;
    for (const auto& [node, nb] : adj) {
      std::vector<std::uint64_t> ms;
      for (int w : nb) ms.push_back(label[w]);
      std::sort(ms.begin(), ms.end());
      std::uint64_t h = mix(label[node], ms.size());
      for (auto m : ms) h = mix(h, m);
      next[node] = h;
    }
    label = std::move(next);
  }
  std::vector<std::uint64_t> all;
  for (const auto& [node, l] : label) all.push_back(l);
  std::sort(all.begin(), all.end());
  std::uint64_t h = mix(0x9a7, edges.size());
  for (auto l : all) h = mix(h, l);
  return h;
}

int predicted_class(const ModelSpec& model, const Graph& graph) {
  require_pooled(model);
  const ForwardTrace t = run_forward(model, graph);
  Eigen::Index y = 0;
  t.probs.row(0).maxCoeff(&y);
  return static_cast<int>(y);
}

double fidelity(const ModelSpec& model, const Graph& graph, const Explanation& expl) {
  require_pooled(model);
  const ForwardTrace full = run_forward(model, graph);
  Eigen::Index y = 0;
  full.probs.row(0).maxCoeff(&y);
  const ForwardTrace removed = run_forward(model, graph.without_edges(expl.edges));
  return full.probs(0, y) - removed.probs(0, y);
}

RowVector embed_subgraph(const ModelSpec& model, const Graph& graph, const Explanation& expl, EmbeddingPoint point) {
  require_pooled(model);
  const ForwardTrace t = run_forward(model, graph.with_edges(expl.edges));
  if (point == EmbeddingPoint::PreClassifier && t.classifier.size() >= 2) {
    return t.classifier[t.classifier.size() - 2].post.row(0);
  }
  return t.embedding.row(0);
}

double discriminability(const std::vector<EmbeddedSample>& samples, int c1, int c2) {
  auto mean = [&](int c) {
    RowVector sum;
    int n = 0;
    for (const auto& s : samples) {
      if (s.true_class != c || s.predicted_class != c) continue;
      sum = n == 0 ? s.embedding : RowVector(sum + s.embedding);
      ++n;
    }
    if (n == 0) throw domain_error("class " + std::to_string(c) + " has no correctly predicted samples");
    return RowVector(sum / n);
  };
  const RowVector m1 = mean(c1);
  const RowVector m2 = mean(c2);
  if (m1.size() != m2.size()) throw invalid_argument("embeddings differ in length");
  return (m1 - m2).norm();
}

double stability(const std::vector<Explanation>& explanations, int k) {
  if (k < 1) throw invalid_argument("k must be at least 1");
  if (explanations.empty()) return 0.0;
  std::map<std::uint64_t, int> groups;
  for (const auto& e : explanations) ++groups[e.canonical_hash];
  std::vector<int> sizes;
  for (const auto& [h, n] : groups) sizes.push_back(n);
  std::sort(sizes.rbegin(), sizes.rend());
  const auto top = std::min<std::size_t>(sizes.size(), static_cast<std::size_t>(k));
  const int covered = std::accumulate(sizes.begin(), sizes.begin() + static_cast<std::ptrdiff_t>(top), 0);
  return static_cast<double>(covered) / static_cast<double>(explanations.size());
}

std::vector<std::vector<Explanation>> explain_dataset(const ModelSpec& model, const Dataset& dataset,
                                                     const std::vector<double>& sparsities,
                                                     const AttributionOptions& attribution, int jobs) {
  require_pooled(model);
  if (dataset.graphs.empty()) throw invalid_argument("dataset is empty");
  for (double s : sparsities) check_sparsity(s);
  std::vector<std::vector<Explanation>> out(dataset.graphs.size());
  parallel_for(dataset.graphs.size(), jobs, [&](std::size_t g) {
    const Graph& graph = dataset.graphs[g];
    const int id = static_cast<int>(g);
    try {
      const int y = predicted_class(model, graph);
      AttributionOptions opts = attribution;
      opts.classes = {y};
      const AttributionResult attr = attribute(model, graph, opts);
      for (double s : sparsities) out[g].push_back(extract_explanation(attr, graph, s, y, id));
    } catch (const Error& e) {
      throw Error(e.kind(), "graph " + std::to_string(id) + ": " + e.what());
    }
  });
  return out;
}

MetricsReport fidelity_curve(const ModelSpec& model, const Dataset& dataset, const MetricsOptions& options) {
  const auto expl = explain_dataset(model, dataset, options.sparsities, options.attribution, options.jobs);
  MetricsReport r;
  r.metric = "fidelity";
  r.samples = static_cast<int>(dataset.graphs.size());
  std::vector<std::vector<double>> values(dataset.graphs.size());
  parallel_for(dataset.graphs.size(), options.jobs, [&](std::size_t g) {
    for (const Explanation& e : expl[g]) values[g].push_back(fidelity(model, dataset.graphs[g], e));
  });
  for (std::size_t s = 0; s < options.sparsities.size(); ++s) {
    std::vector<double> col;
    for (std::size_t g = 0; g < expl.size(); ++g) {
      const Explanation& e = expl[g][s];
      r.fidelity_records.push_back({e.graph_id, options.sparsities[s], e.num_graph_edges,
                                    static_cast<int>(e.edges.size()), e.predicted_class, values[g][s]});
      col.push_back(values[g][s]);
    }
    r.fidelity.push_back({options.sparsities[s], mean_of(col), sample_std(col), static_cast<int>(col.size())});
  }
  return r;
}

MetricsReport discriminability_report(const ModelSpec& model, const Dataset& dataset, const MetricsOptions& options) {
  const auto expl = explain_dataset(model, dataset, options.sparsities, options.attribution, options.jobs);
  MetricsReport r;
  r.metric = "discriminability";
  r.samples = static_cast<int>(dataset.graphs.size());
  std::vector<std::vector<RowVector>> emb(dataset.graphs.size());
  parallel_for(dataset.graphs.size(), options.jobs, [&](std::size_t g) {
    for (const Explanation& e : expl[g]) emb[g].push_back(embed_subgraph(model, dataset.graphs[g], e, options.embedding));
  });
  for (std::size_t s = 0; s < options.sparsities.size(); ++s) {
    std::vector<EmbeddedSample> samples;
    for (std::size_t g = 0; g < expl.size(); ++g) {
      const auto& label = dataset.graphs[g].graph_label();
      if (!label) throw validation_error("graph " + std::to_string(g) + " has no label");
      samples.push_back({emb[g][s], *label, expl[g][s].predicted_class});
      r.embedding_records.push_back({static_cast<int>(g), options.sparsities[s], *label, expl[g][s].predicted_class, emb[g][s]});
    }
    for (const auto& [c1, c2] : options.class_pairs) {
      DiscriminabilityPoint p{options.sparsities[s], c1, c2, discriminability(samples, c1, c2), 0, 0};
      for (const auto& x : samples) {
        if (x.true_class == x.predicted_class) {
          p.count_c1 += x.true_class == c1 ? 1 : 0;
          p.count_c2 += x.true_class == c2 ? 1 : 0;
        }
      }
      r.discriminability.push_back(p);
    }
  }
  return r;
}

MetricsReport stability_report(const ModelSpec& model, const Dataset& dataset, const MetricsOptions& options) {
  if (options.max_k < 1) throw invalid_argument("max k must be at least 1");
  const auto expl = explain_dataset(model, dataset, options.sparsities, options.attribution, options.jobs);
  MetricsReport r;
  r.metric = "stability";
  r.samples = static_cast<int>(dataset.graphs.size());
  for (std::size_t s = 0; s < options.sparsities.size(); ++s) {
    std::vector<Explanation> col;
    for (const auto& per_graph : expl) {
      col.push_back(per_graph[s]);
      r.stability_records.push_back(
          {per_graph[s].graph_id, options.sparsities[s], per_graph[s].predicted_class, per_graph[s].canonical_hash});
    }
    std::map<std::uint64_t, int> groups;
    for (const auto& e : col) ++groups[e.canonical_hash];
    for (int k = 1; k <= options.max_k; ++k) {
      r.stability.push_back({options.sparsities[s], k, stability(col, k), static_cast<int>(groups.size())});
    }
  }
  return r;
}

std::string MetricsReport::to_json() const {
  using detail::json;
  json j;
  j["metric"] = metric;
  j["samples"] = samples;
  if (!fidelity.empty()) {
    json pts = json::array();
    for (const auto& p : fidelity) pts.push_back({{"sparsity", p.sparsity}, {"mean", p.mean}, {"std", p.std}, {"count", p.count}});
    j["fidelity"] = std::move(pts);
    json recs = json::array();
    for (const auto& x : fidelity_records) {
      recs.push_back({{"graph", x.graph_id}, {"sparsity", x.sparsity}, {"num_edges", x.num_edges},
                      {"selected", x.selected}, {"predicted_class", x.predicted_class}, {"fidelity", x.fidelity}});
    }
    j["fidelity_records"] = std::move(recs);
  }
  if (!discriminability.empty()) {
    json pts = json::array();
    for (const auto& p : discriminability) {
      pts.push_back({{"sparsity", p.sparsity}, {"c1", p.c1}, {"c2", p.c2}, {"value", p.value},
                     {"count_c1", p.count_c1}, {"count_c2", p.count_c2}});
    }
    j["discriminability"] = std::move(pts);
    json recs = json::array();
    for (const auto& x : embedding_records) {
      recs.push_back({{"graph", x.graph_id}, {"sparsity", x.sparsity}, {"true_class", x.true_class},
                      {"predicted_class", x.predicted_class}, {"embedding", detail::vector_to_json(x.embedding)}});
    }
    j["embedding_records"] = std::move(recs);
  }
  if (!stability.empty()) {
    json pts = json::array();
    for (const auto& p : stability) {
      pts.push_back({{"sparsity", p.sparsity}, {"k", p.k}, {"coverage", p.coverage}, {"groups", p.groups}});
    }
    j["stability"] = std::move(pts);
    json recs = json::array();
    for (const auto& x : stability_records) {
      recs.push_back({{"graph", x.graph_id}, {"sparsity", x.sparsity}, {"predicted_class", x.predicted_class},
                      {"canonical_hash", x.canonical_hash}});
    }
    j["stability_records"] = std::move(recs);
  }
  return j.dump(2);
}

std::string MetricsReport::summary_csv() const {
  std::ostringstream ss;
  if (metric == "fidelity") {
    ss << "sparsity,mean,std,count\n";
    for (const auto& p : fidelity) ss << fmt(p.sparsity) << ',' << fmt(p.mean) << ',' << fmt(p.std) << ',' << p.count << '\n';
  } else if (metric == "discriminability") {
    ss << "sparsity,c1,c2,value,count_c1,count_c2\n";
    for (const auto& p : discriminability) {
      ss << fmt(p.sparsity) << ',' << p.c1 << ',' << p.c2 << ',' << fmt(p.value) << ',' << p.count_c1 << ','
         << p.count_c2 << '\n';
    }
  } else {
    ss << "sparsity,k,coverage,groups\n";
    for (const auto& p : stability) ss << fmt(p.sparsity) << ',' << p.k << ',' << fmt(p.coverage) << ',' << p.groups << '\n';
  }
  return ss.str();
}

std::string MetricsReport::samples_csv() const {
  std::ostringstream ss;
  if (metric == "fidelity") {
    ss << "graph,sparsity,num_edges,selected,predicted_class,fidelity\n";
    for (const auto& x : fidelity_records) {
      ss << x.graph_id << ',' << fmt(x.sparsity) << ',' << x.num_edges << ',' << x.selected << ','
         << x.predicted_class << ',' << fmt(x.fidelity) << '\n';
    }
  } else if (metric == "discriminability") {
    const auto dim = embedding_records.empty() ? 0 : embedding_records.front().embedding.size();
    ss << "graph,sparsity,true_class,predicted_class";
    for (Eigen::Index i = 0; i < dim; ++i) ss << ",e" << i;
    ss << '\n';
    for (const auto& x : embedding_records) {
      ss << x.graph_id << ',' << fmt(x.sparsity) << ',' << x.true_class << ',' << x.predicted_class;
      for (Eigen::Index i = 0; i < x.embedding.size(); ++i) ss << ',' << fmt(x.embedding(i));
      ss << '\n';
    }
  } else {
    ss << "graph,sparsity,predicted_class,canonical_hash\n";
    for (const auto& x : stability_records) {
      ss << x.graph_id << ',' << fmt(x.sparsity) << ',' << x.predicted_class << ',' << x.canonical_hash << '\n';
    }
  }
  return ss.str();
}

std::string explanation_to_json(const Explanation& e) {
  using detail::json;
  json j;
  j["graph"] = e.graph_id;
  json edges = json::array();
  for (std::size_t i = 0; i < e.edges.size(); ++i) {
    edges.push_back({{"u", e.edges[i].u}, {"v", e.edges[i].v}, {"score", e.scores[i]}});
  }
  j["edges"] = std::move(edges);
  j["sparsity"] = e.sparsity;
  j["predicted_class"] = e.predicted_class;
  j["num_graph_edges"] = e.num_graph_edges;
  j["canonical_hash"] = e.canonical_hash;
  return j.dump();
}

}  // namespace goat
