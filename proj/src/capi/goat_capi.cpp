#include "goat/goat.h"

#include "goat/attribution.hpp"
#include "goat/error.hpp"
#include "goat/expansion.hpp"
#include "goat/forward.hpp"
#include "goat/graph.hpp"
#include "goat/json_util.hpp"
#include "goat/metrics.hpp"
#include "goat/model.hpp"
#include "goat/oracle.hpp"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

struct goat_dataset {
  goat::Dataset value;
};

struct goat_model {
  goat::ModelSpec value;
};

struct goat_attribution {
  goat::AttributionResult value;
};

namespace {

thread_local std::string last_error;

goat_status status_of(goat::ErrorKind kind) {
  switch (kind) {
    case goat::ErrorKind::InvalidArgument: return GOAT_ERR_INVALID_ARGUMENT;
    case goat::ErrorKind::Parse: return GOAT_ERR_PARSE;
    case goat::ErrorKind::Validation: return GOAT_ERR_VALIDATION;
    case goat::ErrorKind::Domain: return GOAT_ERR_DOMAIN;
    case goat::ErrorKind::Io: return GOAT_ERR_IO;
    case goat::ErrorKind::Numeric: return GOAT_ERR_NUMERIC;
  }
  return GOAT_ERR_INTERNAL;
}

template <class Fn>
goat_status guarded(Fn&& fn) {
  try {
    fn();
    last_error.clear();
    return GOAT_OK;
  } catch (const goat::Error& e) {
    last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return GOAT_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return GOAT_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return GOAT_ERR_INTERNAL;
  }
}

void need(const void* p, const char* name) {
  if (!p) throw goat::invalid_argument(std::string(name) + " must not be null");
}

char* dup(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put(char** out, const std::string& s) {
  if (out) *out = dup(s);
}

const goat::Graph& graph_at(const goat_dataset* d, int index) {
  need(d, "dataset");
  if (index < 0 || index >= static_cast<int>(d->value.graphs.size())) {
    throw goat::invalid_argument("graph index " + std::to_string(index) + " out of range");
  }
  return d->value.graphs[static_cast<std::size_t>(index)];
}

goat::Arch arch_of(goat_arch a) {
  switch (a) {
    case GOAT_ARCH_GCN: return goat::Arch::Gcn;
    case GOAT_ARCH_SAGE: return goat::Arch::Sage;
    case GOAT_ARCH_GIN: return goat::Arch::Gin;
  }
  throw goat::invalid_argument("unknown architecture code");
}

}  // namespace

extern "C" {

const char* goat_version(void) { return "0.1.0"; }

const char* goat_last_error(void) { return last_error.c_str(); }

void goat_string_free(char* s) { std::free(s); }

goat_status goat_dataset_load(const char* path, goat_format format, goat_dataset** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    const auto f = format == GOAT_FORMAT_EDGE_CSV ? goat::GraphFormat::EdgeCsv : goat::GraphFormat::Json;
    *out = new goat_dataset{goat::load_graphs(path, f)};
  });
}

goat_status goat_dataset_from_json(const char* text, goat_dataset** out) {
  return guarded([&] {
    need(text, "text");
    need(out, "out");
    *out = new goat_dataset{goat::dataset_from_json(text)};
  });
}

goat_status goat_dataset_generate_ba2motifs(int count, int base_size, uint64_t seed, goat_dataset** out) {
  return guarded([&] {
    need(out, "out");
    *out = new goat_dataset{goat::generate_ba2motifs(count, base_size, seed)};
  });
}

goat_status goat_dataset_to_json(const goat_dataset* dataset, char** out) {
  return guarded([&] {
    need(dataset, "dataset");
    need(out, "out");
    *out = dup(goat::dataset_to_json(dataset->value));
  });
}

goat_status goat_dataset_save(const goat_dataset* dataset, const char* path) {
  return guarded([&] {
    need(dataset, "dataset");
    need(path, "path");
    goat::save_json(dataset->value, path);
  });
}

goat_status goat_dataset_size(const goat_dataset* dataset, int* out) {
  return guarded([&] {
    need(dataset, "dataset");
    need(out, "out");
    *out = static_cast<int>(dataset->value.graphs.size());
  });
}

goat_status goat_dataset_graph_info(const goat_dataset* dataset, int index, int* num_nodes, int* num_edges,
                                    int* label) {
  return guarded([&] {
    const goat::Graph& g = graph_at(dataset, index);
    if (num_nodes) *num_nodes = g.num_nodes();
    if (num_edges) *num_edges = g.num_edges();
    if (label) *label = g.graph_label().value_or(-1);
  });
}

void goat_dataset_free(goat_dataset* dataset) { delete dataset; }

void goat_random_model_options_init(goat_random_model_options* o) {
  if (!o) return;
  const goat::RandomModelOptions d;
  o->arch = GOAT_ARCH_GCN;
  o->input_dim = d.input_dim;
  o->hidden = d.hidden;
  o->conv_layers = d.conv_layers;
  o->classifier_layers = d.classifier_layers;
  o->num_classes = d.num_classes;
  o->gin_mlp_layers = d.gin_mlp_layers;
  o->pooling = GOAT_POOLING_MEAN;
  o->bias_scale = d.bias_scale;
  o->gin_eps = d.gin_eps;
  o->seed = d.seed;
}

goat_status goat_model_load(const char* path, goat_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new goat_model{goat::load_model(path)};
  });
}

goat_status goat_model_from_json(const char* text, goat_model** out) {
  return guarded([&] {
    need(text, "text");
    need(out, "out");
    *out = new goat_model{goat::model_from_json(text)};
  });
}

goat_status goat_model_random(const goat_random_model_options* o, goat_model** out) {
  return guarded([&] {
    need(o, "options");
    need(out, "out");
    goat::RandomModelOptions r;
    r.arch = arch_of(o->arch);
    r.input_dim = o->input_dim;
    r.hidden = o->hidden;
    r.conv_layers = o->conv_layers;
    r.classifier_layers = o->classifier_layers;
    r.num_classes = o->num_classes;
    r.gin_mlp_layers = o->gin_mlp_layers;
    r.pooling = o->pooling == GOAT_POOLING_NONE ? goat::Pooling::None : goat::Pooling::Mean;
    r.bias_scale = o->bias_scale;
    r.gin_eps = o->gin_eps;
    r.seed = o->seed;
    *out = new goat_model{goat::random_model(r)};
  });
}

goat_status goat_model_to_json(const goat_model* model, char** out) {
  return guarded([&] {
    need(model, "model");
    need(out, "out");
    *out = dup(goat::model_to_json(model->value));
  });
}

goat_status goat_model_save(const goat_model* model, const char* path) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    goat::save_model(model->value, path);
  });
}

goat_status goat_model_num_classes(const goat_model* model, int* out) {
  return guarded([&] {
    need(model, "model");
    need(out, "out");
    *out = model->value.num_classes;
  });
}

goat_status goat_model_describe_terms(const goat_model* model, char** out) {
  return guarded([&] {
    need(model, "model");
    need(out, "out");
    goat::detail::json terms = goat::detail::json::array();
    for (const goat::TermClass& t : goat::enumerate_terms(model->value)) {
      const goat::Occurrences o = goat::count_occurrences(t);
      terms.push_back({{"signature", t.signature()},
                       {"adjacency", o.adjacency},
                       {"pattern", o.pattern},
                       {"feature", o.feature},
                       {"constant_factor", t.constant_factor}});
    }
    goat::detail::json j;
    j["arch"] = goat::arch_name(model->value.arch);
    j["count"] = terms.size();
    j["terms"] = std::move(terms);
    *out = dup(j.dump(2));
  });
}

goat_status goat_forward_json(const goat_model* model, const goat_dataset* dataset, int graph_index, char** out) {
  return guarded([&] {
    need(model, "model");
    need(out, "out");
    const goat::ForwardTrace t = goat::run_forward(model->value, graph_at(dataset, graph_index));
    goat::detail::json j;
    j["logits"] = goat::detail::matrix_to_json(t.logits);
    j["probs"] = goat::detail::matrix_to_json(t.probs);
    j["embedding"] = goat::detail::matrix_to_json(t.embedding);
    *out = dup(j.dump());
  });
}

void goat_model_free(goat_model* model) { delete model; }

void goat_attribution_options_init(goat_attribution_options* o) {
  if (!o) return;
  o->features_as_variables = 0;
  o->calibrate = 1;
  o->target_node = -1;
  o->classes = nullptr;
  o->num_classes = 0;
}

goat_status goat_attribute(const goat_model* model, const goat_dataset* dataset, int graph_index,
                           const goat_attribution_options* o, goat_attribution** out) {
  return guarded([&] {
    need(model, "model");
    need(out, "out");
    goat::AttributionOptions opts;
    if (o) {
      opts.features_as_variables = o->features_as_variables != 0;
      opts.calibrate = o->calibrate != 0;
      if (o->target_node >= 0) opts.target_node = o->target_node;
      if (o->num_classes > 0) {
        need(o->classes, "classes");
        opts.classes.assign(o->classes, o->classes + o->num_classes);
      }
    }
    *out = new goat_attribution{goat::attribute(model->value, graph_at(dataset, graph_index), opts)};
  });
}

goat_status goat_attribution_to_json(const goat_attribution* attr, char** out) {
  return guarded([&] {
    need(attr, "attribution");
    need(out, "out");
    *out = dup(goat::attribution_to_json(attr->value));
  });
}

goat_status goat_attribution_num_edges(const goat_attribution* attr, int* out) {
  return guarded([&] {
    need(attr, "attribution");
    need(out, "out");
    *out = static_cast<int>(attr->value.edges.size());
  });
}

goat_status goat_attribution_edge(const goat_attribution* attr, int edge, int* u, int* v) {
  return guarded([&] {
    need(attr, "attribution");
    if (edge < 0 || edge >= static_cast<int>(attr->value.edges.size())) throw goat::invalid_argument("edge index out of range");
    const goat::Edge& e = attr->value.edges[static_cast<std::size_t>(edge)];
    if (u) *u = e.u;
    if (v) *v = e.v;
  });
}

goat_status goat_attribution_score(const goat_attribution* attr, int edge, int k, double* out) {
  return guarded([&] {
    need(attr, "attribution");
    need(out, "out");
    const auto& r = attr->value;
    if (edge < 0 || edge >= static_cast<int>(r.edges.size())) throw goat::invalid_argument("edge index out of range");
    if (k < 0 || k >= static_cast<int>(r.classes.size())) throw goat::invalid_argument("class column out of range");
    *out = r.score(static_cast<std::size_t>(edge), static_cast<std::size_t>(k));
  });
}

goat_status goat_attribution_max_residual(const goat_attribution* attr, double* out) {
  return guarded([&] {
    need(attr, "attribution");
    need(out, "out");
    *out = attr->value.max_relative_residual();
  });
}

goat_status goat_explanation_json(const goat_attribution* attr, const goat_dataset* dataset, int graph_index,
                                  double sparsity, int cls, char** out) {
  return guarded([&] {
    need(attr, "attribution");
    need(out, "out");
    const goat::Explanation e =
        goat::extract_explanation(attr->value, graph_at(dataset, graph_index), sparsity, cls, graph_index);
    *out = dup(goat::explanation_to_json(e));
  });
}

void goat_attribution_free(goat_attribution* attr) { delete attr; }

void goat_eval_options_init(goat_eval_options* o) {
  if (!o) return;
  o->metric = GOAT_METRIC_FIDELITY;
  o->sparsities = nullptr;
  o->num_sparsities = 0;
  o->features_as_variables = 0;
  o->calibrate = 1;
  o->embedding = GOAT_EMBEDDING_POST_CONV;
  o->c1 = 0;
  o->c2 = 1;
  o->max_k = 10;
  o->jobs = 1;
}

goat_status goat_eval(const goat_model* model, const goat_dataset* dataset, const goat_eval_options* o,
                      char** report_json, char** summary_csv, char** samples_csv) {
  return guarded([&] {
    need(model, "model");
    need(dataset, "dataset");
    need(o, "options");
    goat::MetricsOptions m;
    if (o->num_sparsities > 0) {
      need(o->sparsities, "sparsities");
      m.sparsities.assign(o->sparsities, o->sparsities + o->num_sparsities);
    }
    m.attribution.features_as_variables = o->features_as_variables != 0;
    m.attribution.calibrate = o->calibrate != 0;
    m.embedding = o->embedding == GOAT_EMBEDDING_PRE_CLASSIFIER ? goat::EmbeddingPoint::PreClassifier
                                                                : goat::EmbeddingPoint::PostConv;
    m.class_pairs = {{o->c1, o->c2}};
    m.max_k = o->max_k;
    m.jobs = o->jobs;
    goat::MetricsReport r;
    switch (o->metric) {
      case GOAT_METRIC_FIDELITY: r = goat::fidelity_curve(model->value, dataset->value, m); break;
      case GOAT_METRIC_DISCRIMINABILITY: r = goat::discriminability_report(model->value, dataset->value, m); break;
      case GOAT_METRIC_STABILITY: r = goat::stability_report(model->value, dataset->value, m); break;
      default: throw goat::invalid_argument("unknown metric code");
    }
    const std::string json = r.to_json();
    const std::string summary = r.summary_csv();
    const std::string samples = r.samples_csv();
    char* a = nullptr;
    char* b = nullptr;
    try {
      if (report_json) a = dup(json);
      if (summary_csv) b = dup(summary);
      put(samples_csv, samples);
    } catch (...) {
      std::free(a);
      std::free(b);
      throw;
    }
    if (report_json) *report_json = a;
    if (summary_csv) *summary_csv = b;
  });
}

void goat_oracle_options_init(goat_oracle_options* o) {
  if (!o) return;
  const goat::OracleSuiteConfig d;
  o->nodes = d.nodes;
  o->conv_layers = d.conv_layers;
  o->feature_dim = d.feature_dim;
  o->width = d.width;
  o->models_per_arch = d.models_per_arch;
  o->seed = d.seed;
  o->tolerance = d.tolerance;
  o->inject_perturbation = 0;
}

goat_status goat_check_oracle(const goat_oracle_options* o, int* passed, char** report_json) {
  return guarded([&] {
    need(o, "options");
    goat::OracleSuiteConfig c;
    c.nodes = o->nodes;
    c.conv_layers = o->conv_layers;
    c.feature_dim = o->feature_dim;
    c.width = o->width;
    c.models_per_arch = o->models_per_arch;
    c.seed = o->seed;
    c.tolerance = o->tolerance;
    c.inject_perturbation = o->inject_perturbation != 0;
    const goat::OracleReport r = goat::run_oracle_suite(c);
    if (passed) *passed = r.passed() ? 1 : 0;
    put(report_json, r.to_json());
  });
}

}  // extern "C"
