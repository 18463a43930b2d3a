#ifndef GOAT_GOAT_H
#define GOAT_GOAT_H

/* C interface to the attribution engine. All handles are opaque. Functions
 * return a goat_status; on failure goat_last_error() describes the problem
 * for the calling thread. Strings returned through char** are owned by the
 * caller and released with goat_string_free. Distinct handles may be used
 * from different threads concurrently; a handle is not internally locked. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(GOAT_BUILDING_LIBRARY)
#define GOAT_API __declspec(dllexport)
#else
#define GOAT_API __declspec(dllimport)
#endif
#else
#define GOAT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum goat_status {
  GOAT_OK = 0,
  GOAT_ERR_INVALID_ARGUMENT = 1,
  GOAT_ERR_PARSE = 2,
  GOAT_ERR_VALIDATION = 3,
  GOAT_ERR_DOMAIN = 4,
  GOAT_ERR_IO = 5,
  GOAT_ERR_NUMERIC = 6,
  GOAT_ERR_INTERNAL = 7
} goat_status;

typedef enum goat_format { GOAT_FORMAT_JSON = 0, GOAT_FORMAT_EDGE_CSV = 1 } goat_format;
typedef enum goat_arch { GOAT_ARCH_GCN = 0, GOAT_ARCH_SAGE = 1, GOAT_ARCH_GIN = 2 } goat_arch;
typedef enum goat_pooling { GOAT_POOLING_MEAN = 0, GOAT_POOLING_NONE = 1 } goat_pooling;
typedef enum goat_metric {
  GOAT_METRIC_FIDELITY = 0,
  GOAT_METRIC_DISCRIMINABILITY = 1,
  GOAT_METRIC_STABILITY = 2
} goat_metric;
typedef enum goat_embedding_point {
  GOAT_EMBEDDING_POST_CONV = 0,
  GOAT_EMBEDDING_PRE_CLASSIFIER = 1
} goat_embedding_point;

typedef struct goat_dataset goat_dataset;
typedef struct goat_model goat_model;
typedef struct goat_attribution goat_attribution;

GOAT_API const char* goat_version(void);
/* Message of the last failed call on this thread; "" if none. */
GOAT_API const char* goat_last_error(void);
GOAT_API void goat_string_free(char* s);

/* Datasets */
GOAT_API goat_status goat_dataset_load(const char* path, goat_format format, goat_dataset** out);
GOAT_API goat_status goat_dataset_from_json(const char* text, goat_dataset** out);
GOAT_API goat_status goat_dataset_generate_ba2motifs(int count, int base_size, uint64_t seed, goat_dataset** out);
GOAT_API goat_status goat_dataset_to_json(const goat_dataset* dataset, char** out);
GOAT_API goat_status goat_dataset_save(const goat_dataset* dataset, const char* path);
GOAT_API goat_status goat_dataset_size(const goat_dataset* dataset, int* out);
GOAT_API goat_status goat_dataset_graph_info(const goat_dataset* dataset, int index, int* num_nodes, int* num_edges,
                                             int* label);
GOAT_API void goat_dataset_free(goat_dataset* dataset);

/* Models */
typedef struct goat_random_model_options {
  goat_arch arch;
  int input_dim;
  int hidden;
  int conv_layers;
  int classifier_layers;
  int num_classes;
  int gin_mlp_layers;
  goat_pooling pooling;
  double bias_scale;
  double gin_eps;
  uint64_t seed;
} goat_random_model_options;

GOAT_API void goat_random_model_options_init(goat_random_model_options* options);
GOAT_API goat_status goat_model_load(const char* path, goat_model** out);
GOAT_API goat_status goat_model_from_json(const char* text, goat_model** out);
GOAT_API goat_status goat_model_random(const goat_random_model_options* options, goat_model** out);
GOAT_API goat_status goat_model_to_json(const goat_model* model, char** out);
GOAT_API goat_status goat_model_save(const goat_model* model, const char* path);
GOAT_API goat_status goat_model_num_classes(const goat_model* model, int* out);
/* {"terms":[{"signature","adjacency","pattern","feature"}...]} */
GOAT_API goat_status goat_model_describe_terms(const goat_model* model, char** out);
/* Forward pass on one graph: {"logits":[[...]],"probs":[[...]],"embedding":[[...]]} */
GOAT_API goat_status goat_forward_json(const goat_model* model, const goat_dataset* dataset, int graph_index,
                                       char** out);
GOAT_API void goat_model_free(goat_model* model);

/* Attribution */
typedef struct goat_attribution_options {
  int features_as_variables;
  int calibrate;
  int target_node; /* -1: graph-level model */
  const int* classes; /* NULL: all classes */
  int num_classes;
} goat_attribution_options;

GOAT_API void goat_attribution_options_init(goat_attribution_options* options);
GOAT_API goat_status goat_attribute(const goat_model* model, const goat_dataset* dataset, int graph_index,
                                    const goat_attribution_options* options, goat_attribution** out);
GOAT_API goat_status goat_attribution_to_json(const goat_attribution* attr, char** out);
GOAT_API goat_status goat_attribution_num_edges(const goat_attribution* attr, int* out);
GOAT_API goat_status goat_attribution_edge(const goat_attribution* attr, int edge, int* u, int* v);
/* Score of an edge for the k-th attributed class. */
GOAT_API goat_status goat_attribution_score(const goat_attribution* attr, int edge, int k, double* out);
/* Largest completeness residual relative to max(1, |f(G)|, |f(0,0)|). */
GOAT_API goat_status goat_attribution_max_residual(const goat_attribution* attr, double* out);
/* Top edges for `cls` at a sparsity target, as explanation JSON. */
GOAT_API goat_status goat_explanation_json(const goat_attribution* attr, const goat_dataset* dataset, int graph_index,
                                           double sparsity, int cls, char** out);
GOAT_API void goat_attribution_free(goat_attribution* attr);

/* Evaluation */
typedef struct goat_eval_options {
  goat_metric metric;
  const double* sparsities; /* NULL: 0.5, 0.6, 0.7, 0.8, 0.9 */
  int num_sparsities;
  int features_as_variables;
  int calibrate;
  goat_embedding_point embedding;
  int c1;
  int c2;
  int max_k;
  int jobs;
} goat_eval_options;

GOAT_API void goat_eval_options_init(goat_eval_options* options);
/* Any of the output pointers may be NULL. */
GOAT_API goat_status goat_eval(const goat_model* model, const goat_dataset* dataset, const goat_eval_options* options,
                               char** report_json, char** summary_csv, char** samples_csv);

/* Brute-force oracle suites */
typedef struct goat_oracle_options {
  int nodes;
  int conv_layers;
  int feature_dim;
  int width;
  int models_per_arch;
  uint64_t seed;
  double tolerance;
  int inject_perturbation;
} goat_oracle_options;

GOAT_API void goat_oracle_options_init(goat_oracle_options* options);
GOAT_API goat_status goat_check_oracle(const goat_oracle_options* options, int* passed, char** report_json);

#ifdef __cplusplus
}
#endif

#endif
