// goat: command-line front end over the C API.

#include "goat/goat.h"

#include "CLI11.hpp"
#include "json.hpp"

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitInput = 2;
constexpr int kExitSuiteFailed = 3;

struct Failure : std::runtime_error {
  goat_status status;
  Failure(goat_status s, const std::string& what) : std::runtime_error(what), status(s) {}
};

void check(goat_status s, const std::string& context = {}) {
  if (s == GOAT_OK) return;
  std::string msg = goat_last_error();
  if (!context.empty()) msg = context + ": " + msg;
  throw Failure(s, msg);
}

struct StringDeleter {
  void operator()(char* s) const { goat_string_free(s); }
};
using OwnedString = std::unique_ptr<char, StringDeleter>;

std::string take(char* s) { return OwnedString(s).get(); }

struct DatasetDeleter {
  void operator()(goat_dataset* d) const { goat_dataset_free(d); }
};
struct ModelDeleter {
  void operator()(goat_model* m) const { goat_model_free(m); }
};
struct AttributionDeleter {
  void operator()(goat_attribution* a) const { goat_attribution_free(a); }
};
using Dataset = std::unique_ptr<goat_dataset, DatasetDeleter>;
using Model = std::unique_ptr<goat_model, ModelDeleter>;
using Attribution = std::unique_ptr<goat_attribution, AttributionDeleter>;

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Failure(GOAT_ERR_IO, "cannot write " + path.string());
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split(s, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Failure(GOAT_ERR_INVALID_ARGUMENT, "not a number in list: '" + item + "'");
    }
  }
  return out;
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  for (const auto& item : split(s, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Failure(GOAT_ERR_INVALID_ARGUMENT, "not an integer in list: '" + item + "'");
    }
  }
  return out;
}

// Shared input flags.
struct Inputs {
  std::string model;
  std::string data;
  std::string gen;
  std::string format = "json";

  void add(CLI::App* app, bool with_model) {
    if (with_model) app->add_option("--model", model, "model JSON")->required()->check(CLI::ExistingFile);
    auto* d = app->add_option("--data", data, "dataset or graph file")->check(CLI::ExistingFile);
    auto* g = app->add_option("--gen", gen, "generator spec ba2motifs:count:base:seed");
    d->excludes(g);
    app->add_option("--format", format, "input format for --data")->check(CLI::IsMember({"json", "csv"}));
  }

  Dataset dataset() const {
    goat_dataset* out = nullptr;
    if (!gen.empty()) {
      const auto parts = split(gen, ':');
      if (parts.size() != 4 || parts[0] != "ba2motifs") {
        throw Failure(GOAT_ERR_INVALID_ARGUMENT, "generator spec must be ba2motifs:count:base:seed, got '" + gen + "'");
      }
      int count = 0, base = 0;
      unsigned long long seed = 0;
      try {
        count = std::stoi(parts[1]);
        base = std::stoi(parts[2]);
        seed = std::stoull(parts[3]);
      } catch (const std::exception&) {
        throw Failure(GOAT_ERR_INVALID_ARGUMENT, "generator spec has a non-numeric field: '" + gen + "'");
      }
      check(goat_dataset_generate_ba2motifs(count, base, seed, &out), "generate");
    } else if (!data.empty()) {
      check(goat_dataset_load(data.c_str(), format == "csv" ? GOAT_FORMAT_EDGE_CSV : GOAT_FORMAT_JSON, &out), data);
    } else {
      throw Failure(GOAT_ERR_INVALID_ARGUMENT, "one of --data or --gen is required");
    }
    return Dataset(out);
  }

  Model load_model() const {
    goat_model* out = nullptr;
    check(goat_model_load(model.c_str(), &out), model);
    return Model(out);
  }

  json echo() const {
    json j;
    j["model"] = model.empty() ? json(nullptr) : json(fs::absolute(model).lexically_normal().string());
    j["data"] = data.empty() ? json(nullptr) : json(fs::absolute(data).lexically_normal().string());
    j["gen"] = gen.empty() ? json(nullptr) : json(gen);
    j["format"] = format;
    return j;
  }
};

int dataset_size(const goat_dataset* d) {
  int n = 0;
  check(goat_dataset_size(d, &n));
  return n;
}

template <class Fn>
void run_jobs(int n, int jobs, Fn&& fn) {
  std::vector<std::string> errors(static_cast<std::size_t>(n));
  std::vector<goat_status> codes(static_cast<std::size_t>(n), GOAT_OK);
  auto work = [&](int i) {
    try {
      fn(i);
    } catch (const Failure& f) {
      codes[static_cast<std::size_t>(i)] = f.status;
      errors[static_cast<std::size_t>(i)] = f.what();
    } catch (const std::exception& e) {
      codes[static_cast<std::size_t>(i)] = GOAT_ERR_INTERNAL;
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  };
  if (jobs <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) work(i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < std::min(jobs, n); ++w) {
      pool.emplace_back([&] {
        for (int i = next++; i < n; i = next++) work(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (int i = 0; i < n; ++i) {
    if (codes[static_cast<std::size_t>(i)] != GOAT_OK) {
      throw Failure(codes[static_cast<std::size_t>(i)], "graph " + std::to_string(i) + ": " + errors[static_cast<std::size_t>(i)]);
    }
  }
}

struct ExplainArgs {
  Inputs in;
  std::string sparsity = "0.7";
  std::string classes;
  int node = -1;
  bool x_as_vars = false;
  bool no_calibrate = false;
  std::string out = "goat_out";
  int jobs = 1;
  std::uint64_t seed = 0;
};

int cmd_explain(const ExplainArgs& a) {
  const auto sparsities = parse_doubles(a.sparsity);
  const auto classes = a.classes.empty() ? std::vector<int>{} : parse_ints(a.classes);
  const Model model = a.in.load_model();
  const Dataset data = a.in.dataset();
  const int n = dataset_size(data.get());
  const fs::path out(a.out);
  fs::create_directories(out);

  goat_attribution_options opts;
  goat_attribution_options_init(&opts);
  opts.features_as_variables = a.x_as_vars ? 1 : 0;
  opts.calibrate = a.no_calibrate ? 0 : 1;
  opts.target_node = a.node;
  opts.classes = classes.empty() ? nullptr : classes.data();
  opts.num_classes = static_cast<int>(classes.size());

  std::vector<json> per_graph(static_cast<std::size_t>(n));
  run_jobs(n, a.jobs, [&](int g) {
    goat_attribution* raw = nullptr;
    check(goat_attribute(model.get(), data.get(), g, &opts, &raw));
    const Attribution attr(raw);
    char* text = nullptr;
    check(goat_forward_json(model.get(), data.get(), g, &text));
    const json fwd = json::parse(take(text));
    const int row = a.node >= 0 ? a.node : 0;
    const auto& probs = fwd["probs"][static_cast<std::size_t>(row)];
    int predicted = 0;
    for (std::size_t c = 1; c < probs.size(); ++c) {
      if (probs[c].get<double>() > probs[static_cast<std::size_t>(predicted)].get<double>()) predicted = static_cast<int>(c);
    }
    check(goat_attribution_to_json(attr.get(), &text));
    json result;
    result["graph"] = g;
    result["predicted_class"] = predicted;
    result["attribution"] = json::parse(take(text));
    int num_edges = 0;
    check(goat_attribution_num_edges(attr.get(), &num_edges));
    const auto& attributed = result["attribution"]["classes"];
    const bool has_predicted = std::find(attributed.begin(), attributed.end(), predicted) != attributed.end();
    json expls = json::array();
    if (num_edges > 0 && has_predicted) {
      for (double s : sparsities) {
        check(goat_explanation_json(attr.get(), data.get(), g, s, predicted, &text));
        expls.push_back(json::parse(take(text)));
      }
    }
    result["explanations"] = std::move(expls);
    write_file(out / ("graph_" + std::to_string(g) + ".json"), result.dump(2) + "\n");
    double worst = 0.0;
    check(goat_attribution_max_residual(attr.get(), &worst));
    per_graph[static_cast<std::size_t>(g)] = {{"graph", g},
                                              {"file", "graph_" + std::to_string(g) + ".json"},
                                              {"predicted_class", predicted},
                                              {"residual", result["attribution"]["residual"]},
                                              {"max_relative_residual", worst}};
  });

  double worst = 0.0;
  json graphs = json::array();
  for (auto& g : per_graph) {
    worst = std::max(worst, g["max_relative_residual"].get<double>());
    graphs.push_back(std::move(g));
  }
  json manifest;
  manifest["command"] = "explain";
  manifest["config"] = a.in.echo();
  manifest["config"]["sparsity"] = sparsities;
  manifest["config"]["classes"] = classes;
  manifest["config"]["node"] = a.node >= 0 ? json(a.node) : json(nullptr);
  manifest["config"]["features_as_variables"] = a.x_as_vars;
  manifest["config"]["calibrate"] = !a.no_calibrate;
  manifest["config"]["jobs"] = a.jobs;
  manifest["config"]["seed"] = a.seed;
  manifest["version"] = goat_version();
  manifest["graphs"] = std::move(graphs);
  manifest["max_relative_residual"] = worst;
  write_file(out / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "explained " << n << " graph(s) into " << out.string() << ", max relative residual " << worst << "\n";
  return kExitOk;
}

struct OracleArgs {
  goat_oracle_options opts{};
  bool inject = false;
  std::string out;
};

int cmd_check_oracle(OracleArgs& a) {
  a.opts.inject_perturbation = a.inject ? 1 : 0;
  int passed = 0;
  char* text = nullptr;
  check(goat_check_oracle(&a.opts, &passed, &text), "check-oracle");
  json report = json::parse(take(text));
  report["config"] = {{"nodes", a.opts.nodes},
                      {"conv_layers", a.opts.conv_layers},
                      {"feature_dim", a.opts.feature_dim},
                      {"width", a.opts.width},
                      {"models_per_arch", a.opts.models_per_arch},
                      {"seed", a.opts.seed},
                      {"tolerance", a.opts.tolerance},
                      {"inject_perturbation", a.inject}};
  if (!a.out.empty()) write_file(a.out, report.dump(2) + "\n");
  for (const auto& s : report["suites"]) {
    std::printf("%-20s %s  cases=%d  max_deviation=%.3e  tolerance=%.1e\n", s["name"].get<std::string>().c_str(),
                s["passed"].get<bool>() ? "PASS" : "FAIL", s["cases"].get<int>(), s["max_deviation"].get<double>(),
                s["tolerance"].get<double>());
  }
  return passed ? kExitOk : kExitSuiteFailed;
}

struct EvalArgs {
  Inputs in;
  std::string metric;
  std::string sparsity;
  std::string pair = "0,1";
  std::string embedding = "post-conv";
  int max_k = 10;
  bool x_as_vars = false;
  bool no_calibrate = false;
  std::string out = "goat_out";
  int jobs = 1;
  std::uint64_t seed = 0;
};

int cmd_eval(const EvalArgs& a) {
  const std::string grid = !a.sparsity.empty() ? a.sparsity : a.metric == "fidelity" ? "0.5,0.6,0.7,0.8,0.9" : "0.7";
  const auto sparsities = parse_doubles(grid);
  const auto pair = parse_ints(a.pair);
  if (pair.size() != 2) throw Failure(GOAT_ERR_INVALID_ARGUMENT, "--classes takes two class indices, e.g. 0,1");
  const Model model = a.in.load_model();
  const Dataset data = a.in.dataset();

  goat_eval_options opts;
  goat_eval_options_init(&opts);
  opts.metric = a.metric == "fidelity"           ? GOAT_METRIC_FIDELITY
                : a.metric == "discriminability" ? GOAT_METRIC_DISCRIMINABILITY
                                                 : GOAT_METRIC_STABILITY;
  opts.sparsities = sparsities.data();
  opts.num_sparsities = static_cast<int>(sparsities.size());
  opts.features_as_variables = a.x_as_vars ? 1 : 0;
  opts.calibrate = a.no_calibrate ? 0 : 1;
  opts.embedding = a.embedding == "pre-classifier" ? GOAT_EMBEDDING_PRE_CLASSIFIER : GOAT_EMBEDDING_POST_CONV;
  opts.c1 = pair[0];
  opts.c2 = pair[1];
  opts.max_k = a.max_k;
  opts.jobs = a.jobs;
  char* report = nullptr;
  char* summary = nullptr;
  char* samples = nullptr;
  check(goat_eval(model.get(), data.get(), &opts, &report, &summary, &samples), "eval " + a.metric);
  json j = json::parse(take(report));
  const std::string summary_text = take(summary);
  const std::string samples_text = take(samples);
  j["config"] = a.in.echo();
  j["config"]["metric"] = a.metric;
  j["config"]["sparsity"] = sparsities;
  j["config"]["classes"] = pair;
  j["config"]["embedding"] = a.embedding;
  j["config"]["max_k"] = a.max_k;
  j["config"]["features_as_variables"] = a.x_as_vars;
  j["config"]["calibrate"] = !a.no_calibrate;
  j["config"]["jobs"] = a.jobs;
  j["config"]["seed"] = a.seed;
  const fs::path out(a.out);
  write_file(out / (a.metric + ".json"), j.dump(2) + "\n");
  write_file(out / (a.metric + "_summary.csv"), summary_text);
  write_file(out / (a.metric + "_samples.csv"), samples_text);
  std::cout << summary_text;
  return kExitOk;
}

int cmd_terms(const std::string& path) {
  goat_model* raw = nullptr;
  check(goat_model_load(path.c_str(), &raw), path);
  const Model model(raw);
  char* text = nullptr;
  check(goat_model_describe_terms(model.get(), &text));
  const json j = json::parse(take(text));
  std::cout << j["count"].get<int>() << " term classes (" << j["arch"].get<std::string>() << ")\n";
  for (const auto& t : j["terms"]) std::cout << "  " << t["signature"].get<std::string>() << "\n";
  return kExitOk;
}

struct RandomArgs {
  std::string arch = "gcn";
  std::string pooling = "mean";
  goat_random_model_options opts{};
  std::string out;
};

int cmd_random_model(RandomArgs& a) {
  a.opts.arch = a.arch == "sage" ? GOAT_ARCH_SAGE : a.arch == "gin" ? GOAT_ARCH_GIN : GOAT_ARCH_GCN;
  a.opts.pooling = a.pooling == "none" ? GOAT_POOLING_NONE : GOAT_POOLING_MEAN;
  goat_model* raw = nullptr;
  check(goat_model_random(&a.opts, &raw), "random-model");
  const Model model(raw);
  check(goat_model_save(model.get(), a.out.c_str()), a.out);
  std::cout << "wrote " << a.out << "\n";
  return kExitOk;
}

int cmd_generate(const Inputs& in, const std::string& out) {
  const Dataset data = in.dataset();
  check(goat_dataset_save(data.get(), out.c_str()), out);
  std::cout << "wrote " << dataset_size(data.get()) << " graph(s) to " << out << "\n";
  return kExitOk;
}

int exit_code(goat_status s) {
  switch (s) {
    case GOAT_ERR_INVALID_ARGUMENT:
    case GOAT_ERR_PARSE:
    case GOAT_ERR_VALIDATION:
    case GOAT_ERR_IO: return kExitInput;
    default: return kExitOther;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training-free edge attribution for GCN, GraphSAGE and GIN models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(goat_version()));

  ExplainArgs ex;
  auto* explain = app.add_subcommand("explain", "attribute every graph and write per-graph results plus a manifest");
  ex.in.add(explain, true);
  explain->add_option("--sparsity", ex.sparsity, "comma-separated sparsity targets for the explanations");
  explain->add_option("--class", ex.classes, "comma-separated classes to attribute (default: all)");
  explain->add_option("--node", ex.node, "explained node row for models without pooling");
  explain->add_flag("--x-as-vars", ex.x_as_vars, "treat node features as variables");
  explain->add_flag("--no-calibrate", ex.no_calibrate, "skip the zero-baseline calibration");
  explain->add_option("--out", ex.out, "output directory");
  explain->add_option("--jobs", ex.jobs, "worker threads")->check(CLI::PositiveNumber);
  explain->add_option("--seed", ex.seed, "recorded in the manifest");

  OracleArgs orc;
  goat_oracle_options_init(&orc.opts);
  auto* oracle = app.add_subcommand("check-oracle", "compare the attribution engine with brute-force expansion");
  oracle->add_option("--nodes", orc.opts.nodes, "nodes per random graph");
  oracle->add_option("--layers", orc.opts.conv_layers, "conv layers");
  oracle->add_option("--features", orc.opts.feature_dim, "feature columns");
  oracle->add_option("--width", orc.opts.width, "hidden width");
  oracle->add_option("--models", orc.opts.models_per_arch, "random models per architecture");
  oracle->add_option("--seed", orc.opts.seed, "random seed");
  oracle->add_option("--tolerance", orc.opts.tolerance, "absolute tolerance");
  oracle->add_flag("--inject-perturbation", orc.inject, "perturb one weight after the trace (must fail)");
  oracle->add_option("--out", orc.out, "report JSON path");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "fidelity, discriminability or stability over a dataset");
  eval->add_option("metric", ev.metric, "metric")->required()->check(CLI::IsMember({"fidelity", "discriminability", "stability"}));
  ev.in.add(eval, true);
  eval->add_option("--sparsity", ev.sparsity, "comma-separated sparsity targets (fidelity default 0.5..0.9, else 0.7)");
  eval->add_option("--classes", ev.pair, "class pair for discriminability");
  eval->add_option("--embedding", ev.embedding, "embedding point")->check(CLI::IsMember({"post-conv", "pre-classifier"}));
  eval->add_option("--max-k", ev.max_k, "largest k for stability")->check(CLI::PositiveNumber);
  eval->add_flag("--x-as-vars", ev.x_as_vars, "treat node features as variables");
  eval->add_flag("--no-calibrate", ev.no_calibrate, "skip the zero-baseline calibration");
  eval->add_option("--out", ev.out, "output directory");
  eval->add_option("--jobs", ev.jobs, "worker threads")->check(CLI::PositiveNumber);
  eval->add_option("--seed", ev.seed, "recorded in the report");

  std::string terms_model;
  auto* terms = app.add_subcommand("terms", "list the term classes of a model's expansion");
  terms->add_option("--model", terms_model, "model JSON")->required()->check(CLI::ExistingFile);

  RandomArgs rm;
  goat_random_model_options_init(&rm.opts);
  auto* random = app.add_subcommand("random-model", "write a model with random weights");
  random->add_option("--arch", rm.arch)->check(CLI::IsMember({"gcn", "sage", "gin"}));
  random->add_option("--pooling", rm.pooling)->check(CLI::IsMember({"mean", "none"}));
  random->add_option("--input-dim", rm.opts.input_dim);
  random->add_option("--hidden", rm.opts.hidden);
  random->add_option("--layers", rm.opts.conv_layers);
  random->add_option("--classifier-layers", rm.opts.classifier_layers);
  random->add_option("--classes", rm.opts.num_classes);
  random->add_option("--gin-mlp-layers", rm.opts.gin_mlp_layers);
  random->add_option("--gin-eps", rm.opts.gin_eps);
  random->add_option("--bias-scale", rm.opts.bias_scale);
  random->add_option("--seed", rm.opts.seed);
  random->add_option("--out", rm.out, "model JSON path")->required();

  Inputs gen_in;
  std::string gen_out;
  auto* generate = app.add_subcommand("generate", "write a generated dataset");
  gen_in.add(generate, false);
  generate->add_option("--out", gen_out, "dataset JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInput;
  }

  try {
    if (explain->parsed()) return cmd_explain(ex);
    if (oracle->parsed()) return cmd_check_oracle(orc);
    if (eval->parsed()) return cmd_eval(ev);
    if (terms->parsed()) return cmd_terms(terms_model);
    if (random->parsed()) return cmd_random_model(rm);
    if (generate->parsed()) return cmd_generate(gen_in, gen_out);
  } catch (const Failure& f) {
    std::cerr << "error: " << f.what() << "\n";
    return exit_code(f.status);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOther;
}
