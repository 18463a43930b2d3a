// Prints one PASS/FAIL line per acceptance criterion; exit status 1 if any fail.
#include "goat/attribution.hpp"
#include "goat/expansion.hpp"
#include "goat/metrics.hpp"
#include "goat/oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

using namespace goat;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

char buf[512];

template <class... Args>
std::string format(const char* f, Args... args) {
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

ModelSpec sweep_model(Arch arch, std::mt19937_64& rng) {
  RandomModelOptions o;
  o.arch = arch;
  o.input_dim = 1 + static_cast<int>(rng() % 4);
  o.hidden = 2 + static_cast<int>(rng() % 6);
  o.conv_layers = 1 + static_cast<int>(rng() % 3);
  o.classifier_layers = 1 + static_cast<int>(rng() % 2);
  o.num_classes = 2 + static_cast<int>(rng() % 2);
  o.pooling = rng() % 3 == 0 ? Pooling::None : Pooling::Mean;
  o.gin_eps = arch == Arch::Gin ? 0.1 * static_cast<double>(rng() % 5) : 0.0;
  o.bias_scale = 0.5;
  o.seed = rng();
  return random_model(o);
}

constexpr Arch kArchs[] = {Arch::Gcn, Arch::Sage, Arch::Gin};

Outcome toy_example() {
  auto make = [](double value, std::vector<VariableId> vars) {
    std::sort(vars.begin(), vars.end());
    ScalarProduct z;
    z.value = z.constant = value;
    z.variables = std::move(vars);
    return z;
  };
  auto a = VariableId::adjacency;
  const std::vector<ScalarProduct> one{make(10, {a(1, 1), a(1, 2), a(2, 3)})};
  double worst = 0.0;
  for (OracleMode mode : {OracleMode::EqualShare, OracleMode::OccurrenceWeighted}) {
    for (const VariableId& v : one[0].variables) worst = std::max(worst, std::abs(oracle_attribute(one, mode, v) - 10.0 / 3.0));
  }
  const std::vector<ScalarProduct> y13{make(10, {a(1, 1), a(1, 2), a(2, 3)}), make(8, {a(1, 1), a(1, 3), a(3, 3)}),
                                       make(11, {a(1, 2), a(2, 1), a(1, 3)})};
  const double a11 = oracle_attribute(y13, OracleMode::EqualShare, a(1, 1));
  worst = std::max(worst, std::abs(a11 - 6.0));
  return {worst <= 1e-12, format("per-edge 10/3 and A11 = %.15g, max error %.3g (tol 1e-12)", a11, worst)};
}

Outcome expansion_counts() {
  int counts[3];
  for (int k = 0; k < 3; ++k) {
    RandomModelOptions o;
    o.arch = kArchs[k];
    o.conv_layers = 3;
    o.classifier_layers = 2;
    o.gin_mlp_layers = 2;
    counts[k] = static_cast<int>(enumerate_terms(random_model(o)).size());
  }
  return {counts[0] == 6 && counts[2] == 24 && counts[1] == 17,
          format("GCN %d / GIN %d / SAGE %d (want 6 / 24 / 17)", counts[0], counts[2], counts[1])};
}

// Reconstruction and per-slot conservation share one sweep of random models.
void reconstruction_and_conservation(Outcome& recon, Outcome& slots) {
  std::mt19937_64 rng(20240501);
  double worst_recon = 0.0, worst_slot = 0.0;
  int cases = 0, slot_checks = 0;
  const auto t0 = Clock::now();
  for (Arch arch : kArchs) {
    for (int i = 0; i < 20; ++i) {
      const ModelSpec m = sweep_model(arch, rng);
      const auto terms = enumerate_terms(m);
      for (int n = 3; n <= 8; ++n) {
        const ForwardTrace t = run_forward(m, random_graph(n, 0.4, m.input_dim(), rng()));
        Matrix sum = Matrix::Zero(t.logits.rows(), t.logits.cols());
        std::vector<Matrix> values;
        for (const TermClass& term : terms) {
          values.push_back(evaluate_term(m, term, t));
          sum += values.back();
        }
        const double scale = std::max(1.0, t.logits.cwiseAbs().maxCoeff());
        worst_recon = std::max(worst_recon, (sum - t.logits).cwiseAbs().maxCoeff() / scale);
        ++cases;
        const OutputIndex out{static_cast<int>(rng() % static_cast<std::uint64_t>(t.logits.rows())),
                              static_cast<int>(rng() % static_cast<std::uint64_t>(t.logits.cols()))};
        for (std::size_t k = 0; k < terms.size(); ++k) {
          const double v = values[k](out.row, out.cls);
          for (const SlotContribution& c : sweep_all_slots(m, terms[k], t, out)) {
            worst_slot = std::max(worst_slot, std::abs(c.entries.sum() - v) / std::max(1.0, std::abs(v)));
            ++slot_checks;
          }
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  recon = {worst_recon <= 1e-8 && secs < 5.0,
           format("%d cases, max rel error %.3g (tol 1e-8), %.2f s including slot sweeps (limit 5 s)", cases,
                  worst_recon, secs)};
  slots = {worst_slot <= 1e-8, format("%d slot sweeps, max rel error %.3g (tol 1e-8)", slot_checks, worst_slot)};
}

Outcome completeness() {
  std::mt19937_64 rng(77);
  double worst = 0.0;
  int cases = 0;
  for (Arch arch : kArchs) {
    for (int i = 0; i < 20; ++i) {
      const ModelSpec m = sweep_model(arch, rng);
      const Graph g = random_graph(3 + static_cast<int>(rng() % 10), 0.35, m.input_dim(), rng());
      AttributionOptions o;
      o.calibrate = true;
      o.features_as_variables = i % 2 == 1;
      if (m.pooling == Pooling::None) o.target_node = static_cast<int>(rng() % static_cast<std::uint64_t>(g.num_nodes()));
      worst = std::max(worst, attribute(m, g, o).max_relative_residual());
      ++cases;
    }
  }
  return {worst <= 1e-6, format("%d models, max rel residual %.3g (tol 1e-6)", cases, worst)};
}

Outcome oracle_equivalence() {
  double var_dev = 0.0, agree_dev = 0.0;
  bool ok = true;
  int cases = 0;
  for (int layers : {1, 2}) {
    OracleSuiteConfig cfg;
    cfg.conv_layers = layers;
    cfg.nodes = 5;
    cfg.seed = 7 + static_cast<std::uint64_t>(layers);
    const OracleReport r = run_oracle_suite(cfg);
    for (const OracleSuiteResult& s : r.suites) {
      if (s.name == "variable-equivalence") {
        var_dev = std::max(var_dev, s.max_deviation);
        ok = ok && s.passed && s.max_deviation <= 1e-8;
        cases += s.cases;
      } else if (s.name == "mode-agreement") {
        agree_dev = std::max(agree_dev, s.max_deviation);
        ok = ok && s.passed && s.max_deviation == 0.0;
      }
    }
  }
  return {ok, format("%d variable entries, max deviation %.3g (tol 1e-8); repeat-free mode gap %.3g (must be 0)", cases,
                     var_dev, agree_dev)};
}

Outcome fidelity_dominance() {
  const auto t0 = Clock::now();
  RandomModelOptions o;  // library defaults: 3-layer GCN, seed 0
  o.input_dim = kBa2MotifsFeatureDim;
  const ModelSpec m = random_model(o);
  const Dataset d = generate_ba2motifs(200, 20, 3);
  constexpr int kSeeds = 20;
  constexpr double kSparsity = 0.7;
  double goat_sum = 0.0;
  std::vector<double> seed_sum(kSeeds, 0.0);
  double diff_sum = 0.0, diff_sq = 0.0;
  for (std::size_t gi = 0; gi < d.graphs.size(); ++gi) {
    const Graph& g = d.graphs[gi];
    const int y = predicted_class(m, g);
    AttributionOptions ao;
    ao.classes = {y};
    const double f = fidelity(m, g, extract_explanation(attribute(m, g, ao), g, kSparsity, y));
    goat_sum += f;
    double rnd = 0.0;
    for (int s = 0; s < kSeeds; ++s) {
      const double r = fidelity(m, g, random_explanation(g, kSparsity, y, 1000 + static_cast<std::uint64_t>(s)));
      seed_sum[static_cast<std::size_t>(s)] += r;
      rnd += r / kSeeds;
    }
    diff_sum += f - rnd;
    diff_sq += (f - rnd) * (f - rnd);
  }
  const double n = static_cast<double>(d.graphs.size());
  const double goat_mean = goat_sum / n;
  double rnd_mean = 0.0;
  for (double& s : seed_sum) {
    s /= n;
    rnd_mean += s / kSeeds;
  }
  double var = 0.0;
  for (double s : seed_sum) var += (s - rnd_mean) * (s - rnd_mean);
  const double se_seeds = std::sqrt(var / (kSeeds - 1) / kSeeds);
  const double diff_mean = diff_sum / n;
  const double se_paired = std::sqrt((diff_sq - n * diff_mean * diff_mean) / (n - 1) / n);
  const double secs = seconds_since(t0);
  const bool ok = goat_mean >= rnd_mean + 3 * se_seeds && diff_mean >= 3 * se_paired && secs < 60.0;
  return {ok, format("GOAt %.4g vs random %.4g, seed SE %.3g, paired z %.1f (need >= 3), %.1f s (limit 60 s)",
                     goat_mean, rnd_mean, se_seeds, diff_mean / se_paired, secs)};
}

Outcome metric_units() {
  const ModelSpec m = [] {
    RandomModelOptions o;
    o.input_dim = 3;
    o.hidden = 4;
    return random_model(o);
  }();
  const double f_empty = fidelity(m, random_graph(6, 0.5, 3, 1), Explanation{});
  auto sample = [](double a, double b, int c) {
    RowVector r(2);
    r << a, b;
    return EmbeddedSample{r, c, c};
  };
  const double d_same = discriminability({sample(1, 2, 0), sample(1, 2, 1)}, 0, 1);
  const double d_ortho = discriminability({sample(1, 0, 0), sample(0, 1, 1)}, 0, 1);
  std::vector<Explanation> same(5), distinct(5);
  for (std::size_t i = 0; i < 5; ++i) {
    same[i].canonical_hash = 9;
    distinct[i].canonical_hash = i;
  }
  bool k_ok = stability(same, 1) == 1.0;
  for (int k = 1; k <= 5; ++k) k_ok = k_ok && std::abs(stability(distinct, k) - k / 5.0) <= 1e-15;
  const bool ok = f_empty == 0.0 && d_same == 0.0 && std::abs(d_ortho - std::sqrt(2.0)) <= 1e-12 && k_ok;
  return {ok, format("fidelity(empty) %.3g, disc same %.3g, disc orthogonal - sqrt2 %.3g, stability %s", f_empty, d_same,
                     d_ortho - std::sqrt(2.0), k_ok ? "1 and k/N" : "wrong")};
}

Outcome runtime() {
  RandomModelOptions o;
  o.conv_layers = 3;
  const ModelSpec m = random_model(o);
  const Graph g = random_graph(30, 0.1, o.input_dim, 5);
  attribute(m, g, {});
  const auto t0 = Clock::now();
  const AttributionResult r = attribute(m, g, {});
  const double secs = seconds_since(t0);
  return {secs <= 1.0, format("30 nodes, %zu edges, 3 conv layers: %.3f s (limit 1 s)", r.edges.size(), secs)};
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](const char* name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::printf("%s  %-24s %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  };
  Outcome recon, slots;
  report("toy-example", toy_example);
  report("expansion-counts", expansion_counts);
  report("reconstruction", [&] {
    reconstruction_and_conservation(recon, slots);
    return recon;
  });
  report("slot-conservation", [&] { return slots; });
  report("completeness", completeness);
  report("oracle-equivalence", oracle_equivalence);
  report("fidelity-dominance", fidelity_dominance);
  report("metric-units", metric_units);
  report("runtime", runtime);
  return failed == 0 ? 0 : 1;
}
