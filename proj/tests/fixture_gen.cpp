// Writes a dataset and a model whose predictions split across both classes.
#include "goat/forward.hpp"
#include "goat/graph.hpp"
#include "goat/model.hpp"

#include <algorithm>
#include <cstdio>
#include <string>

using namespace goat;

int main(int argc, char** argv) {
  if (argc != 3) {
    std::fprintf(stderr, "usage: %s DATASET_OUT MODEL_OUT\n", argv[0]);
    return 2;
  }
  const Dataset d = generate_ba2motifs(12, 8, 5);
  RandomModelOptions o;
  o.input_dim = kBa2MotifsFeatureDim;
  o.hidden = 8;
  o.conv_layers = 2;
  o.seed = 3;
  ModelSpec m = random_model(o);

  std::vector<double> margins;
  for (const Graph& g : d.graphs) {
    const Matrix logits = run_forward(m, g).logits;
    margins.push_back(logits(0, 1) - logits(0, 0));
  }
  std::sort(margins.begin(), margins.end());
  const double mid = 0.5 * (margins[margins.size() / 2 - 1] + margins[margins.size() / 2]);
  (*m.classifier.back().bias)(1) -= mid;

  save_json(d, argv[1]);
  save_model(m, argv[2]);
  return 0;
}
