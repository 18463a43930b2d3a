#pragma once

#include "goat/graph.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace goat {

enum class Activation { Relu, None };

/// x -> act(x W + B). W is in_dim x out_dim, applied to row vectors.
struct DenseLayer {
  Matrix weight;
  std::optional<RowVector> bias;
  Activation activation = Activation::Relu;

  int in_dim() const { return static_cast<int>(weight.rows()); }
  int out_dim() const { return static_cast<int>(weight.cols()); }
};

/// H' = act(V H W + B), V the symmetrically normalized adjacency with self-loops.
struct GcnConv {
  DenseLayer linear;
};

/// H' = act(A H W_neighbor + H W_self + B): concatenation COMBINE.
struct SageConv {
  Matrix w_neighbor;
  Matrix w_self;
  std::optional<RowVector> bias;
  Activation activation = Activation::Relu;
};

/// H' = MLP((A + I) H + eps H). Each MLP layer carries its own activation.
struct GinConv {
  double eps = 0.0;
  std::vector<DenseLayer> mlp;
};

using ConvLayer = std::variant<GcnConv, SageConv, GinConv>;

enum class Arch { Gcn, Sage, Gin };
enum class Pooling { Mean, None };

int conv_in_dim(const ConvLayer& layer);
int conv_out_dim(const ConvLayer& layer);

struct ModelSpec {
  Arch arch = Arch::Gcn;
  std::vector<ConvLayer> conv_layers;
  Pooling pooling = Pooling::Mean;
  std::vector<DenseLayer> classifier;
  int num_classes = 2;

  int input_dim() const { return conv_in_dim(conv_layers.front()); }
  /// Checks the dimension chain, activation placement and finiteness.
  void validate() const;
};

std::string arch_name(Arch arch);
Arch parse_arch(const std::string& name);

/// Running-statistics BatchNorm in evaluation mode.
struct BatchNorm {
  Vector mean;
  Vector var;
  double eps = 1e-5;
  Vector weight;
  Vector bias;
};

/// Rewrites y = (x - mu) / sqrt(delta + eps) * W + B as y = x * W_bn + B_bn,
/// elementwise. Throws a domain error if any delta + eps <= 0.
std::pair<Vector, Vector> fold_batchnorm(const Vector& mu, const Vector& delta, double epsvar, const Vector& w,
                                         const Vector& b);

/// Folds a BatchNorm that follows the layer's affine map (before activation).
void fold_into(DenseLayer& layer, const BatchNorm& bn);

ModelSpec model_from_json(const std::string& text);
std::string model_to_json(const ModelSpec& model);
ModelSpec load_model(const std::filesystem::path& path);
void save_model(const ModelSpec& model, const std::filesystem::path& path);

struct RandomModelOptions {
  Arch arch = Arch::Gcn;
  int input_dim = 10;
  int hidden = 32;
  int conv_layers = 3;
  int classifier_layers = 2;
  int num_classes = 2;
  int gin_mlp_layers = 2;
  Pooling pooling = Pooling::Mean;
  double bias_scale = 0.1;
  double gin_eps = 0.0;
  std::uint64_t seed = 0;
};

/// Glorot-uniform weights and uniform biases in [-bias_scale, bias_scale].
ModelSpec random_model(const RandomModelOptions& options);

}  // namespace goat
