#include "goat/model.hpp"

#include "goat/error.hpp"
#include "goat/json_util.hpp"

#include <cmath>
#include <random>

namespace goat {

using detail::json;

int conv_in_dim(const ConvLayer& layer) {
  return std::visit(
      [](const auto& c) -> int {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, GcnConv>) return c.linear.in_dim();
        if constexpr (std::is_same_v<T, SageConv>) return static_cast<int>(c.w_neighbor.rows());
        if constexpr (std::is_same_v<T, GinConv>) return c.mlp.empty() ? 0 : c.mlp.front().in_dim();
      },
      layer);
}

int conv_out_dim(const ConvLayer& layer) {
  return std::visit(
      [](const auto& c) -> int {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, GcnConv>) return c.linear.out_dim();
        if constexpr (std::is_same_v<T, SageConv>) return static_cast<int>(c.w_neighbor.cols());
        if constexpr (std::is_same_v<T, GinConv>) return c.mlp.empty() ? 0 : c.mlp.back().out_dim();
      },
      layer);
}

std::string arch_name(Arch arch) {
  switch (arch) {
    case Arch::Gcn: return "gcn";
    case Arch::Sage: return "sage";
    case Arch::Gin: return "gin";
  }
  return "?";
}

Arch parse_arch(const std::string& name) {
  if (name == "gcn") return Arch::Gcn;
  if (name == "sage") return Arch::Sage;
  if (name == "gin") return Arch::Gin;
  throw validation_error("unknown architecture \"" + name + "\"");
}

namespace {

void check_dense(const DenseLayer& layer, const std::string& name) {
  if (layer.weight.rows() == 0 || layer.weight.cols() == 0) throw validation_error(name + ": empty weight matrix");
  if (!layer.weight.allFinite()) throw validation_error(name + ": non-finite weight");
  if (layer.bias) {
    if (layer.bias->size() != layer.weight.cols()) {
      throw validation_error(name + ": bias has " + std::to_string(layer.bias->size()) + " entries, weight has " +
                             std::to_string(layer.weight.cols()) + " columns");
    }
    if (!layer.bias->allFinite()) throw validation_error(name + ": non-finite bias");
  }
}

void check_chain(int produced, const std::string& producer, int expected, const std::string& consumer) {
  if (produced != expected) {
    throw validation_error("dimension mismatch: " + producer + " produces " + std::to_string(produced) + " but " +
                           consumer + " expects " + std::to_string(expected));
  }
}

Arch kind_of(const ConvLayer& layer) {
  if (std::holds_alternative<GcnConv>(layer)) return Arch::Gcn;
  if (std::holds_alternative<SageConv>(layer)) return Arch::Sage;
  return Arch::Gin;
}

}  // namespace

void ModelSpec::validate() const {
  if (conv_layers.empty()) throw validation_error("model needs at least one conv layer");
  if (classifier.empty()) throw validation_error("model needs at least one classifier layer");
  if (num_classes <= 0) throw validation_error("num_classes must be positive");
  std::string prev_name;
  int prev_out = -1;
  for (std::size_t l = 0; l < conv_layers.size(); ++l) {
    const std::string name = "conv_layers[" + std::to_string(l) + "]";
    const ConvLayer& layer = conv_layers[l];
    if (kind_of(layer) != arch) throw validation_error(name + " kind differs from model arch " + arch_name(arch));
    if (const auto* gcn = std::get_if<GcnConv>(&layer)) {
      check_dense(gcn->linear, name);
    } else if (const auto* sage = std::get_if<SageConv>(&layer)) {
      check_dense(DenseLayer{sage->w_neighbor, sage->bias, sage->activation}, name + ".W_phi");
      check_dense(DenseLayer{sage->w_self, std::nullopt, sage->activation}, name + ".W_psi");
      if (sage->w_self.rows() != sage->w_neighbor.rows() || sage->w_self.cols() != sage->w_neighbor.cols()) {
        throw validation_error(name + ": W_phi and W_psi shapes differ");
      }
    } else {
      const auto& gin = std::get<GinConv>(layer);
      if (gin.mlp.empty()) throw validation_error(name + ": GIN layer needs a non-empty mlp");
      if (!std::isfinite(gin.eps)) throw validation_error(name + ": non-finite eps");
      for (std::size_t k = 0; k < gin.mlp.size(); ++k) {
        const std::string sub = name + ".mlp[" + std::to_string(k) + "]";
        check_dense(gin.mlp[k], sub);
        if (k > 0) check_chain(gin.mlp[k - 1].out_dim(), name + ".mlp[" + std::to_string(k - 1) + "]",
                               gin.mlp[k].in_dim(), sub);
      }
    }
    if (l > 0) check_chain(prev_out, prev_name, conv_in_dim(layer), name);
    prev_out = conv_out_dim(layer);
    prev_name = name;
  }
  for (std::size_t k = 0; k < classifier.size(); ++k) {
    const std::string name = "classifier[" + std::to_string(k) + "]";
    check_dense(classifier[k], name);
    check_chain(prev_out, prev_name, classifier[k].in_dim(), name);
    prev_out = classifier[k].out_dim();
    prev_name = name;
  }
  check_chain(prev_out, prev_name, num_classes, "num_classes");
  if (classifier.back().activation != Activation::None) {
    throw validation_error("the final classifier layer must not have an activation");
  }
}

std::pair<Vector, Vector> fold_batchnorm(const Vector& mu, const Vector& delta, double epsvar, const Vector& w,
                                         const Vector& b) {
  const auto n = mu.size();
  if (delta.size() != n || w.size() != n || b.size() != n) {
    throw invalid_argument("batchnorm parameter vectors must have equal length");
  }
  Vector w_bn(n), b_bn(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double var = delta(i) + epsvar;
    if (!(var > 0.0)) {
      throw domain_error("batchnorm variance term must be positive, got " + std::to_string(var) + " at index " +
                         std::to_string(i));
    }
    const double scale = 1.0 / std::sqrt(var);
    w_bn(i) = w(i) * scale;
    b_bn(i) = -mu(i) * w(i) * scale + b(i);
  }
  return {w_bn, b_bn};
}

void fold_into(DenseLayer& layer, const BatchNorm& bn) {
  if (bn.mean.size() != layer.weight.cols()) {
    throw validation_error("batchnorm width " + std::to_string(bn.mean.size()) + " does not match layer width " +
                           std::to_string(layer.weight.cols()));
  }
  const auto [w_bn, b_bn] = fold_batchnorm(bn.mean, bn.var, bn.eps, bn.weight, bn.bias);
  RowVector bias = layer.bias.value_or(RowVector::Zero(layer.weight.cols()));
  layer.weight = layer.weight * w_bn.asDiagonal();
  layer.bias = bias.cwiseProduct(w_bn.transpose()) + b_bn.transpose();
}

namespace {

Activation parse_activation(const json& obj, Activation fallback, const std::string& where) {
  auto it = obj.find("activation");
  if (it == obj.end() || it->is_null()) return fallback;
  if (!it->is_string()) throw parse_error(where + ".activation: expected string");
  const auto name = it->get<std::string>();
  if (name == "relu") return Activation::Relu;
  if (name == "none") return Activation::None;
  throw validation_error(where + ".activation: unsupported activation \"" + name + "\" (only relu and none)");
}

std::optional<RowVector> parse_bias(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  return detail::parse_vector(*it, where + "." + key).transpose();
}

BatchNorm parse_bn(const json& j, const std::string& where) {
  if (!j.is_object()) throw parse_error(where + ": expected object");
  BatchNorm bn;
  bn.mean = detail::parse_vector(detail::require(j, "mu", where), where + ".mu");
  bn.var = detail::parse_vector(detail::require(j, "var", where), where + ".var");
  bn.eps = detail::as_double(detail::require(j, "eps", where), where + ".eps");
  bn.weight = detail::parse_vector(detail::require(j, "W", where), where + ".W");
  bn.bias = detail::parse_vector(detail::require(j, "B", where), where + ".B");
  return bn;
}

DenseLayer parse_dense(const json& j, Activation fallback, const std::string& where) {
  if (!j.is_object()) throw parse_error(where + ": expected object");
  DenseLayer layer;
  layer.weight = detail::parse_matrix(detail::require(j, "W", where), where + ".W");
  layer.bias = parse_bias(j, "B", where);
  layer.activation = parse_activation(j, fallback, where);
  if (auto it = j.find("bn"); it != j.end() && !it->is_null()) {
    check_dense(layer, where);
    fold_into(layer, parse_bn(*it, where + ".bn"));
  }
  return layer;
}

ConvLayer parse_conv(const json& j, Arch arch, const std::string& where) {
  if (!j.is_object()) throw parse_error(where + ": expected object");
  switch (arch) {
    case Arch::Gcn:
      return GcnConv{parse_dense(j, Activation::Relu, where)};
    case Arch::Sage: {
      SageConv c;
      c.w_neighbor = detail::parse_matrix(detail::require(j, "W_phi", where), where + ".W_phi");
      c.w_self = detail::parse_matrix(detail::require(j, "W_psi", where), where + ".W_psi");
      c.bias = parse_bias(j, "B", where);
      c.activation = parse_activation(j, Activation::Relu, where);
      return c;
    }
    case Arch::Gin: {
      GinConv c;
      c.eps = detail::as_double(detail::require(j, "eps", where), where + ".eps");
      const json& mlp = detail::require(j, "mlp", where);
      if (!mlp.is_array()) throw parse_error(where + ".mlp: expected array");
      for (std::size_t k = 0; k < mlp.size(); ++k) {
        c.mlp.push_back(parse_dense(mlp[k], Activation::Relu, where + ".mlp[" + std::to_string(k) + "]"));
      }
      return c;
    }
  }
  throw validation_error(where + ": unknown conv kind");
}

// BatchNorm listed at top level follows the conv layer's final affine map.
void fold_conv_bn(ConvLayer& layer, const BatchNorm& bn) {
  if (auto* gcn = std::get_if<GcnConv>(&layer)) {
    fold_into(gcn->linear, bn);
  } else if (auto* sage = std::get_if<SageConv>(&layer)) {
    DenseLayer neighbor{sage->w_neighbor, sage->bias, sage->activation};
    fold_into(neighbor, bn);
    const auto [w_bn, b_bn] = fold_batchnorm(bn.mean, bn.var, bn.eps, bn.weight, bn.bias);
    sage->w_neighbor = neighbor.weight;
    sage->w_self = sage->w_self * w_bn.asDiagonal();
    sage->bias = neighbor.bias;
  } else {
    auto& gin = std::get<GinConv>(layer);
    if (gin.mlp.empty()) throw validation_error("cannot fold batchnorm into an empty GIN mlp");
    fold_into(gin.mlp.back(), bn);
  }
}

json dense_to_json(const DenseLayer& layer) {
  json j;
  j["W"] = detail::matrix_to_json(layer.weight);
  if (layer.bias) j["B"] = detail::vector_to_json(*layer.bias);
  j["activation"] = layer.activation == Activation::Relu ? "relu" : "none";
  return j;
}

}  // namespace

ModelSpec model_from_json(const std::string& text) {
  const json j = detail::parse_text(text, "model");
  const std::string where = "model";
  if (!j.is_object()) throw parse_error(where + ": expected object");
  const json& arch = detail::require(j, "arch", where);
  if (!arch.is_string()) throw parse_error(where + ".arch: expected string");
  ModelSpec m;
  m.arch = parse_arch(arch.get<std::string>());
  const json& convs = detail::require(j, "conv_layers", where);
  if (!convs.is_array()) throw parse_error(where + ".conv_layers: expected array");
  for (std::size_t l = 0; l < convs.size(); ++l) {
    m.conv_layers.push_back(parse_conv(convs[l], m.arch, where + ".conv_layers[" + std::to_string(l) + "]"));
  }
  const json& pooling = detail::require(j, "pooling", where);
  if (pooling == "mean") {
    m.pooling = Pooling::Mean;
  } else if (pooling == "none") {
    m.pooling = Pooling::None;
  } else {
    throw parse_error(where + ".pooling: expected \"mean\" or \"none\"");
  }
  const json& cls = detail::require(j, "classifier", where);
  if (!cls.is_array() || cls.empty()) throw parse_error(where + ".classifier: expected non-empty array");
  for (std::size_t k = 0; k < cls.size(); ++k) {
    const Activation fallback = k + 1 == cls.size() ? Activation::None : Activation::Relu;
    m.classifier.push_back(parse_dense(cls[k], fallback, where + ".classifier[" + std::to_string(k) + "]"));
  }
  m.num_classes = detail::as_int(detail::require(j, "num_classes", where), where + ".num_classes");
  if (auto it = j.find("bn"); it != j.end() && !it->is_null()) {
    if (!it->is_array() || it->size() != m.conv_layers.size()) {
      throw parse_error(where + ".bn: expected one entry (or null) per conv layer");
    }
    for (std::size_t l = 0; l < it->size(); ++l) {
      const json& entry = (*it)[l];
      if (entry.is_null()) continue;
      fold_conv_bn(m.conv_layers[l], parse_bn(entry, where + ".bn[" + std::to_string(l) + "]"));
    }
  }
  m.validate();
  return m;
}

std::string model_to_json(const ModelSpec& model) {
  json j;
  j["arch"] = arch_name(model.arch);
  json convs = json::array();
  for (const ConvLayer& layer : model.conv_layers) {
    if (const auto* gcn = std::get_if<GcnConv>(&layer)) {
      convs.push_back(dense_to_json(gcn->linear));
    } else if (const auto* sage = std::get_if<SageConv>(&layer)) {
      json c;
      c["W_phi"] = detail::matrix_to_json(sage->w_neighbor);
      c["W_psi"] = detail::matrix_to_json(sage->w_self);
      if (sage->bias) c["B"] = detail::vector_to_json(*sage->bias);
      c["activation"] = sage->activation == Activation::Relu ? "relu" : "none";
      convs.push_back(std::move(c));
    } else {
      const auto& gin = std::get<GinConv>(layer);
      json c;
      c["eps"] = gin.eps;
      json mlp = json::array();
      for (const DenseLayer& d : gin.mlp) mlp.push_back(dense_to_json(d));
      c["mlp"] = std::move(mlp);
      convs.push_back(std::move(c));
    }
  }
  j["conv_layers"] = std::move(convs);
  j["pooling"] = model.pooling == Pooling::Mean ? "mean" : "none";
  json cls = json::array();
  for (const DenseLayer& d : model.classifier) cls.push_back(dense_to_json(d));
  j["classifier"] = std::move(cls);
  j["num_classes"] = model.num_classes;
  return j.dump();
}

ModelSpec load_model(const std::filesystem::path& path) { return model_from_json(detail::read_file(path)); }

void save_model(const ModelSpec& model, const std::filesystem::path& path) {
  detail::write_file(path, model_to_json(model) + "\n");
}

namespace {

DenseLayer random_dense(int in, int out, Activation act, double bias_scale, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (in + out));
  std::uniform_real_distribution<double> w(-limit, limit);
  std::uniform_real_distribution<double> b(-bias_scale, bias_scale);
  DenseLayer layer;
  layer.weight = Matrix::NullaryExpr(in, out, [&] { return w(rng); });
  if (bias_scale > 0.0) {
    layer.bias = RowVector::NullaryExpr(out, [&] { return b(rng); });
  } else {
    layer.bias = RowVector::Zero(out);
  }
  layer.activation = act;
  return layer;
}

}  // namespace

ModelSpec random_model(const RandomModelOptions& o) {
  if (o.input_dim <= 0 || o.hidden <= 0 || o.conv_layers <= 0 || o.classifier_layers <= 0 || o.num_classes <= 0 ||
      o.gin_mlp_layers <= 0) {
    throw invalid_argument("random model dimensions and layer counts must be positive");
  }
  std::mt19937_64 rng(o.seed);
  ModelSpec m;
  m.arch = o.arch;
  m.pooling = o.pooling;
  m.num_classes = o.num_classes;
  int in = o.input_dim;
  for (int l = 0; l < o.conv_layers; ++l) {
    switch (o.arch) {
      case Arch::Gcn:
        m.conv_layers.emplace_back(GcnConv{random_dense(in, o.hidden, Activation::Relu, o.bias_scale, rng)});
        break;
      case Arch::Sage: {
        SageConv c;
        DenseLayer phi = random_dense(in, o.hidden, Activation::Relu, o.bias_scale, rng);
        DenseLayer psi = random_dense(in, o.hidden, Activation::Relu, 0.0, rng);
        c.w_neighbor = phi.weight;
        c.w_self = psi.weight;
        c.bias = phi.bias;
        m.conv_layers.emplace_back(std::move(c));
        break;
      }
      case Arch::Gin: {
        GinConv c;
        c.eps = o.gin_eps;
        int sub_in = in;
        for (int k = 0; k < o.gin_mlp_layers; ++k) {
          c.mlp.push_back(random_dense(sub_in, o.hidden, Activation::Relu, o.bias_scale, rng));
          sub_in = o.hidden;
        }
        m.conv_layers.emplace_back(std::move(c));
        break;
      }
    }
    in = o.hidden;
  }
  for (int k = 0; k < o.classifier_layers; ++k) {
    const bool last = k + 1 == o.classifier_layers;
    const int out = last ? o.num_classes : o.hidden;
    m.classifier.push_back(random_dense(in, out, last ? Activation::None : Activation::Relu, o.bias_scale, rng));
    in = out;
  }
  m.validate();
  return m;
}

}  // namespace goat
