#include "goat/expansion.hpp"

#include "goat/error.hpp"

#include <sstream>

namespace goat {

std::string stage_name(const StageRef& stage, Arch arch) {
  if (stage.section == StageRef::Section::Classifier) return "c" + std::to_string(stage.layer + 1);
  if (arch == Arch::Gin) return std::to_string(stage.layer + 1) + "." + std::to_string(stage.sublayer + 1);
  return std::to_string(stage.layer + 1);
}

std::vector<StageRef> TermClass::pattern_slots() const {
  std::vector<StageRef> out;
  for (const Op& op : ops) {
    if (op.kind == OpKind::Pattern) out.push_back(op.stage);
  }
  return out;
}

int TermClass::adjacency_slots() const {
  int n = 0;
  for (const Op& op : ops) n += op.kind == OpKind::Propagate ? 1 : 0;
  return n;
}

Occurrences count_occurrences(const TermClass& term) {
  Occurrences o;
  o.adjacency = term.adjacency_slots();
  o.pattern = static_cast<int>(term.pattern_slots().size());
  o.feature = term.origin == TermClass::Origin::Features ? 1 : 0;
  return o;
}

std::string TermClass::signature() const {
  std::vector<std::string> left;   // adjacency and eps factors, outermost first
  std::vector<std::string> right;  // weights in forward order
  const std::string adj = arch == Arch::Gcn ? "V" : arch == Arch::Gin ? "Â" : "A";
  for (const Op& op : ops) {
    const std::string l = std::to_string(op.stage.layer + 1);
    switch (op.kind) {
      case OpKind::Propagate: left.insert(left.begin(), adj + l); break;
      case OpKind::Scale: left.insert(left.begin(), "ε" + l); break;
      case OpKind::MatMul:
        if (op.stage.section == StageRef::Section::Classifier) {
          right.push_back("Wc" + l);
        } else if (arch == Arch::Sage) {
          right.push_back("W" + l + (op.branch == Branch::Neighbor ? "phi" : "psi"));
        } else if (arch == Arch::Gin) {
          right.push_back("W" + l + "." + std::to_string(op.stage.sublayer + 1));
        } else {
          right.push_back("W" + l);
        }
        break;
      case OpKind::Pattern:
      case OpKind::Pool: break;
    }
  }
  std::string origin_name = "X";
  if (origin == Origin::Bias) origin_name = "B" + stage_name(bias_stage, arch);
  std::ostringstream ss;
  bool first = true;
  auto emit = [&](const std::string& s) {
    if (!first) ss << "·";
    ss << s;
    first = false;
  };
  for (const auto& s : left) emit(s);
  emit(origin_name);
  for (const auto& s : right) emit(s);
  ss << " | patterns @ ";
  const auto slots = pattern_slots();
  if (slots.empty()) ss << "none";
  for (std::size_t i = 0; i < slots.size(); ++i) ss << (i ? "," : "") << stage_name(slots[i], arch);
  return ss.str();
}

namespace {

const DenseLayer& classifier_layer(const ModelSpec& model, int k) { return model.classifier.at(static_cast<std::size_t>(k)); }

Activation stage_activation(const ModelSpec& model, const StageRef& s) {
  if (s.section == StageRef::Section::Classifier) return classifier_layer(model, s.layer).activation;
  const ConvLayer& layer = model.conv_layers.at(static_cast<std::size_t>(s.layer));
  if (const auto* gcn = std::get_if<GcnConv>(&layer)) return gcn->linear.activation;
  if (const auto* sage = std::get_if<SageConv>(&layer)) return sage->activation;
  return std::get<GinConv>(layer).mlp.at(static_cast<std::size_t>(s.sublayer)).activation;
}

const std::optional<RowVector>& stage_bias(const ModelSpec& model, const StageRef& s) {
  if (s.section == StageRef::Section::Classifier) return classifier_layer(model, s.layer).bias;
  const ConvLayer& layer = model.conv_layers.at(static_cast<std::size_t>(s.layer));
  if (const auto* gcn = std::get_if<GcnConv>(&layer)) return gcn->linear.bias;
  if (const auto* sage = std::get_if<SageConv>(&layer)) return sage->bias;
  return std::get<GinConv>(layer).mlp.at(static_cast<std::size_t>(s.sublayer)).bias;
}

const Matrix& stage_weight(const ModelSpec& model, const StageRef& s, Branch branch) {
  if (s.section == StageRef::Section::Classifier) return classifier_layer(model, s.layer).weight;
  const ConvLayer& layer = model.conv_layers.at(static_cast<std::size_t>(s.layer));
  if (const auto* gcn = std::get_if<GcnConv>(&layer)) return gcn->linear.weight;
  if (const auto* sage = std::get_if<SageConv>(&layer)) return branch == Branch::Neighbor ? sage->w_neighbor : sage->w_self;
  return std::get<GinConv>(layer).mlp.at(static_cast<std::size_t>(s.sublayer)).weight;
}

int sublayer_count(const ConvLayer& layer) {
  if (const auto* gin = std::get_if<GinConv>(&layer)) return static_cast<int>(gin->mlp.size());
  return 1;
}

const Matrix& stage_pattern(const ForwardTrace& trace, const StageRef& s) {
  if (s.section == StageRef::Section::Classifier) return trace.classifier.at(static_cast<std::size_t>(s.layer)).pattern;
  return trace.conv.at(static_cast<std::size_t>(s.layer)).at(static_cast<std::size_t>(s.sublayer)).pattern;
}

void push_pattern(const ModelSpec& model, const StageRef& s, std::vector<Op>& ops) {
  if (stage_activation(model, s) == Activation::Relu) ops.push_back({OpKind::Pattern, s, Branch::Neighbor});
}

// Remaining sublayers of conv layer l after the affine map of sublayer `from`
// has produced its pre-activation.
void push_conv_tail(const ModelSpec& model, int l, int from, std::vector<Op>& ops) {
  const ConvLayer& layer = model.conv_layers[static_cast<std::size_t>(l)];
  push_pattern(model, {StageRef::Section::Conv, l, from}, ops);
  for (int s = from + 1; s < sublayer_count(layer); ++s) {
    const StageRef ref{StageRef::Section::Conv, l, s};
    ops.push_back({OpKind::MatMul, ref, Branch::Neighbor});
    push_pattern(model, ref, ops);
  }
}

void push_conv_layer(const ModelSpec& model, int l, Branch branch, std::vector<Op>& ops) {
  const StageRef first{StageRef::Section::Conv, l, 0};
  if (branch == Branch::Neighbor) {
    ops.push_back({OpKind::Propagate, first, Branch::Neighbor});
  } else if (model.arch == Arch::Gin) {
    ops.push_back({OpKind::Scale, first, Branch::Self});
  }
  ops.push_back({OpKind::MatMul, first, branch});
  push_conv_tail(model, l, 0, ops);
}

void push_classifier_from(const ModelSpec& model, int k, std::vector<Op>& ops) {
  for (int c = k; c < static_cast<int>(model.classifier.size()); ++c) {
    const StageRef ref{StageRef::Section::Classifier, c, 0};
    ops.push_back({OpKind::MatMul, ref, Branch::Neighbor});
    push_pattern(model, ref, ops);
  }
}

// Appends one term per branch assignment of conv layers [first_layer, L).
void expand_branches(const ModelSpec& model, const TermClass& prefix, int first_layer, std::vector<TermClass>& out) {
  const int L = static_cast<int>(model.conv_layers.size());
  const int free_layers = L - first_layer;
  const bool two_way = model.arch != Arch::Gcn;
  const unsigned combos = two_way ? (1u << free_layers) : 1u;
  for (unsigned mask = 0; mask < combos; ++mask) {
    TermClass t = prefix;
    for (int l = first_layer; l < L; ++l) {
      const bool neighbor = !two_way || ((mask >> (l - first_layer)) & 1u);
      const Branch b = neighbor ? Branch::Neighbor : Branch::Self;
      t.branches.push_back(b);
      if (b == Branch::Self && model.arch == Arch::Gin) {
        t.constant_factor *= std::get<GinConv>(model.conv_layers[static_cast<std::size_t>(l)]).eps;
      }
      push_conv_layer(model, l, b, t.ops);
    }
    if (model.pooling == Pooling::Mean) t.ops.push_back({OpKind::Pool, {}, Branch::Neighbor});
    push_classifier_from(model, 0, t.ops);
    out.push_back(std::move(t));
  }
}

}  // namespace

std::vector<TermClass> enumerate_terms(const ModelSpec& model) {
  model.validate();
  if (model.arch == Arch::Gin || model.arch == Arch::Sage) {
    if (model.conv_layers.size() > 20) throw invalid_argument("too many conv layers to enumerate");
  }
  std::vector<TermClass> out;
  TermClass features;
  features.arch = model.arch;
  features.origin = TermClass::Origin::Features;
  expand_branches(model, features, 0, out);

  const int L = static_cast<int>(model.conv_layers.size());
  for (int l = 0; l < L; ++l) {
    const ConvLayer& layer = model.conv_layers[static_cast<std::size_t>(l)];
    for (int s = 0; s < sublayer_count(layer); ++s) {
      const StageRef ref{StageRef::Section::Conv, l, s};
      if (!stage_bias(model, ref)) continue;
      TermClass t;
      t.arch = model.arch;
      t.origin = TermClass::Origin::Bias;
      t.bias_stage = ref;
      push_conv_tail(model, l, s, t.ops);
      expand_branches(model, t, l + 1, out);
    }
  }
  for (int k = 0; k < static_cast<int>(model.classifier.size()); ++k) {
    const StageRef ref{StageRef::Section::Classifier, k, 0};
    if (!stage_bias(model, ref)) continue;
    TermClass t;
    t.arch = model.arch;
    t.origin = TermClass::Origin::Bias;
    t.bias_stage = ref;
    push_pattern(model, ref, t.ops);
    push_classifier_from(model, k + 1, t.ops);
    out.push_back(std::move(t));
  }
  return out;
}

void check_trace(const ModelSpec& model, const ForwardTrace& trace) {
  auto fail = [](const std::string& what) { throw invalid_argument("trace does not match model: " + what); };
  if (trace.arch != model.arch) fail("architecture differs");
  if (trace.pooling != model.pooling) fail("pooling differs");
  if (trace.conv.size() != model.conv_layers.size()) fail("conv layer count differs");
  if (trace.classifier.size() != model.classifier.size()) fail("classifier layer count differs");
  if (trace.features.cols() != model.input_dim()) fail("feature dimension differs");
  const auto n = trace.features.rows();
  if (trace.propagation.rows() != n || trace.propagation.cols() != n) fail("adjacency operand shape");
  for (std::size_t l = 0; l < model.conv_layers.size(); ++l) {
    const int subs = sublayer_count(model.conv_layers[l]);
    if (static_cast<int>(trace.conv[l].size()) != subs) fail("sublayer count differs at conv layer " + std::to_string(l));
    for (int s = 0; s < subs; ++s) {
      const Matrix& p = trace.conv[l][static_cast<std::size_t>(s)].pattern;
      const Matrix& w = stage_weight(model, {StageRef::Section::Conv, static_cast<int>(l), s}, Branch::Neighbor);
      if (p.rows() != n || p.cols() != w.cols()) fail("pattern shape at conv layer " + std::to_string(l));
    }
  }
  const auto rows = model.pooling == Pooling::Mean ? 1 : n;
  for (std::size_t k = 0; k < model.classifier.size(); ++k) {
    const Matrix& p = trace.classifier[k].pattern;
    if (p.rows() != rows || p.cols() != model.classifier[k].weight.cols()) {
      fail("pattern shape at classifier layer " + std::to_string(k));
    }
  }
}

Matrix origin_value(const ModelSpec& model, const TermClass& term, const ForwardTrace& trace) {
  if (term.origin == TermClass::Origin::Features) return trace.features;
  const auto& bias = stage_bias(model, term.bias_stage);
  if (!bias) throw invalid_argument("term origin refers to a missing bias");
  const bool pooled_row = term.bias_stage.section == StageRef::Section::Classifier && model.pooling == Pooling::Mean;
  const Eigen::Index rows = pooled_row ? 1 : trace.features.rows();
  return Matrix::Ones(rows, 1) * (*bias);
}

Matrix apply_op(const ModelSpec& model, const Op& op, const Matrix& value, const ForwardTrace& trace) {
  switch (op.kind) {
    case OpKind::Propagate: return trace.propagation * value;
    case OpKind::Scale:
      return std::get<GinConv>(model.conv_layers.at(static_cast<std::size_t>(op.stage.layer))).eps * value;
    case OpKind::MatMul: return value * stage_weight(model, op.stage, op.branch);
    case OpKind::Pattern: return stage_pattern(trace, op.stage).cwiseProduct(value);
    case OpKind::Pool: return value.colwise().mean();
  }
  return value;
}

Matrix apply_op_adjoint(const ModelSpec& model, const Op& op, const Matrix& adjoint, const ForwardTrace& trace) {
  switch (op.kind) {
    case OpKind::Propagate: return trace.propagation.transpose() * adjoint;
    case OpKind::Scale:
      return std::get<GinConv>(model.conv_layers.at(static_cast<std::size_t>(op.stage.layer))).eps * adjoint;
    case OpKind::MatMul: return adjoint * stage_weight(model, op.stage, op.branch).transpose();
    case OpKind::Pattern: return stage_pattern(trace, op.stage).cwiseProduct(adjoint);
    case OpKind::Pool: {
      const auto n = trace.features.rows();
      return Matrix::Ones(n, 1) * adjoint / static_cast<double>(n);
    }
  }
  return adjoint;
}

Matrix evaluate_term(const ModelSpec& model, const TermClass& term, const ForwardTrace& trace) {
  check_trace(model, trace);
  Matrix value = origin_value(model, term, trace);
  for (const Op& op : term.ops) value = apply_op(model, op, value, trace);
  return value;
}

}  // namespace goat
