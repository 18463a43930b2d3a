#pragma once

#include "goat/forward.hpp"
#include "goat/model.hpp"

#include <string>
#include <vector>

namespace goat {

/// Addresses one affine+activation stage: conv layer `layer`, MLP sublayer
/// `sublayer` (0 for GCN/SAGE), or classifier layer `layer`.
struct StageRef {
  enum class Section { Conv, Classifier };
  Section section = Section::Conv;
  int layer = 0;
  int sublayer = 0;
  auto operator<=>(const StageRef&) const = default;
};

/// Branch taken through one conv layer by a term: the adjacency operand
/// (V, A + I or A) or the self path (eps for GIN, W_psi for GraphSAGE).
enum class Branch { Neighbor, Self };

enum class OpKind {
  Propagate,  // left-multiply by the adjacency operand (a variable slot)
  Scale,      // multiply by the GIN eps of `stage.layer` (a constant)
  MatMul,     // right-multiply by the stage weight selected by `branch`
  Pattern,    // elementwise activation pattern of `stage` (a variable slot)
  Pool,       // mean over nodes
};

struct Op {
  OpKind kind = OpKind::MatMul;
  StageRef stage;
  Branch branch = Branch::Neighbor;
};

/// One matrix-valued summand family of the expansion. Evaluating the chain
/// of ops on the origin yields a matrix shaped like the logits.
struct TermClass {
  enum class Origin { Features, Bias };
  Arch arch = Arch::Gcn;
  Origin origin = Origin::Features;
  StageRef bias_stage;             // meaningful when origin == Bias
  std::vector<Branch> branches;    // one per conv layer after the origin
  std::vector<Op> ops;
  double constant_factor = 1.0;    // product of eps factors on self branches

  std::vector<StageRef> pattern_slots() const;
  int adjacency_slots() const;
  /// e.g. "V3·V2·V1·X·W1·W2·W3·Wc1·Wc2 | patterns @ 1,2,3,c1"
  std::string signature() const;
};

/// Enumerates every term class of the model's expansion in a fixed order:
/// the feature origin first, then biases in forward order.
std::vector<TermClass> enumerate_terms(const ModelSpec& model);

/// Throws if the trace was not produced by a model of this shape.
void check_trace(const ModelSpec& model, const ForwardTrace& trace);

/// The origin matrix of a term: X, or the bias broadcast over the rows of
/// its stage (N rows, or 1 row for classifier biases after pooling).
Matrix origin_value(const ModelSpec& model, const TermClass& term, const ForwardTrace& trace);

/// Applies one op of the chain.
Matrix apply_op(const ModelSpec& model, const Op& op, const Matrix& value, const ForwardTrace& trace);

/// Transpose of apply_op: maps the adjoint of the op's output to the adjoint
/// of its input.
Matrix apply_op_adjoint(const ModelSpec& model, const Op& op, const Matrix& adjoint, const ForwardTrace& trace);

/// Term value with the recorded activation patterns applied; same shape as
/// trace.logits.
Matrix evaluate_term(const ModelSpec& model, const TermClass& term, const ForwardTrace& trace);

struct Occurrences {
  int adjacency = 0;
  int pattern = 0;
  int feature = 0;
  /// Total variable occurrences per scalar product of the term; features
  /// count only when treated as variables.
  int denominator(bool features_as_variables) const {
    return adjacency + pattern + (features_as_variables ? feature : 0);
  }
};

Occurrences count_occurrences(const TermClass& term);

/// "2", "2.1" for GIN sublayers, "c1" for classifier layers (1-based).
std::string stage_name(const StageRef& stage, Arch arch);

}  // namespace goat
