#ifndef ASTFOCUS_AUTODIFF_HPP_
#define ASTFOCUS_AUTODIFF_HPP_

#include <cstddef>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace astfocus::autodiff {

// Dense row-major matrix. Vectors are column matrices (n x 1), scalars 1 x 1.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0);
  Matrix(int rows, int cols, std::vector<double> data);
  static Matrix column(std::vector<double> values);
  static Matrix scalar(double v) { return Matrix(1, 1, v); }
  static Matrix identity(int n);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool same_shape(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  double operator()(int r, int c) const {
    return data_[static_cast<std::size_t>(r) * cols_ + c];
  }
  double& operator()(int r, int c) {
    return data_[static_cast<std::size_t>(r) * cols_ + c];
  }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  double item() const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

enum class Op {
  kInput,
  kConstant,
  kMatMul,
  kAdd,
  kSub,
  kElemMul,
  kSigmoid,
  kTanh,
  kExp,
  kLog,
  kSoftmax,
  kConcat,
  kSlice,
  kMean,
  kSum,
};

struct NodeId {
  std::size_t index = 0;
};

// log() clamps its argument from below at this value; the derivative is zero
// where the clamp is active.
inline constexpr double kLogFloor = 1e-12;

using Bindings = std::map<std::string, Matrix, std::less<>>;
using Gradients = std::map<std::string, Matrix, std::less<>>;

// Append-only computation graph. Nodes are stored in creation order, which is
// a topological order because every op only references existing nodes.
// Shapes are checked when a node is added.
class Tape {
 public:
  NodeId input(std::string name, int rows, int cols);
  // An input that backward() reports a gradient for.
  NodeId parameter(std::string name, int rows, int cols);
  NodeId constant(Matrix value);

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId sigmoid(NodeId a);
  NodeId tanh(NodeId a);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId softmax(NodeId a);
  // Stacks rows; all parts must have the same column count.
  NodeId concat(std::span<const NodeId> parts);
  NodeId concat(std::initializer_list<NodeId> parts) {
    return concat(std::span<const NodeId>(parts.begin(), parts.size()));
  }
  // Rows [begin, end).
  NodeId slice(NodeId a, int begin, int end);
  NodeId mean(NodeId a);
  NodeId sum(NodeId a);

  std::size_t size() const { return nodes_.size(); }
  Op op(NodeId n) const { return nodes_[n.index].op; }
  int rows(NodeId n) const { return nodes_[n.index].rows; }
  int cols(NodeId n) const { return nodes_[n.index].cols; }
  const std::vector<std::string>& parameter_names() const { return params_; }

  // Valid after forward().
  const Matrix& value(NodeId n) const { return nodes_[n.index].value; }

 private:
  struct Node {
    Op op = Op::kConstant;
    int rows = 0;
    int cols = 0;
    std::vector<std::size_t> parents;
    std::string name;  // inputs only
    bool is_parameter = false;
    int slice_begin = 0;
    Matrix value;
  };

  NodeId push(Node node);
  const Node& node(NodeId n) const { return nodes_[n.index]; }

  std::vector<Node> nodes_;
  std::vector<std::string> params_;
  std::map<std::string, std::size_t, std::less<>> inputs_;

  friend const Matrix& forward(Tape&, const Bindings&, NodeId);
  friend Gradients backward(Tape&, NodeId);
};

// Evaluates every node in order. Throws kUnboundInput or kShapeMismatch.
const Matrix& forward(Tape& tape, const Bindings& bindings, NodeId output);

// Gradient of a scalar output w.r.t. every registered parameter. Parameters
// the output does not depend on get zero gradients. Throws kNonScalarOutput.
Gradients backward(Tape& tape, NodeId output);

// Max over parameters of ||analytic - central difference|| / (||analytic|| +
// 1e-12), norms taken per parameter tensor. Leaves the tape evaluated at the
// original bindings.
double finite_diff_check(Tape& tape, const Bindings& bindings, NodeId output,
                         double step);

}  // namespace astfocus::autodiff

#endif  // ASTFOCUS_AUTODIFF_HPP_
