#include "astfocus/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "astfocus/error.hpp"

namespace astfocus::autodiff {

namespace {

std::string shape_str(int r, int c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

[[noreturn]] void shape_error(const char* op, int r1, int c1, int r2, int c2) {
  throw Error(ErrorCode::kShapeMismatch, std::string(op) + ": " +
                                             shape_str(r1, c1) + " vs " +
                                             shape_str(r2, c2));
}

double sigmoid_of(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Matrix::Matrix(int rows, int cols, double fill)
    : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {}

Matrix::Matrix(int rows, int cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != static_cast<std::size_t>(rows) * cols) {
    throw Error(ErrorCode::kShapeMismatch,
                "matrix data length for " + shape_str(rows, cols));
  }
}

Matrix Matrix::column(std::vector<double> values) {
  const int n = static_cast<int>(values.size());
  return Matrix(n, 1, std::move(values));
}

Matrix Matrix::identity(int n) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

double Matrix::item() const {
  if (data_.size() != 1) {
    throw Error(ErrorCode::kNonScalarOutput, "item() on " + shape_str(rows_, cols_));
  }
  return data_[0];
}

NodeId Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return NodeId{nodes_.size() - 1};
}

NodeId Tape::input(std::string name, int rows, int cols) {
  if (inputs_.count(name)) {
    throw Error(ErrorCode::kInvalidArgument, "duplicate input " + name);
  }
  Node n;
  n.op = Op::kInput;
  n.rows = rows;
  n.cols = cols;
  n.name = name;
  NodeId id = push(std::move(n));
  inputs_.emplace(std::move(name), id.index);
  return id;
}

NodeId Tape::parameter(std::string name, int rows, int cols) {
  params_.push_back(name);
  NodeId id = input(std::move(name), rows, cols);
  nodes_[id.index].is_parameter = true;
  return id;
}

NodeId Tape::constant(Matrix value) {
  Node n;
  n.op = Op::kConstant;
  n.rows = value.rows();
  n.cols = value.cols();
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Node& x = node(a);
  const Node& y = node(b);
  if (x.cols != y.rows) shape_error("matmul", x.rows, x.cols, y.rows, y.cols);
  Node n;
  n.op = Op::kMatMul;
  n.rows = x.rows;
  n.cols = y.cols;
  n.parents = {a.index, b.index};
  return push(std::move(n));
}

namespace {

template <typename Fn>
NodeId binary_same_shape(Tape& tape, const char* name, Op op, NodeId a, NodeId b,
                         Fn&& push_node) {
  if (tape.rows(a) != tape.rows(b) || tape.cols(a) != tape.cols(b)) {
    shape_error(name, tape.rows(a), tape.cols(a), tape.rows(b), tape.cols(b));
  }
  return push_node(op);
}

}  // namespace

NodeId Tape::add(NodeId a, NodeId b) {
  return binary_same_shape(*this, "add", Op::kAdd, a, b, [&](Op op) {
    Node n;
    n.op = op;
    n.rows = rows(a);
    n.cols = cols(a);
    n.parents = {a.index, b.index};
    return push(std::move(n));
  });
}

NodeId Tape::sub(NodeId a, NodeId b) {
  return binary_same_shape(*this, "sub", Op::kSub, a, b, [&](Op op) {
    Node n;
    n.op = op;
    n.rows = rows(a);
    n.cols = cols(a);
    n.parents = {a.index, b.index};
    return push(std::move(n));
  });
}

NodeId Tape::mul(NodeId a, NodeId b) {
  return binary_same_shape(*this, "elem_mul", Op::kElemMul, a, b, [&](Op op) {
    Node n;
    n.op = op;
    n.rows = rows(a);
    n.cols = cols(a);
    n.parents = {a.index, b.index};
    return push(std::move(n));
  });
}

#define ASTFOCUS_UNARY(fn, opcode)   \
  NodeId Tape::fn(NodeId a) {        \
    Node n;                          \
    n.op = opcode;                   \
    n.rows = rows(a);                \
    n.cols = cols(a);                \
    n.parents = {a.index};           \
    return push(std::move(n));       \
  }

ASTFOCUS_UNARY(sigmoid, Op::kSigmoid)
ASTFOCUS_UNARY(tanh, Op::kTanh)
ASTFOCUS_UNARY(exp, Op::kExp)
ASTFOCUS_UNARY(log, Op::kLog)
ASTFOCUS_UNARY(softmax, Op::kSoftmax)

#undef ASTFOCUS_UNARY

NodeId Tape::concat(std::span<const NodeId> parts) {
  if (parts.empty()) throw Error(ErrorCode::kShapeMismatch, "concat of nothing");
  Node n;
  n.op = Op::kConcat;
  n.cols = cols(parts[0]);
  for (NodeId p : parts) {
    if (cols(p) != n.cols) {
      shape_error("concat", rows(parts[0]), n.cols, rows(p), cols(p));
    }
    n.rows += rows(p);
    n.parents.push_back(p.index);
  }
  return push(std::move(n));
}

NodeId Tape::slice(NodeId a, int begin, int end) {
  if (begin < 0 || end > rows(a) || begin >= end) {
    throw Error(ErrorCode::kShapeMismatch,
                "slice [" + std::to_string(begin) + "," + std::to_string(end) +
                    ") of " + shape_str(rows(a), cols(a)));
  }
  Node n;
  n.op = Op::kSlice;
  n.rows = end - begin;
  n.cols = cols(a);
  n.slice_begin = begin;
  n.parents = {a.index};
  return push(std::move(n));
}

NodeId Tape::mean(NodeId a) {
  Node n;
  n.op = Op::kMean;
  n.rows = 1;
  n.cols = 1;
  n.parents = {a.index};
  return push(std::move(n));
}

NodeId Tape::sum(NodeId a) {
  Node n;
  n.op = Op::kSum;
  n.rows = 1;
  n.cols = 1;
  n.parents = {a.index};
  return push(std::move(n));
}

const Matrix& forward(Tape& tape, const Bindings& bindings, NodeId output) {
  auto& nodes = tape.nodes_;
  for (auto& n : nodes) {
    switch (n.op) {
      case Op::kInput: {
        auto it = bindings.find(n.name);
        if (it == bindings.end()) {
          throw Error(ErrorCode::kUnboundInput, n.name);
        }
        if (it->second.rows() != n.rows || it->second.cols() != n.cols) {
          shape_error(n.name.c_str(), n.rows, n.cols, it->second.rows(),
                      it->second.cols());
        }
        n.value = it->second;
        break;
      }
      case Op::kConstant:
        break;
      case Op::kMatMul: {
        const Matrix& a = nodes[n.parents[0]].value;
        const Matrix& b = nodes[n.parents[1]].value;
        Matrix out(a.rows(), b.cols());
        for (int i = 0; i < a.rows(); ++i) {
          for (int k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
          }
        }
        n.value = std::move(out);
        break;
      }
      case Op::kAdd:
      case Op::kSub:
      case Op::kElemMul: {
        const Matrix& a = nodes[n.parents[0]].value;
        const Matrix& b = nodes[n.parents[1]].value;
        Matrix out(a.rows(), a.cols());
        for (std::size_t i = 0; i < out.size(); ++i) {
          out[i] = n.op == Op::kAdd   ? a[i] + b[i]
                   : n.op == Op::kSub ? a[i] - b[i]
                                      : a[i] * b[i];
        }
        n.value = std::move(out);
        break;
      }
      case Op::kSigmoid:
      case Op::kTanh:
      case Op::kExp:
      case Op::kLog: {
        const Matrix& a = nodes[n.parents[0]].value;
        Matrix out(a.rows(), a.cols());
        for (std::size_t i = 0; i < out.size(); ++i) {
          switch (n.op) {
            case Op::kSigmoid: out[i] = sigmoid_of(a[i]); break;
            case Op::kTanh: out[i] = std::tanh(a[i]); break;
            case Op::kExp: out[i] = std::exp(a[i]); break;
            default: out[i] = std::log(std::max(a[i], kLogFloor)); break;
          }
        }
        n.value = std::move(out);
        break;
      }
      case Op::kSoftmax: {
        const Matrix& a = nodes[n.parents[0]].value;
        Matrix out(a.rows(), a.cols());
        double mx = a[0];
        for (std::size_t i = 1; i < a.size(); ++i) mx = std::max(mx, a[i]);
        double z = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
          out[i] = std::exp(a[i] - mx);
          z += out[i];
        }
        for (std::size_t i = 0; i < a.size(); ++i) out[i] /= z;
        n.value = std::move(out);
        break;
      }
      case Op::kConcat: {
        Matrix out(n.rows, n.cols);
        std::size_t off = 0;
        for (std::size_t p : n.parents) {
          const Matrix& part = nodes[p].value;
          std::copy(part.data().begin(), part.data().end(),
                    out.data().begin() + static_cast<std::ptrdiff_t>(off));
          off += part.size();
        }
        n.value = std::move(out);
        break;
      }
      case Op::kSlice: {
        const Matrix& a = nodes[n.parents[0]].value;
        Matrix out(n.rows, n.cols);
        const auto begin = static_cast<std::ptrdiff_t>(n.slice_begin) * n.cols;
        std::copy(a.data().begin() + begin,
                  a.data().begin() + begin + static_cast<std::ptrdiff_t>(out.size()),
                  out.data().begin());
        n.value = std::move(out);
        break;
      }
      case Op::kMean:
      case Op::kSum: {
        const Matrix& a = nodes[n.parents[0]].value;
        double s = 0.0;
        for (double v : a.data()) s += v;
        if (n.op == Op::kMean) s /= static_cast<double>(a.size());
        n.value = Matrix::scalar(s);
        break;
      }
    }
  }
  return nodes[output.index].value;
}

Gradients backward(Tape& tape, NodeId output) {
  auto& nodes = tape.nodes_;
  if (nodes[output.index].rows != 1 || nodes[output.index].cols != 1) {
    throw Error(ErrorCode::kNonScalarOutput,
                shape_str(nodes[output.index].rows, nodes[output.index].cols));
  }
  std::vector<Matrix> grad(nodes.size());
  std::vector<bool> live(nodes.size(), false);
  grad[output.index] = Matrix::scalar(1.0);
  live[output.index] = true;

  auto accumulate = [&](std::size_t target, const Matrix& g) {
    if (!live[target]) {
      grad[target] = g;
      live[target] = true;
      return;
    }
    for (std::size_t i = 0; i < g.size(); ++i) grad[target][i] += g[i];
  };

  for (std::size_t idx = output.index + 1; idx-- > 0;) {
    if (!live[idx]) continue;
    const auto& n = nodes[idx];
    const Matrix& g = grad[idx];
    switch (n.op) {
      case Op::kInput:
      case Op::kConstant:
        break;
      case Op::kMatMul: {
        const Matrix& a = nodes[n.parents[0]].value;
        const Matrix& b = nodes[n.parents[1]].value;
        Matrix ga(a.rows(), a.cols());
        Matrix gb(b.rows(), b.cols());
        for (int i = 0; i < a.rows(); ++i) {
          for (int j = 0; j < b.cols(); ++j) {
            const double gij = g(i, j);
            if (gij == 0.0) continue;
            for (int k = 0; k < a.cols(); ++k) {
              ga(i, k) += gij * b(k, j);
              gb(k, j) += a(i, k) * gij;
            }
          }
        }
        accumulate(n.parents[0], ga);
        accumulate(n.parents[1], gb);
        break;
      }
      case Op::kAdd:
        accumulate(n.parents[0], g);
        accumulate(n.parents[1], g);
        break;
      case Op::kSub: {
        accumulate(n.parents[0], g);
        Matrix neg = g;
        for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -neg[i];
        accumulate(n.parents[1], neg);
        break;
      }
      case Op::kElemMul: {
        const Matrix& a = nodes[n.parents[0]].value;
        const Matrix& b = nodes[n.parents[1]].value;
        Matrix ga(a.rows(), a.cols());
        Matrix gb(b.rows(), b.cols());
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] = g[i] * b[i];
          gb[i] = g[i] * a[i];
        }
        accumulate(n.parents[0], ga);
        accumulate(n.parents[1], gb);
        break;
      }
      case Op::kSigmoid:
      case Op::kTanh:
      case Op::kExp:
      case Op::kLog: {
        const Matrix& x = nodes[n.parents[0]].value;
        const Matrix& y = n.value;
        Matrix gx(x.rows(), x.cols());
        for (std::size_t i = 0; i < g.size(); ++i) {
          double d = 0.0;
          switch (n.op) {
            case Op::kSigmoid: d = y[i] * (1.0 - y[i]); break;
            case Op::kTanh: d = 1.0 - y[i] * y[i]; break;
            case Op::kExp: d = y[i]; break;
            default: d = x[i] >= kLogFloor ? 1.0 / x[i] : 0.0; break;
          }
          gx[i] = g[i] * d;
        }
        accumulate(n.parents[0], gx);
        break;
      }
      case Op::kSoftmax: {
        // J^T g = y * (g - <g, y>)
        const Matrix& y = n.value;
        double dot = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) dot += g[i] * y[i];
        Matrix gx(y.rows(), y.cols());
        for (std::size_t i = 0; i < y.size(); ++i) gx[i] = y[i] * (g[i] - dot);
        accumulate(n.parents[0], gx);
        break;
      }
      case Op::kConcat: {
        std::size_t off = 0;
        for (std::size_t p : n.parents) {
          const Matrix& part = nodes[p].value;
          Matrix gp(part.rows(), part.cols());
          std::copy(g.data().begin() + static_cast<std::ptrdiff_t>(off),
                    g.data().begin() + static_cast<std::ptrdiff_t>(off + part.size()),
                    gp.data().begin());
          off += part.size();
          accumulate(p, gp);
        }
        break;
      }
      case Op::kSlice: {
        const Matrix& a = nodes[n.parents[0]].value;
        Matrix ga(a.rows(), a.cols());
        const auto begin = static_cast<std::ptrdiff_t>(n.slice_begin) * n.cols;
        std::copy(g.data().begin(), g.data().end(), ga.data().begin() + begin);
        accumulate(n.parents[0], ga);
        break;
      }
      case Op::kMean:
      case Op::kSum: {
        const Matrix& a = nodes[n.parents[0]].value;
        const double scale =
            n.op == Op::kMean ? g[0] / static_cast<double>(a.size()) : g[0];
        accumulate(n.parents[0], Matrix(a.rows(), a.cols(), scale));
        break;
      }
    }
  }

  Gradients out;
  for (const auto& name : tape.params_) {
    const auto& n = nodes[tape.inputs_.at(name)];
    const std::size_t idx = tape.inputs_.at(name);
    out.emplace(name, live[idx] ? grad[idx] : Matrix(n.rows, n.cols));
  }
  return out;
}

double finite_diff_check(Tape& tape, const Bindings& bindings, NodeId output,
                         double step) {
  if (!(step > 0.0)) throw Error(ErrorCode::kInvalidArgument, "step must be > 0");
  forward(tape, bindings, output);
  const Gradients analytic = backward(tape, output);

  double worst = 0.0;
  Bindings probe = bindings;
  for (const auto& name : tape.parameter_names()) {
    Matrix& p = probe.find(name)->second;
    const Matrix& a = analytic.at(name);
    double diff2 = 0.0;
    double norm2 = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p[i];
      p[i] = saved + step;
      const double up = forward(tape, probe, output).item();
      p[i] = saved - step;
      const double down = forward(tape, probe, output).item();
      p[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      diff2 += (a[i] - numeric) * (a[i] - numeric);
      norm2 += a[i] * a[i];
    }
    worst = std::max(worst, std::sqrt(diff2) / (std::sqrt(norm2) + 1e-12));
  }
  forward(tape, bindings, output);
  return worst;
}

}  // namespace astfocus::autodiff
