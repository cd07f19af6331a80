#include "quench/autodiff.hpp"

#include "quench/math.hpp"

#include <stdexcept>
#include <string>

namespace quench::ad {

namespace {
[[noreturn]] void shape_error(const char* op, int ar, int ac, int br, int bc) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch (" +
                              std::to_string(ar) + "x" + std::to_string(ac) +
                              " vs " + std::to_string(br) + "x" +
                              std::to_string(bc) + ")");
}
}  // namespace

Var Tape::push_(Node&& n) {
  Var v;
  v.id = static_cast<int>(nodes_.size());
  v.rows = static_cast<int>(n.value.rows());
  v.cols = static_cast<int>(n.value.cols());
  nodes_.push_back(std::move(n));
  return v;
}

Var Tape::leaf(const Eigen::Ref<const Eigen::MatrixXd>& value) {
  Node n;
  n.op = Op::kLeaf;
  n.needs_grad = true;
  n.value = value;
  return push_(std::move(n));
}

Var Tape::constant(const Eigen::Ref<const Eigen::MatrixXd>& value) {
  Node n;
  n.op = Op::kConstant;
  n.value = value;
  return push_(std::move(n));
}

Var Tape::constant_scalar(double v) {
  return constant(Eigen::MatrixXd::Constant(1, 1, v));
}

Var Tape::binary_same_shape_(Op op, Var a, Var b, const char* name) {
  if (a.rows != b.rows || a.cols != b.cols)
    shape_error(name, a.rows, a.cols, b.rows, b.cols);
  Node n;
  n.op = op;
  n.a = a.id;
  n.b = b.id;
  n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  switch (op) {
    case Op::kAdd: n.value = nodes_[a.id].value + nodes_[b.id].value; break;
    case Op::kSub: n.value = nodes_[a.id].value - nodes_[b.id].value; break;
    case Op::kMul:
      n.value = nodes_[a.id].value.cwiseProduct(nodes_[b.id].value);
      break;
    default: throw std::logic_error("binary_same_shape_: bad op");
  }
  return push_(std::move(n));
}

Var Tape::add(Var a, Var b) { return binary_same_shape_(Op::kAdd, a, b, "add"); }
Var Tape::sub(Var a, Var b) { return binary_same_shape_(Op::kSub, a, b, "sub"); }
Var Tape::mul_elementwise(Var a, Var b) {
  return binary_same_shape_(Op::kMul, a, b, "mul_elementwise");
}

Var Tape::scale(Var a, double c) {
  Node n;
  n.op = Op::kScale;
  n.a = a.id;
  n.c = c;
  n.needs_grad = nodes_[a.id].needs_grad;
  n.value = c * nodes_[a.id].value;
  return push_(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  if (a.cols != b.rows) shape_error("matmul", a.rows, a.cols, b.rows, b.cols);
  Node n;
  n.op = Op::kMatMul;
  n.a = a.id;
  n.b = b.id;
  n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  n.value.noalias() = nodes_[a.id].value * nodes_[b.id].value;
  return push_(std::move(n));
}

Var Tape::add_colwise(Var m, Var v) {
  if (v.cols != 1 || v.rows != m.rows)
    shape_error("add_colwise", m.rows, m.cols, v.rows, v.cols);
  Node n;
  n.op = Op::kAddColwise;
  n.a = m.id;
  n.b = v.id;
  n.needs_grad = nodes_[m.id].needs_grad || nodes_[v.id].needs_grad;
  n.value = nodes_[m.id].value.colwise() + nodes_[v.id].value.col(0);
  return push_(std::move(n));
}

Var Tape::tanh(Var a) {
  Node n;
  n.op = Op::kTanh;
  n.a = a.id;
  n.needs_grad = nodes_[a.id].needs_grad;
  n.value = detail::tanh_expr(nodes_[a.id].value.array());
  return push_(std::move(n));
}

Var Tape::tanh_affine(Var a, Var x, Var b) {
  if (a.cols != x.rows || b.cols != 1 || b.rows != a.rows)
    shape_error("tanh_affine", a.rows, a.cols, x.rows, x.cols);
  Node n;
  n.op = Op::kTanhAffine;
  n.a = a.id;
  n.b = x.id;
  n.in3 = b.id;
  n.needs_grad = nodes_[a.id].needs_grad || nodes_[x.id].needs_grad ||
                 nodes_[b.id].needs_grad;
  // Same arithmetic sequence as matmul -> add_colwise -> tanh, computed in
  // place in the output buffer.
  n.value.noalias() = nodes_[a.id].value * nodes_[x.id].value;
  n.value.colwise() += nodes_[b.id].value.col(0);
  n.value = detail::tanh_expr(n.value.array());
  return push_(std::move(n));
}

Var Tape::sum_squares(Var a) {
  Node n;
  n.op = Op::kSumSquares;
  n.a = a.id;
  n.needs_grad = nodes_[a.id].needs_grad;
  n.value = Eigen::MatrixXd::Constant(1, 1, nodes_[a.id].value.squaredNorm());
  return push_(std::move(n));
}

Var Tape::colwise_sum_squares(Var a) {
  Node n;
  n.op = Op::kColwiseSumSquares;
  n.a = a.id;
  n.needs_grad = nodes_[a.id].needs_grad;
  n.value = nodes_[a.id].value.colwise().squaredNorm();
  return push_(std::move(n));
}

Var Tape::block_sum_cols(Var a, int k) {
  if (a.rows != 1 || k < 1 || a.cols % k != 0)
    throw std::invalid_argument("block_sum_cols: need 1-row input, cols divisible by k");
  Node n;
  n.op = Op::kBlockSumCols;
  n.a = a.id;
  n.k = k;
  n.needs_grad = nodes_[a.id].needs_grad;
  const int groups = a.cols / k;
  n.value.resize(1, groups);
  const auto& src = nodes_[a.id].value;
  for (int g = 0; g < groups; ++g) n.value(0, g) = src.middleCols(g * k, k).sum();
  return push_(std::move(n));
}

Var Tape::sum_all(Var a) {
  Node n;
  n.op = Op::kSumAll;
  n.a = a.id;
  n.needs_grad = nodes_[a.id].needs_grad;
  n.value = Eigen::MatrixXd::Constant(1, 1, nodes_[a.id].value.sum());
  return push_(std::move(n));
}

Var Tape::concat(Var a, Var b) {
  if (a.cols != b.cols) shape_error("concat", a.rows, a.cols, b.rows, b.cols);
  Node n;
  n.op = Op::kConcatRows;
  n.a = a.id;
  n.b = b.id;
  n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  n.value.resize(a.rows + b.rows, a.cols);
  n.value.topRows(a.rows) = nodes_[a.id].value;
  n.value.bottomRows(b.rows) = nodes_[b.id].value;
  return push_(std::move(n));
}

Var Tape::repeat_cols_blocked(Var a, int k) {
  if (k < 1) throw std::invalid_argument("repeat_cols_blocked: k >= 1");
  Node n;
  n.op = Op::kRepeatColsBlocked;
  n.a = a.id;
  n.k = k;
  n.needs_grad = nodes_[a.id].needs_grad;
  const auto& src = nodes_[a.id].value;
  n.value.resize(a.rows, static_cast<Eigen::Index>(a.cols) * k);
  for (int c = 0; c < a.cols; ++c)
    for (int j = 0; j < k; ++j) n.value.col(static_cast<Eigen::Index>(c) * k + j) = src.col(c);
  return push_(std::move(n));
}

Var Tape::pick(Var a, int row, int col) {
  if (row < 0 || row >= a.rows || col < 0 || col >= a.cols)
    throw std::invalid_argument("pick: index out of range");
  Node n;
  n.op = Op::kPick;
  n.a = a.id;
  n.k = row;
  n.k2 = col;
  n.needs_grad = nodes_[a.id].needs_grad;
  n.value = Eigen::MatrixXd::Constant(1, 1, nodes_[a.id].value(row, col));
  return push_(std::move(n));
}

Var Tape::weighted_sum(Var a, const Eigen::Ref<const Eigen::MatrixXd>& w) {
  if (w.rows() != a.rows || w.cols() != a.cols)
    shape_error("weighted_sum", a.rows, a.cols, static_cast<int>(w.rows()),
                static_cast<int>(w.cols()));
  Node n;
  n.op = Op::kWeightedSum;
  n.a = a.id;
  n.needs_grad = nodes_[a.id].needs_grad;
  n.aux = w;
  n.value = Eigen::MatrixXd::Constant(1, 1, nodes_[a.id].value.cwiseProduct(w).sum());
  return push_(std::move(n));
}

const Eigen::MatrixXd& Tape::adjoint(Var v) const {
  const Node& n = nodes_[v.id];
  if (!n.needs_grad)
    throw std::logic_error("adjoint: no gradient recorded for this node");
  if (!n.grad_init) {
    // Never reached by the backward sweep: the gradient is exactly zero.
    n.adjoint.setZero(n.value.rows(), n.value.cols());
    n.grad_init = true;
  }
  return n.adjoint;
}

void Tape::backward(Var root) {
  if (root.rows != 1 || root.cols != 1)
    throw std::invalid_argument("backward: root must be scalar (1x1)");

  for (Node& n : nodes_) {
    n.grad_init = false;
    if (n.needs_grad)
      n.adjoint.resize(n.value.rows(), n.value.cols());
    else
      n.adjoint.resize(0, 0);
  }
  if (!nodes_[root.id].needs_grad) return;  // root does not reach a leaf
  nodes_[root.id].adjoint(0, 0) = 1.0;
  nodes_[root.id].grad_init = true;

  auto acc = [](Node& p, const auto& expr) {
    if (p.grad_init) {
      p.adjoint += expr;
    } else {
      p.adjoint = expr;
      p.grad_init = true;
    }
  };
  auto acc_prod = [](Node& p, const auto& expr) {
    if (p.grad_init) {
      p.adjoint.noalias() += expr;
    } else {
      p.adjoint.noalias() = expr;
      p.grad_init = true;
    }
  };
  auto ensure_zero = [](Node& p) {
    if (!p.grad_init) {
      p.adjoint.setZero();
      p.grad_init = true;
    }
  };

  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.needs_grad || !n.grad_init) continue;
    if (n.op == Op::kLeaf || n.op == Op::kConstant) continue;
    const Eigen::MatrixXd& g = n.adjoint;
    Node* pa = n.a >= 0 ? &nodes_[n.a] : nullptr;
    Node* pb = n.b >= 0 ? &nodes_[n.b] : nullptr;
    const bool ga = pa && pa->needs_grad;
    const bool gb = pb && pb->needs_grad;
    switch (n.op) {
      case Op::kAdd:
        if (ga) acc(*pa, g);
        if (gb) acc(*pb, g);
        break;
      case Op::kSub:
        if (ga) acc(*pa, g);
        if (gb) acc(*pb, -g);
        break;
      case Op::kMul:
        if (ga) acc(*pa, g.cwiseProduct(pb->value));
        if (gb) acc(*pb, g.cwiseProduct(pa->value));
        break;
      case Op::kScale:
        if (ga) acc(*pa, n.c * g);
        break;
      case Op::kMatMul:
        if (ga) acc_prod(*pa, g * pb->value.transpose());
        if (gb) acc_prod(*pb, pa->value.transpose() * g);
        break;
      case Op::kAddColwise:
        if (ga) acc(*pa, g);
        if (gb) {
          ensure_zero(*pb);
          pb->adjoint.col(0) += g.rowwise().sum();
        }
        break;
      case Op::kTanh:
        if (ga) acc(*pa, (g.array() * (1.0 - n.value.array().square())).matrix());
        break;
      case Op::kSumSquares:
        if (ga) acc(*pa, (2.0 * g(0, 0)) * pa->value);
        break;
      case Op::kColwiseSumSquares:
        if (ga)
          acc(*pa,
              (pa->value.array().rowwise() * (2.0 * g.array().row(0))).matrix());
        break;
      case Op::kBlockSumCols:
        if (ga) {
          ensure_zero(*pa);
          const int groups = static_cast<int>(n.value.cols());
          for (int grp = 0; grp < groups; ++grp)
            pa->adjoint.middleCols(static_cast<Eigen::Index>(grp) * n.k, n.k)
                .array() += g(0, grp);
        }
        break;
      case Op::kSumAll:
        if (ga) acc(*pa, Eigen::MatrixXd::Constant(pa->value.rows(),
                                                   pa->value.cols(), g(0, 0)));
        break;
      case Op::kConcatRows:
        if (ga) acc(*pa, g.topRows(pa->value.rows()));
        if (gb) acc(*pb, g.bottomRows(pb->value.rows()));
        break;
      case Op::kRepeatColsBlocked:
        if (ga) {
          ensure_zero(*pa);
          const int cols = static_cast<int>(pa->value.cols());
          for (int c = 0; c < cols; ++c)
            pa->adjoint.col(c) +=
                g.middleCols(static_cast<Eigen::Index>(c) * n.k, n.k).rowwise().sum();
        }
        break;
      case Op::kPick:
        if (ga) {
          ensure_zero(*pa);
          pa->adjoint(n.k, n.k2) += g(0, 0);
        }
        break;
      case Op::kWeightedSum:
        if (ga) acc(*pa, g(0, 0) * n.aux);
        break;
      case Op::kTanhAffine: {
        Node* pc = &nodes_[n.in3];
        const bool gc = pc->needs_grad;
        if (!ga && !gb && !gc) break;
        const Eigen::MatrixXd t =
            (g.array() * (1.0 - n.value.array().square())).matrix();
        if (ga) acc_prod(*pa, t * pb->value.transpose());
        if (gb) acc_prod(*pb, pa->value.transpose() * t);
        if (gc) {
          ensure_zero(*pc);
          pc->adjoint.col(0) += t.rowwise().sum();
        }
        break;
      }
      case Op::kLeaf:
      case Op::kConstant:
        break;
    }
  }
}

}  // namespace quench::ad
