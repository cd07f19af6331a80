#pragma once

#include <Eigen/Dense>
#include <vector>

namespace quench::ad {

// Handle into a Tape. Values are dense column-major matrices of doubles;
// a plain vector is a one-column matrix.
struct Var {
  int id = -1;
  int rows = 0;
  int cols = 0;
  bool valid() const { return id >= 0; }
};

enum class Op : std::uint8_t {
  kLeaf,             // input with gradient tracking
  kConstant,         // input without gradient tracking
  kAdd,
  kSub,
  kMul,              // elementwise
  kScale,            // by host scalar
  kMatMul,           // (r x k) * (k x c); matvec is c == 1
  kAddColwise,       // matrix + column vector broadcast over columns
  kTanh,
  kSumSquares,       // -> 1x1
  kColwiseSumSquares,// -> 1 x cols
  kBlockSumCols,     // 1 x (b*k) -> 1 x b, sums consecutive groups of k
  kSumAll,           // -> 1x1
  kConcatRows,
  kRepeatColsBlocked,// n x c -> n x (c*k), each column repeated k times
  kPick,             // single entry -> 1x1
  kWeightedSum,      // sum(value .* weights) -> 1x1
  kTanhAffine,       // tanh(A * x + b), the fused dense layer
};

// Reverse-mode tape over dense matrices. Nodes are appended in evaluation
// order, so inputs always precede their consumers. The tape is rebuilt for
// every forward evaluation; backward() zeroes adjoints, seeds the scalar
// root with 1 and runs one reverse sweep. Gradients are only propagated
// into subgraphs that reach a leaf, so constant-weight network evaluations
// skip the parameter outer products entirely.
class Tape {
 public:
  Var leaf(const Eigen::Ref<const Eigen::MatrixXd>& value);
  Var constant(const Eigen::Ref<const Eigen::MatrixXd>& value);
  Var constant_scalar(double v);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul_elementwise(Var a, Var b);
  Var scale(Var a, double c);
  Var matvec(Var m, Var v) { return matmul(m, v); }
  Var matmul(Var a, Var b);
  Var add_colwise(Var m, Var v);
  Var tanh(Var a);
  // tanh(a * x .colwise+ b) in one node. Equivalent to the composed ops bit
  // for bit, but materializes one buffer per layer instead of three, which
  // is what bounds the guided-sampling throughput.
  Var tanh_affine(Var a, Var x, Var b);
  Var sum_squares(Var a);
  Var colwise_sum_squares(Var a);
  Var block_sum_cols(Var a, int k);
  Var sum_all(Var a);
  Var concat(Var a, Var b);
  Var repeat_cols_blocked(Var a, int k);
  Var pick(Var a, int row, int col);
  Var weighted_sum(Var a, const Eigen::Ref<const Eigen::MatrixXd>& weights);

  // Runs one reverse sweep from a scalar root. Rejects non-scalar roots.
  void backward(Var root);

  const Eigen::MatrixXd& value(Var v) const { return nodes_[v.id].value; }
  const Eigen::MatrixXd& adjoint(Var v) const;
  double scalar_value(Var v) const { return nodes_[v.id].value(0, 0); }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    int in3 = -1;    // third input (bias of kTanhAffine)
    double c = 0.0;  // scalar for kScale
    int k = 0;       // block size / pick row
    int k2 = 0;      // pick col
    bool needs_grad = false;
    // First accumulation into an adjoint assigns instead of adding; nodes a
    // backward pass never reaches keep grad_init false and read as zeros.
    mutable bool grad_init = false;
    Eigen::MatrixXd value;
    Eigen::MatrixXd aux;  // weights for kWeightedSum
    mutable Eigen::MatrixXd adjoint;
  };

  Var push_(Node&& n);
  Var binary_same_shape_(Op op, Var a, Var b, const char* name);

  std::vector<Node> nodes_;
};

}  // namespace quench::ad
