#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "puray/geometry.hpp"
#include "puray/param_store.hpp"

namespace puray::ad {

struct Shape {
  int rank = 0;
  std::array<int, 3> d{1, 1, 1};

  std::int64_t count() const {
    std::int64_t c = 1;
    for (int i = 0; i < rank; ++i) c *= d[i];
    return c;
  }
  int last() const { return rank > 0 ? d[rank - 1] : 1; }
  bool operator==(const Shape&) const = default;
};

inline Shape make_shape(std::initializer_list<int> dims) {
  Shape s;
  for (int v : dims) s.d[s.rank++] = v;
  return s;
}

struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Define-by-run reverse-mode tape over double arrays. Values, gradients, and
// saved intermediates live in arenas that survive reset(), so per-sample
// graphs in the training loop allocate nothing after warm-up.
//
// Reductions whose operands live on the patch axis (softmax denominators,
// attention aggregation, sum/mean) accumulate in sorted (|x|, x) order, which
// makes forward values invariant to input permutation bit-for-bit. Feature-
// axis contractions (matmul, linear) run in natural order.
class Tape {
 public:
  Tape();

  Var constant(const Shape& shape, std::span<const double> data);
  Var scalar_const(double v);
  Var param(Tensor& tensor);  // memoized per tensor per tape generation

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var scale(Var a, double s);
  Var neg(Var a);
  Var relu(Var a);
  Var max0(Var a) { return relu(a); }
  Var abs(Var a);
  Var sqrt(Var a);
  Var exp(Var a);
  Var matmul(Var a, Var b);
  // x:(n,in) w:(out,in) b:(out) -> (n,out)
  Var linear(Var x, Var w, Var b);
  Var softmax_last(Var a);
  Var sum_all(Var a);
  Var mean_all(Var a);
  Var sum_last(Var a);
  Var norm2_last(Var a);                       // (n,d) -> (n,)
  Var unit_last_or_default(Var a, Vec3 def);   // (n,d) -> (n,d), def where norm is 0
  Var concat_last(Var a, Var b);
  Var gather_rows(Var a, std::span<const int> rows);
  Var reshape(Var a, const Shape& shape);
  // q:(kq,c) k:(kc,c) v:(kc,c) delta:(kq,kc,c), or (kc,c) delta when kq == 1.
  // Per (row, channel): softmax over kc of (q - k + delta), aggregating
  // (v + delta); the vector-attention block of the point transformer.
  Var vector_attention(Var q, Var k, Var v, Var delta);

  const Shape& shape(Var v) const;
  std::span<const double> value(Var v) const;
  double scalar(Var v) const;
  std::span<const double> grad(Var v) const;

  void backward(Var loss);
  // Weighted multi-seed backward: each (var, weight) seeds d(out)/d(var) = weight.
  void backward_multi(std::span<const std::pair<Var, double>> seeds);

  void reset();
  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    kConstant, kParam, kAdd, kSub, kMul, kDiv, kScale, kNeg, kRelu, kAbs, kSqrt,
    kExp, kMatMul, kLinear, kSoftmaxLast, kSumAll, kMeanAll, kSumLast, kNorm2Last,
    kUnitLast, kConcatLast, kGatherRows, kReshape, kVectorAttention,
  };
  enum BroadcastMode : int { kSame = 0, kBScalar = 1, kBSuffix = 2 };

  struct Node {
    Op op;
    int mode = kSame;
    std::int32_t a = -1, b = -1, c = -1, e = -1;
    Shape shape;
    std::int64_t val = 0;
    std::int64_t aux = -1;
    double cval = 0.0;
    Vec3 cvec;
    Tensor* bound = nullptr;
    const double* src = nullptr;  // constant payload, consumed during push
    std::int32_t idx_off = 0, idx_len = 0;
  };

  std::vector<Node> nodes_;
  std::vector<double> vals_;
  std::vector<double> grads_;
  std::vector<double> aux_;
  std::vector<int> indices_;
  std::vector<double> scratch_;
  std::int64_t top_ = 0;
  std::int64_t aux_top_ = 0;
  std::unordered_map<const Tensor*, std::int32_t> param_memo_;

  std::int64_t alloc(std::int64_t n);
  std::int64_t alloc_aux(std::int64_t n);
  Var push(Node nd);
  const Node& node(Var v) const;
  double* val_ptr(std::int32_t id) { return vals_.data() + nodes_[id].val; }
  const double* val_ptr(std::int32_t id) const { return vals_.data() + nodes_[id].val; }
  double* grad_ptr(std::int32_t id) { return grads_.data() + nodes_[id].val; }

  double stable_sum(const double* v, std::int64_t n);
  Var binary(Op op, Var a, Var b);
  void forward_node(std::int32_t id);
  void backward_node(std::int32_t id);
  void run_backward();
};

}  // namespace puray::ad
