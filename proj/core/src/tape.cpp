#include "puray/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace puray::ad {

namespace {

// Inside vector attention the patch axis is bounded by this; the scratch
// buffers live on the stack.
constexpr int kMaxAttentionRows = 256;

void check(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

Tape::Tape() {
  nodes_.reserve(512);
  vals_.reserve(1 << 17);
  grads_.reserve(1 << 17);
  aux_.reserve(1 << 14);
  scratch_.reserve(kMaxAttentionRows);
}

std::int64_t Tape::alloc(std::int64_t n) {
  const std::int64_t off = top_;
  top_ += n;
  if (static_cast<std::int64_t>(vals_.size()) < top_) {
    vals_.resize(top_);
    grads_.resize(top_);
  }
  return off;
}

std::int64_t Tape::alloc_aux(std::int64_t n) {
  const std::int64_t off = aux_top_;
  aux_top_ += n;
  if (static_cast<std::int64_t>(aux_.size()) < aux_top_) aux_.resize(aux_top_);
  return off;
}

Var Tape::push(Node nd) {
  if (nd.op != Op::kReshape) nd.val = alloc(nd.shape.count());
  nodes_.push_back(nd);
  const std::int32_t id = static_cast<std::int32_t>(nodes_.size()) - 1;
  forward_node(id);
  nodes_[id].src = nullptr;
  return Var{id};
}

const Tape::Node& Tape::node(Var v) const {
  check(v.valid() && v.id < static_cast<std::int32_t>(nodes_.size()), "invalid Var");
  return nodes_[v.id];
}

void Tape::reset() {
  nodes_.clear();
  top_ = 0;
  aux_top_ = 0;
  param_memo_.clear();
}

double Tape::stable_sum(const double* v, std::int64_t n) {
  if (n == 0) return 0.0;
  if (n == 1) return v[0];
  if (n == 2) {
    const bool swap = std::fabs(v[0]) > std::fabs(v[1]) ||
                      (std::fabs(v[0]) == std::fabs(v[1]) && v[0] > v[1]);
    return swap ? v[1] + v[0] : v[0] + v[1];
  }
  scratch_.assign(v, v + n);
  std::sort(scratch_.begin(), scratch_.end(), [](double a, double b) {
    const double fa = std::fabs(a), fb = std::fabs(b);
    if (fa != fb) return fa < fb;
    return a < b;
  });
  double acc = 0.0;
  for (double x : scratch_) acc += x;
  return acc;
}

Var Tape::constant(const Shape& shape, std::span<const double> data) {
  check(shape.count() == static_cast<std::int64_t>(data.size()), "constant: size mismatch");
  Node nd;
  nd.op = Op::kConstant;
  nd.shape = shape;
  nd.src = data.data();
  return push(nd);
}

Var Tape::scalar_const(double v) { return constant(make_shape({1}), {&v, 1}); }

Var Tape::param(Tensor& tensor) {
  auto it = param_memo_.find(&tensor);
  if (it != param_memo_.end()) return Var{it->second};
  Node nd;
  nd.op = Op::kParam;
  nd.shape.rank = static_cast<int>(tensor.shape.size());
  check(nd.shape.rank >= 1 && nd.shape.rank <= 3, "param: rank must be 1..3");
  for (int i = 0; i < nd.shape.rank; ++i) nd.shape.d[i] = tensor.shape[i];
  nd.bound = &tensor;
  nd.src = tensor.data.data();
  Var v = push(nd);
  param_memo_.emplace(&tensor, v.id);
  return v;
}

Var Tape::binary(Op op, Var a, Var b) {
  const Shape& sa = node(a).shape;
  const Shape& sb = node(b).shape;
  Node nd;
  nd.op = op;
  nd.a = a.id;
  nd.b = b.id;
  if (sa == sb) {
    nd.mode = kSame;
    nd.shape = sa;
  } else if (sb.count() == 1) {
    nd.mode = kBScalar;
    nd.shape = sa;
  } else if (sa.count() == 1 && (op == Op::kAdd || op == Op::kMul)) {
    return binary(op, b, a);
  } else {
    // b must match a trailing slice of a's shape (leading 1-dims of b ignored)
    check(op == Op::kAdd || op == Op::kSub || op == Op::kMul,
          "broadcast: op does not support suffix broadcasting");
    int beff[3];
    int br = 0;
    bool leading = true;
    for (int i = 0; i < sb.rank; ++i) {
      if (leading && sb.d[i] == 1) continue;
      leading = false;
      beff[br++] = sb.d[i];
    }
    check(br >= 1 && br <= sa.rank, "broadcast: incompatible shapes");
    for (int i = 0; i < br; ++i) {
      check(beff[i] == sa.d[sa.rank - br + i], "broadcast: incompatible shapes");
    }
    nd.mode = kBSuffix;
    nd.shape = sa;
  }
  return push(nd);
}

Var Tape::add(Var a, Var b) { return binary(Op::kAdd, a, b); }
Var Tape::sub(Var a, Var b) { return binary(Op::kSub, a, b); }
Var Tape::mul(Var a, Var b) { return binary(Op::kMul, a, b); }

Var Tape::div(Var a, Var b) {
  const Shape& sa = node(a).shape;
  const Shape& sb = node(b).shape;
  Node nd;
  nd.op = Op::kDiv;
  nd.a = a.id;
  nd.b = b.id;
  if (sa == sb) {
    nd.mode = kSame;
  } else {
    check(sb.count() == 1, "div: denominator must match or be scalar");
    nd.mode = kBScalar;
  }
  nd.shape = sa;
  return push(nd);
}

Var Tape::scale(Var a, double s) {
  Node nd;
  nd.op = Op::kScale;
  nd.a = a.id;
  nd.shape = node(a).shape;
  nd.cval = s;
  return push(nd);
}

Var Tape::neg(Var a) {
  Node nd;
  nd.op = Op::kNeg;
  nd.a = a.id;
  nd.shape = node(a).shape;
  return push(nd);
}

#define PURAY_UNARY(FN, OP)            \
  Var Tape::FN(Var a) {                \
    Node nd;                           \
    nd.op = Op::OP;                    \
    nd.a = a.id;                       \
    nd.shape = node(a).shape;          \
    return push(nd);                   \
  }
PURAY_UNARY(relu, kRelu)
PURAY_UNARY(abs, kAbs)
PURAY_UNARY(sqrt, kSqrt)
PURAY_UNARY(exp, kExp)
#undef PURAY_UNARY

Var Tape::matmul(Var a, Var b) {
  const Shape& sa = node(a).shape;
  const Shape& sb = node(b).shape;
  check(sa.rank == 2 && sb.rank == 2 && sa.d[1] == sb.d[0], "matmul: shape mismatch");
  Node nd;
  nd.op = Op::kMatMul;
  nd.a = a.id;
  nd.b = b.id;
  nd.shape = make_shape({sa.d[0], sb.d[1]});
  return push(nd);
}

Var Tape::linear(Var x, Var w, Var b) {
  const Shape& sx = node(x).shape;
  const Shape& sw = node(w).shape;
  const Shape& sb = node(b).shape;
  check(sx.rank == 2 && sw.rank == 2 && sb.rank == 1, "linear: rank mismatch");
  check(sx.d[1] == sw.d[1] && sb.d[0] == sw.d[0], "linear: shape mismatch");
  Node nd;
  nd.op = Op::kLinear;
  nd.a = x.id;
  nd.b = w.id;
  nd.c = b.id;
  nd.shape = make_shape({sx.d[0], sw.d[0]});
  return push(nd);
}

Var Tape::softmax_last(Var a) {
  const Shape& sa = node(a).shape;
  check(sa.rank >= 1, "softmax_last: rank must be >= 1");
  Node nd;
  nd.op = Op::kSoftmaxLast;
  nd.a = a.id;
  nd.shape = sa;
  return push(nd);
}

Var Tape::sum_all(Var a) {
  Node nd;
  nd.op = Op::kSumAll;
  nd.a = a.id;
  nd.shape = make_shape({1});
  return push(nd);
}

Var Tape::mean_all(Var a) {
  Node nd;
  nd.op = Op::kMeanAll;
  nd.a = a.id;
  nd.shape = make_shape({1});
  return push(nd);
}

Var Tape::sum_last(Var a) {
  const Shape& sa = node(a).shape;
  check(sa.rank >= 2, "sum_last: rank must be >= 2");
  Node nd;
  nd.op = Op::kSumLast;
  nd.a = a.id;
  nd.shape.rank = sa.rank - 1;
  for (int i = 0; i < nd.shape.rank; ++i) nd.shape.d[i] = sa.d[i];
  return push(nd);
}

Var Tape::norm2_last(Var a) {
  const Shape& sa = node(a).shape;
  check(sa.rank == 2, "norm2_last: rank must be 2");
  Node nd;
  nd.op = Op::kNorm2Last;
  nd.a = a.id;
  nd.shape = make_shape({sa.d[0]});
  return push(nd);
}

Var Tape::unit_last_or_default(Var a, Vec3 def) {
  const Shape& sa = node(a).shape;
  check(sa.rank == 2 && sa.d[1] == 3, "unit_last_or_default: shape must be (n,3)");
  Node nd;
  nd.op = Op::kUnitLast;
  nd.a = a.id;
  nd.shape = sa;
  nd.cvec = def;
  nd.aux = alloc_aux(sa.d[0]);
  return push(nd);
}

Var Tape::concat_last(Var a, Var b) {
  const Shape& sa = node(a).shape;
  const Shape& sb = node(b).shape;
  check(sa.rank == sb.rank && sa.rank >= 1, "concat_last: rank mismatch");
  for (int i = 0; i + 1 < sa.rank; ++i) check(sa.d[i] == sb.d[i], "concat_last: leading dims differ");
  Node nd;
  nd.op = Op::kConcatLast;
  nd.a = a.id;
  nd.b = b.id;
  nd.shape = sa;
  nd.shape.d[sa.rank - 1] = sa.d[sa.rank - 1] + sb.d[sb.rank - 1];
  return push(nd);
}

Var Tape::gather_rows(Var a, std::span<const int> rows) {
  const Shape& sa = node(a).shape;
  check(sa.rank >= 1, "gather_rows: rank must be >= 1");
  for (int r : rows) check(r >= 0 && r < sa.d[0], "gather_rows: index out of range");
  Node nd;
  nd.op = Op::kGatherRows;
  nd.a = a.id;
  nd.shape = sa;
  nd.shape.d[0] = static_cast<int>(rows.size());
  nd.idx_off = static_cast<std::int32_t>(indices_.size());
  nd.idx_len = static_cast<std::int32_t>(rows.size());
  indices_.insert(indices_.end(), rows.begin(), rows.end());
  return push(nd);
}

Var Tape::reshape(Var a, const Shape& shape) {
  const Node& na = node(a);
  check(shape.count() == na.shape.count(), "reshape: element count mismatch");
  Node nd;
  nd.op = Op::kReshape;
  nd.a = a.id;
  nd.shape = shape;
  nd.val = na.val;  // aliases the input's storage, gradient included
  return push(nd);
}

Var Tape::vector_attention(Var q, Var k, Var v, Var delta) {
  const Shape& sq = node(q).shape;
  const Shape& sk = node(k).shape;
  const Shape& sv = node(v).shape;
  const Shape& sd = node(delta).shape;
  check(sq.rank == 2 && sk.rank == 2 && sv.rank == 2, "vector_attention: q/k/v must be rank 2");
  const int kq = sq.d[0], c = sq.d[1], kc = sk.d[0];
  check(sk.d[1] == c && sv.d[0] == kc && sv.d[1] == c, "vector_attention: k/v shape mismatch");
  check(kc <= kMaxAttentionRows, "vector_attention: patch axis too large");
  if (sd.rank == 3) {
    check(sd.d[0] == kq && sd.d[1] == kc && sd.d[2] == c, "vector_attention: delta shape mismatch");
  } else {
    check(sd.rank == 2 && kq == 1 && sd.d[0] == kc && sd.d[1] == c,
          "vector_attention: delta shape mismatch");
  }
  Node nd;
  nd.op = Op::kVectorAttention;
  nd.a = q.id;
  nd.b = k.id;
  nd.c = v.id;
  nd.e = delta.id;
  nd.shape = make_shape({kq, c});
  nd.aux = alloc_aux(static_cast<std::int64_t>(kq) * kc * c);
  return push(nd);
}

const Shape& Tape::shape(Var v) const { return node(v).shape; }

std::span<const double> Tape::value(Var v) const {
  const Node& nd = node(v);
  return {vals_.data() + nd.val, static_cast<std::size_t>(nd.shape.count())};
}

double Tape::scalar(Var v) const {
  const Node& nd = node(v);
  check(nd.shape.count() == 1, "scalar: var is not scalar");
  return vals_[nd.val];
}

std::span<const double> Tape::grad(Var v) const {
  const Node& nd = node(v);
  return {grads_.data() + nd.val, static_cast<std::size_t>(nd.shape.count())};
}

void Tape::forward_node(std::int32_t id) {
  Node& nd = nodes_[id];
  double* out = vals_.data() + nd.val;
  const std::int64_t n = nd.shape.count();
  switch (nd.op) {
    case Op::kConstant:
    case Op::kParam:
      std::memcpy(out, nd.src, sizeof(double) * n);
      break;
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul: {
      const double* a = val_ptr(nd.a);
      const double* b = val_ptr(nd.b);
      const std::int64_t nb = nodes_[nd.b].shape.count();
      auto apply = [&](double x, double y) {
        switch (nd.op) {
          case Op::kAdd: return x + y;
          case Op::kSub: return x - y;
          default: return x * y;
        }
      };
      if (nd.mode == kSame) {
        for (std::int64_t i = 0; i < n; ++i) out[i] = apply(a[i], b[i]);
      } else if (nd.mode == kBScalar) {
        const double s = b[0];
        for (std::int64_t i = 0; i < n; ++i) out[i] = apply(a[i], s);
      } else {
        for (std::int64_t i = 0; i < n; ++i) out[i] = apply(a[i], b[i % nb]);
      }
      break;
    }
    case Op::kDiv: {
      const double* a = val_ptr(nd.a);
      const double* b = val_ptr(nd.b);
      if (nd.mode == kSame) {
        for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] / b[i];
      } else {
        const double s = b[0];
        for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] / s;
      }
      break;
    }
    case Op::kScale: {
      const double* a = val_ptr(nd.a);
      for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] * nd.cval;
      break;
    }
    case Op::kNeg: {
      const double* a = val_ptr(nd.a);
      for (std::int64_t i = 0; i < n; ++i) out[i] = -a[i];
      break;
    }
    case Op::kRelu: {
      const double* a = val_ptr(nd.a);
      for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
      break;
    }
    case Op::kAbs: {
      const double* a = val_ptr(nd.a);
      for (std::int64_t i = 0; i < n; ++i) out[i] = std::fabs(a[i]);
      break;
    }
    case Op::kSqrt: {
      const double* a = val_ptr(nd.a);
      for (std::int64_t i = 0; i < n; ++i) out[i] = std::sqrt(a[i]);
      break;
    }
    case Op::kExp: {
      const double* a = val_ptr(nd.a);
      for (std::int64_t i = 0; i < n; ++i) out[i] = std::exp(a[i]);
      break;
    }
    case Op::kMatMul: {
      const Node& na = nodes_[nd.a];
      const Node& nb = nodes_[nd.b];
      const int m = na.shape.d[0], p = na.shape.d[1], q = nb.shape.d[1];
      const double* a = val_ptr(nd.a);
      const double* b = val_ptr(nd.b);
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < q; ++j) {
          double acc = 0.0;
          for (int t = 0; t < p; ++t) acc += a[i * p + t] * b[t * q + j];
          out[i * q + j] = acc;
        }
      }
      break;
    }
    case Op::kLinear: {
      const Node& nx = nodes_[nd.a];
      const Node& nw = nodes_[nd.b];
      const int rows = nx.shape.d[0], in = nx.shape.d[1], outs = nw.shape.d[0];
      const double* x = val_ptr(nd.a);
      const double* w = val_ptr(nd.b);
      const double* bias = val_ptr(nd.c);
      for (int r = 0; r < rows; ++r) {
        const double* xr = x + static_cast<std::int64_t>(r) * in;
        for (int o = 0; o < outs; ++o) {
          const double* wo = w + static_cast<std::int64_t>(o) * in;
          double acc = bias[o];
          for (int i = 0; i < in; ++i) acc += xr[i] * wo[i];
          out[static_cast<std::int64_t>(r) * outs + o] = acc;
        }
      }
      break;
    }
    case Op::kSoftmaxLast: {
      const double* a = val_ptr(nd.a);
      const int d = nd.shape.last();
      const std::int64_t rows = n / d;
      for (std::int64_t r = 0; r < rows; ++r) {
        const double* ar = a + r * d;
        double* or_ = out + r * d;
        double mx = ar[0];
        for (int i = 1; i < d; ++i) mx = std::max(mx, ar[i]);
        for (int i = 0; i < d; ++i) or_[i] = std::exp(ar[i] - mx);
        const double denom = stable_sum(or_, d);
        for (int i = 0; i < d; ++i) or_[i] /= denom;
      }
      break;
    }
    case Op::kSumAll:
      out[0] = stable_sum(val_ptr(nd.a), nodes_[nd.a].shape.count());
      break;
    case Op::kMeanAll: {
      const std::int64_t na = nodes_[nd.a].shape.count();
      out[0] = stable_sum(val_ptr(nd.a), na) / static_cast<double>(na);
      break;
    }
    case Op::kSumLast: {
      const double* a = val_ptr(nd.a);
      const int d = nodes_[nd.a].shape.last();
      for (std::int64_t r = 0; r < n; ++r) out[r] = stable_sum(a + r * d, d);
      break;
    }
    case Op::kNorm2Last: {
      const double* a = val_ptr(nd.a);
      const int d = nodes_[nd.a].shape.last();
      for (std::int64_t r = 0; r < n; ++r) {
        const double* ar = a + r * d;
        double acc = 0.0;
        for (int i = 0; i < d; ++i) acc += ar[i] * ar[i];
        out[r] = std::sqrt(acc);
      }
      break;
    }
    case Op::kUnitLast: {
      const double* a = val_ptr(nd.a);
      const int rows = nd.shape.d[0];
      double* norms = aux_.data() + nd.aux;
      for (int r = 0; r < rows; ++r) {
        const double* ar = a + 3 * r;
        const double t = std::sqrt(ar[0] * ar[0] + ar[1] * ar[1] + ar[2] * ar[2]);
        norms[r] = t;
        if (t == 0.0) {
          out[3 * r] = nd.cvec.x;
          out[3 * r + 1] = nd.cvec.y;
          out[3 * r + 2] = nd.cvec.z;
        } else {
          out[3 * r] = ar[0] / t;
          out[3 * r + 1] = ar[1] / t;
          out[3 * r + 2] = ar[2] / t;
        }
      }
      break;
    }
    case Op::kConcatLast: {
      const Node& na = nodes_[nd.a];
      const Node& nb = nodes_[nd.b];
      const int da = na.shape.last(), db = nb.shape.last();
      const std::int64_t rows = na.shape.count() / da;
      const double* a = val_ptr(nd.a);
      const double* b = val_ptr(nd.b);
      for (std::int64_t r = 0; r < rows; ++r) {
        std::memcpy(out + r * (da + db), a + r * da, sizeof(double) * da);
        std::memcpy(out + r * (da + db) + da, b + r * db, sizeof(double) * db);
      }
      break;
    }
    case Op::kGatherRows: {
      const Node& na = nodes_[nd.a];
      const std::int64_t rs = na.shape.count() / na.shape.d[0];
      const double* a = val_ptr(nd.a);
      for (int i = 0; i < nd.idx_len; ++i) {
        std::memcpy(out + i * rs, a + indices_[nd.idx_off + i] * rs, sizeof(double) * rs);
      }
      break;
    }
    case Op::kReshape:
      break;
    case Op::kVectorAttention: {
      const int kq = nd.shape.d[0], c = nd.shape.d[1];
      const int kc = nodes_[nd.b].shape.d[0];
      const double* q = val_ptr(nd.a);
      const double* k = val_ptr(nd.b);
      const double* v = val_ptr(nd.c);
      const double* del = val_ptr(nd.e);
      double* w = aux_.data() + nd.aux;
      double buf[kMaxAttentionRows];
      for (int i = 0; i < kq; ++i) {
        for (int ch = 0; ch < c; ++ch) {
          const double qv = q[static_cast<std::int64_t>(i) * c + ch];
          double mx = -std::numeric_limits<double>::infinity();
          for (int j = 0; j < kc; ++j) {
            const std::int64_t off = (static_cast<std::int64_t>(i) * kc + j) * c + ch;
            const double l = qv - k[static_cast<std::int64_t>(j) * c + ch] + del[off];
            buf[j] = l;
            mx = std::max(mx, l);
          }
          for (int j = 0; j < kc; ++j) buf[j] = std::exp(buf[j] - mx);
          const double denom = stable_sum(buf, kc);
          double prod[kMaxAttentionRows];
          for (int j = 0; j < kc; ++j) {
            const std::int64_t off = (static_cast<std::int64_t>(i) * kc + j) * c + ch;
            const double wn = buf[j] / denom;
            w[off] = wn;
            prod[j] = wn * (v[static_cast<std::int64_t>(j) * c + ch] + del[off]);
          }
          out[static_cast<std::int64_t>(i) * c + ch] = stable_sum(prod, kc);
        }
      }
      break;
    }
  }
}

void Tape::backward_node(std::int32_t id) {
  const Node& nd = nodes_[id];
  const double* g = grads_.data() + nd.val;
  const double* out = vals_.data() + nd.val;
  const std::int64_t n = nd.shape.count();
  switch (nd.op) {
    case Op::kConstant:
      break;
    case Op::kParam:
      if (nd.bound->requires_grad) {
        double* pg = nd.bound->grad.data();
        for (std::int64_t i = 0; i < n; ++i) pg[i] += g[i];
      }
      break;
    case Op::kAdd: {
      double* ga = grad_ptr(nd.a);
      double* gb = grad_ptr(nd.b);
      const std::int64_t nb = nodes_[nd.b].shape.count();
      if (nd.mode == kSame) {
        for (std::int64_t i = 0; i < n; ++i) {
          ga[i] += g[i];
          gb[i] += g[i];
        }
      } else if (nd.mode == kBScalar) {
        for (std::int64_t i = 0; i < n; ++i) {
          ga[i] += g[i];
          gb[0] += g[i];
        }
      } else {
        for (std::int64_t i = 0; i < n; ++i) {
          ga[i] += g[i];
          gb[i % nb] += g[i];
        }
      }
      break;
    }
    case Op::kSub: {
      double* ga = grad_ptr(nd.a);
      double* gb = grad_ptr(nd.b);
      const std::int64_t nb = nodes_[nd.b].shape.count();
      if (nd.mode == kSame) {
        for (std::int64_t i = 0; i < n; ++i) {
          ga[i] += g[i];
          gb[i] -= g[i];
        }
      } else if (nd.mode == kBScalar) {
        for (std::int64_t i = 0; i < n; ++i) {
          ga[i] += g[i];
          gb[0] -= g[i];
        }
      } else {
        for (std::int64_t i = 0; i < n; ++i) {
          ga[i] += g[i];
          gb[i % nb] -= g[i];
        }
      }
      break;
    }
    case Op::kMul: {
      double* ga = grad_ptr(nd.a);
      double* gb = grad_ptr(nd.b);
      const double* a = val_ptr(nd.a);
      const double* b = val_ptr(nd.b);
      const std::int64_t nb = nodes_[nd.b].shape.count();
      if (nd.mode == kSame) {
        for (std::int64_t i = 0; i < n; ++i) {
          ga[i] += g[i] * b[i];
          gb[i] += g[i] * a[i];
        }
      } else if (nd.mode == kBScalar) {
        const double s = b[0];
        for (std::int64_t i = 0; i < n; ++i) {
          ga[i] += g[i] * s;
          gb[0] += g[i] * a[i];
        }
      } else {
        for (std::int64_t i = 0; i < n; ++i) {
          ga[i] += g[i] * b[i % nb];
          gb[i % nb] += g[i] * a[i];
        }
      }
      break;
    }
    case Op::kDiv: {
      double* ga = grad_ptr(nd.a);
      double* gb = grad_ptr(nd.b);
      const double* a = val_ptr(nd.a);
      const double* b = val_ptr(nd.b);
      if (nd.mode == kSame) {
        for (std::int64_t i = 0; i < n; ++i) {
          ga[i] += g[i] / b[i];
          gb[i] -= g[i] * a[i] / (b[i] * b[i]);
        }
      } else {
        const double s = b[0];
        for (std::int64_t i = 0; i < n; ++i) {
          ga[i] += g[i] / s;
          gb[0] -= g[i] * a[i] / (s * s);
        }
      }
      break;
    }
    case Op::kScale: {
      double* ga = grad_ptr(nd.a);
      for (std::int64_t i = 0; i < n; ++i) ga[i] += g[i] * nd.cval;
      break;
    }
    case Op::kNeg: {
      double* ga = grad_ptr(nd.a);
      for (std::int64_t i = 0; i < n; ++i) ga[i] -= g[i];
      break;
    }
    case Op::kRelu: {
      double* ga = grad_ptr(nd.a);
      const double* a = val_ptr(nd.a);
      for (std::int64_t i = 0; i < n; ++i) {
        if (a[i] > 0.0) ga[i] += g[i];
      }
      break;
    }
    case Op::kAbs: {
      double* ga = grad_ptr(nd.a);
      const double* a = val_ptr(nd.a);
      for (std::int64_t i = 0; i < n; ++i) {
        if (a[i] > 0.0) ga[i] += g[i];
        else if (a[i] < 0.0) ga[i] -= g[i];
      }
      break;
    }
    case Op::kSqrt: {
      double* ga = grad_ptr(nd.a);
      for (std::int64_t i = 0; i < n; ++i) {
        if (out[i] > 0.0) ga[i] += g[i] * 0.5 / out[i];
      }
      break;
    }
    case Op::kExp: {
      double* ga = grad_ptr(nd.a);
      for (std::int64_t i = 0; i < n; ++i) ga[i] += g[i] * out[i];
      break;
    }
    case Op::kMatMul: {
      const Node& na = nodes_[nd.a];
      const Node& nb = nodes_[nd.b];
      const int m = na.shape.d[0], p = na.shape.d[1], q = nb.shape.d[1];
      double* ga = grad_ptr(nd.a);
      double* gb = grad_ptr(nd.b);
      const double* a = val_ptr(nd.a);
      const double* b = val_ptr(nd.b);
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < q; ++j) {
          const double gij = g[i * q + j];
          if (gij == 0.0) continue;
          for (int t = 0; t < p; ++t) {
            ga[i * p + t] += gij * b[t * q + j];
            gb[t * q + j] += gij * a[i * p + t];
          }
        }
      }
      break;
    }
    case Op::kLinear: {
      const Node& nx = nodes_[nd.a];
      const Node& nw = nodes_[nd.b];
      const int rows = nx.shape.d[0], in = nx.shape.d[1], outs = nw.shape.d[0];
      double* gx = grad_ptr(nd.a);
      double* gw = grad_ptr(nd.b);
      double* gb = grad_ptr(nd.c);
      const double* x = val_ptr(nd.a);
      const double* w = val_ptr(nd.b);
      for (int r = 0; r < rows; ++r) {
        const double* xr = x + static_cast<std::int64_t>(r) * in;
        double* gxr = gx + static_cast<std::int64_t>(r) * in;
        for (int o = 0; o < outs; ++o) {
          const double go = g[static_cast<std::int64_t>(r) * outs + o];
          if (go == 0.0) continue;
          gb[o] += go;
          const double* wo = w + static_cast<std::int64_t>(o) * in;
          double* gwo = gw + static_cast<std::int64_t>(o) * in;
          for (int i = 0; i < in; ++i) {
            gxr[i] += go * wo[i];
            gwo[i] += go * xr[i];
          }
        }
      }
      break;
    }
    case Op::kSoftmaxLast: {
      double* ga = grad_ptr(nd.a);
      const int d = nd.shape.last();
      const std::int64_t rows = n / d;
      for (std::int64_t r = 0; r < rows; ++r) {
        const double* yr = out + r * d;
        const double* gr = g + r * d;
        double dot = 0.0;
        for (int i = 0; i < d; ++i) dot += yr[i] * gr[i];
        for (int i = 0; i < d; ++i) ga[r * d + i] += yr[i] * (gr[i] - dot);
      }
      break;
    }
    case Op::kSumAll: {
      double* ga = grad_ptr(nd.a);
      const std::int64_t na = nodes_[nd.a].shape.count();
      for (std::int64_t i = 0; i < na; ++i) ga[i] += g[0];
      break;
    }
    case Op::kMeanAll: {
      double* ga = grad_ptr(nd.a);
      const std::int64_t na = nodes_[nd.a].shape.count();
      const double s = g[0] / static_cast<double>(na);
      for (std::int64_t i = 0; i < na; ++i) ga[i] += s;
      break;
    }
    case Op::kSumLast: {
      double* ga = grad_ptr(nd.a);
      const int d = nodes_[nd.a].shape.last();
      for (std::int64_t r = 0; r < n; ++r) {
        for (int i = 0; i < d; ++i) ga[r * d + i] += g[r];
      }
      break;
    }
    case Op::kNorm2Last: {
      double* ga = grad_ptr(nd.a);
      const double* a = val_ptr(nd.a);
      const int d = nodes_[nd.a].shape.last();
      for (std::int64_t r = 0; r < n; ++r) {
        if (out[r] == 0.0) continue;
        const double s = g[r] / out[r];
        for (int i = 0; i < d; ++i) ga[r * d + i] += s * a[r * d + i];
      }
      break;
    }
    case Op::kUnitLast: {
      double* ga = grad_ptr(nd.a);
      const int rows = nd.shape.d[0];
      const double* norms = aux_.data() + nd.aux;
      for (int r = 0; r < rows; ++r) {
        const double t = norms[r];
        if (t == 0.0) continue;
        const double* yr = out + 3 * r;
        const double* gr = g + 3 * r;
        const double dot = gr[0] * yr[0] + gr[1] * yr[1] + gr[2] * yr[2];
        for (int i = 0; i < 3; ++i) ga[3 * r + i] += (gr[i] - dot * yr[i]) / t;
      }
      break;
    }
    case Op::kConcatLast: {
      const Node& na = nodes_[nd.a];
      const Node& nb = nodes_[nd.b];
      const int da = na.shape.last(), db = nb.shape.last();
      const std::int64_t rows = na.shape.count() / da;
      double* ga = grad_ptr(nd.a);
      double* gb = grad_ptr(nd.b);
      for (std::int64_t r = 0; r < rows; ++r) {
        for (int i = 0; i < da; ++i) ga[r * da + i] += g[r * (da + db) + i];
        for (int i = 0; i < db; ++i) gb[r * db + i] += g[r * (da + db) + da + i];
      }
      break;
    }
    case Op::kGatherRows: {
      const Node& na = nodes_[nd.a];
      const std::int64_t rs = na.shape.count() / na.shape.d[0];
      double* ga = grad_ptr(nd.a);
      for (int i = 0; i < nd.idx_len; ++i) {
        double* dst = ga + indices_[nd.idx_off + i] * rs;
        for (std::int64_t j = 0; j < rs; ++j) dst[j] += g[i * rs + j];
      }
      break;
    }
    case Op::kReshape:
      break;
    case Op::kVectorAttention: {
      const int kq = nd.shape.d[0], c = nd.shape.d[1];
      const int kc = nodes_[nd.b].shape.d[0];
      double* gq = grad_ptr(nd.a);
      double* gk = grad_ptr(nd.b);
      double* gv = grad_ptr(nd.c);
      double* gd = grad_ptr(nd.e);
      const double* v = val_ptr(nd.c);
      const double* del = val_ptr(nd.e);
      const double* w = aux_.data() + nd.aux;
      for (int i = 0; i < kq; ++i) {
        for (int ch = 0; ch < c; ++ch) {
          const double gy = g[static_cast<std::int64_t>(i) * c + ch];
          if (gy == 0.0) continue;
          // ds_j = gy*u_j through the aggregation; then softmax backward
          double inner = 0.0;
          double ds[kMaxAttentionRows];
          for (int j = 0; j < kc; ++j) {
            const std::int64_t off = (static_cast<std::int64_t>(i) * kc + j) * c + ch;
            const double u = v[static_cast<std::int64_t>(j) * c + ch] + del[off];
            const double wj = w[off];
            ds[j] = gy * u;
            inner += wj * ds[j];
            gv[static_cast<std::int64_t>(j) * c + ch] += gy * wj;
            gd[off] += gy * wj;
          }
          double dq = 0.0;
          for (int j = 0; j < kc; ++j) {
            const std::int64_t off = (static_cast<std::int64_t>(i) * kc + j) * c + ch;
            const double da = w[off] * (ds[j] - inner);
            dq += da;
            gk[static_cast<std::int64_t>(j) * c + ch] -= da;
            gd[off] += da;
          }
          gq[static_cast<std::int64_t>(i) * c + ch] += dq;
        }
      }
      break;
    }
  }
}

void Tape::backward(Var loss) {
  const std::pair<Var, double> seed{loss, 1.0};
  backward_multi({&seed, 1});
}

void Tape::backward_multi(std::span<const std::pair<Var, double>> seeds) {
  std::fill(grads_.begin(), grads_.begin() + top_, 0.0);
  for (const auto& [v, wt] : seeds) {
    const Node& nd = node(v);
    check(nd.shape.count() == 1, "backward: seed var must be scalar");
    grads_[nd.val] += wt;
  }
  run_backward();
}

void Tape::run_backward() {
  for (std::int32_t id = static_cast<std::int32_t>(nodes_.size()) - 1; id >= 0; --id) {
    backward_node(id);
  }
}

}  // namespace puray::ad
