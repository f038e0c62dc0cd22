#include "vld/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include "vld/errors.hpp"

namespace vld::ops {

namespace {

using Node = detail::TensorNode;

Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }

// Accumulates into the parent's gradient when it participates in the graph.
double* grad_of(Node& n, std::size_t i) {
  auto& p = parent(n, i);
  if (!p.requires_grad) return nullptr;
  p.ensure_grad();
  return p.grad.data();
}

std::size_t checked_axis(const Tensor& x, std::size_t axis, const char* op) {
  if (axis >= x.dim()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                     shape_str(x.shape()));
  }
  return axis;
}

// outer × n × inner decomposition around one axis.
struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

std::vector<std::size_t> contiguous_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// For each flat output index, the flat source index under the given
// per-output-axis source strides.
std::vector<std::size_t> gather_index(const Shape& out, const std::vector<std::size_t>& src_stride) {
  std::size_t total = shape_numel(out);
  std::vector<std::size_t> idx(total);
  if (total == 0) return idx;
  std::vector<std::size_t> counter(out.size(), 0);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < total; ++i) {
    idx[i] = offset;
    for (std::size_t ax = out.size(); ax-- > 0;) {
      offset += src_stride[ax];
      if (++counter[ax] < out[ax]) break;
      offset -= src_stride[ax] * counter[ax];
      counter[ax] = 0;
    }
  }
  return idx;
}

struct BroadcastPlan {
  Shape out;
  bool same = false;
  std::vector<std::size_t> ia, ib;
};

std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  auto cs = contiguous_strides(in);
  std::vector<std::size_t> st(out.size(), 0);
  std::size_t offset = out.size() - in.size();
  for (std::size_t i = 0; i < in.size(); ++i) {
    st[offset + i] = (in[i] == 1 && out[offset + i] != 1) ? 0 : cs[i];
  }
  return st;
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  BroadcastPlan p;
  if (a == b) {
    p.out = a;
    p.same = true;
    return p;
  }
  std::size_t rank = std::max(a.size(), b.size());
  p.out.assign(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                       shape_str(b));
    }
    p.out[i] = std::max(da, db);
  }
  p.ia = gather_index(p.out, broadcast_strides(a, p.out));
  p.ib = gather_index(p.out, broadcast_strides(b, p.out));
  return p;
}

template <class Fwd, class Da, class Db>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Da da, Db db) {
  auto plan = std::make_shared<BroadcastPlan>(plan_broadcast(a.shape(), b.shape(), name));
  auto av = a.values();
  auto bv = b.values();
  std::size_t n = shape_numel(plan->out);
  std::vector<double> out(n);
  if (plan->same) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[plan->ia[i]], bv[plan->ib[i]]);
  }
  Shape shape = plan->out;
  return Tensor::make_result(std::move(shape), std::move(out), {a, b}, [plan, da, db](Node& self) {
    const auto& A = parent(self, 0).data;
    const auto& B = parent(self, 1).data;
    double* ga = grad_of(self, 0);
    double* gb = grad_of(self, 1);
    const auto& g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      std::size_t i_a = plan->same ? i : plan->ia[i];
      std::size_t i_b = plan->same ? i : plan->ib[i];
      if (ga) ga[i_a] += g[i] * da(A[i_a], B[i_b]);
      if (gb) gb[i_b] += g[i] * db(A[i_a], B[i_b]);
    }
  });
}

// dfn(x, y) is dy/dx given input x and output y.
template <class Fwd, class Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv dfn) {
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  return Tensor::make_result(x.shape(), std::move(out), {x}, [dfn](Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    const auto& X = parent(self, 0).data;
    for (std::size_t i = 0; i < X.size(); ++i) gx[i] += self.grad[i] * dfn(X[i], self.data[i]);
  });
}

// Index-mapped copy: out[i] = x[index[i]]; backward scatters.
Tensor gather_copy(const Tensor& x, Shape out_shape, std::shared_ptr<std::vector<std::size_t>> index) {
  auto xv = x.values();
  std::vector<double> out(index->size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[(*index)[i]];
  return Tensor::make_result(std::move(out_shape), std::move(out), {x}, [index](Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < index->size(); ++i) gx[(*index)[i]] += self.grad[i];
  });
}

// C[M,N] += op(A) op(B), op(A) is M×K, op(B) is K×N.
// trans_a: A stored K×M. trans_b: B stored N×K.
void gemm_small(bool trans_a, bool trans_b, std::size_t M, std::size_t N, std::size_t K,
          const double* A, const double* B, double* C) {
  if (!trans_a && !trans_b) {
    for (std::size_t i = 0; i < M; ++i) {
      double* c = C + i * N;
      for (std::size_t k = 0; k < K; ++k) {
        const double a = A[i * K + k];
        const double* b = B + k * N;
        for (std::size_t j = 0; j < N; ++j) c[j] += a * b[j];
      }
    }
  } else if (!trans_a && trans_b) {
    for (std::size_t i = 0; i < M; ++i) {
      const double* a = A + i * K;
      for (std::size_t j = 0; j < N; ++j) {
        const double* b = B + j * K;
        double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
        std::size_t k = 0;
        for (; k + 4 <= K; k += 4) {
          s0 += a[k] * b[k];
          s1 += a[k + 1] * b[k + 1];
          s2 += a[k + 2] * b[k + 2];
          s3 += a[k + 3] * b[k + 3];
        }
        for (; k < K; ++k) s0 += a[k] * b[k];
        C[i * N + j] += (s0 + s1) + (s2 + s3);
      }
    }
  } else if (trans_a && !trans_b) {
    for (std::size_t k = 0; k < K; ++k) {
      const double* b = B + k * N;
      for (std::size_t i = 0; i < M; ++i) {
        const double a = A[k * M + i];
        double* c = C + i * N;
        for (std::size_t j = 0; j < N; ++j) c[j] += a * b[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t j = 0; j < N; ++j) {
        double s = 0;
        for (std::size_t k = 0; k < K; ++k) s += A[k * M + i] * B[j * K + k];
        C[i * N + j] += s;
      }
  }
}


using v8 = double __attribute__((vector_size(64)));

inline v8 load8(const double* p) {
  v8 v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

inline void store8(double* p, v8 v) { std::memcpy(p, &v, sizeof(v)); }

// Row-major C[M,N] += A[M,K] B[K,N] in 4x16 register tiles; k runs in order for every entry.
void gemm_tiled(std::size_t M, std::size_t N, std::size_t K, const double* A, const double* B, double* C) {
  std::size_t i = 0;
  for (; i + 4 <= M; i += 4) {
    const double* a0 = A + i * K;
    const double* a1 = a0 + K;
    const double* a2 = a1 + K;
    const double* a3 = a2 + K;
    double* r0 = C + i * N;
    double* r1 = r0 + N;
    double* r2 = r1 + N;
    double* r3 = r2 + N;
    std::size_t j = 0;
    for (; j + 16 <= N; j += 16) {
      v8 c00 = load8(r0 + j), c01 = load8(r0 + j + 8), c10 = load8(r1 + j), c11 = load8(r1 + j + 8);
      v8 c20 = load8(r2 + j), c21 = load8(r2 + j + 8), c30 = load8(r3 + j), c31 = load8(r3 + j + 8);
      for (std::size_t k = 0; k < K; ++k) {
        const v8 b0 = load8(B + k * N + j), b1 = load8(B + k * N + j + 8);
        const v8 x0 = a0[k] - v8{}, x1 = a1[k] - v8{}, x2 = a2[k] - v8{}, x3 = a3[k] - v8{};
        c00 += x0 * b0;
        c01 += x0 * b1;
        c10 += x1 * b0;
        c11 += x1 * b1;
        c20 += x2 * b0;
        c21 += x2 * b1;
        c30 += x3 * b0;
        c31 += x3 * b1;
      }
      store8(r0 + j, c00);
      store8(r0 + j + 8, c01);
      store8(r1 + j, c10);
      store8(r1 + j + 8, c11);
      store8(r2 + j, c20);
      store8(r2 + j + 8, c21);
      store8(r3 + j, c30);
      store8(r3 + j + 8, c31);
    }
    if (j < N) {
      for (std::size_t k = 0; k < K; ++k) {
        const double* b = B + k * N;
        for (std::size_t jj = j; jj < N; ++jj) {
          r0[jj] += a0[k] * b[jj];
          r1[jj] += a1[k] * b[jj];
          r2[jj] += a2[k] * b[jj];
          r3[jj] += a3[k] * b[jj];
        }
      }
    }
  }
  if (i < M) gemm_small(false, false, M - i, N, K, A + i * K, B, C + i * N);
}

void transpose_into(std::size_t rows, std::size_t cols, const double* src, std::vector<double>& dst) {
  dst.resize(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

void gemm(bool trans_a, bool trans_b, std::size_t M, std::size_t N, std::size_t K, const double* A,
          const double* B, double* C) {
  if (N < 16 || M < 4) {
    gemm_small(trans_a, trans_b, M, N, K, A, B, C);
    return;
  }
  thread_local std::vector<double> packed_a, packed_b;
  if (trans_a) {
    transpose_into(K, M, A, packed_a);
    A = packed_a.data();
  }
  if (trans_b) {
    transpose_into(N, K, B, packed_b);
    B = packed_b.data();
  }
  gemm_tiled(M, N, K, A, B, C);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sqrt(const Tensor& x) {
  return unary(
      x, [](double v) { return std::sqrt(v); }, [](double, double y) { return 0.5 / y; });
}

Tensor square(const Tensor& x) {
  return unary(
      x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor softplus(const Tensor& x) {
  return unary(
      x,
      [](double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
      [](double v, double) {
        return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      });
}

Tensor gelu(const Tensor& x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  return unary(
      x,
      [](double v) { return 0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v))); },
      [](double v, double) {
        double t = std::tanh(kC * (v + kA * v * v * v));
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kC * (1.0 + 3.0 * kA * v * v);
      });
}

Tensor clamp_max(const Tensor& x, double upper) {
  return unary(
      x, [upper](double v) { return std::min(v, upper); },
      [upper](double v, double) { return v < upper ? 1.0 : 0.0; });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  return Tensor::make_result(std::move(shape), std::move(out), {x}, [](Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const auto& in = x.shape();
  if (axes.size() != in.size()) {
    throw ShapeError("permute: " + std::to_string(axes.size()) + " axes for " + shape_str(in));
  }
  std::vector<bool> used(in.size(), false);
  for (auto a : axes) {
    if (a >= in.size() || used[a]) throw ShapeError("permute: invalid axis order");
    used[a] = true;
  }
  auto cs = contiguous_strides(in);
  Shape out(in.size());
  std::vector<std::size_t> src_stride(in.size());
  for (std::size_t i = 0; i < axes.size(); ++i) {
    out[i] = in[axes[i]];
    src_stride[i] = cs[axes[i]];
  }
  auto index = std::make_shared<std::vector<std::size_t>>(gather_index(out, src_stride));
  return gather_copy(x, std::move(out), std::move(index));
}

Tensor transpose(const Tensor& x, std::size_t axis_a, std::size_t axis_b) {
  checked_axis(x, axis_a, "transpose");
  checked_axis(x, axis_b, "transpose");
  std::vector<std::size_t> axes(x.dim());
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[axis_a], axes[axis_b]);
  return permute(x, axes);
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  auto plan = plan_broadcast(x.shape(), shape, "broadcast_to");
  if (plan.out != shape) {
    throw ShapeError("broadcast_to: " + shape_str(x.shape()) + " does not expand to " +
                     shape_str(shape));
  }
  if (plan.same) return x;
  return gather_copy(x, shape, std::make_shared<std::vector<std::size_t>>(std::move(plan.ia)));
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  checked_axis(parts[0], axis, "concat");
  Shape out = first;
  out[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok) {
      throw ShapeError("concat: " + shape_str(s) + " incompatible with " + shape_str(first) +
                       " along axis " + std::to_string(axis));
    }
    out[axis] += s[axis];
  }
  auto split = split_axis(out, axis);
  std::vector<std::size_t> widths;
  for (const auto& p : parts) widths.push_back(p.shape()[axis] * split.inner);
  std::size_t row = out[axis] * split.inner;
  std::vector<double> values(shape_numel(out));
  std::size_t col = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto pv = parts[k].values();
    for (std::size_t o = 0; o < split.outer; ++o) {
      std::copy_n(pv.begin() + o * widths[k], widths[k], values.begin() + o * row + col);
    }
    col += widths[k];
  }
  return Tensor::make_result(std::move(out), std::move(values), parts,
                             [widths, row, outer = split.outer](Node& self) {
                               std::size_t c = 0;
                               for (std::size_t k = 0; k < widths.size(); ++k) {
                                 if (double* g = grad_of(self, k)) {
                                   for (std::size_t o = 0; o < outer; ++o)
                                     for (std::size_t j = 0; j < widths[k]; ++j)
                                       g[o * widths[k] + j] += self.grad[o * row + c + j];
                                 }
                                 c += widths[k];
                               }
                             });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  checked_axis(x, axis, "slice");
  if (start + length > x.shape()[axis]) {
    throw ShapeError("slice: [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") exceeds axis " + std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  auto split = split_axis(x.shape(), axis);
  Shape out = x.shape();
  out[axis] = length;
  auto index = std::make_shared<std::vector<std::size_t>>();
  index->reserve(shape_numel(out));
  for (std::size_t o = 0; o < split.outer; ++o)
    for (std::size_t j = 0; j < length * split.inner; ++j)
      index->push_back(o * split.n * split.inner + start * split.inner + j);
  return gather_copy(x, std::move(out), std::move(index));
}

Tensor sum(const Tensor& x, std::size_t axis, bool keepdim) {
  checked_axis(x, axis, "sum");
  auto s = split_axis(x.shape(), axis);
  Shape out = x.shape();
  if (keepdim) {
    out[axis] = 1;
  } else {
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  auto xv = x.values();
  std::vector<double> values(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t k = 0; k < s.n; ++k)
      for (std::size_t i = 0; i < s.inner; ++i)
        values[o * s.inner + i] += xv[(o * s.n + k) * s.inner + i];
  return Tensor::make_result(std::move(out), std::move(values), {x}, [s](Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t k = 0; k < s.n; ++k)
        for (std::size_t i = 0; i < s.inner; ++i)
          gx[(o * s.n + k) * s.inner + i] += self.grad[o * s.inner + i];
  });
}

Tensor mean(const Tensor& x, std::size_t axis, bool keepdim) {
  checked_axis(x, axis, "mean");
  return scale(sum(x, axis, keepdim), 1.0 / static_cast<double>(x.shape()[axis]));
}

Tensor sum_all(const Tensor& x) {
  auto xv = x.values();
  double total = 0.0;
  for (double v : xv) total += v;
  return Tensor::make_result({}, {total}, {x}, [](Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < parent(self, 0).data.size(); ++i) gx[i] += self.grad[0];
  });
}

Tensor mean_all(const Tensor& x) {
  return scale(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  auto mismatch = [&]() {
    return ShapeError("matmul: incompatible shapes " + shape_str(as) + " and " + shape_str(bs) +
                      (transpose_b ? " (right operand transposed)" : ""));
  };
  if (as.empty() || bs.size() < 2) throw mismatch();

  std::size_t batch = 1, M = 0, K = as.back(), N = 0;
  bool batched = bs.size() == 3;
  Shape out;
  if (batched) {
    if (as.size() != 3 || as[0] != bs[0]) throw mismatch();
    batch = as[0];
    M = as[1];
    std::size_t bk = transpose_b ? bs[2] : bs[1];
    N = transpose_b ? bs[1] : bs[2];
    if (bk != K) throw mismatch();
    out = {batch, M, N};
  } else if (bs.size() == 2) {
    std::size_t bk = transpose_b ? bs[1] : bs[0];
    N = transpose_b ? bs[0] : bs[1];
    if (bk != K) throw mismatch();
    M = a.numel() / K;
    out = as;
    out.back() = N;
  } else {
    throw mismatch();
  }

  std::vector<double> values(batch * M * N, 0.0);
  const double* A = a.values().data();
  const double* B = b.values().data();
  for (std::size_t i = 0; i < batch; ++i) {
    gemm(false, transpose_b, M, N, K, A + i * M * K, B + (batched ? i * K * N : 0),
         values.data() + i * M * N);
  }
  return Tensor::make_result(
      std::move(out), std::move(values), {a, b},
      [batch, M, N, K, batched, transpose_b](Node& self) {
        const double* A = parent(self, 0).data.data();
        const double* B = parent(self, 1).data.data();
        const double* G = self.grad.data();
        double* ga = grad_of(self, 0);
        double* gb = grad_of(self, 1);
        for (std::size_t i = 0; i < batch; ++i) {
          const double* Bi = B + (batched ? i * K * N : 0);
          const double* Gi = G + i * M * N;
          if (ga) {
            // dA = G · op(B)^T
            if (transpose_b) {
              gemm(false, false, M, K, N, Gi, Bi, ga + i * M * K);
            } else {
              gemm(false, true, M, K, N, Gi, Bi, ga + i * M * K);
            }
          }
          if (gb) {
            double* gbi = gb + (batched ? i * K * N : 0);
            if (transpose_b) {
              // dB (N×K) = G^T · A
              gemm(true, false, N, K, M, Gi, A + i * M * K, gbi);
            } else {
              // dB (K×N) = A^T · G
              gemm(true, false, K, N, M, A + i * M * K, Gi, gbi);
            }
          }
        }
      });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  Tensor y = matmul(x, weight);
  return bias.defined() ? add(y, bias) : y;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  checked_axis(x, axis, "softmax");
  auto s = split_axis(x.shape(), axis);
  auto xv = x.values();
  std::vector<double> y(xv.size());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      auto at = [&](std::size_t k) { return (o * s.n + k) * s.inner + i; };
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < s.n; ++k) m = std::max(m, xv[at(k)]);
      double z = 0.0;
      for (std::size_t k = 0; k < s.n; ++k) z += (y[at(k)] = std::exp(xv[at(k)] - m));
      for (std::size_t k = 0; k < s.n; ++k) y[at(k)] /= z;
    }
  return Tensor::make_result(x.shape(), std::move(y), {x}, [s](Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    const auto& Y = self.data;
    const auto& G = self.grad;
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < s.inner; ++i) {
        auto at = [&](std::size_t k) { return (o * s.n + k) * s.inner + i; };
        double dot = 0.0;
        for (std::size_t k = 0; k < s.n; ++k) dot += G[at(k)] * Y[at(k)];
        for (std::size_t k = 0; k < s.n; ++k) gx[at(k)] += Y[at(k)] * (G[at(k)] - dot);
      }
  });
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
  checked_axis(x, axis, "log_softmax");
  auto s = split_axis(x.shape(), axis);
  auto xv = x.values();
  std::vector<double> y(xv.size());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      auto at = [&](std::size_t k) { return (o * s.n + k) * s.inner + i; };
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < s.n; ++k) m = std::max(m, xv[at(k)]);
      double z = 0.0;
      for (std::size_t k = 0; k < s.n; ++k) z += std::exp(xv[at(k)] - m);
      double lse = m + std::log(z);
      for (std::size_t k = 0; k < s.n; ++k) y[at(k)] = xv[at(k)] - lse;
    }
  return Tensor::make_result(x.shape(), std::move(y), {x}, [s](Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    const auto& Y = self.data;
    const auto& G = self.grad;
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < s.inner; ++i) {
        auto at = [&](std::size_t k) { return (o * s.n + k) * s.inner + i; };
        double total = 0.0;
        for (std::size_t k = 0; k < s.n; ++k) total += G[at(k)];
        for (std::size_t k = 0; k < s.n; ++k) gx[at(k)] += G[at(k)] - std::exp(Y[at(k)]) * total;
      }
  });
}

Tensor masked_softmax(const Tensor& x, std::span<const std::uint8_t> mask) {
  if (x.dim() != 2 || mask.size() != x.numel()) {
    throw ShapeError("masked_softmax: expects a 2-D tensor and a mask of equal size, got " +
                     shape_str(x.shape()));
  }
  std::size_t rows = x.shape()[0], cols = x.shape()[1];
  auto keep = std::make_shared<std::vector<std::uint8_t>>(mask.begin(), mask.end());
  auto xv = x.values();
  std::vector<double> y(xv.size(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double m = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t c = 0; c < cols; ++c)
      if ((*keep)[r * cols + c]) {
        m = std::max(m, xv[r * cols + c]);
        any = true;
      }
    if (!any) throw ContractError("masked_softmax: row " + std::to_string(r) + " is fully masked");
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c)
      if ((*keep)[r * cols + c]) z += (y[r * cols + c] = std::exp(xv[r * cols + c] - m));
    for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] /= z;
  }
  return Tensor::make_result(x.shape(), std::move(y), {x}, [rows, cols](Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    const auto& Y = self.data;
    const auto& G = self.grad;
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += G[r * cols + c] * Y[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += Y[r * cols + c] * (G[r * cols + c] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.dim() == 0) throw ShapeError("layer_norm: scalar input");
  std::size_t D = x.shape().back();
  if (gain.numel() != D || bias.numel() != D) {
    throw ShapeError("layer_norm: gain/bias must have " + std::to_string(D) + " entries");
  }
  std::size_t rows = x.numel() / D;
  auto xv = x.values();
  auto gv = gain.values();
  auto bv = bias.values();
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  std::vector<double> y(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * D;
    double mu = 0.0;
    for (std::size_t j = 0; j < D; ++j) mu += row[j];
    mu /= static_cast<double>(D);
    double var = 0.0;
    for (std::size_t j = 0; j < D; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(D);
    double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < D; ++j) {
      double h = (row[j] - mu) * is;
      (*xhat)[r * D + j] = h;
      y[r * D + j] = h * gv[j] + bv[j];
    }
  }
  return Tensor::make_result(x.shape(), std::move(y), {x, gain, bias},
                             [xhat, inv_std, rows, D](Node& self) {
                               const auto& G = self.grad;
                               const auto& gain_v = parent(self, 1).data;
                               double* gx = grad_of(self, 0);
                               double* gg = grad_of(self, 1);
                               double* gb = grad_of(self, 2);
                               std::vector<double> dh(D);
                               for (std::size_t r = 0; r < rows; ++r) {
                                 const double* h = xhat->data() + r * D;
                                 const double* g = G.data() + r * D;
                                 double mean_dh = 0.0, mean_dh_h = 0.0;
                                 for (std::size_t j = 0; j < D; ++j) {
                                   if (gg) gg[j] += g[j] * h[j];
                                   if (gb) gb[j] += g[j];
                                   dh[j] = g[j] * gain_v[j];
                                   mean_dh += dh[j];
                                   mean_dh_h += dh[j] * h[j];
                                 }
                                 if (!gx) continue;
                                 mean_dh /= static_cast<double>(D);
                                 mean_dh_h /= static_cast<double>(D);
                                 for (std::size_t j = 0; j < D; ++j)
                                   gx[r * D + j] += (*inv_std)[r] * (dh[j] - mean_dh - h[j] * mean_dh_h);
                               }
                             });
}

Tensor l2_normalize(const Tensor& x, double eps) {
  if (x.dim() == 0) throw ShapeError("l2_normalize: scalar input");
  std::size_t D = x.shape().back();
  std::size_t rows = x.numel() / D;
  auto xv = x.values();
  auto norms = std::make_shared<std::vector<double>>(rows);
  std::vector<double> y(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < D; ++j) s += xv[r * D + j] * xv[r * D + j];
    double n = std::max(std::sqrt(s), eps);
    (*norms)[r] = n;
    for (std::size_t j = 0; j < D; ++j) y[r * D + j] = xv[r * D + j] / n;
  }
  return Tensor::make_result(x.shape(), std::move(y), {x}, [norms, rows, D, eps](Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.data.data() + r * D;
      const double* g = self.grad.data() + r * D;
      double dot = 0.0;
      if ((*norms)[r] > eps)
        for (std::size_t j = 0; j < D; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < D; ++j) gx[r * D + j] += (g[j] - y[j] * dot) / (*norms)[r];
    }
  });
}

Tensor pick(const Tensor& x, std::span<const std::size_t> index) {
  if (x.dim() != 2 || index.size() != x.shape()[0]) {
    throw ShapeError("pick: expects [n,C] with n indices, got " + shape_str(x.shape()));
  }
  std::size_t C = x.shape()[1];
  auto flat = std::make_shared<std::vector<std::size_t>>(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= C) {
      throw DataError("pick: index " + std::to_string(index[i]) + " out of range for " +
                      std::to_string(C) + " columns");
    }
    (*flat)[i] = i * C + index[i];
  }
  return gather_copy(x, {index.size()}, std::move(flat));
}

Tensor pairwise_euclidean(const Tensor& x) {
  if (x.dim() != 2) throw ShapeError("pairwise_euclidean: expects [n,D], got " + shape_str(x.shape()));
  std::size_t n = x.shape()[0], D = x.shape()[1];
  auto xv = x.values();
  std::vector<double> d(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < D; ++k) {
        double diff = xv[i * D + k] - xv[j * D + k];
        s += diff * diff;
      }
      d[i * n + j] = d[j * n + i] = std::sqrt(s);
    }
  return Tensor::make_result({n, n}, std::move(d), {x}, [n, D](Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    const auto& X = parent(self, 0).data;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double dij = self.data[i * n + j];
        if (i == j || dij <= 0.0) continue;
        double g = self.grad[i * n + j] / dij;
        for (std::size_t k = 0; k < D; ++k) {
          double diff = X[i * D + k] - X[j * D + k];
          gx[i * D + k] += g * diff;
          gx[j * D + k] -= g * diff;
        }
      }
  });
}

}  // namespace vld::ops
