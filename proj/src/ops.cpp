#include "drau/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "drau/autograd.hpp"
#include "drau/errors.hpp"

namespace drau {

namespace {

constexpr double kNormEps = 1e-12;

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                         shape_string(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// 0 = same shape, otherwise the period of the broadcast right operand.
std::size_t broadcast_period(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return 0;
  const auto n = b.numel();
  if (a.rank() >= 1 && n == a.shape().back() && b.rank() <= a.rank()) return n;
  throw DimensionError(std::string(op) + ": cannot combine " + shape_string(a.shape()) + " with " +
                       shape_string(b.shape()));
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
}

template <typename Fn>
Tensor unary(const char* op, const Tensor& x, Fn fn, detail::BackwardFn back) {
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fn(in[i]);
  return Tensor::make_op(op, x.shape(), std::move(out), {x}, std::move(back));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  const double* A = a.data().data();
  const double* B = b.data().data();
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  return Tensor::make_op("matmul", {m, n}, std::move(c), {a, b},
                         [a, b, m, k, n](std::span<const double> g, std::span<std::vector<double>*> gin) {
                           const double* A = a.data().data();
                           const double* B = b.data().data();
                           if (gin[0]) {
                             double* dA = gin[0]->data();
                             for (std::size_t i = 0; i < m; ++i) {
                               const double* grow = g.data() + i * n;
                               for (std::size_t p = 0; p < k; ++p) {
                                 const double* brow = B + p * n;
                                 double acc = 0.0;
                                 for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                                 dA[i * k + p] += acc;
                               }
                             }
                           }
                           if (gin[1]) {
                             double* dB = gin[1]->data();
                             for (std::size_t i = 0; i < m; ++i) {
                               const double* grow = g.data() + i * n;
                               for (std::size_t p = 0; p < k; ++p) {
                                 const double aip = A[i * k + p];
                                 double* dbrow = dB + p * n;
                                 for (std::size_t j = 0; j < n; ++j) dbrow[j] += aip * grow[j];
                               }
                             }
                           }
                         });
}

Tensor transpose(const Tensor& x) {
  require_rank2(x, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  const auto in = x.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
  return Tensor::make_op("transpose", {c, r}, std::move(out), {x},
                         [r, c](std::span<const double> g, std::span<std::vector<double>*> gin) {
                           auto& d = *gin[0];
                           for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < c; ++j) d[i * c + j] += g[j * r + i];
                         });
}

namespace {

// out = a (op) b with the right operand possibly broadcast with `period`.
template <typename Fwd>
std::vector<double> binary_forward(const Tensor& a, const Tensor& b, std::size_t period, Fwd fwd) {
  const auto x = a.data();
  const auto y = b.data();
  std::vector<double> out(x.size());
  if (period == 0) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i], y[i]);
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i], y[i % period]);
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const auto period = broadcast_period(a, b, "add");
  auto out = binary_forward(a, b, period, [](double x, double y) { return x + y; });
  return Tensor::make_op("add", a.shape(), std::move(out), {a, b},
                         [period](std::span<const double> g, std::span<std::vector<double>*> gin) {
                           if (gin[0]) {
                             auto& d = *gin[0];
                             for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                           }
                           if (gin[1]) {
                             auto& d = *gin[1];
                             if (period == 0) {
                               for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                             } else {
                               for (std::size_t i = 0; i < g.size(); ++i) d[i % period] += g[i];
                             }
                           }
                         });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const auto period = broadcast_period(a, b, "sub");
  auto out = binary_forward(a, b, period, [](double x, double y) { return x - y; });
  return Tensor::make_op("sub", a.shape(), std::move(out), {a, b},
                         [period](std::span<const double> g, std::span<std::vector<double>*> gin) {
                           if (gin[0]) {
                             auto& d = *gin[0];
                             for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                           }
                           if (gin[1]) {
                             auto& d = *gin[1];
                             if (period == 0) {
                               for (std::size_t i = 0; i < g.size(); ++i) d[i] -= g[i];
                             } else {
                               for (std::size_t i = 0; i < g.size(); ++i) d[i % period] -= g[i];
                             }
                           }
                         });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const auto period = broadcast_period(a, b, "mul");
  auto out = binary_forward(a, b, period, [](double x, double y) { return x * y; });
  return Tensor::make_op("mul", a.shape(), std::move(out), {a, b},
                         [a, b, period](std::span<const double> g, std::span<std::vector<double>*> gin) {
                           const auto x = a.data();
                           const auto y = b.data();
                           const auto idx = [period](std::size_t i) { return period == 0 ? i : i % period; };
                           if (gin[0]) {
                             auto& d = *gin[0];
                             for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * y[idx(i)];
                           }
                           if (gin[1]) {
                             auto& d = *gin[1];
                             for (std::size_t i = 0; i < g.size(); ++i) d[idx(i)] += g[i] * x[i];
                           }
                         });
}

Tensor scale(const Tensor& x, double factor) {
  return unary("scale", x, [factor](double v) { return v * factor; },
               [factor](std::span<const double> g, std::span<std::vector<double>*> gin) {
                 auto& d = *gin[0];
                 for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * factor;
               });
}

Tensor tanh(const Tensor& x) {
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::tanh(in[i]);
  if (!x.requires_grad()) return Tensor::make_op("tanh", x.shape(), std::move(out), {x}, nullptr);
  auto saved = out;
  return Tensor::make_op("tanh", x.shape(), std::move(out), {x},
                         [saved = std::move(saved)](std::span<const double> g, std::span<std::vector<double>*> gin) {
                           auto& d = *gin[0];
                           for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * (1.0 - saved[i] * saved[i]);
                         });
}

Tensor sigmoid(const Tensor& x) {
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-in[i]));
  if (!x.requires_grad()) return Tensor::make_op("sigmoid", x.shape(), std::move(out), {x}, nullptr);
  auto saved = out;
  return Tensor::make_op("sigmoid", x.shape(), std::move(out), {x},
                         [saved = std::move(saved)](std::span<const double> g, std::span<std::vector<double>*> gin) {
                           auto& d = *gin[0];
                           for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * saved[i] * (1.0 - saved[i]);
                         });
}

Tensor prelu(const Tensor& x, const Tensor& slope) {
  const std::size_t channels = x.rank() == 0 ? 1 : x.shape().back();
  const std::size_t period = slope.numel();
  if (period != 1 && period != channels) {
    throw DimensionError("prelu: slope of shape " + shape_string(slope.shape()) +
                         " does not broadcast over channels of " + shape_string(x.shape()));
  }
  const auto in = x.data();
  const auto a = slope.data();
  KinkMonitor::record(in, Kink::corner);
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double v = in[i];
    out[i] = v >= 0.0 ? v : a[period == 1 ? 0 : i % period] * v;
  }
  return Tensor::make_op("prelu", x.shape(), std::move(out), {x, slope},
                         [x, slope, period](std::span<const double> g, std::span<std::vector<double>*> gin) {
                           const auto in = x.data();
                           const auto a = slope.data();
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             const std::size_t c = period == 1 ? 0 : i % period;
                             const bool positive = in[i] >= 0.0;
                             if (gin[0]) (*gin[0])[i] += positive ? g[i] : g[i] * a[c];
                             if (gin[1] && !positive) (*gin[1])[c] += g[i] * in[i];
                           }
                         });
}

Tensor signed_sqrt(const Tensor& x) {
  const auto in = x.data();
  KinkMonitor::record(in, Kink::cusp);
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double r = std::sqrt(std::abs(in[i]));
    out[i] = in[i] > 0.0 ? r : (in[i] < 0.0 ? -r : 0.0);
  }
  if (!x.requires_grad()) return Tensor::make_op("signed_sqrt", x.shape(), std::move(out), {x}, nullptr);
  auto saved = out;
  return Tensor::make_op("signed_sqrt", x.shape(), std::move(out), {x},
                         [saved = std::move(saved)](std::span<const double> g, std::span<std::vector<double>*> gin) {
                           auto& d = *gin[0];
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             const double r = std::abs(saved[i]);
                             if (r > 0.0) d[i] += g[i] * 0.5 / r;
                           }
                         });
}

Tensor softmax(const Tensor& x, std::size_t axis, std::span<const std::uint8_t> mask) {
  const auto s = split_axis(x.shape(), axis, "softmax");
  if (s.len == 0) throw DimensionError("softmax: empty axis");
  if (!mask.empty() && mask.size() != s.len) {
    throw DimensionError("softmax: mask length " + std::to_string(mask.size()) + " does not match axis extent " +
                         std::to_string(s.len));
  }
  std::vector<std::uint8_t> keep(mask.begin(), mask.end());
  if (keep.empty()) keep.assign(s.len, 1);
  if (std::none_of(keep.begin(), keep.end(), [](auto k) { return k != 0; })) {
    throw DegenerateInputError("softmax: every position is masked");
  }
  const auto in = x.data();
  std::vector<double> out(in.size(), 0.0);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in_i = 0; in_i < s.inner; ++in_i) {
      const std::size_t base = o * s.len * s.inner + in_i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < s.len; ++j)
        if (keep[j]) mx = std::max(mx, in[base + j * s.inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < s.len; ++j) {
        if (!keep[j]) continue;
        const double e = std::exp(in[base + j * s.inner] - mx);
        out[base + j * s.inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < s.len; ++j) out[base + j * s.inner] /= total;
    }
  }
  if (!x.requires_grad()) return Tensor::make_op("softmax", x.shape(), std::move(out), {x}, nullptr);
  auto saved = out;
  return Tensor::make_op("softmax", x.shape(), std::move(out), {x},
                         [saved = std::move(saved), s](std::span<const double> g, std::span<std::vector<double>*> gin) {
                           auto& d = *gin[0];
                           for (std::size_t o = 0; o < s.outer; ++o) {
                             for (std::size_t in_i = 0; in_i < s.inner; ++in_i) {
                               const std::size_t base = o * s.len * s.inner + in_i;
                               double dot = 0.0;
                               for (std::size_t j = 0; j < s.len; ++j)
                                 dot += g[base + j * s.inner] * saved[base + j * s.inner];
                               for (std::size_t j = 0; j < s.len; ++j) {
                                 const std::size_t idx = base + j * s.inner;
                                 d[idx] += saved[idx] * (g[idx] - dot);
                               }
                             }
                           }
                         });
}

namespace {

Tensor l2_normalize_impl(const Tensor& x, AxisSplit s) {
  const auto in = x.data();
  std::vector<double> out(in.size());
  std::vector<double> norms(s.outer * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.len * s.inner + i;
      double sq = 0.0;
      for (std::size_t j = 0; j < s.len; ++j) sq += in[base + j * s.inner] * in[base + j * s.inner];
      const double norm = std::sqrt(sq);
      norms[o * s.inner + i] = norm;
      const double denom = norm + kNormEps;
      for (std::size_t j = 0; j < s.len; ++j) out[base + j * s.inner] = in[base + j * s.inner] / denom;
    }
  }
  return Tensor::make_op(
      "l2_normalize", x.shape(), std::move(out), {x},
      [x, s, norms = std::move(norms)](std::span<const double> g, std::span<std::vector<double>*> gin) {
        const auto in = x.data();
        auto& d = *gin[0];
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = o * s.len * s.inner + i;
            const double norm = norms[o * s.inner + i];
            const double denom = norm + kNormEps;
            if (norm == 0.0) {
              for (std::size_t j = 0; j < s.len; ++j) d[base + j * s.inner] += g[base + j * s.inner] / denom;
              continue;
            }
            // y = x / (|x| + e):  dy/dx = I/(|x|+e) - x x^T / (|x| (|x|+e)^2)
            double dot = 0.0;
            for (std::size_t j = 0; j < s.len; ++j) dot += g[base + j * s.inner] * in[base + j * s.inner];
            const double coef = dot / (norm * denom * denom);
            for (std::size_t j = 0; j < s.len; ++j) {
              const std::size_t idx = base + j * s.inner;
              d[idx] += g[idx] / denom - coef * in[idx];
            }
          }
        }
      });
}

}  // namespace

Tensor l2_normalize(const Tensor& x) { return l2_normalize_impl(x, AxisSplit{1, x.numel(), 1}); }

Tensor l2_normalize(const Tensor& x, std::size_t axis) {
  return l2_normalize_impl(x, split_axis(x.shape(), axis, "l2_normalize"));
}

Tensor concat(std::span<const Tensor> xs, std::size_t axis) {
  if (xs.empty()) throw DimensionError("concat: no inputs");
  const auto& first = xs.front().shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range for " + shape_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> lens;
  for (const auto& t : xs) {
    const auto& s = t.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i)
      if (i != axis && s[i] != first[i]) ok = false;
    if (!ok) throw DimensionError("concat: " + shape_string(s) + " does not match " + shape_string(first));
    lens.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  const auto whole = split_axis(out_shape, axis, "concat");
  std::vector<double> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    const auto in = xs[t].data();
    const std::size_t chunk = lens[t] * whole.inner;
    for (std::size_t o = 0; o < whole.outer; ++o)
      std::copy_n(in.begin() + o * chunk, chunk, out.begin() + o * whole.len * whole.inner + offset);
    offset += chunk;
  }
  std::vector<Tensor> inputs(xs.begin(), xs.end());
  return Tensor::make_op("concat", out_shape, std::move(out), std::move(inputs),
                         [lens, whole](std::span<const double> g, std::span<std::vector<double>*> gin) {
                           std::size_t offset = 0;
                           for (std::size_t t = 0; t < lens.size(); ++t) {
                             const std::size_t chunk = lens[t] * whole.inner;
                             if (gin[t]) {
                               auto& d = *gin[t];
                               for (std::size_t o = 0; o < whole.outer; ++o) {
                                 const double* src = g.data() + o * whole.len * whole.inner + offset;
                                 for (std::size_t j = 0; j < chunk; ++j) d[o * chunk + j] += src[j];
                               }
                             }
                             offset += chunk;
                           }
                         });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto s = split_axis(x.shape(), axis, "slice");
  if (begin >= end || end > s.len) {
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for extent " + std::to_string(s.len));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  const std::size_t chunk = (end - begin) * s.inner;
  const auto in = x.data();
  std::vector<double> out(s.outer * chunk);
  for (std::size_t o = 0; o < s.outer; ++o)
    std::copy_n(in.begin() + o * s.len * s.inner + begin * s.inner, chunk, out.begin() + o * chunk);
  return Tensor::make_op("slice", out_shape, std::move(out), {x},
                         [s, begin, chunk](std::span<const double> g, std::span<std::vector<double>*> gin) {
                           auto& d = *gin[0];
                           for (std::size_t o = 0; o < s.outer; ++o) {
                             double* dst = d.data() + o * s.len * s.inner + begin * s.inner;
                             for (std::size_t j = 0; j < chunk; ++j) dst[j] += g[o * chunk + j];
                           }
                         });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_string(x.shape()) + " to " + shape_string(shape));
  }
  return Tensor::make_op("reshape", std::move(shape), x.to_vector(), {x},
                         [](std::span<const double> g, std::span<std::vector<double>*> gin) {
                           auto& d = *gin[0];
                           for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                         });
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  const auto& src = x.shape();
  if (src.size() != shape.size()) {
    throw DimensionError("broadcast_to: rank of " + shape_string(src) + " differs from " + shape_string(shape));
  }
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i] != shape[i] && src[i] != 1) {
      throw DimensionError("broadcast_to: cannot expand " + shape_string(src) + " to " + shape_string(shape));
    }
  }
  const std::size_t rank = shape.size();
  std::vector<std::size_t> src_stride(rank, 0);
  std::size_t stride = 1;
  for (std::size_t i = rank; i-- > 0;) {
    src_stride[i] = src[i] == 1 ? 0 : stride;
    stride *= src[i];
  }
  const std::size_t total = shape_numel(shape);
  std::vector<std::size_t> map(total);
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < rank; ++i) off += idx[i] * src_stride[i];
    map[flat] = off;
    for (std::size_t i = rank; i-- > 0;) {
      if (++idx[i] < shape[i]) break;
      idx[i] = 0;
    }
  }
  const auto in = x.data();
  std::vector<double> out(total);
  for (std::size_t i = 0; i < total; ++i) out[i] = in[map[i]];
  return Tensor::make_op("broadcast", shape, std::move(out), {x},
                         [map = std::move(map)](std::span<const double> g, std::span<std::vector<double>*> gin) {
                           auto& d = *gin[0];
                           for (std::size_t i = 0; i < g.size(); ++i) d[map[i]] += g[i];
                         });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return Tensor::make_op("sum", {}, {total}, {x}, [](std::span<const double> g, std::span<std::vector<double>*> gin) {
    for (auto& d : *gin[0]) d += g[0];
  });
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.numel());
  double total = 0.0;
  for (double v : x.data()) total += v;
  return Tensor::make_op("mean", {}, {total / n}, {x},
                         [n](std::span<const double> g, std::span<std::vector<double>*> gin) {
                           for (auto& d : *gin[0]) d += g[0] / n;
                         });
}

namespace {

Tensor reduce_axis(const Tensor& x, std::size_t axis, double factor, const char* op) {
  const auto s = split_axis(x.shape(), axis, op);
  Shape out_shape = x.shape();
  out_shape[axis] = 1;
  const auto in = x.data();
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t j = 0; j < s.len; ++j)
      for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += in[(o * s.len + j) * s.inner + i];
  for (auto& v : out) v *= factor;
  return Tensor::make_op(op, out_shape, std::move(out), {x},
                         [s, factor](std::span<const double> g, std::span<std::vector<double>*> gin) {
                           auto& d = *gin[0];
                           for (std::size_t o = 0; o < s.outer; ++o)
                             for (std::size_t j = 0; j < s.len; ++j)
                               for (std::size_t i = 0; i < s.inner; ++i)
                                 d[(o * s.len + j) * s.inner + i] += g[o * s.inner + i] * factor;
                         });
}

}  // namespace

Tensor sum(const Tensor& x, std::size_t axis) { return reduce_axis(x, axis, 1.0, "sum_axis"); }

Tensor mean(const Tensor& x, std::size_t axis) {
  const auto len = x.dim(axis);
  return reduce_axis(x, axis, 1.0 / static_cast<double>(len), "mean_axis");
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  require_rank2(table, "gather_rows");
  if (ids.empty()) throw DegenerateInputError("gather_rows: no ids");
  const std::size_t rows = table.dim(0), width = table.dim(1);
  const auto in = table.data();
  std::vector<double> out(ids.size() * width);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= rows) {
      throw LookupError("id " + std::to_string(ids[r]) + " out of range for table with " + std::to_string(rows) +
                        " rows");
    }
    std::copy_n(in.begin() + ids[r] * width, width, out.begin() + r * width);
  }
  std::vector<std::size_t> saved(ids.begin(), ids.end());
  return Tensor::make_op("gather_rows", {ids.size(), width}, std::move(out), {table},
                         [saved = std::move(saved), width](std::span<const double> g,
                                                           std::span<std::vector<double>*> gin) {
                           auto& d = *gin[0];
                           for (std::size_t r = 0; r < saved.size(); ++r)
                             for (std::size_t j = 0; j < width; ++j) d[saved[r] * width + j] += g[r * width + j];
                         });
}

Tensor mul_constant(const Tensor& x, std::vector<double> multiplier) {
  if (multiplier.size() != x.numel()) throw DimensionError("mul_constant: multiplier size mismatch");
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] * multiplier[i];
  return Tensor::make_op("mul_constant", x.shape(), std::move(out), {x},
                         [m = std::move(multiplier)](std::span<const double> g, std::span<std::vector<double>*> gin) {
                           auto& d = *gin[0];
                           for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * m[i];
                         });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::size_t target) {
  const auto z = logits.data();
  if (z.empty()) throw ContractError("cross entropy: empty logits");
  if (target >= z.size()) {
    throw ContractError("cross entropy: target " + std::to_string(target) + " outside " + std::to_string(z.size()) +
                        " classes");
  }
  const double mx = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double v : z) total += std::exp(v - mx);
  const double lse = mx + std::log(total);
  const double raw = lse - z[target];
  const double loss = raw < 0.0 ? 0.0 : raw;  // keeps NaN
  std::vector<double> probs(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) probs[i] = std::exp(z[i] - lse);
  return Tensor::make_op("cross_entropy", {}, {loss}, {logits},
                         [probs = std::move(probs), target](std::span<const double> g,
                                                            std::span<std::vector<double>*> gin) {
                           auto& d = *gin[0];
                           for (std::size_t i = 0; i < probs.size(); ++i)
                             d[i] += g[0] * (probs[i] - (i == target ? 1.0 : 0.0));
                         });
}

}  // namespace drau
