#include "ricnet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

#include "ricnet/errors.hpp"

namespace ricnet {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

std::size_t normalize_axis(std::ptrdiff_t axis, std::size_t rank, const Shape& shape) {
  const auto r = static_cast<std::ptrdiff_t>(rank);
  const auto a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape));
  }
  return static_cast<std::size_t>(a);
}

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
  return s;
}

// How one operand is addressed while walking the broadcast output.
// periodic: the operand's shape is a suffix of the output shape, so its
// offset cycles through [0, period). mapped: explicit offsets per element.
struct Operand {
  enum class Mode { identity, periodic, mapped } mode = Mode::identity;
  std::size_t period = 1;
  std::vector<std::size_t> map;
};

Operand plan_operand(const Shape& in, const Shape& out) {
  Operand op;
  if (in == out) return op;
  const std::size_t rank = out.size();
  const std::size_t pad = rank - in.size();
  bool suffix = true;
  for (std::size_t i = 0; i < in.size(); ++i) suffix = suffix && in[i] == out[pad + i];
  if (suffix) {
    op.mode = Operand::Mode::periodic;
    op.period = std::max<std::size_t>(shape_numel(in), 1);
    return op;
  }
  op.mode = Operand::Mode::mapped;
  const std::size_t n = shape_numel(out);
  op.map.resize(n);
  std::vector<std::size_t> in_strides(rank, 0);
  const auto s = strides_of(in);
  for (std::size_t i = 0; i < in.size(); ++i) in_strides[pad + i] = in[i] == 1 ? 0 : s[i];
  std::vector<std::size_t> idx(rank, 0);
  std::size_t off = 0;
  for (std::size_t i = 0; i < n; ++i) {
    op.map[i] = off;
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < out[d]) {
        off += in_strides[d];
        break;
      }
      off -= in_strides[d] * (out[d] - 1);
      idx[d] = 0;
    }
  }
  return op;
}

struct BroadcastPlan {
  Shape out;
  Operand a, b;

  // body(i, offset_in_a, offset_in_b) for every output element i.
  template <class Body>
  void walk(Body&& body) const {
    const std::size_t n = shape_numel(out);
    std::size_t ja = 0, jb = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t oa = a.mode == Operand::Mode::identity ? i : a.mode == Operand::Mode::periodic ? ja : a.map[i];
      const std::size_t ob = b.mode == Operand::Mode::identity ? i : b.mode == Operand::Mode::periodic ? jb : b.map[i];
      body(i, oa, ob);
      if (++ja == a.period) ja = 0;
      if (++jb == b.period) jb = 0;
    }
  }
};

std::shared_ptr<BroadcastPlan> plan_broadcast(const Shape& a, const Shape& b) {
  auto plan = std::make_shared<BroadcastPlan>();
  const std::size_t rank = std::max(a.size(), b.size());
  plan->out.assign(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("cannot broadcast shapes " + shape_str(a) + " and " + shape_str(b));
    }
    plan->out[i] = std::max(da, db);
    if (da == 0 || db == 0) plan->out[i] = 0;
  }
  plan->a = plan_operand(a, plan->out);
  plan->b = plan_operand(b, plan->out);
  return plan;
}

enum class Binary { add, sub, mul };

template <class F>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, F f, Binary kind) {
  auto plan = plan_broadcast(a.shape(), b.shape());
  const auto av = a.data();
  const auto bv = b.data();
  Buffer out(shape_numel(plan->out));
  plan->walk([&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = f(av[ia], bv[ib]); });
  const bool is_mul = kind == Binary::mul;
  const double sign_b = kind == Binary::sub ? -1.0 : 1.0;
  return Tensor::from_op(plan->out, std::move(out), name, {a, b}, [plan, is_mul, sign_b](detail::Node& self) {
    auto& na = *self.inputs[0];
    auto& nb = *self.inputs[1];
    const auto& g = self.grad;
    if (na.requires_grad) {
      auto& ga = na.grad;
      if (is_mul) {
        plan->walk([&](std::size_t i, std::size_t ia, std::size_t ib) { ga[ia] += g[i] * nb.value[ib]; });
      } else {
        plan->walk([&](std::size_t i, std::size_t ia, std::size_t) { ga[ia] += g[i]; });
      }
    }
    if (nb.requires_grad) {
      auto& gb = nb.grad;
      if (is_mul) {
        plan->walk([&](std::size_t i, std::size_t ia, std::size_t ib) { gb[ib] += g[i] * na.value[ia]; });
      } else {
        plan->walk([&](std::size_t i, std::size_t, std::size_t ib) { gb[ib] += sign_b * g[i]; });
      }
    }
  });
}

// Elementwise unary op whose derivative is expressed through (x, y).
template <class F, class D>
Tensor unary_op(const Tensor& x, const char* name, F f, D dfdx) {
  const auto xv = x.data();
  Buffer out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return Tensor::from_op(x.shape(), std::move(out), name, {x}, [dfdx](detail::Node& self) {
    auto& in = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      in.grad[i] += self.grad[i] * dfdx(in.value[i], self.value[i]);
    }
  });
}

// Gather/scatter op: out[i] = in[map[i]].
Tensor gather_op(const Tensor& x, Shape out_shape, std::vector<std::size_t> map, const char* name) {
  const auto xv = x.data();
  Buffer out(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = xv[map[i]];
  auto shared = std::make_shared<std::vector<std::size_t>>(std::move(map));
  return Tensor::from_op(std::move(out_shape), std::move(out), name, {x}, [shared](detail::Node& self) {
    auto& g = self.inputs[0]->grad;
    const auto& m = *shared;
    for (std::size_t i = 0; i < m.size(); ++i) g[m[i]] += self.grad[i];
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(a, b, "add", [](double x, double y) { return x + y; }, Binary::add);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(a, b, "sub", [](double x, double y) { return x - y; }, Binary::sub);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(a, b, "mul", [](double x, double y) { return x * y; }, Binary::mul);
}

Tensor scale(const Tensor& x, double factor) {
  return unary_op(
      x, "scale", [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary_op(
      x, "add_scalar", [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x, "sigmoid",
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      x, "tanh", [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor square(const Tensor& x) {
  return unary_op(
      x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  auto mismatch = [&] { return ShapeError("matmul shape mismatch: " + shape_str(sa) + " x " + shape_str(sb)); };
  if (sa.size() < 2 || sb.size() < 2) throw mismatch();
  const std::size_t k = sa.back();
  if (sb[sb.size() - 2] != k) throw mismatch();
  const std::size_t n = sb.back();

  std::size_t batch = 1;
  std::size_t m = 0;
  Shape out_shape;
  if (sb.size() == 2) {
    m = a.numel() / std::max<std::size_t>(k, 1);
    if (k == 0) m = shape_numel(Shape(sa.begin(), sa.end() - 1));
    out_shape.assign(sa.begin(), sa.end() - 1);
    out_shape.push_back(n);
  } else {
    if (sa.size() != sb.size() || !std::equal(sa.begin(), sa.end() - 2, sb.begin())) throw mismatch();
    batch = shape_numel(Shape(sa.begin(), sa.end() - 2));
    m = sa[sa.size() - 2];
    out_shape = sa;
    out_shape.back() = n;
  }

  Buffer out(batch * m * n);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  const std::size_t b_step = sb.size() == 2 ? 0 : k * n;
  for (std::size_t i = 0; i < batch; ++i) {
    MutMap c(out.data() + i * m * n, m, n);
    c.noalias() = ConstMap(pa + i * m * k, m, k) * ConstMap(pb + i * b_step, k, n);
  }
  return Tensor::from_op(std::move(out_shape), std::move(out), "matmul", {a, b},
                         [batch, m, k, n, b_step](detail::Node& self) {
                           auto& na = *self.inputs[0];
                           auto& nb = *self.inputs[1];
                           for (std::size_t i = 0; i < batch; ++i) {
                             ConstMap g(self.grad.data() + i * m * n, m, n);
                             if (na.requires_grad) {
                               MutMap ga(na.grad.data() + i * m * k, m, k);
                               ga.noalias() += g * ConstMap(nb.value.data() + i * b_step, k, n).transpose();
                             }
                             if (nb.requires_grad) {
                               MutMap gb(nb.grad.data() + i * b_step, k, n);
                               gb.noalias() += ConstMap(na.value.data() + i * m * k, m, k).transpose() * g;
                             }
                           }
                         });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  return Tensor::from_op(std::move(shape), x.node()->value, "reshape", {x}, [](detail::Node& self) {
    auto& g = self.inputs[0]->grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
  const auto& in = x.shape();
  const std::size_t rank = in.size();
  std::vector<bool> used(rank, false);
  if (order.size() != rank) throw ShapeError("permute order does not match shape " + shape_str(in));
  for (auto o : order) {
    if (o >= rank || used[o]) throw ShapeError("invalid permutation for shape " + shape_str(in));
    used[o] = true;
  }
  Shape out(rank);
  const auto in_strides = strides_of(in);
  std::vector<std::size_t> step(rank);
  for (std::size_t j = 0; j < rank; ++j) {
    out[j] = in[order[j]];
    step[j] = in_strides[order[j]];
  }
  const std::size_t n = x.numel();
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t off = 0;
  for (std::size_t i = 0; i < n; ++i) {
    map[i] = off;
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < out[d]) {
        off += step[d];
        break;
      }
      off -= step[d] * (out[d] - 1);
      idx[d] = 0;
    }
  }
  return gather_op(x, std::move(out), std::move(map), "permute");
}

Tensor transpose(const Tensor& x) {
  const std::size_t r = x.rank();
  if (r < 2) throw ShapeError("transpose needs rank >= 2, got " + shape_str(x.shape()));
  std::vector<std::size_t> order(r);
  std::iota(order.begin(), order.end(), 0);
  std::swap(order[r - 1], order[r - 2]);
  return permute(x, order);
}

Tensor slice(const Tensor& x, std::ptrdiff_t axis, std::size_t start, std::size_t length) {
  const auto& s = x.shape();
  const std::size_t ax = normalize_axis(axis, s.size(), s);
  if (start + length > s[ax]) {
    throw ShapeError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) + ") out of range on axis " +
                     std::to_string(ax) + " of " + shape_str(s));
  }
  const std::size_t outer = shape_numel(Shape(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(ax)));
  const std::size_t inner = shape_numel(Shape(s.begin() + static_cast<std::ptrdiff_t>(ax) + 1, s.end()));
  const std::size_t extent = s[ax];
  Shape out_shape = s;
  out_shape[ax] = length;
  const std::size_t block = length * inner;
  Buffer out(outer * block);
  const auto xv = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>((o * extent + start) * inner), block,
                out.begin() + static_cast<std::ptrdiff_t>(o * block));
  }
  return Tensor::from_op(std::move(out_shape), std::move(out), "slice", {x},
                         [outer, inner, extent, start, block](detail::Node& self) {
                           auto& g = self.inputs[0]->grad;
                           for (std::size_t o = 0; o < outer; ++o) {
                             const double* src = self.grad.data() + o * block;
                             double* dst = g.data() + (o * extent + start) * inner;
                             for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                           }
                         });
}

Tensor concat(const std::vector<Tensor>& parts, std::ptrdiff_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const auto& s0 = parts.front().shape();
  const std::size_t ax = normalize_axis(axis, s0.size(), s0);
  Shape out_shape = s0;
  out_shape[ax] = 0;
  std::vector<std::size_t> extents;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == ax || s[d] == s0[d];
    if (!ok) throw ShapeError("concat shape mismatch: " + shape_str(s0) + " and " + shape_str(s));
    out_shape[ax] += s[ax];
    extents.push_back(s[ax]);
  }
  const std::size_t outer = shape_numel(Shape(s0.begin(), s0.begin() + static_cast<std::ptrdiff_t>(ax)));
  const std::size_t inner = shape_numel(Shape(s0.begin() + static_cast<std::ptrdiff_t>(ax) + 1, s0.end()));
  const std::size_t total = out_shape[ax];
  Buffer out(outer * total * inner);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto v = parts[p].data();
    const std::size_t block = extents[p] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(o * block), block,
                  out.begin() + static_cast<std::ptrdiff_t>((o * total + offset) * inner));
    }
    offset += extents[p];
  }
  return Tensor::from_op(std::move(out_shape), std::move(out), "concat", parts,
                         [outer, inner, total, extents](detail::Node& self) {
                           std::size_t offset = 0;
                           for (std::size_t p = 0; p < extents.size(); ++p) {
                             auto& in = *self.inputs[p];
                             const std::size_t block = extents[p] * inner;
                             if (in.requires_grad) {
                               for (std::size_t o = 0; o < outer; ++o) {
                                 const double* src = self.grad.data() + (o * total + offset) * inner;
                                 double* dst = in.grad.data() + o * block;
                                 for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                               }
                             }
                             offset += extents[p];
                           }
                         });
}

Tensor softmax(const Tensor& x, std::ptrdiff_t axis) {
  const auto& s = x.shape();
  const std::size_t ax = normalize_axis(axis, s.size(), s);
  const std::size_t outer = shape_numel(Shape(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(ax)));
  const std::size_t inner = shape_numel(Shape(s.begin() + static_cast<std::ptrdiff_t>(ax) + 1, s.end()));
  const std::size_t extent = s[ax];
  const auto xv = x.data();
  Buffer out(xv.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * extent * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t e = 0; e < extent; ++e) mx = std::max(mx, xv[base + e * inner]);
      double total = 0.0;
      for (std::size_t e = 0; e < extent; ++e) {
        const double v = std::exp(xv[base + e * inner] - mx);
        out[base + e * inner] = v;
        total += v;
      }
      for (std::size_t e = 0; e < extent; ++e) out[base + e * inner] /= total;
    }
  }
  return Tensor::from_op(s, std::move(out), "softmax", {x}, [outer, inner, extent](detail::Node& self) {
    auto& g = self.inputs[0]->grad;
    const auto& y = self.value;
    const auto& gy = self.grad;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * extent * inner + in;
        double dot = 0.0;
        for (std::size_t e = 0; e < extent; ++e) dot += gy[base + e * inner] * y[base + e * inner];
        for (std::size_t e = 0; e < extent; ++e) {
          const std::size_t i = base + e * inner;
          g[i] += y[i] * (gy[i] - dot);
        }
      }
    }
  });
}

Tensor sum(const Tensor& x) {
  const auto v = x.data();
  const double total = std::accumulate(v.begin(), v.end(), 0.0);
  return Tensor::from_op({}, {total}, "sum", {x}, [](detail::Node& self) {
    auto& g = self.inputs[0]->grad;
    for (auto& gi : g) gi += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("mse_loss shape mismatch: " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
  }
  const std::size_t n = pred.numel();
  if (n == 0) throw ShapeError("mse_loss of empty tensors");
  const auto p = pred.data();
  const auto t = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += (p[i] - t[i]) * (p[i] - t[i]);
  return Tensor::from_op({}, {acc / static_cast<double>(n)}, "mse_loss", {pred, target}, [n](detail::Node& self) {
    auto& np = *self.inputs[0];
    auto& nt = *self.inputs[1];
    const double c = 2.0 * self.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = c * (np.value[i] - nt.value[i]);
      if (np.requires_grad) np.grad[i] += d;
      if (nt.requires_grad) nt.grad[i] -= d;
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps) {
  if (x.rank() == 0) throw ShapeError("layer_norm needs rank >= 1");
  const std::size_t d = x.shape().back();
  if (d == 0) throw ShapeError("layer_norm over empty feature axis");
  if (gain.shape() != Shape{d} || shift.shape() != Shape{d}) {
    throw ShapeError("layer_norm parameter shapes " + shape_str(gain.shape()) + ", " + shape_str(shift.shape()) +
                     " do not match feature extent of " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  const auto xv = x.data();
  const auto gv = gain.data();
  const auto sv = shift.data();
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv = std::make_shared<std::vector<double>>(rows);
  Buffer out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv)[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mu) * is;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = h * gv[j] + sv[j];
    }
  }
  return Tensor::from_op(x.shape(), std::move(out), "layer_norm", {x, gain, shift},
                         [xhat, inv, rows, d](detail::Node& self) {
                           auto& nx = *self.inputs[0];
                           auto& ng = *self.inputs[1];
                           auto& ns = *self.inputs[2];
                           const auto& g = self.grad;
                           std::vector<double> dh(d);
                           for (std::size_t r = 0; r < rows; ++r) {
                             const double* gr = g.data() + r * d;
                             const double* hr = xhat->data() + r * d;
                             double sum_dh = 0.0;
                             double sum_dh_h = 0.0;
                             for (std::size_t j = 0; j < d; ++j) {
                               dh[j] = gr[j] * ng.value[j];
                               sum_dh += dh[j];
                               sum_dh_h += dh[j] * hr[j];
                               if (ng.requires_grad) ng.grad[j] += gr[j] * hr[j];
                               if (ns.requires_grad) ns.grad[j] += gr[j];
                             }
                             if (nx.requires_grad) {
                               const double c = (*inv)[r] / static_cast<double>(d);
                               for (std::size_t j = 0; j < d; ++j) {
                                 nx.grad[r * d + j] +=
                                     c * (static_cast<double>(d) * dh[j] - sum_dh - hr[j] * sum_dh_h);
                               }
                             }
                           }
                         });
}

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, Padding padding) {
  const auto& sx = x.shape();
  const auto& sw = weight.shape();
  if (sx.size() != 3 || sw.size() != 3 || sx[2] != sw[1] || bias.shape() != Shape{sw[2]}) {
    throw ShapeError("conv1d shape mismatch: input " + shape_str(sx) + ", weight " + shape_str(sw) + ", bias " +
                     shape_str(bias.shape()));
  }
  const std::size_t batch = sx[0], steps = sx[1], channels = sx[2];
  const std::size_t kernel = sw[0], filters = sw[2];
  if (kernel == 0) throw ShapeError("conv1d kernel size must be positive");
  const std::size_t pad_left = padding == Padding::same ? (kernel - 1) / 2 : 0;
  const std::size_t pad_right = padding == Padding::same ? kernel - 1 - pad_left : 0;
  if (steps + pad_left + pad_right < kernel) {
    throw ShapeError("conv1d input of length " + std::to_string(steps) + " is shorter than kernel " +
                     std::to_string(kernel) + " under valid padding");
  }
  const std::size_t out_steps = steps + pad_left + pad_right - kernel + 1;
  const std::size_t rows = batch * out_steps;
  const std::size_t width = kernel * channels;

  // im2col: row (b, t) holds the receptive field x[b, t - pad_left + k, c].
  auto cols = std::make_shared<Buffer>(rows * width, 0.0);
  const auto xv = x.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < out_steps; ++t) {
      double* row = cols->data() + (b * out_steps + t) * width;
      for (std::size_t k = 0; k < kernel; ++k) {
        const auto src = static_cast<std::ptrdiff_t>(t + k) - static_cast<std::ptrdiff_t>(pad_left);
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(steps)) continue;
        std::copy_n(xv.data() + (b * steps + static_cast<std::size_t>(src)) * channels, channels, row + k * channels);
      }
    }
  }
  Buffer out(rows * filters);
  MutMap y(out.data(), rows, filters);
  y.noalias() = ConstMap(cols->data(), rows, width) * ConstMap(weight.data().data(), width, filters);
  y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data().data(), filters);

  return Tensor::from_op(
      {batch, out_steps, filters}, std::move(out), "conv1d", {x, weight, bias},
      [cols, batch, steps, channels, kernel, filters, pad_left, out_steps, rows, width](detail::Node& self) {
        auto& nx = *self.inputs[0];
        auto& nw = *self.inputs[1];
        auto& nb = *self.inputs[2];
        ConstMap g(self.grad.data(), rows, filters);
        if (nw.requires_grad) {
          MutMap(nw.grad.data(), width, filters).noalias() += ConstMap(cols->data(), rows, width).transpose() * g;
        }
        if (nb.requires_grad) {
          Eigen::Map<Eigen::RowVectorXd>(nb.grad.data(), filters) += g.colwise().sum();
        }
        if (nx.requires_grad) {
          RowMat dcols = g * ConstMap(nw.value.data(), width, filters).transpose();
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t t = 0; t < out_steps; ++t) {
              const double* row = dcols.data() + (b * out_steps + t) * width;
              for (std::size_t k = 0; k < kernel; ++k) {
                const auto src = static_cast<std::ptrdiff_t>(t + k) - static_cast<std::ptrdiff_t>(pad_left);
                if (src < 0 || src >= static_cast<std::ptrdiff_t>(steps)) continue;
                double* dst = nx.grad.data() + (b * steps + static_cast<std::size_t>(src)) * channels;
                for (std::size_t c = 0; c < channels; ++c) dst[c] += row[k * channels + c];
              }
            }
          }
        }
      });
}

Tensor lstm_scan(const Tensor& projected, const Tensor& recurrent) {
  const auto& sp = projected.shape();
  const auto& sr = recurrent.shape();
  if (sp.size() != 3 || sr.size() != 2 || sr[1] != 4 * sr[0] || sp[2] != sr[1] || sr[0] == 0) {
    throw ShapeError("lstm_scan shape mismatch: projected " + shape_str(sp) + ", recurrent " + shape_str(sr));
  }
  const std::size_t batch = sp[0], steps = sp[1], u = sr[0], g4 = 4 * u;
  const auto sigm = [](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  };

  // gates[t] holds activated (i, f, g, o) as a (B, 4u) block; out holds h, c.
  auto gates = std::make_shared<Buffer>(steps * batch * g4);
  Buffer out(batch * steps * 2 * u);
  const auto pv = projected.data();
  const ConstMap rec(recurrent.data().data(), u, g4);
  RowMat h_prev = RowMat::Zero(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(u));
  RowMat z(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(g4));
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy_n(pv.data() + (b * steps + t) * g4, g4, z.data() + b * g4);
    }
    if (t > 0) z.noalias() += h_prev * rec;
    double* gt = gates->data() + t * batch * g4;
    for (std::size_t b = 0; b < batch; ++b) {
      const double* zr = z.data() + b * g4;
      double* gr = gt + b * g4;
      double* o_now = out.data() + (b * steps + t) * 2 * u;
      const double* c_before = t > 0 ? out.data() + (b * steps + t - 1) * 2 * u + u : nullptr;
      for (std::size_t j = 0; j < u; ++j) {
        const double ig = sigm(zr[j]);
        const double fg = sigm(zr[u + j]);
        const double cg = std::tanh(zr[2 * u + j]);
        const double og = sigm(zr[3 * u + j]);
        gr[j] = ig;
        gr[u + j] = fg;
        gr[2 * u + j] = cg;
        gr[3 * u + j] = og;
        const double c = (c_before ? fg * c_before[j] : 0.0) + ig * cg;
        o_now[u + j] = c;
        o_now[j] = og * std::tanh(c);
        h_prev(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(j)) = o_now[j];
      }
    }
  }

  return Tensor::from_op(
      {batch, steps, 2 * u}, std::move(out), "lstm_scan", {projected, recurrent},
      [gates, batch, steps, u, g4](detail::Node& self) {
        auto& np = *self.inputs[0];
        auto& nr = *self.inputs[1];
        const auto& y = self.value;
        const auto& gy = self.grad;
        const ConstMap rec(nr.value.data(), u, g4);
        const auto bi = static_cast<Eigen::Index>(batch);
        const auto ui = static_cast<Eigen::Index>(u);
        RowMat dh_next = RowMat::Zero(bi, ui);
        RowMat dc_next = RowMat::Zero(bi, ui);
        RowMat dz(bi, static_cast<Eigen::Index>(g4));
        RowMat h_before(bi, ui);
        for (std::size_t t = steps; t-- > 0;) {
          const double* gt = gates->data() + t * batch * g4;
          for (std::size_t b = 0; b < batch; ++b) {
            const double* gr = gt + b * g4;
            const std::size_t at = (b * steps + t) * 2 * u;
            const double* c_before = t > 0 ? y.data() + at - 2 * u + u : nullptr;
            double* dzr = dz.data() + b * g4;
            for (std::size_t j = 0; j < u; ++j) {
              const double ig = gr[j], fg = gr[u + j], cg = gr[2 * u + j], og = gr[3 * u + j];
              const double tc = std::tanh(y[at + u + j]);
              const double dh = gy[at + j] + dh_next(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(j));
              const double dc = gy[at + u + j] + dc_next(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(j)) +
                                dh * og * (1.0 - tc * tc);
              const double cb = c_before ? c_before[j] : 0.0;
              dzr[j] = dc * cg * ig * (1.0 - ig);
              dzr[u + j] = dc * cb * fg * (1.0 - fg);
              dzr[2 * u + j] = dc * ig * (1.0 - cg * cg);
              dzr[3 * u + j] = dh * tc * og * (1.0 - og);
              dc_next(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(j)) = dc * fg;
              if (c_before) h_before(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(j)) = y[at - 2 * u + j];
            }
            if (np.requires_grad) {
              double* dst = np.grad.data() + (b * steps + t) * g4;
              for (std::size_t k = 0; k < g4; ++k) dst[k] += dzr[k];
            }
          }
          if (t == 0) break;
          if (nr.requires_grad) MutMap(nr.grad.data(), u, g4).noalias() += h_before.transpose() * dz;
          dh_next.noalias() = dz * rec.transpose();
        }
      });
}

}  // namespace ricnet
