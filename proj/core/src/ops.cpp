#include "leaves/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace leaves {
namespace {

Tape* common_tape(const Tensor& a, const Tensor& b) {
  if (a.on_tape() && b.on_tape() && a.tape() != b.tape())
    throw UsageError("operands live on different tapes");
  if (a.on_tape()) return a.tape();
  if (b.on_tape()) return b.tape();
  return nullptr;
}

struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> map_a;  // out flat index -> a flat index
  std::vector<std::size_t> map_b;
};

BroadcastPlan make_broadcast(const Shape& sa, const Shape& sb) {
  const std::size_t rank = std::max(sa.size(), sb.size());
  // Pad to common rank with leading 1s (trailing-dimension alignment).
  std::vector<std::size_t> da(rank, 1), db(rank, 1), dout(rank, 1);
  for (std::size_t i = 0; i < sa.size(); ++i) da[rank - sa.size() + i] = sa[i];
  for (std::size_t i = 0; i < sb.size(); ++i) db[rank - sb.size() + i] = sb[i];
  for (std::size_t i = 0; i < rank; ++i) {
    if (da[i] != db[i] && da[i] != 1 && db[i] != 1)
      throw ShapeError("shapes not broadcastable: " + shape_str(sa) + " vs " + shape_str(sb));
    dout[i] = std::max(da[i], db[i]);
  }
  std::vector<std::size_t> stride_a(rank, 0), stride_b(rank, 0);
  std::size_t acc = 1;
  for (std::size_t i = rank; i-- > 0;) {
    stride_a[i] = (da[i] == 1) ? 0 : acc;
    acc *= da[i];
  }
  acc = 1;
  for (std::size_t i = rank; i-- > 0;) {
    stride_b[i] = (db[i] == 1) ? 0 : acc;
    acc *= db[i];
  }

  BroadcastPlan plan;
  plan.out = Shape(dout.begin(), dout.end());
  const std::size_t n = numel(plan.out);
  plan.map_a.resize(n);
  plan.map_b.resize(n);
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t f = 0; f < n; ++f) {
    std::size_t fa = 0, fb = 0;
    for (std::size_t i = 0; i < rank; ++i) {
      fa += idx[i] * stride_a[i];
      fb += idx[i] * stride_b[i];
    }
    plan.map_a[f] = fa;
    plan.map_b[f] = fb;
    for (std::size_t i = rank; i-- > 0;) {
      if (++idx[i] < dout[i]) break;
      idx[i] = 0;
    }
  }
  return plan;
}

using Fwd = double (*)(double, double);
using Partial = double (*)(double, double);

Tensor binary_op(const Tensor& a, const Tensor& b, Fwd f, Partial dfa, Partial dfb) {
  BroadcastPlan plan = make_broadcast(a.shape(), b.shape());
  const std::size_t n = plan.map_a.size();
  std::vector<double> out(n);
  const auto& va = a.values();
  const auto& vb = b.values();
  for (std::size_t i = 0; i < n; ++i) out[i] = f(va[plan.map_a[i]], vb[plan.map_b[i]]);

  Tape* tape = common_tape(a, b);
  if (tape == nullptr) return Tensor(std::move(plan.out), std::move(out));

  std::vector<int> inputs;
  if (a.on_tape()) inputs.push_back(a.node());
  if (b.on_tape()) inputs.push_back(b.node());
  const int na = a.on_tape() ? a.node() : -1;
  const int nb = b.on_tape() ? b.node() : -1;
  auto sa = std::make_shared<std::vector<double>>(va);
  auto sb = std::make_shared<std::vector<double>>(vb);
  auto splan = std::make_shared<BroadcastPlan>(std::move(plan));
  Shape out_shape = splan->out;
  return tape->record(
      std::move(out_shape), std::move(out), std::move(inputs),
      [na, nb, sa, sb, splan, dfa, dfb](const std::vector<double>& g, Tape& t) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double x = (*sa)[splan->map_a[i]];
          const double y = (*sb)[splan->map_b[i]];
          if (na >= 0 && t.node_requires_grad(na)) t.accumulate(na, splan->map_a[i], g[i] * dfa(x, y));
          if (nb >= 0 && t.node_requires_grad(nb)) t.accumulate(nb, splan->map_b[i], g[i] * dfb(x, y));
        }
      });
}

Tensor unary_op(const Tensor& a, double (*f)(double), double (*df)(double, double)) {
  const auto& va = a.values();
  std::vector<double> out(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) out[i] = f(va[i]);
  if (!a.on_tape()) return Tensor(a.shape(), std::move(out));
  auto sx = std::make_shared<std::vector<double>>(va);
  auto sy = std::make_shared<std::vector<double>>(out);
  const int na = a.node();
  return a.tape()->record(a.shape(), std::move(out), {na},
                          [na, sx, sy, df](const std::vector<double>& g, Tape& t) {
                            for (std::size_t i = 0; i < g.size(); ++i)
                              t.accumulate(na, i, g[i] * df((*sx)[i], (*sy)[i]));
                          });
}

void check_domain(const Tensor& a, bool (*ok)(double), const char* op) {
  const auto& v = a.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!ok(v[i]))
      throw DomainError(std::string(op) + ": value " + std::to_string(v[i]) +
                        " outside domain at flat index " + std::to_string(i));
  }
}

// Reduce helper: axis in [0, rank); output shape drops the axis.
struct AxisPlan {
  std::size_t outer, axis_len, inner;
};
AxisPlan axis_plan(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) throw ShapeError("reduce axis " + std::to_string(axis) +
                                         " out of range for " + shape_str(s));
  AxisPlan p{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) p.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) p.inner *= s[i];
  return p;
}
Shape drop_axis(const Shape& s, std::size_t axis) {
  Shape out;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) out.push_back(s[i]);
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor divide(const Tensor& a, const Tensor& b) {
  check_domain(b, [](double v) { return v != 0.0; }, "divide: zero denominator");
  return binary_op(
      a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor neg(const Tensor& a) {
  return unary_op(a, [](double x) { return -x; },
                  [](double, double) { return -1.0; });
}

Tensor exp(const Tensor& a) {
  return unary_op(a, [](double x) { return std::exp(x); },
                  [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  check_domain(a, [](double v) { return v > 0.0; }, "log");
  return unary_op(a, [](double x) { return std::log(x); },
                  [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
  check_domain(a, [](double v) { return v >= 0.0; }, "sqrt");
  return unary_op(a, [](double x) { return std::sqrt(x); },
                  [](double, double y) { return 0.5 / y; });
}

Tensor tanh(const Tensor& a) {
  return unary_op(a, [](double x) { return std::tanh(x); },
                  [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary_op(a, [](double x) { return x > 0.0 ? x : 0.0; },
                  [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor logistic(const Tensor& a) {
  return unary_op(a,
                  [](double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                                 : std::exp(x) / (1.0 + std::exp(x)); },
                  [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& a) {
  return unary_op(a,
                  [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); },
                  [](double x, double) {
                    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                    : std::exp(x) / (1.0 + std::exp(x));
                  });
}

namespace {
// Pairwise summation: deterministic and keeps sums of identical terms exact.
double pairwise_sum(const double* v, std::size_t n) {
  if (n == 0) return 0.0;
  if (n == 1) return v[0];
  if (n == 2) return v[0] + v[1];
  const std::size_t half = n / 2;
  return pairwise_sum(v, half) + pairwise_sum(v + half, n - half);
}
}  // namespace

Tensor sum(const Tensor& a) {
  double s = pairwise_sum(a.values().data(), a.values().size());
  if (!a.on_tape()) return Tensor::scalar(s);
  const int na = a.node();
  const std::size_t n = a.size();
  return a.tape()->record(Shape{}, {s}, {na},
                          [na, n](const std::vector<double>& g, Tape& t) {
                            for (std::size_t i = 0; i < n; ++i) t.accumulate(na, i, g[0]);
                          });
}

Tensor sum(const Tensor& a, std::size_t axis) {
  AxisPlan p = axis_plan(a.shape(), axis);
  Shape out_shape = drop_axis(a.shape(), axis);
  std::vector<double> out(p.outer * p.inner, 0.0);
  const auto& v = a.values();
  for (std::size_t o = 0; o < p.outer; ++o)
    for (std::size_t k = 0; k < p.axis_len; ++k)
      for (std::size_t i = 0; i < p.inner; ++i)
        out[o * p.inner + i] += v[(o * p.axis_len + k) * p.inner + i];
  if (!a.on_tape()) return Tensor(std::move(out_shape), std::move(out));
  const int na = a.node();
  return a.tape()->record(std::move(out_shape), std::move(out), {na},
                          [na, p](const std::vector<double>& g, Tape& t) {
                            for (std::size_t o = 0; o < p.outer; ++o)
                              for (std::size_t k = 0; k < p.axis_len; ++k)
                                for (std::size_t i = 0; i < p.inner; ++i)
                                  t.accumulate(na, (o * p.axis_len + k) * p.inner + i,
                                               g[o * p.inner + i]);
                          });
}

Tensor mean(const Tensor& a) { return divide(sum(a), static_cast<double>(a.size())); }

Tensor mean(const Tensor& a, std::size_t axis) {
  return divide(sum(a, axis), static_cast<double>(a.shape().at(axis)));
}

Tensor max(const Tensor& a) {
  const auto& v = a.values();
  if (v.empty()) throw ShapeError("max of empty tensor");
  std::size_t arg = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[arg]) arg = i;  // strict: first occurrence wins ties
  if (!a.on_tape()) return Tensor::scalar(v[arg]);
  const int na = a.node();
  return a.tape()->record(Shape{}, {v[arg]}, {na},
                          [na, arg](const std::vector<double>& g, Tape& t) {
                            t.accumulate(na, arg, g[0]);
                          });
}

Tensor max(const Tensor& a, std::size_t axis) {
  AxisPlan p = axis_plan(a.shape(), axis);
  Shape out_shape = drop_axis(a.shape(), axis);
  const auto& v = a.values();
  std::vector<double> out(p.outer * p.inner);
  auto args = std::make_shared<std::vector<std::size_t>>(p.outer * p.inner);
  for (std::size_t o = 0; o < p.outer; ++o)
    for (std::size_t i = 0; i < p.inner; ++i) {
      std::size_t arg = (o * p.axis_len) * p.inner + i;
      for (std::size_t k = 1; k < p.axis_len; ++k) {
        std::size_t f = (o * p.axis_len + k) * p.inner + i;
        if (v[f] > v[arg]) arg = f;
      }
      out[o * p.inner + i] = v[arg];
      (*args)[o * p.inner + i] = arg;
    }
  if (!a.on_tape()) return Tensor(std::move(out_shape), std::move(out));
  const int na = a.node();
  return a.tape()->record(std::move(out_shape), std::move(out), {na},
                          [na, args](const std::vector<double>& g, Tape& t) {
                            for (std::size_t i = 0; i < g.size(); ++i)
                              t.accumulate(na, (*args)[i], g[i]);
                          });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul requires rank-2 operands, got " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  if (b.dim(0) != k)
    throw ShapeError("matmul inner dimensions differ: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  const auto& va = a.values();
  const auto& vb = b.values();
  std::vector<double> out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = va[i * k + p];
      for (std::size_t j = 0; j < m; ++j) out[i * m + j] += aip * vb[p * m + j];
    }
  Tape* tape = common_tape(a, b);
  if (tape == nullptr) return Tensor({n, m}, std::move(out));
  std::vector<int> inputs;
  if (a.on_tape()) inputs.push_back(a.node());
  if (b.on_tape()) inputs.push_back(b.node());
  const int na = a.on_tape() ? a.node() : -1;
  const int nb = b.on_tape() ? b.node() : -1;
  auto sa = std::make_shared<std::vector<double>>(va);
  auto sb = std::make_shared<std::vector<double>>(vb);
  return tape->record({n, m}, std::move(out), std::move(inputs),
                      [na, nb, sa, sb, n, k, m](const std::vector<double>& g, Tape& t) {
                        if (na >= 0 && t.node_requires_grad(na)) {
                          // dA = G * B^T
                          for (std::size_t i = 0; i < n; ++i)
                            for (std::size_t p = 0; p < k; ++p) {
                              double acc = 0.0;
                              for (std::size_t j = 0; j < m; ++j)
                                acc += g[i * m + j] * (*sb)[p * m + j];
                              t.accumulate(na, i * k + p, acc);
                            }
                        }
                        if (nb >= 0 && t.node_requires_grad(nb)) {
                          // dB = A^T * G
                          for (std::size_t p = 0; p < k; ++p)
                            for (std::size_t j = 0; j < m; ++j) {
                              double acc = 0.0;
                              for (std::size_t i = 0; i < n; ++i)
                                acc += (*sa)[i * k + p] * g[i * m + j];
                              t.accumulate(nb, p * m + j, acc);
                            }
                        }
                      });
}

Tensor transpose2d(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose2d requires rank 2, got " + shape_str(a.shape()));
  const std::size_t n = a.dim(0), m = a.dim(1);
  const auto& v = a.values();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j * n + i] = v[i * m + j];
  if (!a.on_tape()) return Tensor({m, n}, std::move(out));
  const int na = a.node();
  return a.tape()->record({m, n}, std::move(out), {na},
                          [na, n, m](const std::vector<double>& g, Tape& t) {
                            for (std::size_t i = 0; i < n; ++i)
                              for (std::size_t j = 0; j < m; ++j)
                                t.accumulate(na, i * m + j, g[j * n + i]);
                          });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size())
    throw ShapeError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape) +
                     " changes element count");
  if (!a.on_tape()) return Tensor(std::move(shape), a.values());
  const int na = a.node();
  return a.tape()->record(std::move(shape), a.values(), {na},
                          [na](const std::vector<double>& g, Tape& t) { t.accumulate(na, g); });
}

Tensor conv1d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t padding) {
  if (x.rank() != 3 || w.rank() != 3)
    throw ShapeError("conv1d requires x (N,C_in,L) and w (C_out,C_in,k)");
  const std::size_t n = x.dim(0), cin = x.dim(1), len = x.dim(2);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != cin)
    throw ShapeError("conv1d channel mismatch: x " + shape_str(x.shape()) + " vs w " +
                     shape_str(w.shape()));
  if (stride == 0) throw ShapeError("conv1d stride must be positive");
  if (k > len + 2 * padding)
    throw ShapeError("conv1d kernel " + std::to_string(k) + " larger than padded input " +
                     std::to_string(len + 2 * padding));
  const std::size_t lout = (len + 2 * padding - k) / stride + 1;

  const auto& vx = x.values();
  const auto& vw = w.values();
  std::vector<double> out(n * cout * lout, 0.0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t j = 0; j < lout; ++j) {
        double acc = 0.0;
        for (std::size_t ci = 0; ci < cin; ++ci)
          for (std::size_t kk = 0; kk < k; ++kk) {
            const long pos = static_cast<long>(j * stride + kk) - static_cast<long>(padding);
            if (pos < 0 || pos >= static_cast<long>(len)) continue;
            acc += vx[(b * cin + ci) * len + static_cast<std::size_t>(pos)] *
                   vw[(co * cin + ci) * k + kk];
          }
        out[(b * cout + co) * lout + j] = acc;
      }

  Tape* tape = common_tape(x, w);
  if (tape == nullptr) return Tensor({n, cout, lout}, std::move(out));
  std::vector<int> inputs;
  if (x.on_tape()) inputs.push_back(x.node());
  if (w.on_tape()) inputs.push_back(w.node());
  const int nx = x.on_tape() ? x.node() : -1;
  const int nw = w.on_tape() ? w.node() : -1;
  auto sx = std::make_shared<std::vector<double>>(vx);
  auto sw = std::make_shared<std::vector<double>>(vw);
  return tape->record(
      {n, cout, lout}, std::move(out), std::move(inputs),
      [=](const std::vector<double>& g, Tape& t) {
        const bool gx = nx >= 0 && t.node_requires_grad(nx);
        const bool gw = nw >= 0 && t.node_requires_grad(nw);
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t j = 0; j < lout; ++j) {
              const double go = g[(b * cout + co) * lout + j];
              if (go == 0.0) continue;
              for (std::size_t ci = 0; ci < cin; ++ci)
                for (std::size_t kk = 0; kk < k; ++kk) {
                  const long pos = static_cast<long>(j * stride + kk) - static_cast<long>(padding);
                  if (pos < 0 || pos >= static_cast<long>(len)) continue;
                  const std::size_t xi = (b * cin + ci) * len + static_cast<std::size_t>(pos);
                  const std::size_t wi = (co * cin + ci) * k + kk;
                  if (gx) t.accumulate(nx, xi, go * (*sw)[wi]);
                  if (gw) t.accumulate(nw, wi, go * (*sx)[xi]);
                }
            }
      });
}

Tensor interp1d(const Tensor& signal, const Tensor& locations) {
  if (signal.rank() != locations.rank() || signal.rank() == 0)
    throw ShapeError("interp1d rank mismatch: " + shape_str(signal.shape()) + " vs " +
                     shape_str(locations.shape()));
  for (std::size_t i = 0; i + 1 < signal.rank(); ++i)
    if (signal.dim(i) != locations.dim(i))
      throw ShapeError("interp1d leading dims differ: " + shape_str(signal.shape()) + " vs " +
                       shape_str(locations.shape()));
  const std::size_t ls = signal.shape().back();
  const std::size_t lo = locations.shape().back();
  std::size_t rows = signal.size() / ls;
  if (ls == 0) throw ShapeError("interp1d on empty signal");

  const auto& vs = signal.values();
  const auto& vl = locations.values();
  std::vector<double> out(rows * lo);
  // Per output element: the two straddling sample indices and the weight.
  auto lo_idx = std::make_shared<std::vector<std::size_t>>(rows * lo);
  auto frac = std::make_shared<std::vector<double>>(rows * lo);
  auto clamped = std::make_shared<std::vector<char>>(rows * lo);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < lo; ++j) {
      const std::size_t f = r * lo + j;
      double loc = vl[f];
      bool cl = false;
      if (loc < -1.0) { loc = -1.0; cl = true; }
      if (loc > 1.0) { loc = 1.0; cl = true; }
      const double pos = (loc + 1.0) * 0.5 * static_cast<double>(ls - 1);
      std::size_t i0 = ls > 1 ? std::min<std::size_t>(static_cast<std::size_t>(pos), ls - 2) : 0;
      const double w = ls > 1 ? pos - static_cast<double>(i0) : 0.0;
      const std::size_t i1 = ls > 1 ? i0 + 1 : 0;
      out[f] = (1.0 - w) * vs[r * ls + i0] + w * vs[r * ls + i1];
      (*lo_idx)[f] = i0;
      (*frac)[f] = w;
      (*clamped)[f] = cl ? 1 : 0;
    }

  Shape out_shape = locations.shape();
  Tape* tape = common_tape(signal, locations);
  if (tape == nullptr) return Tensor(std::move(out_shape), std::move(out));
  std::vector<int> inputs;
  if (signal.on_tape()) inputs.push_back(signal.node());
  if (locations.on_tape()) inputs.push_back(locations.node());
  const int ns = signal.on_tape() ? signal.node() : -1;
  const int nl = locations.on_tape() ? locations.node() : -1;
  auto ss = std::make_shared<std::vector<double>>(vs);
  return tape->record(
      std::move(out_shape), std::move(out), std::move(inputs),
      [=](const std::vector<double>& g, Tape& t) {
        const bool gs = ns >= 0 && t.node_requires_grad(ns);
        const bool gl = nl >= 0 && t.node_requires_grad(nl);
        const double scale = ls > 1 ? 0.5 * static_cast<double>(ls - 1) : 0.0;
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < lo; ++j) {
            const std::size_t f = r * lo + j;
            const std::size_t i0 = (*lo_idx)[f];
            const std::size_t i1 = ls > 1 ? i0 + 1 : i0;
            const double w = (*frac)[f];
            if (gs) {
              t.accumulate(ns, r * ls + i0, g[f] * (1.0 - w));
              if (ls > 1) t.accumulate(ns, r * ls + i1, g[f] * w);
            }
            if (gl && !(*clamped)[f] && ls > 1) {
              const double slope = ((*ss)[r * ls + i1] - (*ss)[r * ls + i0]) * scale;
              t.accumulate(nl, f, g[f] * slope);
            }
          }
      });
}

SortResult sort_lastaxis(const Tensor& a) {
  if (a.rank() == 0) return SortResult{a, {0}};
  const std::size_t l = a.shape().back();
  const std::size_t rows = a.size() / l;
  const auto& v = a.values();
  std::vector<double> out(a.size());
  std::vector<std::size_t> perm(a.size());
  std::vector<std::size_t> order(l);
  for (std::size_t r = 0; r < rows; ++r) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      return v[r * l + x] < v[r * l + y];
    });
    for (std::size_t j = 0; j < l; ++j) {
      out[r * l + j] = v[r * l + order[j]];
      perm[r * l + j] = r * l + order[j];
    }
  }
  if (!a.on_tape()) return SortResult{Tensor(a.shape(), std::move(out)), std::move(perm)};
  const int na = a.node();
  auto sperm = std::make_shared<std::vector<std::size_t>>(perm);
  Tensor sorted = a.tape()->record(a.shape(), std::move(out), {na},
                                   [na, sperm](const std::vector<double>& g, Tape& t) {
                                     for (std::size_t i = 0; i < g.size(); ++i)
                                       t.accumulate(na, (*sperm)[i], g[i]);
                                   });
  return SortResult{std::move(sorted), std::move(perm)};
}

Tensor gather_lastaxis(const Tensor& a, const std::vector<std::size_t>& idx) {
  if (a.rank() == 0) throw ShapeError("gather_lastaxis on a scalar");
  const std::size_t l = a.shape().back();
  for (std::size_t i : idx)
    if (i >= l) throw ShapeError("gather index " + std::to_string(i) + " out of range " +
                                 std::to_string(l));
  const std::size_t rows = a.size() / l;
  const std::size_t lo = idx.size();
  const auto& v = a.values();
  std::vector<double> out(rows * lo);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < lo; ++j) out[r * lo + j] = v[r * l + idx[j]];
  Shape out_shape = a.shape();
  out_shape.back() = lo;
  if (!a.on_tape()) return Tensor(std::move(out_shape), std::move(out));
  const int na = a.node();
  auto sidx = std::make_shared<std::vector<std::size_t>>(idx);
  return a.tape()->record(std::move(out_shape), std::move(out), {na},
                          [na, sidx, l, rows, lo](const std::vector<double>& g, Tape& t) {
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t j = 0; j < lo; ++j)
                                t.accumulate(na, r * l + (*sidx)[j], g[r * lo + j]);
                          });
}

Tensor select(const Tensor& a, std::size_t index) {
  if (a.rank() != 1) throw ShapeError("select requires a rank-1 tensor");
  if (index >= a.size()) throw ShapeError("select index out of range");
  if (!a.on_tape()) return Tensor::scalar(a.at(index));
  const int na = a.node();
  return a.tape()->record(Shape{}, {a.at(index)}, {na},
                          [na, index](const std::vector<double>& g, Tape& t) {
                            t.accumulate(na, index, g[0]);
                          });
}

}  // namespace leaves
