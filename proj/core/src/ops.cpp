#include "patchdrop/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <unordered_set>

#include "patchdrop/flops.hpp"

namespace patchdrop::ops {

namespace {

// Work below this many MACs is not worth a parallel region.
constexpr std::int64_t kParallelMacThreshold = 1 << 15;

constexpr double kSqrt2OverPi = 0.7978845608028653558798921198687;
constexpr double kGeluCubic = 0.044715;

bool want_grad(std::initializer_list<const Tensor*> inputs) {
  if (active_tape() == nullptr || flops::count_only()) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

Tensor make_out(Shape shape, bool requires_grad) {
  if (flops::count_only()) return Tensor::hollow(std::move(shape));
  return Tensor::zeros(std::move(shape), requires_grad);
}

// C(m,n) += A(m,k) * B(k,n). The reduction over kk runs in ascending order
// for every output element, so results do not depend on the thread count.
void gemm_nn_acc(const double* a, const double* b, double* c, std::int64_t m,
                 std::int64_t k, std::int64_t n, bool parallel) {
#pragma omp parallel for schedule(static) if (parallel && m * k * n > kParallelMacThreshold)
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::int64_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const double* brow = b + kk * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C(m,n) += A(m,k) * B(n,k)^T.
void gemm_nt_acc(const double* a, const double* b, double* c, std::int64_t m,
                 std::int64_t k, std::int64_t n, bool parallel) {
#pragma omp parallel for schedule(static) if (parallel && m * k * n > kParallelMacThreshold)
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::int64_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::int64_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      crow[j] += acc;
    }
  }
}

// C(k,n) += A(m,k)^T * B(m,n). Parallel over rows of C; the reduction over
// i stays ascending per element.
void gemm_tn_acc(const double* a, const double* b, double* c, std::int64_t m,
                 std::int64_t k, std::int64_t n, bool parallel) {
#pragma omp parallel for schedule(static) if (parallel && m * k * n > kParallelMacThreshold)
  for (std::int64_t kk = 0; kk < k; ++kk) {
    double* crow = c + kk * n;
    for (std::int64_t i = 0; i < m; ++i) {
      const double av = a[i * k + kk];
      const double* brow = b + i * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

struct MatmulDims {
  std::size_t batch;  // number of (m,k)x(k,n) products
  std::size_t m, k, n;
  bool shared_rhs;  // b is rank 2 and shared across the batch
};

MatmulDims matmul_dims(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw ShapeMismatch("matmul operands must have rank >= 2, got " +
                        shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  MatmulDims d{};
  d.m = sa[sa.size() - 2];
  d.k = sa[sa.size() - 1];
  const std::size_t bk = sb[sb.size() - 2];
  d.n = sb[sb.size() - 1];
  if (d.k != bk) {
    throw ShapeMismatch("matmul inner extents differ: " + shape_str(sa) +
                        " vs " + shape_str(sb));
  }
  if (b.rank() == 2) {
    d.shared_rhs = true;
    d.batch = a.numel() / (d.m * d.k);
  } else {
    if (a.rank() != b.rank() ||
        !std::equal(sa.begin(), sa.end() - 2, sb.begin())) {
      throw ShapeMismatch("matmul batch extents differ: " + shape_str(sa) +
                          " vs " + shape_str(sb));
    }
    d.shared_rhs = false;
    d.batch = a.numel() / (d.m * d.k);
  }
  return d;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const MatmulDims d = matmul_dims(a, b);
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  out_shape.push_back(d.n);

  flops::add(static_cast<std::uint64_t>(d.batch) * d.m * d.k * d.n);
  const bool grad = want_grad({&a, &b});
  Tensor out = make_out(std::move(out_shape), grad);
  if (flops::count_only()) return out;

  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* pc = out.values_mut().data();
  const std::size_t m = d.m, k = d.k, n = d.n;

  if (d.shared_rhs) {
    // One flat product over batch*m rows.
    gemm_nn_acc(pa, pb, pc, static_cast<std::int64_t>(d.batch * m),
                static_cast<std::int64_t>(k), static_cast<std::int64_t>(n),
                true);
  } else {
    const std::int64_t batch = static_cast<std::int64_t>(d.batch);
#pragma omp parallel for schedule(static) if (batch > 1)
    for (std::int64_t bi = 0; bi < batch; ++bi) {
      gemm_nn_acc(pa + bi * m * k, pb + bi * k * n, pc + bi * m * n,
                  static_cast<std::int64_t>(m), static_cast<std::int64_t>(k),
                  static_cast<std::int64_t>(n), false);
    }
  }

  if (grad) {
    Tensor av = a, bv = b, ov = out;
    active_tape()->record("matmul", [av, bv, ov, d]() mutable {
      const std::size_t m = d.m, k = d.k, n = d.n;
      const double* pdc = ov.grad().data();
      if (av.requires_grad()) {
        flops::add(static_cast<std::uint64_t>(d.batch) * m * n * k);
        double* pda = av.grad_mut().data();
        const double* pb = bv.values().data();
        if (d.shared_rhs) {
          gemm_nt_acc(pdc, pb, pda, static_cast<std::int64_t>(d.batch * m),
                      static_cast<std::int64_t>(n),
                      static_cast<std::int64_t>(k), true);
        } else {
          const std::int64_t batch = static_cast<std::int64_t>(d.batch);
#pragma omp parallel for schedule(static) if (batch > 1)
          for (std::int64_t bi = 0; bi < batch; ++bi) {
            gemm_nt_acc(pdc + bi * m * n, pb + bi * k * n, pda + bi * m * k,
                        static_cast<std::int64_t>(m),
                        static_cast<std::int64_t>(n),
                        static_cast<std::int64_t>(k), false);
          }
        }
      }
      if (bv.requires_grad()) {
        flops::add(static_cast<std::uint64_t>(d.batch) * m * k * n);
        double* pdb = bv.grad_mut().data();
        const double* pa = av.values().data();
        if (d.shared_rhs) {
          // Gradients from every batch element accumulate into the shared
          // right-hand side; a single A^T * dC over batch*m rows keeps the
          // accumulation order fixed.
          gemm_tn_acc(pa, pdc, pdb, static_cast<std::int64_t>(d.batch * m),
                      static_cast<std::int64_t>(k),
                      static_cast<std::int64_t>(n), true);
        } else {
          const std::int64_t batch = static_cast<std::int64_t>(d.batch);
#pragma omp parallel for schedule(static) if (batch > 1)
          for (std::int64_t bi = 0; bi < batch; ++bi) {
            gemm_tn_acc(pa + bi * m * k, pdc + bi * m * n, pdb + bi * k * n,
                        static_cast<std::int64_t>(m),
                        static_cast<std::int64_t>(k),
                        static_cast<std::int64_t>(n), false);
          }
        }
      }
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sb.size() > sa.size() ||
      !std::equal(sb.rbegin(), sb.rend(), sa.rbegin())) {
    throw ShapeMismatch("add: " + shape_str(sb) +
                        " is not a trailing suffix of " + shape_str(sa));
  }
  const bool grad = want_grad({&a, &b});
  Tensor out = make_out(sa, grad);
  if (flops::count_only()) return out;

  const std::size_t bn = b.numel();
  const std::size_t rep = a.numel() / bn;
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* po = out.values_mut().data();
  for (std::size_t r = 0; r < rep; ++r) {
    const double* ar = pa + r * bn;
    double* orow = po + r * bn;
    for (std::size_t j = 0; j < bn; ++j) orow[j] = ar[j] + pb[j];
  }

  if (grad) {
    Tensor av = a, bv = b, ov = out;
    active_tape()->record("add", [av, bv, ov, rep, bn]() mutable {
      const double* pdo = ov.grad().data();
      if (av.requires_grad()) {
        double* pda = av.grad_mut().data();
        const std::size_t total = rep * bn;
        for (std::size_t i = 0; i < total; ++i) pda[i] += pdo[i];
      }
      if (bv.requires_grad()) {
        double* pdb = bv.grad_mut().data();
        for (std::size_t r = 0; r < rep; ++r) {
          const double* dor = pdo + r * bn;
          for (std::size_t j = 0; j < bn; ++j) pdb[j] += dor[j];
        }
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeMismatch("mul requires equal shapes, got " +
                        shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const bool grad = want_grad({&a, &b});
  Tensor out = make_out(a.shape(), grad);
  if (flops::count_only()) return out;

  const std::size_t n = a.numel();
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* po = out.values_mut().data();
  for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];

  if (grad) {
    Tensor av = a, bv = b, ov = out;
    active_tape()->record("mul", [av, bv, ov, n]() mutable {
      const double* pdo = ov.grad().data();
      if (av.requires_grad()) {
        double* pda = av.grad_mut().data();
        const double* pb = bv.values().data();
        for (std::size_t i = 0; i < n; ++i) pda[i] += pdo[i] * pb[i];
      }
      if (bv.requires_grad()) {
        double* pdb = bv.grad_mut().data();
        const double* pa = av.values().data();
        for (std::size_t i = 0; i < n; ++i) pdb[i] += pdo[i] * pa[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  const bool grad = want_grad({&a});
  Tensor out = make_out(a.shape(), grad);
  if (flops::count_only()) return out;

  const std::size_t n = a.numel();
  const double* pa = a.values().data();
  double* po = out.values_mut().data();
  for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * factor;

  if (grad) {
    Tensor av = a, ov = out;
    active_tape()->record("scale", [av, ov, factor, n]() mutable {
      const double* pdo = ov.grad().data();
      double* pda = av.grad_mut().data();
      for (std::size_t i = 0; i < n; ++i) pda[i] += pdo[i] * factor;
    });
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  const bool grad = want_grad({&x});
  Tensor out = make_out(x.shape(), grad);
  if (flops::count_only()) return out;

  const std::size_t n = x.numel();
  const double* px = x.values().data();
  double* po = out.values_mut().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double v = px[i];
    const double t = std::tanh(kSqrt2OverPi * (v + kGeluCubic * v * v * v));
    po[i] = 0.5 * v * (1.0 + t);
  }

  if (grad) {
    Tensor xv = x, ov = out;
    active_tape()->record("gelu", [xv, ov, n]() mutable {
      const double* pdo = ov.grad().data();
      const double* px = xv.values().data();
      double* pdx = xv.grad_mut().data();
      for (std::size_t i = 0; i < n; ++i) {
        const double v = px[i];
        const double u = kSqrt2OverPi * (v + kGeluCubic * v * v * v);
        const double t = std::tanh(u);
        const double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluCubic * v * v);
        const double dydv = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
        pdx[i] += pdo[i] * dydv;
      }
    });
  }
  return out;
}

namespace {

struct AxisWalk {
  std::size_t outer, len, inner;
};

AxisWalk axis_walk(const Shape& shape, int axis) {
  const int rank = static_cast<int>(shape.size());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw ShapeMismatch("axis out of range for shape " + shape_str(shape));
  }
  AxisWalk w{1, shape[static_cast<std::size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) w.outer *= shape[static_cast<std::size_t>(i)];
  for (int i = axis + 1; i < rank; ++i)
    w.inner *= shape[static_cast<std::size_t>(i)];
  return w;
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  const AxisWalk w = axis_walk(x.shape(), axis);
  const bool grad = want_grad({&x});
  Tensor out = make_out(x.shape(), grad);
  if (flops::count_only()) return out;

  const double* px = x.values().data();
  double* po = out.values_mut().data();
  for (std::size_t o = 0; o < w.outer; ++o) {
    for (std::size_t in = 0; in < w.inner; ++in) {
      const std::size_t base = o * w.len * w.inner + in;
      double mx = px[base];
      for (std::size_t j = 1; j < w.len; ++j)
        mx = std::max(mx, px[base + j * w.inner]);
      double sum = 0.0;
      for (std::size_t j = 0; j < w.len; ++j) {
        const double e = std::exp(px[base + j * w.inner] - mx);
        po[base + j * w.inner] = e;
        sum += e;
      }
      const double inv = 1.0 / sum;
      for (std::size_t j = 0; j < w.len; ++j) po[base + j * w.inner] *= inv;
    }
  }

  if (grad) {
    Tensor xv = x, ov = out;
    active_tape()->record("softmax", [xv, ov, w]() mutable {
      const double* py = ov.values().data();
      const double* pdy = ov.grad().data();
      double* pdx = xv.grad_mut().data();
      for (std::size_t o = 0; o < w.outer; ++o) {
        for (std::size_t in = 0; in < w.inner; ++in) {
          const std::size_t base = o * w.len * w.inner + in;
          double dot = 0.0;
          for (std::size_t j = 0; j < w.len; ++j) {
            const std::size_t p = base + j * w.inner;
            dot += pdy[p] * py[p];
          }
          for (std::size_t j = 0; j < w.len; ++j) {
            const std::size_t p = base + j * w.inner;
            pdx[p] += py[p] * (pdy[p] - dot);
          }
        }
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  if (x.rank() < 1) throw ShapeMismatch("layer_norm input must have rank >= 1");
  const std::size_t d = x.shape().back();
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw ShapeMismatch("layer_norm gain/bias must have shape [" +
                        std::to_string(d) + "]");
  }
  if (!(eps > 0.0)) throw Error("layer_norm eps must be positive");

  const bool grad = want_grad({&x, &gain, &bias});
  Tensor out = make_out(x.shape(), grad);
  if (flops::count_only()) return out;

  const std::size_t rows = x.numel() / d;
  const double* px = x.values().data();
  const double* pg = gain.values().data();
  const double* pb = bias.values().data();
  double* po = out.values_mut().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = px + r * d;
    double* orow = po + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = xr[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      orow[j] = pg[j] * ((xr[j] - mean) * inv) + pb[j];
    }
  }

  if (grad) {
    Tensor xv = x, gv = gain, bv = bias, ov = out;
    active_tape()->record("layer_norm", [xv, gv, bv, ov, rows, d,
                                         eps]() mutable {
      const double* px = xv.values().data();
      const double* pg = gv.values().data();
      const double* pdy = ov.grad().data();
      const double dn = static_cast<double>(d);
      std::vector<double> xhat(d);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = px + r * d;
        const double* dyr = pdy + r * d;
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += xr[j];
        mean /= dn;
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double c = xr[j] - mean;
          var += c * c;
        }
        var /= dn;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) xhat[j] = (xr[j] - mean) * inv;

        if (gv.requires_grad()) {
          double* pdg = gv.grad_mut().data();
          for (std::size_t j = 0; j < d; ++j) pdg[j] += dyr[j] * xhat[j];
        }
        if (bv.requires_grad()) {
          double* pdb = bv.grad_mut().data();
          for (std::size_t j = 0; j < d; ++j) pdb[j] += dyr[j];
        }
        if (xv.requires_grad()) {
          double* pdx = xv.grad_mut().data();
          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dxhat = dyr[j] * pg[j];
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * xhat[j];
          }
          mean_dxhat /= dn;
          mean_dxhat_xhat /= dn;
          double* dxr = pdx + r * d;
          for (std::size_t j = 0; j < d; ++j) {
            const double dxhat = dyr[j] * pg[j];
            dxr[j] += inv * (dxhat - mean_dxhat - xhat[j] * mean_dxhat_xhat);
          }
        }
      }
    });
  }
  return out;
}

namespace {

void check_gather_indices(const std::vector<std::size_t>& indices,
                          std::size_t n_rows) {
  std::unordered_set<std::size_t> seen;
  seen.reserve(indices.size());
  for (std::size_t idx : indices) {
    if (idx >= n_rows) {
      throw IndexOutOfRange("gather_rows index " + std::to_string(idx) +
                            " out of range [0, " + std::to_string(n_rows) +
                            ")");
    }
    if (!seen.insert(idx).second) {
      throw DuplicateIndex("gather_rows index " + std::to_string(idx) +
                           " repeated");
    }
  }
}

Tensor gather_rows_impl(const Tensor& x,
                        std::vector<std::vector<std::size_t>> lists,
                        bool shared) {
  if (x.rank() != 3) {
    throw ShapeMismatch("gather_rows expects a [B, N, d] tensor, got " +
                        shape_str(x.shape()));
  }
  const std::size_t B = x.extent(0), N = x.extent(1), d = x.extent(2);
  if (!shared && lists.size() != B) {
    throw ShapeMismatch("gather_rows: need one index list per batch element");
  }
  const std::size_t k = lists[0].size();
  for (const auto& l : lists) {
    if (l.size() != k) {
      throw ShapeMismatch("gather_rows: index lists must share one length");
    }
    check_gather_indices(l, N);
  }

  const bool grad = want_grad({&x});
  Tensor out = make_out({B, k, d}, grad);
  if (flops::count_only()) return out;

  const double* px = x.values().data();
  double* po = out.values_mut().data();
  for (std::size_t b = 0; b < B; ++b) {
    const auto& l = lists[shared ? 0 : b];
    for (std::size_t j = 0; j < k; ++j) {
      const double* src = px + (b * N + l[j]) * d;
      double* dst = po + (b * k + j) * d;
      std::copy(src, src + d, dst);
    }
  }

  if (grad) {
    Tensor xv = x, ov = out;
    active_tape()->record(
        "gather_rows",
        [xv, ov, lists = std::move(lists), shared, B, N, k, d]() mutable {
          const double* pdo = ov.grad().data();
          double* pdx = xv.grad_mut().data();
          for (std::size_t b = 0; b < B; ++b) {
            const auto& l = lists[shared ? 0 : b];
            for (std::size_t j = 0; j < k; ++j) {
              const double* src = pdo + (b * k + j) * d;
              double* dst = pdx + (b * N + l[j]) * d;
              for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
            }
          }
        });
  }
  return out;
}

}  // namespace

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& indices) {
  return gather_rows_impl(x, {indices}, /*shared=*/true);
}

Tensor gather_rows(const Tensor& x,
                   const std::vector<std::vector<std::size_t>>& per_sample) {
  return gather_rows_impl(x, per_sample, /*shared=*/false);
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.extent(0) != b.extent(0) ||
      a.extent(2) != b.extent(2)) {
    throw ShapeMismatch("concat_rows: incompatible shapes " +
                        shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t B = a.extent(0), Ta = a.extent(1), Tb = b.extent(1),
                    d = a.extent(2);
  const bool grad = want_grad({&a, &b});
  Tensor out = make_out({B, Ta + Tb, d}, grad);
  if (flops::count_only()) return out;

  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* po = out.values_mut().data();
  const std::size_t T = Ta + Tb;
  for (std::size_t bi = 0; bi < B; ++bi) {
    std::copy(pa + bi * Ta * d, pa + (bi + 1) * Ta * d, po + bi * T * d);
    std::copy(pb + bi * Tb * d, pb + (bi + 1) * Tb * d,
              po + (bi * T + Ta) * d);
  }

  if (grad) {
    Tensor av = a, bv = b, ov = out;
    active_tape()->record("concat_rows", [av, bv, ov, B, Ta, Tb, d]() mutable {
      const double* pdo = ov.grad().data();
      const std::size_t T = Ta + Tb;
      if (av.requires_grad()) {
        double* pda = av.grad_mut().data();
        for (std::size_t bi = 0; bi < B; ++bi) {
          const double* src = pdo + bi * T * d;
          double* dst = pda + bi * Ta * d;
          for (std::size_t i = 0; i < Ta * d; ++i) dst[i] += src[i];
        }
      }
      if (bv.requires_grad()) {
        double* pdb = bv.grad_mut().data();
        for (std::size_t bi = 0; bi < B; ++bi) {
          const double* src = pdo + (bi * T + Ta) * d;
          double* dst = pdb + bi * Tb * d;
          for (std::size_t i = 0; i < Tb * d; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return out;
}

Tensor slice_last(const Tensor& x, std::size_t offset, std::size_t length) {
  const std::size_t last = x.shape().back();
  if (offset + length > last) {
    throw ShapeMismatch("slice_last [" + std::to_string(offset) + ", " +
                        std::to_string(offset + length) +
                        ") exceeds extent " + std::to_string(last));
  }
  Shape out_shape = x.shape();
  out_shape.back() = length;
  const std::size_t rows = x.numel() / last;

  const bool grad = want_grad({&x});
  Tensor out = make_out(std::move(out_shape), grad);
  if (flops::count_only()) return out;

  const double* px = x.values().data();
  double* po = out.values_mut().data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(px + r * last + offset, px + r * last + offset + length,
              po + r * length);
  }

  if (grad) {
    Tensor xv = x, ov = out;
    active_tape()->record("slice_last",
                          [xv, ov, rows, last, offset, length]() mutable {
                            const double* pdo = ov.grad().data();
                            double* pdx = xv.grad_mut().data();
                            for (std::size_t r = 0; r < rows; ++r) {
                              double* dst = pdx + r * last + offset;
                              const double* src = pdo + r * length;
                              for (std::size_t j = 0; j < length; ++j)
                                dst[j] += src[j];
                            }
                          });
  }
  return out;
}

namespace {

std::vector<std::size_t> row_major_strides(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) {
    strides[i - 1] = strides[i] * shape[i];
  }
  return strides;
}

}  // namespace

Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
  const std::size_t r = x.rank();
  if (perm.size() != r) throw ShapeMismatch("permute rank mismatch");
  std::vector<bool> seen(r, false);
  for (std::size_t p : perm) {
    if (p >= r || seen[p]) throw ShapeMismatch("permute is not a permutation");
    seen[p] = true;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = x.shape()[perm[i]];

  const bool grad = want_grad({&x});
  Tensor out = make_out(out_shape, grad);
  if (flops::count_only()) return out;

  const auto in_strides = row_major_strides(x.shape());
  // stride in the input for each output axis
  std::vector<std::size_t> src_strides(r);
  for (std::size_t i = 0; i < r; ++i) src_strides[i] = in_strides[perm[i]];

  const std::size_t n = x.numel();
  const double* px = x.values().data();
  double* po = out.values_mut().data();
  std::vector<std::size_t> idx(r, 0);
  std::size_t src = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    po[flat] = px[src];
    for (std::size_t axis = r; axis-- > 0;) {
      if (++idx[axis] < out_shape[axis]) {
        src += src_strides[axis];
        break;
      }
      src -= src_strides[axis] * (out_shape[axis] - 1);
      idx[axis] = 0;
    }
  }

  if (grad) {
    Tensor xv = x, ov = out;
    active_tape()->record("permute", [xv, ov, out_shape, src_strides, r,
                                      n]() mutable {
      const double* pdo = ov.grad().data();
      double* pdx = xv.grad_mut().data();
      std::vector<std::size_t> idx(r, 0);
      std::size_t src = 0;
      for (std::size_t flat = 0; flat < n; ++flat) {
        pdx[src] += pdo[flat];
        for (std::size_t axis = r; axis-- > 0;) {
          if (++idx[axis] < out_shape[axis]) {
            src += src_strides[axis];
            break;
          }
          src -= src_strides[axis] * (out_shape[axis] - 1);
          idx[axis] = 0;
        }
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape new_shape) {
  if (shape_numel(new_shape) != x.numel()) {
    throw ShapeMismatch("reshape " + shape_str(x.shape()) + " -> " +
                        shape_str(new_shape) + " changes element count");
  }
  const bool grad = want_grad({&x});
  Tensor out = make_out(std::move(new_shape), grad);
  if (flops::count_only()) return out;

  auto src = x.values();
  std::copy(src.begin(), src.end(), out.values_mut().begin());

  if (grad) {
    Tensor xv = x, ov = out;
    active_tape()->record("reshape", [xv, ov]() mutable {
      const double* pdo = ov.grad().data();
      double* pdx = xv.grad_mut().data();
      const std::size_t n = xv.numel();
      for (std::size_t i = 0; i < n; ++i) pdx[i] += pdo[i];
    });
  }
  return out;
}

namespace {

Tensor reduce_all(const Tensor& x, bool mean) {
  const bool grad = want_grad({&x});
  Tensor out = make_out({1}, grad);
  if (flops::count_only()) return out;

  const std::size_t n = x.numel();
  const double* px = x.values().data();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += px[i];
  const double w = mean ? 1.0 / static_cast<double>(n) : 1.0;
  out.values_mut()[0] = acc * w;

  if (grad) {
    Tensor xv = x, ov = out;
    active_tape()->record(mean ? "mean_all" : "sum_all",
                          [xv, ov, n, w]() mutable {
                            const double g = ov.grad()[0] * w;
                            double* pdx = xv.grad_mut().data();
                            for (std::size_t i = 0; i < n; ++i) pdx[i] += g;
                          });
  }
  return out;
}

}  // namespace

Tensor sum_all(const Tensor& x) { return reduce_all(x, false); }
Tensor mean_all(const Tensor& x) { return reduce_all(x, true); }

}  // namespace patchdrop::ops
