#include "gdvm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <cblas.h>

extern "C" void openblas_set_num_threads(int);

namespace gdvm {

namespace {

struct BlasSingleThread {
  BlasSingleThread() { openblas_set_num_threads(1); }
};
const BlasSingleThread blas_init;

// C[m x n] (+)= A[m x k] * B[k x n]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             const double* b, double* c, double beta) {
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), 1.0, a,
              static_cast<int>(k), b, static_cast<int>(n), beta, c,
              static_cast<int>(n));
}

// C[m x n] (+)= A[m x k] * B[n x k]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a,
             const double* b, double* c, double beta) {
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), 1.0, a,
              static_cast<int>(k), b, static_cast<int>(k), beta, c,
              static_cast<int>(n));
}

// C[m x n] (+)= A[k x m]^T * B[k x n]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             const double* b, double* c, double beta) {
  cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), 1.0, a,
              static_cast<int>(m), b, static_cast<int>(n), beta, c,
              static_cast<int>(n));
}

Tape* common_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = nullptr;
  for (const Tensor* t : inputs) {
    if (!t->on_tape()) continue;
    if (tape && tape != t->tape()) {
      throw ContractError("operands were recorded on different tapes");
    }
    tape = t->tape();
  }
  return tape;
}

std::vector<int> parent_ids(std::initializer_list<const Tensor*> inputs) {
  std::vector<int> ids;
  for (const Tensor* t : inputs) {
    if (t->on_tape()) ids.push_back(t->node());
  }
  return ids;
}

void add_to(std::span<double> dst, std::span<const double> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void require_equal_shapes(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

// Shared scaffolding for unary ops: y[i] = f(x[i]), dx[i] += dy[i] * dfdx(x[i], y[i]).
template <typename Fwd, typename Dfdx>
Tensor unary_op(const Tensor& x, Fwd fwd, Dfdx dfdx) {
  Tensor out(x.shape());
  const auto xs = x.values();
  auto ys = out.values();
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = fwd(xs[i]);
  if (Tape* tape = common_tape({&x})) {
    const int id = tape->record(out, parent_ids({&x}), nullptr);
    tape->set_pull(id, [x = x, out = out, dfdx]() mutable {
      auto dx = x.grad();
      const auto dy = out.grad();
      const auto xs = x.values();
      const auto ys = out.values();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * dfdx(xs[i], ys[i]);
    });
  }
  return out;
}

enum class BinaryKind { kAdd, kSub, kMul };

Tensor binary_op(const Tensor& a, const Tensor& b, BinaryKind kind, const char* name) {
  const bool a_scalar = a.size() == 1;
  const bool b_scalar = b.size() == 1;
  if (!a_scalar && !b_scalar) require_equal_shapes(a, b, name);

  const Tensor& big = b_scalar ? a : b;
  Tensor out(big.shape());
  const auto as = a.values();
  const auto bs = b.values();
  auto ys = out.values();
  const std::size_t n = ys.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double av = a_scalar ? as[0] : as[i];
    const double bv = b_scalar ? bs[0] : bs[i];
    switch (kind) {
      case BinaryKind::kAdd: ys[i] = av + bv; break;
      case BinaryKind::kSub: ys[i] = av - bv; break;
      case BinaryKind::kMul: ys[i] = av * bv; break;
    }
  }
  if (Tape* tape = common_tape({&a, &b})) {
    const int id = tape->record(out, parent_ids({&a, &b}), nullptr);
    tape->set_pull(id, [a = a, b = b, out = out, kind, a_scalar, b_scalar]() mutable {
      const auto dy = out.grad();
      const auto as = a.values();
      const auto bs = b.values();
      const std::size_t n = dy.size();
      if (a.has_grad()) {
        auto da = a.grad();
        for (std::size_t i = 0; i < n; ++i) {
          double g = dy[i];
          if (kind == BinaryKind::kMul) g *= b_scalar ? bs[0] : bs[i];
          da[a_scalar ? 0 : i] += g;
        }
      }
      if (b.has_grad()) {
        auto db = b.grad();
        for (std::size_t i = 0; i < n; ++i) {
          double g = dy[i];
          switch (kind) {
            case BinaryKind::kAdd: break;
            case BinaryKind::kSub: g = -g; break;
            case BinaryKind::kMul: g *= a_scalar ? as[0] : as[i]; break;
          }
          db[b_scalar ? 0 : i] += g;
        }
      }
    });
  }
  return out;
}

struct ConvGeometry {
  std::size_t batch = 1;
  bool batched = false;
  std::size_t c_in, h, w;
  std::size_t c_out, kh, kw;
  std::size_t oh, ow;
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& kernels, int stride,
                           const Padding2d& pad) {
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  if (pad.top < 0 || pad.left < 0 || pad.bottom < 0 || pad.right < 0) {
    throw ConfigError("conv2d: padding must be non-negative");
  }
  if (kernels.rank() != 4) {
    throw DimensionError("conv2d: kernels must be rank 4, got " + shape_str(kernels.shape()));
  }
  ConvGeometry g;
  if (input.rank() == 4) {
    g.batched = true;
    g.batch = input.shape()[0];
    g.c_in = input.shape()[1];
    g.h = input.shape()[2];
    g.w = input.shape()[3];
  } else if (input.rank() == 3) {
    g.c_in = input.shape()[0];
    g.h = input.shape()[1];
    g.w = input.shape()[2];
  } else {
    throw DimensionError("conv2d: input must be rank 3 or 4, got " + shape_str(input.shape()));
  }
  g.c_out = kernels.shape()[0];
  g.kh = kernels.shape()[2];
  g.kw = kernels.shape()[3];
  if (kernels.shape()[1] != g.c_in) {
    throw DimensionError("conv2d: kernel channels " + shape_str(kernels.shape()) +
                         " do not match input " + shape_str(input.shape()));
  }
  const std::size_t ph = g.h + static_cast<std::size_t>(pad.top + pad.bottom);
  const std::size_t pw = g.w + static_cast<std::size_t>(pad.left + pad.right);
  if (g.kh > ph || g.kw > pw) {
    throw DimensionError("conv2d: kernel " + shape_str(kernels.shape()) +
                         " larger than padded input " + shape_str(input.shape()));
  }
  g.oh = (ph - g.kh) / static_cast<std::size_t>(stride) + 1;
  g.ow = (pw - g.kw) / static_cast<std::size_t>(stride) + 1;
  return g;
}

// col is [c_in*kh*kw x oh*ow] for one sample.
void im2col(const double* x, const ConvGeometry& g, int stride, const Padding2d& pad,
            double* col) {
  const std::size_t ohw = g.oh * g.ow;
  for (std::size_t c = 0; c < g.c_in; ++c) {
    for (std::size_t r = 0; r < g.kh; ++r) {
      for (std::size_t s = 0; s < g.kw; ++s) {
        double* dst = col + ((c * g.kh + r) * g.kw + s) * ohw;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy) * stride + static_cast<long>(r) - pad.top;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox) * stride + static_cast<long>(s) - pad.left;
            const bool in = iy >= 0 && iy < static_cast<long>(g.h) && ix >= 0 &&
                            ix < static_cast<long>(g.w);
            dst[oy * g.ow + ox] =
                in ? x[(c * g.h + static_cast<std::size_t>(iy)) * g.w +
                       static_cast<std::size_t>(ix)]
                   : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeometry& g, int stride,
                const Padding2d& pad, double* dx) {
  const std::size_t ohw = g.oh * g.ow;
  for (std::size_t c = 0; c < g.c_in; ++c) {
    for (std::size_t r = 0; r < g.kh; ++r) {
      for (std::size_t s = 0; s < g.kw; ++s) {
        const double* src = col + ((c * g.kh + r) * g.kw + s) * ohw;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy) * stride + static_cast<long>(r) - pad.top;
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox) * stride + static_cast<long>(s) - pad.left;
            if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
            dx[(c * g.h + static_cast<std::size_t>(iy)) * g.w +
               static_cast<std::size_t>(ix)] += src[oy * g.ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.shape()[0];
  const std::size_t k = a.shape()[1];
  const std::size_t n = b.shape()[1];
  Tensor out({m, n});
  gemm_nn(m, n, k, a.data(), b.data(), out.data(), 0.0);
  if (Tape* tape = common_tape({&a, &b})) {
    const int id = tape->record(out, parent_ids({&a, &b}), nullptr);
    tape->set_pull(id, [a = a, b = b, out = out, m, k, n]() mutable {
      if (a.has_grad()) gemm_nt(m, k, n, out.grad().data(), b.data(), a.grad().data(), 1.0);
      if (b.has_grad()) gemm_tn(k, n, m, a.data(), out.grad().data(), b.grad().data(), 1.0);
    });
  }
  return out;
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, int stride, int padding) {
  return conv2d(input, kernels, stride, Padding2d{padding, padding, padding, padding});
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, int stride, const Padding2d& pad) {
  const ConvGeometry g = conv_geometry(input, kernels, stride, pad);
  const std::size_t ohw = g.oh * g.ow;
  const std::size_t ckk = g.c_in * g.kh * g.kw;
  const std::size_t sample_in = g.c_in * g.h * g.w;
  const std::size_t sample_out = g.c_out * ohw;

  Shape out_shape = g.batched ? Shape{g.batch, g.c_out, g.oh, g.ow}
                              : Shape{g.c_out, g.oh, g.ow};
  Tensor out(std::move(out_shape));
  std::vector<double> col(ckk * ohw);
  for (std::size_t b = 0; b < g.batch; ++b) {
    im2col(input.data() + b * sample_in, g, stride, pad, col.data());
    gemm_nn(g.c_out, ohw, ckk, kernels.data(), col.data(), out.data() + b * sample_out, 0.0);
  }

  if (Tape* tape = common_tape({&input, &kernels})) {
    const int id = tape->record(out, parent_ids({&input, &kernels}), nullptr);
    tape->set_pull(id, [input = input, kernels = kernels, out = out, g, stride, pad, ohw, ckk, sample_in, sample_out]() mutable {
      // The im2col buffer is recomputed rather than retained across the batch.
      std::vector<double> col(ckk * ohw);
      std::vector<double> dcol(ckk * ohw);
      for (std::size_t b = 0; b < g.batch; ++b) {
        const double* dout = out.grad().data() + b * sample_out;
        if (kernels.has_grad()) {
          im2col(input.data() + b * sample_in, g, stride, pad, col.data());
          gemm_nt(g.c_out, ckk, ohw, dout, col.data(), kernels.grad().data(), 1.0);
        }
        if (input.has_grad()) {
          gemm_tn(ckk, ohw, g.c_out, kernels.data(), dout, dcol.data(), 0.0);
          col2im_add(dcol.data(), g, stride, pad, input.grad().data() + b * sample_in);
        }
      }
    });
  }
  return out;
}

Tensor maxpool2d(const Tensor& input, int window, int stride) {
  if (window < 1 || stride < 1) throw ConfigError("maxpool2d: window and stride must be >= 1");
  std::size_t batch = 1, c, h, w;
  bool batched = false;
  if (input.rank() == 4) {
    batched = true;
    batch = input.shape()[0];
    c = input.shape()[1];
    h = input.shape()[2];
    w = input.shape()[3];
  } else if (input.rank() == 3) {
    c = input.shape()[0];
    h = input.shape()[1];
    w = input.shape()[2];
  } else {
    throw DimensionError("maxpool2d: input must be rank 3 or 4, got " + shape_str(input.shape()));
  }
  const std::size_t win = static_cast<std::size_t>(window);
  if (win > h || win > w) {
    throw DimensionError("maxpool2d: window " + std::to_string(window) +
                         " exceeds input extent " + shape_str(input.shape()));
  }
  const std::size_t oh = (h - win) / static_cast<std::size_t>(stride) + 1;
  const std::size_t ow = (w - win) / static_cast<std::size_t>(stride) + 1;

  Shape out_shape = batched ? Shape{batch, c, oh, ow} : Shape{c, oh, ow};
  Tensor out(std::move(out_shape));
  std::vector<std::size_t> argmax(out.size());
  const double* x = input.data();
  double* y = out.data();
  std::size_t o = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (b * c + ch) * h * w;
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
          std::size_t best = base + (oy * stride) * w + ox * stride;
          double best_v = x[best];
          for (std::size_t r = 0; r < win; ++r) {
            for (std::size_t s = 0; s < win; ++s) {
              const std::size_t idx = base + (oy * stride + r) * w + (ox * stride + s);
              if (x[idx] > best_v) {  // strict: ties keep the first row-major hit
                best_v = x[idx];
                best = idx;
              }
            }
          }
          y[o] = best_v;
          argmax[o] = best;
        }
      }
    }
  }

  if (Tape* tape = common_tape({&input})) {
    const int id = tape->record(out, parent_ids({&input}), nullptr);
    tape->set_pull(id, [input = input, out = out, argmax = std::move(argmax)]() mutable {
      auto dx = input.grad();
      const auto dy = out.grad();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax[i]] += dy[i];
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinaryKind::kAdd, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinaryKind::kSub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinaryKind::kMul, "mul"); }

Tensor relu(const Tensor& x) {
  return unary_op(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  const auto xs = x.values();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0)) {
      throw DomainError("log: non-positive value " + std::to_string(xs[i]) +
                        " at flat index " + std::to_string(i));
    }
  }
  return unary_op(
      x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor negate(const Tensor& x) {
  return unary_op(
      x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& x, double s) {
  return unary_op(
      x, [s](double v) { return s * v; }, [s](double, double) { return s; });
}

Tensor clamp(const Tensor& x, double lo, double hi, std::size_t* clip_count) {
  if (!(lo <= hi)) throw ConfigError("clamp: lo must not exceed hi");
  if (clip_count) {
    for (double v : x.values()) {
      if (v < lo || v > hi) ++*clip_count;
    }
  }
  return unary_op(
      x, [lo, hi](double v) { return std::min(std::max(v, lo), hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  Tensor out = Tensor::scalar(acc);
  if (Tape* tape = common_tape({&x})) {
    const int id = tape->record(out, parent_ids({&x}), nullptr);
    tape->set_pull(id, [x = x, out = out]() mutable {
      auto dx = x.grad();
      const double g = out.grad()[0];
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.size());
  return scale(sum(x), inv);
}

namespace {

Tensor axis_reduce(const Tensor& x, std::size_t axis, bool take_mean) {
  if (axis >= x.rank()) {
    throw DimensionError("reduce: axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(x.rank()));
  }
  const Shape& in = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= in[i];
  for (std::size_t i = axis + 1; i < in.size(); ++i) inner *= in[i];
  const std::size_t n_axis = in[axis];

  Shape out_shape;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (i != axis) out_shape.push_back(in[i]);
  }
  if (out_shape.empty()) out_shape = {1};

  Tensor out(out_shape);
  const double* xs = x.data();
  double* ys = out.data();
  const double f = take_mean ? 1.0 / static_cast<double>(n_axis) : 1.0;
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t a = 0; a < n_axis; ++a) {
      const double* row = xs + (o * n_axis + a) * inner;
      double* dst = ys + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += row[i];
    }
  }
  if (take_mean) {
    for (std::size_t i = 0; i < out.size(); ++i) ys[i] *= f;
  }
  if (Tape* tape = common_tape({&x})) {
    const int id = tape->record(out, parent_ids({&x}), nullptr);
    tape->set_pull(id, [x = x, out = out, outer, n_axis, inner, f]() mutable {
      auto dx = x.grad();
      const auto dy = out.grad();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t a = 0; a < n_axis; ++a) {
          double* row = dx.data() + (o * n_axis + a) * inner;
          const double* src = dy.data() + o * inner;
          for (std::size_t i = 0; i < inner; ++i) row[i] += f * src[i];
        }
      }
    });
  }
  return out;
}

}  // namespace

Tensor sum(const Tensor& x, std::size_t axis) { return axis_reduce(x, axis, false); }
Tensor mean(const Tensor& x, std::size_t axis) { return axis_reduce(x, axis, true); }

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
  }
  Tensor out(std::move(shape), std::vector<double>(x.values().begin(), x.values().end()));
  if (Tape* tape = common_tape({&x})) {
    const int id = tape->record(out, parent_ids({&x}), nullptr);
    tape->set_pull(id, [x = x, out = out]() mutable { add_to(x.grad(), out.grad()); });
  }
  return out;
}

Tensor add_row_bias(const Tensor& x, const Tensor& b) {
  if (x.rank() != 2 || b.rank() != 1 || b.shape()[0] != x.shape()[1]) {
    throw DimensionError("add_row_bias: shapes " + shape_str(x.shape()) + " and " +
                         shape_str(b.shape()) + " do not agree");
  }
  const std::size_t m = x.shape()[0];
  const std::size_t n = x.shape()[1];
  Tensor out(x.shape());
  const double* xs = x.data();
  const double* bs = b.data();
  double* ys = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) ys[i * n + j] = xs[i * n + j] + bs[j];
  }
  if (Tape* tape = common_tape({&x, &b})) {
    const int id = tape->record(out, parent_ids({&x, &b}), nullptr);
    tape->set_pull(id, [x = x, b = b, out = out, m, n]() mutable {
      const auto dy = out.grad();
      if (x.has_grad()) add_to(x.grad(), dy);
      if (b.has_grad()) {
        auto db = b.grad();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) db[j] += dy[i * n + j];
        }
      }
    });
  }
  return out;
}

Tensor add_channel_bias(const Tensor& x, const Tensor& b) {
  std::size_t batch = 1, c, hw;
  if (x.rank() == 4) {
    batch = x.shape()[0];
    c = x.shape()[1];
    hw = x.shape()[2] * x.shape()[3];
  } else if (x.rank() == 3) {
    c = x.shape()[0];
    hw = x.shape()[1] * x.shape()[2];
  } else {
    throw DimensionError("add_channel_bias: input must be rank 3 or 4");
  }
  if (b.rank() != 1 || b.shape()[0] != c) {
    throw DimensionError("add_channel_bias: bias " + shape_str(b.shape()) +
                         " does not match channels of " + shape_str(x.shape()));
  }
  Tensor out(x.shape());
  const double* xs = x.data();
  const double* bs = b.data();
  double* ys = out.data();
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (n * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) ys[base + i] = xs[base + i] + bs[ch];
    }
  }
  if (Tape* tape = common_tape({&x, &b})) {
    const int id = tape->record(out, parent_ids({&x, &b}), nullptr);
    tape->set_pull(id, [x = x, b = b, out = out, batch, c, hw]() mutable {
      const auto dy = out.grad();
      if (x.has_grad()) add_to(x.grad(), dy);
      if (b.has_grad()) {
        auto db = b.grad();
        for (std::size_t n = 0; n < batch; ++n) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (n * c + ch) * hw;
            double acc = 0.0;
            for (std::size_t i = 0; i < hw; ++i) acc += dy[base + i];
            db[ch] += acc;
          }
        }
      }
    });
  }
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("softmax_rows: input must be rank 2");
  const std::size_t m = x.shape()[0];
  const std::size_t n = x.shape()[1];
  Tensor out(x.shape());
  const double* xs = x.data();
  double* ys = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = xs + i * n;
    double* dst = ys + i * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      dst[j] = std::exp(row[j] - mx);
      z += dst[j];
    }
    for (std::size_t j = 0; j < n; ++j) dst[j] /= z;
  }
  if (Tape* tape = common_tape({&x})) {
    const int id = tape->record(out, parent_ids({&x}), nullptr);
    tape->set_pull(id, [x = x, out = out, m, n]() mutable {
      auto dx = x.grad();
      const auto dy = out.grad();
      const auto ys = out.values();
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += dy[i * n + j] * ys[i * n + j];
        for (std::size_t j = 0; j < n; ++j) {
          dx[i * n + j] += ys[i * n + j] * (dy[i * n + j] - dot);
        }
      }
    });
  }
  return out;
}

namespace {
constexpr double kNormGuard = 1e-12;
}

Tensor l2_normalize_rows(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("l2_normalize_rows: input must be rank 2");
  const std::size_t m = x.shape()[0];
  const std::size_t n = x.shape()[1];
  Tensor out(x.shape());
  std::vector<double> norms(m);
  const double* xs = x.data();
  double* ys = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    double n2 = 0.0;
    for (std::size_t j = 0; j < n; ++j) n2 += xs[i * n + j] * xs[i * n + j];
    norms[i] = std::sqrt(n2);
    const double r = 1.0 / (norms[i] + kNormGuard);
    for (std::size_t j = 0; j < n; ++j) ys[i * n + j] = xs[i * n + j] * r;
  }
  if (Tape* tape = common_tape({&x})) {
    const int id = tape->record(out, parent_ids({&x}), nullptr);
    tape->set_pull(id, [x = x, out = out, m, n, norms = std::move(norms)]() mutable {
      auto dx = x.grad();
      const auto dy = out.grad();
      const auto xs = x.values();
      for (std::size_t i = 0; i < m; ++i) {
        const double norm = norms[i];
        const double r = 1.0 / (norm + kNormGuard);
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += dy[i * n + j] * xs[i * n + j];
        const double coef = dot / (std::max(norm, kNormGuard) * (norm + kNormGuard) * (norm + kNormGuard));
        for (std::size_t j = 0; j < n; ++j) {
          dx[i * n + j] += r * dy[i * n + j] - coef * xs[i * n + j];
        }
      }
    });
  }
  return out;
}

}  // namespace gdvm
