#include "alrgan/ops.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>

#include <Eigen/Dense>

#include "alrgan/errors.hpp"
#include "node.hpp"

namespace alrgan {

using detail::grad_buffer;
using detail::make_result;
using detail::needs_grad;
using detail::Node;

namespace fault_injection {
namespace {
std::atomic<bool> g_flip_softplus{false};
}
void set_softplus_backward_sign_flip(bool on) { g_flip_softplus = on; }
bool softplus_backward_sign_flip() { return g_flip_softplus; }
}  // namespace fault_injection

namespace {

// Unfolds a [cin, h, w] image into [(cin * 9), h * w] patches for a 3x3 "same"
// convolution. `cols` must be zero-initialised.
void im2col(const double* x, std::size_t cin, std::size_t h, std::size_t w, double* cols) {
  const std::size_t plane = h * w;
  for (std::size_t ci = 0; ci < cin; ++ci)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        double* row = cols + (ci * 9 + static_cast<std::size_t>(ky * 3 + kx)) * plane;
        const int dy = ky - 1, dx = kx - 1;
        const std::size_t y0 = dy < 0 ? 1 : 0, y1 = dy > 0 ? h - 1 : h;
        const std::size_t x0 = dx < 0 ? 1 : 0, x1 = dx > 0 ? w - 1 : w;
        for (std::size_t y = y0; y < y1; ++y) {
          const double* src = x + ci * plane + (y + dy) * w + dx;
          double* dst = row + y * w;
          for (std::size_t xx = x0; xx < x1; ++xx) dst[xx] = src[xx];
        }
      }
}

// Adjoint of im2col: scatters patch gradients back onto the image gradient.
void col2im_add(const double* cols, std::size_t cin, std::size_t h, std::size_t w, double* gx) {
  const std::size_t plane = h * w;
  for (std::size_t ci = 0; ci < cin; ++ci)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const double* row = cols + (ci * 9 + static_cast<std::size_t>(ky * 3 + kx)) * plane;
        const int dy = ky - 1, dx = kx - 1;
        const std::size_t y0 = dy < 0 ? 1 : 0, y1 = dy > 0 ? h - 1 : h;
        const std::size_t x0 = dx < 0 ? 1 : 0, x1 = dx > 0 ? w - 1 : w;
        for (std::size_t y = y0; y < y1; ++y) {
          double* dst = gx + ci * plane + (y + dy) * w + dx;
          const double* src = row + y * w;
          for (std::size_t xx = x0; xx < x1; ++xx) dst[xx] += src[xx];
        }
      }
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& x, std::size_t rank) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         to_string(x.shape()));
  }
}

// y = f(x) elementwise; dy/dx computed from (x, y).
Tensor unary(const char* op, const Tensor& x, const std::function<double(double)>& f,
             std::function<double(double, double)> df) {
  auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return make_result(op, x.shape(), std::move(out), {x}, [x, df = std::move(df)](const Node& o) {
    auto& gx = grad_buffer(x);
    auto xv = x.data();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += o.grad[i] * df(xv[i], o.data[i]);
  });
}

double stable_sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  double e = std::exp(v);
  return e / (1.0 + e);
}

double stable_softplus(double v) {
  if (v > 0) return v + std::log1p(std::exp(-v));
  return std::log1p(std::exp(v));
}

Tensor reduce_to_scalar(const char* op, const Tensor& x, double value,
                        std::function<void(const Tensor&, double)> backward) {
  return make_result(op, {}, {value}, {x},
                     [x, backward = std::move(backward)](const Node& o) { backward(x, o.grad[0]); });
}

std::size_t extreme_index(std::span<const double> v, bool want_max) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (want_max ? v[i] > v[best] : v[i] < v[best]) best = i;
  }
  return best;
}

struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

void require_axis(const char* op, const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw IndexError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for shape " +
                     to_string(x.shape()));
  }
}

}  // namespace

// ---------------------------------------------------------------- elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_result("add", a.shape(), std::move(out), {a, b}, [a, b](const Node& o) {
    if (needs_grad(a)) {
      auto& g = grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (needs_grad(b)) {
      auto& g = grad_buffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_result("sub", a.shape(), std::move(out), {a, b}, [a, b](const Node& o) {
    if (needs_grad(a)) {
      auto& g = grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (needs_grad(b)) {
      auto& g = grad_buffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result("mul", a.shape(), std::move(out), {a, b}, [a, b](const Node& o) {
    if (needs_grad(a)) {
      auto& g = grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * b[i];
    }
    if (needs_grad(b)) {
      auto& g = grad_buffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * a[i];
    }
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape("div", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] / b[i];
  return make_result("div", a.shape(), std::move(out), {a, b}, [a, b](const Node& o) {
    if (needs_grad(a)) {
      auto& g = grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] / b[i];
    }
    if (needs_grad(b)) {
      auto& g = grad_buffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i] * o.data[i] / b[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  return unary("scale", x, [factor](double v) { return factor * v; },
               [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return unary("add_scalar", x, [offset](double v) { return v + offset; },
               [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor abs(const Tensor& x) {
  return unary("abs", x, [](double v) { return std::fabs(v); },
               [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor exp(const Tensor& x) {
  return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log_clamped(const Tensor& x, double lo, double hi) {
  return unary("log_clamped", x, [lo, hi](double v) { return std::log(std::clamp(v, lo, hi)); },
               [lo, hi](double v, double) { return (v < lo || v > hi) ? 0.0 : 1.0 / v; });
}

Tensor sqrt(const Tensor& x) {
  return unary("sqrt", x, [](double v) { return std::sqrt(v); },
               [](double, double y) { return y > 0 ? 0.5 / y : 0.0; });
}

Tensor softplus(const Tensor& x) {
  return unary("softplus", x, stable_softplus, [](double v, double) {
    double d = stable_sigmoid(v);
    return fault_injection::softplus_backward_sign_flip() ? -d : d;
  });
}

Tensor sigmoid(const Tensor& x) {
  return unary("sigmoid", x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary("tanh", x, [](double v) { return std::tanh(v); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor leaky_relu(const Tensor& x, double negative_slope) {
  return unary("leaky_relu", x, [negative_slope](double v) { return v > 0 ? v : negative_slope * v; },
               [negative_slope](double v, double) { return v > 0 ? 1.0 : negative_slope; });
}

// ----------------------------------------------------------------- reductions

Tensor sum(const Tensor& x) {
  double s = 0;
  for (double v : x.data()) s += v;
  return reduce_to_scalar("sum", x, s, [](const Tensor& in, double g) {
    for (auto& gi : grad_buffer(in)) gi += g;
  });
}

Tensor mean(const Tensor& x) {
  double s = 0;
  for (double v : x.data()) s += v;
  const double n = static_cast<double>(x.size());
  return reduce_to_scalar("mean", x, s / n, [n](const Tensor& in, double g) {
    for (auto& gi : grad_buffer(in)) gi += g / n;
  });
}

Tensor l1_norm(const Tensor& x) {
  double s = 0;
  for (double v : x.data()) s += std::fabs(v);
  return reduce_to_scalar("l1_norm", x, s, [](const Tensor& in, double g) {
    auto& gx = grad_buffer(in);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      double v = in[i];
      gx[i] += g * (v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0));
    }
  });
}

Tensor frobenius_norm(const Tensor& x) {
  double s = 0;
  for (double v : x.data()) s += v * v;
  const double norm = std::sqrt(s);
  return reduce_to_scalar("frobenius_norm", x, norm, [norm](const Tensor& in, double g) {
    if (norm == 0.0) return;
    auto& gx = grad_buffer(in);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * in[i] / norm;
  });
}

Tensor max_all(const Tensor& x) {
  auto idx = extreme_index(x.data(), true);
  return reduce_to_scalar("max_all", x, x[idx], [idx](const Tensor& in, double g) {
    grad_buffer(in)[idx] += g;
  });
}

Tensor min_all(const Tensor& x) {
  auto idx = extreme_index(x.data(), false);
  return reduce_to_scalar("min_all", x, x[idx], [idx](const Tensor& in, double g) {
    grad_buffer(in)[idx] += g;
  });
}

Tensor sum_axis(const Tensor& x, std::size_t axis) {
  require_rank("sum_axis", x, 2);
  require_axis("sum_axis", x, axis);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  const std::size_t n = axis == 0 ? cols : rows;
  std::vector<double> out(n, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[axis == 0 ? c : r] += x[r * cols + c];
  return make_result("sum_axis", {n}, std::move(out), {x}, [x, axis, rows, cols](const Node& o) {
    auto& gx = grad_buffer(x);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += o.grad[axis == 0 ? c : r];
  });
}

Tensor max_axis(const Tensor& x, std::size_t axis) {
  require_rank("max_axis", x, 2);
  require_axis("max_axis", x, axis);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  const std::size_t n = axis == 0 ? cols : rows;
  std::vector<double> out(n);
  std::vector<std::size_t> arg(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t best = axis == 0 ? k : k * cols;
    const std::size_t len = axis == 0 ? rows : cols;
    const std::size_t stride = axis == 0 ? cols : 1;
    for (std::size_t j = 1; j < len; ++j) {
      std::size_t at = (axis == 0 ? k : k * cols) + j * stride;
      if (x[at] > x[best]) best = at;
    }
    arg[k] = best;
    out[k] = x[best];
  }
  return make_result("max_axis", {n}, std::move(out), {x}, [x, arg](const Node& o) {
    auto& gx = grad_buffer(x);
    for (std::size_t k = 0; k < arg.size(); ++k) gx[arg[k]] += o.grad[k];
  });
}

Tensor softmax_axis(const Tensor& x, std::size_t axis) {
  require_axis("softmax_axis", x, axis);
  const auto s = split_at(x.shape(), axis);
  std::vector<double> out(x.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.len * s.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < s.len; ++j) mx = std::max(mx, x[base + j * s.inner]);
      double total = 0;
      for (std::size_t j = 0; j < s.len; ++j) {
        double e = std::exp(x[base + j * s.inner] - mx);
        out[base + j * s.inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < s.len; ++j) out[base + j * s.inner] /= total;
    }
  }
  return make_result("softmax_axis", x.shape(), std::move(out), {x}, [x, s](const Node& o) {
    auto& gx = grad_buffer(x);
    for (std::size_t a = 0; a < s.outer; ++a) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = a * s.len * s.inner + i;
        double dot = 0;
        for (std::size_t j = 0; j < s.len; ++j) {
          auto at = base + j * s.inner;
          dot += o.grad[at] * o.data[at];
        }
        for (std::size_t j = 0; j < s.len; ++j) {
          auto at = base + j * s.inner;
          gx[at] += o.data[at] * (o.grad[at] - dot);
        }
      }
    }
  });
}

Tensor log_softmax_axis(const Tensor& x, std::size_t axis) {
  require_axis("log_softmax_axis", x, axis);
  const auto s = split_at(x.shape(), axis);
  std::vector<double> out(x.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.len * s.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < s.len; ++j) mx = std::max(mx, x[base + j * s.inner]);
      double total = 0;
      for (std::size_t j = 0; j < s.len; ++j) total += std::exp(x[base + j * s.inner] - mx);
      const double lse = mx + std::log(total);
      for (std::size_t j = 0; j < s.len; ++j) out[base + j * s.inner] = x[base + j * s.inner] - lse;
    }
  }
  return make_result("log_softmax_axis", x.shape(), std::move(out), {x}, [x, s](const Node& o) {
    auto& gx = grad_buffer(x);
    for (std::size_t a = 0; a < s.outer; ++a) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = a * s.len * s.inner + i;
        double total = 0;
        for (std::size_t j = 0; j < s.len; ++j) total += o.grad[base + j * s.inner];
        for (std::size_t j = 0; j < s.len; ++j) {
          auto at = base + j * s.inner;
          gx[at] += o.grad[at] - std::exp(o.data[at]) * total;
        }
      }
    }
  });
}

// ------------------------------------------------------------- linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + to_string(a.shape()) + " by " +
                         to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const double* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  return make_result("matmul", {m, n}, std::move(out), {a, b}, [a, b, m, k, n](const Node& o) {
    const double* g = o.grad.data();
    if (needs_grad(a)) {
      auto& ga = grad_buffer(a);
      auto bv = b.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[p * n + j];
          ga[i * k + p] += acc;
        }
    }
    if (needs_grad(b)) {
      auto& gb = grad_buffer(b);
      auto av = a.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
    }
  });
}

Tensor transpose(const Tensor& x) {
  require_rank("transpose", x, 2);
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  return make_result("transpose", {c, r}, std::move(out), {x}, [x, r, c](const Node& o) {
    auto& gx = grad_buffer(x);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += o.grad[j * r + i];
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank("linear(weight)", w, 2);
  const std::size_t out_dim = w.dim(0), in_dim = w.dim(1);
  if (b.size() != out_dim) {
    throw DimensionError("linear: bias " + to_string(b.shape()) + " does not match weight " +
                         to_string(w.shape()));
  }
  const bool vector_input = x.rank() == 1;
  if (!(vector_input || x.rank() == 2) || x.shape().back() != in_dim) {
    throw DimensionError("linear: input " + to_string(x.shape()) + " does not match weight " +
                         to_string(w.shape()));
  }
  const std::size_t n = vector_input ? 1 : x.dim(0);
  std::vector<double> out(n * out_dim);
  auto xv = x.data();
  auto wv = w.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t o = 0; o < out_dim; ++o) {
      double acc = b[o];
      for (std::size_t k = 0; k < in_dim; ++k) acc += xv[i * in_dim + k] * wv[o * in_dim + k];
      out[i * out_dim + o] = acc;
    }
  }
  Shape shape = vector_input ? Shape{out_dim} : Shape{n, out_dim};
  return make_result("linear", std::move(shape), std::move(out), {x, w, b},
                     [x, w, b, n, in_dim, out_dim](const Node& o) {
                       const double* g = o.grad.data();
                       if (needs_grad(x)) {
                         auto& gx = grad_buffer(x);
                         auto wv = w.data();
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t oo = 0; oo < out_dim; ++oo) {
                             const double gi = g[i * out_dim + oo];
                             for (std::size_t k = 0; k < in_dim; ++k) gx[i * in_dim + k] += gi * wv[oo * in_dim + k];
                           }
                       }
                       if (needs_grad(w)) {
                         auto& gw = grad_buffer(w);
                         auto xv = x.data();
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t oo = 0; oo < out_dim; ++oo) {
                             const double gi = g[i * out_dim + oo];
                             for (std::size_t k = 0; k < in_dim; ++k) gw[oo * in_dim + k] += gi * xv[i * in_dim + k];
                           }
                       }
                       if (needs_grad(b)) {
                         auto& gb = grad_buffer(b);
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t oo = 0; oo < out_dim; ++oo) gb[oo] += g[i * out_dim + oo];
                       }
                     });
}

Tensor normalize_columns(const Tensor& x, double eps) {
  require_rank("normalize_columns", x, 2);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<double> norms(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) norms[c] += x[r * cols + c] * x[r * cols + c];
  for (auto& n : norms) n = std::max(std::sqrt(n), eps);
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[r * cols + c] / norms[c];
  return make_result("normalize_columns", x.shape(), std::move(out), {x},
                     [x, norms, rows, cols, eps](const Node& o) {
                       auto& gx = grad_buffer(x);
                       for (std::size_t c = 0; c < cols; ++c) {
                         const bool floored = norms[c] <= eps;
                         double dot = 0;
                         if (!floored)
                           for (std::size_t r = 0; r < rows; ++r) dot += o.grad[r * cols + c] * o.data[r * cols + c];
                         for (std::size_t r = 0; r < rows; ++r) {
                           auto at = r * cols + c;
                           gx[at] += (o.grad[at] - o.data[at] * dot) / norms[c];
                         }
                       }
                     });
}

Tensor diagonal(const Tensor& x) {
  require_rank("diagonal", x, 2);
  if (x.dim(0) != x.dim(1)) throw DimensionError("diagonal: matrix not square " + to_string(x.shape()));
  const std::size_t n = x.dim(0);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i * n + i];
  return make_result("diagonal", {n}, std::move(out), {x}, [x, n](const Node& o) {
    auto& gx = grad_buffer(x);
    for (std::size_t i = 0; i < n; ++i) gx[i * n + i] += o.grad[i];
  });
}

// ---------------------------------------------------------------------- shape

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  return make_result("reshape", std::move(shape), x.values(), {x}, [x](const Node& o) {
    auto& gx = grad_buffer(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += o.grad[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  Shape trailing(parts[0].shape().begin() + (parts[0].rank() ? 1 : 0), parts[0].shape().end());
  std::size_t lead = 0;
  for (const auto& p : parts) {
    if (p.rank() == 0) throw DimensionError("concat: rank-0 input");
    Shape t(p.shape().begin() + 1, p.shape().end());
    if (t != trailing) {
      throw DimensionError("concat: trailing extents differ, " + to_string(parts[0].shape()) + " vs " +
                           to_string(p.shape()));
    }
    lead += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(lead * numel(trailing));
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  Shape shape{lead};
  shape.insert(shape.end(), trailing.begin(), trailing.end());
  return make_result("concat", std::move(shape), std::move(out), parts, [parts](const Node& o) {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      if (needs_grad(p)) {
        auto& g = grad_buffer(p);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[offset + i];
      }
      offset += p.size();
    }
  });
}

Tensor stack(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("stack: no inputs");
  std::vector<Tensor> lifted;
  lifted.reserve(parts.size());
  for (const auto& p : parts) {
    if (p.shape() != parts[0].shape()) {
      throw DimensionError("stack: shapes differ, " + to_string(parts[0].shape()) + " vs " +
                           to_string(p.shape()));
    }
    Shape s{1};
    s.insert(s.end(), p.shape().begin(), p.shape().end());
    lifted.push_back(reshape(p, std::move(s)));
  }
  return concat(lifted);
}

Tensor slice_columns(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank("slice_columns", x, 2);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (begin >= end || end > cols) {
    throw IndexError("slice_columns: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for shape " + to_string(x.shape()));
  }
  const std::size_t w = end - begin;
  std::vector<double> out(rows * w);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < w; ++c) out[r * w + c] = x[r * cols + begin + c];
  return make_result("slice_columns", {rows, w}, std::move(out), {x}, [x, rows, cols, w, begin](const Node& o) {
    auto& gx = grad_buffer(x);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < w; ++c) gx[r * cols + begin + c] += o.grad[r * w + c];
  });
}

Tensor pad_columns(const Tensor& x, std::size_t width) {
  require_rank("pad_columns", x, 2);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (width < cols) {
    throw DimensionError("pad_columns: target width " + std::to_string(width) + " is narrower than " +
                         to_string(x.shape()));
  }
  std::vector<double> out(rows * width, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * width + c] = x[r * cols + c];
  return make_result("pad_columns", {rows, width}, std::move(out), {x}, [x, rows, cols, width](const Node& o) {
    auto& gx = grad_buffer(x);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += o.grad[r * width + c];
  });
}

Tensor mul_channelwise(const Tensor& x, const Tensor& m) {
  if (x.rank() < 2) throw DimensionError("mul_channelwise: input must have a channel axis, got " + to_string(x.shape()));
  const std::size_t channels = x.dim(0);
  const std::size_t n = x.size() / channels;
  if (m.size() != n) {
    throw DimensionError("mul_channelwise: mask " + to_string(m.shape()) + " does not cover feature " +
                         to_string(x.shape()));
  }
  std::vector<double> out(x.size());
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t k = 0; k < n; ++k) out[c * n + k] = x[c * n + k] * m[k];
  return make_result("mul_channelwise", x.shape(), std::move(out), {x, m}, [x, m, channels, n](const Node& o) {
    if (needs_grad(x)) {
      auto& gx = grad_buffer(x);
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t k = 0; k < n; ++k) gx[c * n + k] += o.grad[c * n + k] * m[k];
    }
    if (needs_grad(m)) {
      auto& gm = grad_buffer(m);
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t k = 0; k < n; ++k) gm[k] += o.grad[c * n + k] * x[c * n + k];
    }
  });
}

// ---------------------------------------------------------------- convolution

Tensor conv3x3(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank("conv3x3(input)", x, 3);
  require_rank("conv3x3(weight)", w, 4);
  const std::size_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::size_t cout = w.dim(0);
  if (w.dim(1) != cin || w.dim(2) != 3 || w.dim(3) != 3 || b.size() != cout) {
    throw DimensionError("conv3x3: input " + to_string(x.shape()) + " incompatible with weight " +
                         to_string(w.shape()) + " and bias " + to_string(b.shape()));
  }
  const std::size_t plane = h * wd;
  const std::size_t taps = cin * 9;
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ConstMap = Eigen::Map<const RowMajor>;
  const auto rows = [](std::size_t n) { return static_cast<Eigen::Index>(n); };
  // Products run on Eigen-owned (aligned) storage so the summation order does
  // not depend on where the heap placed the operands.
  const auto owned = [&](const double* p, std::size_t r, std::size_t c) -> RowMajor {
    return ConstMap(p, rows(r), rows(c));
  };

  // cols[(ci * 9 + tap), pixel] holds the input value under that tap, or zero
  // outside the image.
  auto cols = std::make_shared<RowMajor>(RowMajor::Zero(rows(taps), rows(plane)));
  im2col(x.data().data(), cin, h, wd, cols->data());

  RowMajor out_m(rows(cout), rows(plane));
  out_m.noalias() = owned(w.data().data(), cout, taps) * *cols;
  std::vector<double> out(out_m.data(), out_m.data() + cout * plane);
  for (std::size_t co = 0; co < cout; ++co) {
    double* dst = out.data() + co * plane;
    for (std::size_t i = 0; i < plane; ++i) dst[i] += b[co];
  }

  const bool keep_cols = needs_grad(w);
  if (!keep_cols) cols.reset();
  return make_result("conv3x3", {cout, h, wd}, std::move(out), {x, w, b},
                     [x, w, b, cin, cout, h, wd, plane, taps, cols, rows, owned](const Node& o) {
                       if (needs_grad(b)) {
                         auto& gb = grad_buffer(b);
                         for (std::size_t co = 0; co < cout; ++co) {
                           double total = 0;
                           for (std::size_t i = 0; i < plane; ++i) total += o.grad[co * plane + i];
                           gb[co] += total;
                         }
                       }
                       if (!needs_grad(w) && !needs_grad(x)) return;
                       const RowMajor g = owned(o.grad.data(), cout, plane);
                       if (needs_grad(w)) {
                         RowMajor gw(rows(cout), rows(taps));
                         gw.noalias() = g * cols->transpose();
                         auto& dst = grad_buffer(w);
                         for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gw.data()[i];
                       }
                       if (needs_grad(x)) {
                         RowMajor gcols(rows(taps), rows(plane));
                         gcols.noalias() = owned(w.data().data(), cout, taps).transpose() * g;
                         col2im_add(gcols.data(), cin, h, wd, grad_buffer(x).data());
                       }
                     });
}

Tensor embedding(const Tensor& table, std::span<const std::size_t> ids) {
  require_rank("embedding", table, 2);
  const std::size_t v = table.dim(0), d = table.dim(1), t = ids.size();
  if (t == 0) throw DimensionError("embedding: empty id list");
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  std::vector<double> out(d * t);
  for (std::size_t j = 0; j < t; ++j) {
    if (rows[j] >= v) {
      throw IndexError("embedding: id " + std::to_string(rows[j]) + " outside table " + to_string(table.shape()));
    }
    for (std::size_t i = 0; i < d; ++i) out[i * t + j] = table[rows[j] * d + i];
  }
  return make_result("embedding", {d, t}, std::move(out), {table}, [table, rows, d, t](const Node& o) {
    auto& g = grad_buffer(table);
    for (std::size_t j = 0; j < t; ++j)
      for (std::size_t i = 0; i < d; ++i) g[rows[j] * d + i] += o.grad[i * t + j];
  });
}

Tensor upsample_nearest2x(const Tensor& x) {
  require_rank("upsample_nearest2x", x, 3);
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t oh = 2 * h, ow = 2 * w;
  std::vector<double> out(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx)
        out[(ch * oh + y) * ow + xx] = x[(ch * h + y / 2) * w + xx / 2];
  return make_result("upsample_nearest2x", {c, oh, ow}, std::move(out), {x}, [x, c, h, w](const Node& o) {
    auto& gx = grad_buffer(x);
    const std::size_t oh = 2 * h, ow = 2 * w;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) gx[(ch * h + y / 2) * w + xx / 2] += o.grad[(ch * oh + y) * ow + xx];
  });
}

Tensor avg_pool2x2(const Tensor& x) {
  require_rank("avg_pool2x2", x, 3);
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h % 2 || w % 2) throw DimensionError("avg_pool2x2: odd spatial extent in " + to_string(x.shape()));
  const std::size_t oh = h / 2, ow = w / 2;
  std::vector<double> out(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx) {
        const std::size_t base = (ch * h + 2 * y) * w + 2 * xx;
        out[(ch * oh + y) * ow + xx] = 0.25 * (x[base] + x[base + 1] + x[base + w] + x[base + w + 1]);
      }
  return make_result("avg_pool2x2", {c, oh, ow}, std::move(out), {x}, [x, c, h, w](const Node& o) {
    auto& gx = grad_buffer(x);
    const std::size_t oh = h / 2, ow = w / 2;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          const double g = 0.25 * o.grad[(ch * oh + y) * ow + xx];
          const std::size_t base = (ch * h + 2 * y) * w + 2 * xx;
          gx[base] += g;
          gx[base + 1] += g;
          gx[base + w] += g;
          gx[base + w + 1] += g;
        }
  });
}

}  // namespace alrgan
