#include "edgeseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "edgeseg/errors.hpp"

namespace edgeseg {

namespace {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using MatMap = Eigen::Map<RowMatrix<Scalar>>;
template <typename Scalar>
using ConstMatMap = Eigen::Map<const RowMatrix<Scalar>>;
template <typename Scalar>
using VecMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;
template <typename Scalar>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;

template <typename Scalar>
MatMap<Scalar> as_matrix(std::vector<Scalar>& v, std::size_t rows, std::size_t cols) {
  return MatMap<Scalar>(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
template <typename Scalar>
ConstMatMap<Scalar> as_matrix(const std::vector<Scalar>& v, std::size_t rows, std::size_t cols) {
  return ConstMatMap<Scalar>(v.data(), static_cast<Eigen::Index>(rows),
                             static_cast<Eigen::Index>(cols));
}
template <typename Scalar>
VecMap<Scalar> as_vector(std::vector<Scalar>& v) {
  return VecMap<Scalar>(v.data(), static_cast<Eigen::Index>(v.size()));
}
template <typename Scalar>
ConstVecMap<Scalar> as_vector(const std::vector<Scalar>& v) {
  return ConstVecMap<Scalar>(v.data(), static_cast<Eigen::Index>(v.size()));
}

template <typename Scalar>
bool tracks(const std::vector<Tensor<Scalar>>& inputs) {
  if (!GradMode::enabled()) return false;
  for (const auto& t : inputs) {
    if (t.defined() && t.requires_grad()) return true;
  }
  return false;
}

/// Builds the result tensor, attaching a tape entry when any input is tracked.
template <typename Scalar, typename Backward>
Tensor<Scalar> emit(Shape shape, std::vector<Scalar> data, std::vector<Tensor<Scalar>> inputs,
                    const char* op, Backward&& backward) {
  Tensor<Scalar> out(std::move(shape), std::move(data));
  if (tracks(inputs)) {
    auto& node = *out.node();
    node.requires_grad = true;
    node.op = op;
    for (auto& t : inputs) {
      if (t.defined()) node.inputs.push_back(t.node());
      else node.inputs.push_back(nullptr);
    }
    node.backward = std::forward<Backward>(backward);
  }
  return out;
}

/// Gradient buffer of the i-th input, or nullptr if that input is untracked.
template <typename Scalar>
std::vector<Scalar>* grad_of(TensorNode<Scalar>& out, std::size_t i) {
  auto& in = out.inputs[i];
  if (!in || !in->requires_grad) return nullptr;
  in->ensure_grad();
  return &in->grad;
}

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

template <typename Scalar>
void require_rank(const Tensor<Scalar>& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     to_string(a.shape()));
  }
}

template <typename Scalar>
std::vector<Scalar> copy_data(const Tensor<Scalar>& t) {
  return std::vector<Scalar>(t.data().begin(), t.data().end());
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a, b, "add");
  std::vector<Scalar> out = copy_data(a);
  as_vector(out) += as_vector(b.node()->data);
  return emit<Scalar>(a.shape(), std::move(out), {a, b}, "add", [](TensorNode<Scalar>& o) {
    for (std::size_t i = 0; i < 2; ++i) {
      if (auto* g = grad_of(o, i)) as_vector(*g) += as_vector(o.grad);
    }
  });
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a, b, "sub");
  std::vector<Scalar> out = copy_data(a);
  as_vector(out) -= as_vector(b.node()->data);
  return emit<Scalar>(a.shape(), std::move(out), {a, b}, "sub", [](TensorNode<Scalar>& o) {
    if (auto* g = grad_of(o, 0)) as_vector(*g) += as_vector(o.grad);
    if (auto* g = grad_of(o, 1)) as_vector(*g) -= as_vector(o.grad);
  });
}

template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a, b, "mul");
  std::vector<Scalar> out = copy_data(a);
  as_vector(out).array() *= as_vector(b.node()->data).array();
  return emit<Scalar>(a.shape(), std::move(out), {a, b}, "mul", [](TensorNode<Scalar>& o) {
    const auto& av = o.inputs[0]->data;
    const auto& bv = o.inputs[1]->data;
    if (auto* g = grad_of(o, 0)) as_vector(*g).array() += as_vector(o.grad).array() * as_vector(bv).array();
    if (auto* g = grad_of(o, 1)) as_vector(*g).array() += as_vector(o.grad).array() * as_vector(av).array();
  });
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar factor) {
  std::vector<Scalar> out = copy_data(a);
  as_vector(out) *= factor;
  return emit<Scalar>(a.shape(), std::move(out), {a}, "scale", [factor](TensorNode<Scalar>& o) {
    if (auto* g = grad_of(o, 0)) as_vector(*g) += factor * as_vector(o.grad);
  });
}

template <typename Scalar>
Tensor<Scalar> add_scalar(const Tensor<Scalar>& a, Scalar offset) {
  std::vector<Scalar> out = copy_data(a);
  as_vector(out).array() += offset;
  return emit<Scalar>(a.shape(), std::move(out), {a}, "add_scalar", [](TensorNode<Scalar>& o) {
    if (auto* g = grad_of(o, 0)) as_vector(*g) += as_vector(o.grad);
  });
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  std::vector<Scalar> out = copy_data(x);
  for (auto& v : out) v = v > Scalar(0) ? v : Scalar(0);
  return emit<Scalar>(x.shape(), std::move(out), {x}, "relu", [](TensorNode<Scalar>& o) {
    if (auto* g = grad_of(o, 0)) {
      const auto& xv = o.inputs[0]->data;
      for (std::size_t i = 0; i < xv.size(); ++i) {
        if (xv[i] > Scalar(0)) (*g)[i] += o.grad[i];
      }
    }
  });
}

template <typename Scalar>
Tensor<Scalar> gelu(const Tensor<Scalar>& x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  std::vector<Scalar> out = copy_data(x);
  for (auto& v : out) v = Scalar(0.5) * v * (Scalar(1) + std::erf(v * Scalar(inv_sqrt2)));
  return emit<Scalar>(x.shape(), std::move(out), {x}, "gelu", [](TensorNode<Scalar>& o) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt2pi = 0.39894228040143267794;
    if (auto* g = grad_of(o, 0)) {
      const auto& xv = o.inputs[0]->data;
      for (std::size_t i = 0; i < xv.size(); ++i) {
        const Scalar v = xv[i];
        const Scalar cdf = Scalar(0.5) * (Scalar(1) + std::erf(v * Scalar(inv_sqrt2)));
        const Scalar pdf = Scalar(inv_sqrt2pi) * std::exp(Scalar(-0.5) * v * v);
        (*g)[i] += o.grad[i] * (cdf + v * pdf);
      }
    }
  });
}

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner extents differ, " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  std::vector<Scalar> out(m * n);
  as_matrix(out, m, n).noalias() = a.matrix() * b.matrix();
  return emit<Scalar>(Shape{m, n}, std::move(out), {a, b}, "matmul",
                      [m, k, n](TensorNode<Scalar>& o) {
                        const auto dc = as_matrix(o.grad, m, n);
                        if (auto* g = grad_of(o, 0)) {
                          as_matrix(*g, m, k).noalias() +=
                              dc * as_matrix(o.inputs[1]->data, k, n).transpose();
                        }
                        if (auto* g = grad_of(o, 1)) {
                          as_matrix(*g, k, n).noalias() +=
                              as_matrix(o.inputs[0]->data, m, k).transpose() * dc;
                        }
                      });
}

template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<Scalar> out(m * n);
  as_matrix(out, n, m) = a.matrix().transpose();
  return emit<Scalar>(Shape{n, m}, std::move(out), {a}, "transpose", [m, n](TensorNode<Scalar>& o) {
    if (auto* g = grad_of(o, 0)) as_matrix(*g, m, n) += as_matrix(o.grad, n, m).transpose();
  });
}

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  return emit<Scalar>(std::move(shape), copy_data(a), {a}, "reshape", [](TensorNode<Scalar>& o) {
    if (auto* g = grad_of(o, 0)) as_vector(*g) += as_vector(o.grad);
  });
}

template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias) {
  require_rank(x, 2, "linear");
  require_rank(weight, 2, "linear");
  const std::size_t n = x.dim(0), cin = x.dim(1), cout = weight.dim(1);
  if (weight.dim(0) != cin) {
    throw ShapeError("linear: input " + to_string(x.shape()) + " does not match weight " +
                     to_string(weight.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{cout}) {
    throw ShapeError("linear: bias " + to_string(bias.shape()) + " does not match weight " +
                     to_string(weight.shape()));
  }
  std::vector<Scalar> out(n * cout);
  auto y = as_matrix(out, n, cout);
  y.noalias() = x.matrix() * weight.matrix();
  if (bias.defined()) y.rowwise() += as_vector(bias.node()->data).transpose();
  return emit<Scalar>(Shape{n, cout}, std::move(out), {x, weight, bias}, "linear",
                      [n, cin, cout](TensorNode<Scalar>& o) {
                        const auto dy = as_matrix(o.grad, n, cout);
                        if (auto* g = grad_of(o, 0)) {
                          as_matrix(*g, n, cin).noalias() +=
                              dy * as_matrix(o.inputs[1]->data, cin, cout).transpose();
                        }
                        if (auto* g = grad_of(o, 1)) {
                          as_matrix(*g, cin, cout).noalias() +=
                              as_matrix(o.inputs[0]->data, n, cin).transpose() * dy;
                        }
                        if (auto* g = grad_of(o, 2)) {
                          as_vector(*g) += dy.colwise().sum().transpose();
                        }
                      });
}

namespace {

struct ConvGeometry {
  std::size_t cin, h, w, kh, kw, stride, pad, oh, ow;
};

template <typename Scalar>
void im2col(const std::vector<Scalar>& x, const ConvGeometry& g, std::vector<Scalar>& cols) {
  const std::size_t spatial = g.oh * g.ow;
  cols.assign(g.cin * g.kh * g.kw * spatial, Scalar(0));
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        Scalar* row = cols.data() + ((c * g.kh + ky) * g.kw + kx) * spatial;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
            row[oy * g.ow + ox] = x[(c * g.h + static_cast<std::size_t>(iy)) * g.w +
                                    static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_add(const std::vector<Scalar>& cols, const ConvGeometry& g, std::vector<Scalar>& dx) {
  const std::size_t spatial = g.oh * g.ow;
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const Scalar* row = cols.data() + ((c * g.kh + ky) * g.kw + kx) * spatial;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
            dx[(c * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)] +=
                row[oy * g.ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias, std::size_t stride, std::size_t pad) {
  require_rank(x, 3, "conv2d");
  require_rank(weight, 4, "conv2d");
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (weight.dim(1) != x.dim(0)) {
    throw ShapeError("conv2d: input " + to_string(x.shape()) + " does not match weight " +
                     to_string(weight.shape()));
  }
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), weight.dim(2), weight.dim(3), stride, pad, 0, 0};
  if (g.h + 2 * pad < g.kh || g.w + 2 * pad < g.kw) {
    throw ShapeError("conv2d: kernel " + to_string(weight.shape()) + " larger than padded input " +
                     to_string(x.shape()) + " (pad " + std::to_string(pad) + ")");
  }
  const std::size_t cout = weight.dim(0);
  if (bias.defined() && bias.shape() != Shape{cout}) {
    throw ShapeError("conv2d: bias " + to_string(bias.shape()) + " does not match weight " +
                     to_string(weight.shape()));
  }
  g.oh = (g.h + 2 * pad - g.kh) / stride + 1;
  g.ow = (g.w + 2 * pad - g.kw) / stride + 1;
  const std::size_t spatial = g.oh * g.ow;
  const std::size_t patch = g.cin * g.kh * g.kw;

  std::vector<Scalar> cols;
  im2col(x.node()->data, g, cols);
  std::vector<Scalar> out(cout * spatial);
  auto y = as_matrix(out, cout, spatial);
  y.noalias() = as_matrix(weight.node()->data, cout, patch) * as_matrix(cols, patch, spatial);
  if (bias.defined()) y.colwise() += as_vector(bias.node()->data);

  const bool need_cols = tracks<Scalar>({weight});
  return emit<Scalar>(
      Shape{cout, g.oh, g.ow}, std::move(out), {x, weight, bias}, "conv2d",
      [g, cout, spatial, patch, saved = need_cols ? std::move(cols) : std::vector<Scalar>{}](
          TensorNode<Scalar>& o) {
        const auto dy = as_matrix(o.grad, cout, spatial);
        if (auto* gx = grad_of(o, 0)) {
          std::vector<Scalar> dcols(patch * spatial);
          as_matrix(dcols, patch, spatial).noalias() =
              as_matrix(o.inputs[1]->data, cout, patch).transpose() * dy;
          col2im_add(dcols, g, *gx);
        }
        if (auto* gw = grad_of(o, 1)) {
          as_matrix(*gw, cout, patch).noalias() +=
              dy * as_matrix(saved, patch, spatial).transpose();
        }
        if (auto* gb = grad_of(o, 2)) as_vector(*gb) += dy.rowwise().sum();
      });
}

template <typename Scalar>
Tensor<Scalar> max_pool2d(const Tensor<Scalar>& x, std::size_t kernel, std::size_t stride,
                          std::size_t pad) {
  require_rank(x, 3, "max_pool2d");
  if (kernel == 0 || stride == 0) throw ShapeError("max_pool2d: kernel and stride must be positive");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h + 2 * pad < kernel || w + 2 * pad < kernel) {
    throw ShapeError("max_pool2d: window larger than padded input " + to_string(x.shape()));
  }
  const std::size_t oh = (h + 2 * pad - kernel) / stride + 1;
  const std::size_t ow = (w + 2 * pad - kernel) / stride + 1;
  const auto& xv = x.node()->data;
  std::vector<Scalar> out(c * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        Scalar best = -std::numeric_limits<Scalar>::infinity();
        std::size_t best_index = 0;
        bool found = false;
        for (std::size_t ky = 0; ky < kernel; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            const std::size_t idx = (ch * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix);
            if (!found || xv[idx] > best) {
              best = xv[idx];
              best_index = idx;
              found = true;
            }
          }
        }
        const std::size_t o = (ch * oh + oy) * ow + ox;
        out[o] = best;
        argmax[o] = best_index;
      }
    }
  }
  return emit<Scalar>(Shape{c, oh, ow}, std::move(out), {x}, "max_pool2d",
                      [argmax = std::move(argmax)](TensorNode<Scalar>& o) {
                        if (auto* g = grad_of(o, 0)) {
                          for (std::size_t i = 0; i < argmax.size(); ++i) (*g)[argmax[i]] += o.grad[i];
                        }
                      });
}

namespace {

struct Tap {
  std::size_t lo, hi;
  double frac;  // weight of `hi`
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    std::size_t lo = static_cast<std::size_t>(src);
    if (lo > in - 1) lo = in - 1;
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps[i] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> bilinear_resize(const Tensor<Scalar>& x, std::size_t out_h, std::size_t out_w) {
  require_rank(x, 3, "bilinear_resize");
  if (out_h == 0 || out_w == 0) throw ShapeError("bilinear_resize: target extents must be positive");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h == out_h && w == out_w) {
    return emit<Scalar>(x.shape(), copy_data(x), {x}, "resize_identity", [](TensorNode<Scalar>& o) {
      if (auto* g = grad_of(o, 0)) as_vector(*g) += as_vector(o.grad);
    });
  }
  auto ty = bilinear_taps(h, out_h);
  auto tx = bilinear_taps(w, out_w);
  const auto& xv = x.node()->data;
  std::vector<Scalar> out(c * out_h * out_w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const Scalar* plane = xv.data() + ch * h * w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const Tap& a = ty[oy];
      const Scalar fy = static_cast<Scalar>(a.frac);
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const Tap& b = tx[ox];
        const Scalar fx = static_cast<Scalar>(b.frac);
        const Scalar top = plane[a.lo * w + b.lo] * (Scalar(1) - fx) + plane[a.lo * w + b.hi] * fx;
        const Scalar bottom = plane[a.hi * w + b.lo] * (Scalar(1) - fx) + plane[a.hi * w + b.hi] * fx;
        out[(ch * out_h + oy) * out_w + ox] = top * (Scalar(1) - fy) + bottom * fy;
      }
    }
  }
  return emit<Scalar>(Shape{c, out_h, out_w}, std::move(out), {x}, "bilinear_resize",
                      [c, h, w, out_h, out_w, ty = std::move(ty), tx = std::move(tx)](TensorNode<Scalar>& o) {
                        auto* g = grad_of(o, 0);
                        if (!g) return;
                        for (std::size_t ch = 0; ch < c; ++ch) {
                          Scalar* plane = g->data() + ch * h * w;
                          for (std::size_t oy = 0; oy < out_h; ++oy) {
                            const Tap& a = ty[oy];
                            const Scalar fy = static_cast<Scalar>(a.frac);
                            for (std::size_t ox = 0; ox < out_w; ++ox) {
                              const Tap& b = tx[ox];
                              const Scalar fx = static_cast<Scalar>(b.frac);
                              const Scalar d = o.grad[(ch * out_h + oy) * out_w + ox];
                              plane[a.lo * w + b.lo] += d * (Scalar(1) - fy) * (Scalar(1) - fx);
                              plane[a.lo * w + b.hi] += d * (Scalar(1) - fy) * fx;
                              plane[a.hi * w + b.lo] += d * fy * (Scalar(1) - fx);
                              plane[a.hi * w + b.hi] += d * fy * fx;
                            }
                          }
                        }
                      });
}

template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " + to_string(x.shape()));
  }
  const auto& shape = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t len = shape[axis];
  const auto& xv = x.node()->data;
  std::vector<Scalar> out(xv.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      Scalar mx = xv[base];
      for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, xv[base + k * inner]);
      Scalar total = 0;
      for (std::size_t k = 0; k < len; ++k) {
        const Scalar e = std::exp(xv[base + k * inner] - mx);
        out[base + k * inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] /= total;
    }
  }
  return emit<Scalar>(shape, std::move(out), {x}, "softmax", [outer, inner, len](TensorNode<Scalar>& o) {
    auto* g = grad_of(o, 0);
    if (!g) return;
    const auto& y = o.data;
    for (std::size_t ou = 0; ou < outer; ++ou) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = ou * len * inner + in;
        Scalar dot = 0;
        for (std::size_t k = 0; k < len; ++k) dot += o.grad[base + k * inner] * y[base + k * inner];
        for (std::size_t k = 0; k < len; ++k) {
          const std::size_t i = base + k * inner;
          (*g)[i] += y[i] * (o.grad[i] - dot);
        }
      }
    }
  });
}

template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma,
                          const Tensor<Scalar>& beta, Scalar eps) {
  require_rank(x, 2, "layer_norm");
  const std::size_t n = x.dim(0), c = x.dim(1);
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    throw ShapeError("layer_norm: affine parameters " + to_string(gamma.shape()) + "/" +
                     to_string(beta.shape()) + " do not match input " + to_string(x.shape()));
  }
  const auto xin = x.matrix();
  RowMatrix<Scalar> xhat(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c));
  std::vector<Scalar> inv_std(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = xin.row(static_cast<Eigen::Index>(r));
    const Scalar mu = row.mean();
    const Scalar var = (row.array() - mu).square().mean();
    inv_std[r] = Scalar(1) / std::sqrt(var + eps);
    xhat.row(static_cast<Eigen::Index>(r)) = (row.array() - mu) * inv_std[r];
  }
  std::vector<Scalar> out(n * c);
  as_matrix(out, n, c) = (xhat.array().rowwise() * as_vector(gamma.node()->data).transpose().array())
                             .rowwise() +
                         as_vector(beta.node()->data).transpose().array();
  return emit<Scalar>(
      x.shape(), std::move(out), {x, gamma, beta}, "layer_norm",
      [n, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](TensorNode<Scalar>& o) {
        const auto dy = as_matrix(o.grad, n, c);
        if (auto* g = grad_of(o, 0)) {
          const auto gam = as_vector(o.inputs[1]->data).transpose().array();
          auto dx = as_matrix(*g, n, c);
          for (std::size_t r = 0; r < n; ++r) {
            const auto ri = static_cast<Eigen::Index>(r);
            const Eigen::Array<Scalar, 1, Eigen::Dynamic> dxhat = dy.row(ri).array() * gam;
            const Scalar m1 = dxhat.mean();
            const Scalar m2 = (dxhat * xhat.row(ri).array()).mean();
            dx.row(ri).array() += inv_std[r] * (dxhat - m1 - xhat.row(ri).array() * m2);
          }
        }
        if (auto* g = grad_of(o, 1)) {
          as_vector(*g) += (dy.array() * xhat.array()).colwise().sum().transpose().matrix();
        }
        if (auto* g = grad_of(o, 2)) as_vector(*g) += dy.colwise().sum().transpose();
      });
}

template <typename Scalar>
Tensor<Scalar> concat(const std::vector<Tensor<Scalar>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + to_string(first));
  Shape shape = first;
  shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok) throw ShapeError("concat: incompatible shapes " + to_string(first) + " and " + to_string(s));
    shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  std::vector<Scalar> out(numel(shape));
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t width = p.shape()[axis] * inner;
    const auto& pv = p.node()->data;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * width), width,
                  out.begin() + static_cast<std::ptrdiff_t>(o * shape[axis] * inner + offset));
    }
    widths.push_back(width);
    offset += width;
  }
  const std::size_t row = shape[axis] * inner;
  return emit<Scalar>(std::move(shape), std::move(out), parts, "concat",
                      [outer, row, widths = std::move(widths)](TensorNode<Scalar>& o) {
                        std::size_t off = 0;
                        for (std::size_t i = 0; i < widths.size(); ++i) {
                          if (auto* g = grad_of(o, i)) {
                            for (std::size_t r = 0; r < outer; ++r) {
                              for (std::size_t j = 0; j < widths[i]; ++j) {
                                (*g)[r * widths[i] + j] += o.grad[r * row + off + j];
                              }
                            }
                          }
                          off += widths[i];
                        }
                      });
}

template <typename Scalar>
Tensor<Scalar> slice(const Tensor<Scalar>& x, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= x.rank()) throw ShapeError("slice: axis out of range for " + to_string(x.shape()));
  if (length == 0 || start + length > x.dim(axis)) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") exceeds axis " + std::to_string(axis) + " of " + to_string(x.shape()));
  }
  Shape shape = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t src_row = shape[axis] * inner;
  const std::size_t dst_row = length * inner;
  const std::size_t off = start * inner;
  shape[axis] = length;
  const auto& xv = x.node()->data;
  std::vector<Scalar> out(outer * dst_row);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(o * src_row + off), dst_row,
                out.begin() + static_cast<std::ptrdiff_t>(o * dst_row));
  }
  return emit<Scalar>(std::move(shape), std::move(out), {x}, "slice",
                      [outer, src_row, dst_row, off](TensorNode<Scalar>& o) {
                        if (auto* g = grad_of(o, 0)) {
                          for (std::size_t r = 0; r < outer; ++r) {
                            for (std::size_t j = 0; j < dst_row; ++j) {
                              (*g)[r * src_row + off + j] += o.grad[r * dst_row + j];
                            }
                          }
                        }
                      });
}

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x) {
  const Scalar total = as_vector(x.node()->data).sum();
  return emit<Scalar>(Shape{1}, std::vector<Scalar>{total}, {x}, "sum", [](TensorNode<Scalar>& o) {
    if (auto* g = grad_of(o, 0)) as_vector(*g).array() += o.grad[0];
  });
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& x) {
  const Scalar inv = Scalar(1) / static_cast<Scalar>(x.size());
  const Scalar total = as_vector(x.node()->data).sum() * inv;
  return emit<Scalar>(Shape{1}, std::vector<Scalar>{total}, {x}, "mean", [inv](TensorNode<Scalar>& o) {
    if (auto* g = grad_of(o, 0)) as_vector(*g).array() += o.grad[0] * inv;
  });
}

template <typename Scalar>
Tensor<Scalar> cross_entropy(const Tensor<Scalar>& logits, std::span<const int> labels) {
  if (logits.rank() < 2) throw ShapeError("cross_entropy: logits need a class axis and positions, got " + to_string(logits.shape()));
  const std::size_t k = logits.dim(0);
  const std::size_t positions = logits.size() / k;
  if (labels.size() != positions) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                     to_string(logits.shape()));
  }
  const auto& z = logits.node()->data;
  std::vector<Scalar> probs(z.size());
  double total = 0.0;
  for (std::size_t p = 0; p < positions; ++p) {
    const int label = labels[p];
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw ShapeError("cross_entropy: label " + std::to_string(label) + " outside [0, " + std::to_string(k) + ")");
    }
    Scalar mx = z[p];
    for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, z[c * positions + p]);
    Scalar denom = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const Scalar e = std::exp(z[c * positions + p] - mx);
      probs[c * positions + p] = e;
      denom += e;
    }
    for (std::size_t c = 0; c < k; ++c) probs[c * positions + p] /= denom;
    total += static_cast<double>(std::log(denom) + mx - z[static_cast<std::size_t>(label) * positions + p]);
  }
  const Scalar value = static_cast<Scalar>(total / static_cast<double>(positions));
  std::vector<int> saved_labels(labels.begin(), labels.end());
  return emit<Scalar>(Shape{1}, std::vector<Scalar>{value}, {logits}, "cross_entropy",
                      [k, positions, probs = std::move(probs), saved_labels = std::move(saved_labels)](
                          TensorNode<Scalar>& o) {
                        auto* g = grad_of(o, 0);
                        if (!g) return;
                        const Scalar s = o.grad[0] / static_cast<Scalar>(positions);
                        for (std::size_t c = 0; c < k; ++c) {
                          for (std::size_t p = 0; p < positions; ++p) {
                            const Scalar onehot = saved_labels[p] == static_cast<int>(c) ? Scalar(1) : Scalar(0);
                            (*g)[c * positions + p] += s * (probs[c * positions + p] - onehot);
                          }
                        }
                      });
}

template <typename Scalar>
Tensor<Scalar> to_tokens(const Tensor<Scalar>& x) {
  require_rank(x, 3, "to_tokens");
  return transpose(reshape(x, Shape{x.dim(0), x.dim(1) * x.dim(2)}));
}

template <typename Scalar>
Tensor<Scalar> to_map(const Tensor<Scalar>& tokens, std::size_t height, std::size_t width) {
  require_rank(tokens, 2, "to_map");
  if (tokens.dim(0) != height * width) {
    throw ShapeError("to_map: " + to_string(tokens.shape()) + " tokens do not tile " +
                     std::to_string(height) + "x" + std::to_string(width));
  }
  return reshape(transpose(tokens), Shape{tokens.dim(1), height, width});
}

#define EDGESEG_INSTANTIATE_OPS(S)                                                            \
  template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                                 \
  template Tensor<S> sub(const Tensor<S>&, const Tensor<S>&);                                 \
  template Tensor<S> mul(const Tensor<S>&, const Tensor<S>&);                                 \
  template Tensor<S> scale(const Tensor<S>&, S);                                              \
  template Tensor<S> add_scalar(const Tensor<S>&, S);                                         \
  template Tensor<S> relu(const Tensor<S>&);                                                  \
  template Tensor<S> gelu(const Tensor<S>&);                                                  \
  template Tensor<S> matmul(const Tensor<S>&, const Tensor<S>&);                              \
  template Tensor<S> transpose(const Tensor<S>&);                                             \
  template Tensor<S> reshape(const Tensor<S>&, Shape);                                        \
  template Tensor<S> linear(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);            \
  template Tensor<S> conv2d(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,             \
                            std::size_t, std::size_t);                                        \
  template Tensor<S> max_pool2d(const Tensor<S>&, std::size_t, std::size_t, std::size_t);     \
  template Tensor<S> bilinear_resize(const Tensor<S>&, std::size_t, std::size_t);             \
  template Tensor<S> softmax(const Tensor<S>&, std::size_t);                                  \
  template Tensor<S> layer_norm(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, S);     \
  template Tensor<S> concat(const std::vector<Tensor<S>>&, std::size_t);                      \
  template Tensor<S> slice(const Tensor<S>&, std::size_t, std::size_t, std::size_t);          \
  template Tensor<S> sum(const Tensor<S>&);                                                   \
  template Tensor<S> mean(const Tensor<S>&);                                                  \
  template Tensor<S> cross_entropy(const Tensor<S>&, std::span<const int>);                   \
  template Tensor<S> to_tokens(const Tensor<S>&);                                             \
  template Tensor<S> to_map(const Tensor<S>&, std::size_t, std::size_t);

EDGESEG_INSTANTIATE_OPS(float)
EDGESEG_INSTANTIATE_OPS(double)

#undef EDGESEG_INSTANTIATE_OPS

}  // namespace edgeseg
