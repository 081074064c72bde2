#include "colornet/layers.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "colornet/error.hpp"

namespace colornet {

namespace {

template <typename T>
using ColMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

[[noreturn]] void shape_error(const std::string& layer, const std::string& detail) {
  throw UsageError(layer + ": shape mismatch, " + detail);
}

std::string dims_string(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
  std::ostringstream os;
  os << '(' << n << ',' << c << ',' << h << ',' << w << ')';
  return os.str();
}

}  // namespace

template <typename T>
Parameter<T>::Parameter(std::string name_, std::vector<std::size_t> shape_, bool decay_)
    : name(std::move(name_)), shape(std::move(shape_)), decay(decay_) {
  std::size_t count = 1;
  for (auto d : shape) count *= d;
  value.assign(count, T(0));
  grad.assign(count, T(0));
}

template <typename T>
void Parameter<T>::zero_grad() {
  std::fill(grad.begin(), grad.end(), T(0));
}

template <typename T>
Conv2d<T>::Conv2d(const std::string& name, std::size_t in_channels, std::size_t out_channels,
                  std::size_t kernel)
    : weight(name + ".weight", {out_channels, in_channels, kernel, kernel}, true),
      bias(name + ".bias", {out_channels}, false),
      name_(name),
      in_(in_channels),
      out_(out_channels),
      k_(kernel) {
  if (kernel % 2 == 0) throw UsageError(name + ": kernel size must be odd");
}

template <typename T>
Tensor4<T> Conv2d<T>::forward(const Tensor4<T>& x) {
  if (x.c != in_) {
    shape_error(name_, "expected " + std::to_string(in_) + " input channels, got " +
                           dims_string(x.n, x.c, x.h, x.w));
  }
  n_ = x.n;
  h_ = x.h;
  w_ = x.w;
  const std::size_t hw = h_ * w_;
  const std::size_t rows = in_ * k_ * k_;
  const std::size_t cols = n_ * hw;
  const long pad = static_cast<long>(k_ / 2);
  col_.assign(rows * cols, T(0));
  // Column-major im2col: column j = (b, y, x), row = (ci, ky, kx).
  for (std::size_t b = 0; b < n_; ++b) {
    for (std::size_t y = 0; y < h_; ++y) {
      for (std::size_t xx = 0; xx < w_; ++xx) {
        T* col = col_.data() + (b * hw + y * w_ + xx) * rows;
        std::size_t r = 0;
        for (std::size_t ci = 0; ci < in_; ++ci) {
          const T* plane = x.values.data() + (b * in_ + ci) * hw;
          for (std::size_t ky = 0; ky < k_; ++ky) {
            const long sy = static_cast<long>(y) + static_cast<long>(ky) - pad;
            for (std::size_t kx = 0; kx < k_; ++kx, ++r) {
              const long sx = static_cast<long>(xx) + static_cast<long>(kx) - pad;
              if (sy >= 0 && sy < static_cast<long>(h_) && sx >= 0 && sx < static_cast<long>(w_)) {
                col[r] = plane[static_cast<std::size_t>(sy) * w_ + static_cast<std::size_t>(sx)];
              }
            }
          }
        }
      }
    }
  }
  Eigen::Map<const RowMat<T>> wmat(weight.value.data(), out_, rows);
  Eigen::Map<const ColMat<T>> cmat(col_.data(), rows, cols);
  const ColMat<T> out = wmat * cmat;
  Tensor4<T> y(n_, out_, h_, w_);
  for (std::size_t b = 0; b < n_; ++b) {
    for (std::size_t o = 0; o < out_; ++o) {
      T* dst = y.values.data() + (b * out_ + o) * hw;
      const T bo = bias.value[o];
      for (std::size_t p = 0; p < hw; ++p) dst[p] = out(o, b * hw + p) + bo;
    }
  }
  return y;
}

template <typename T>
Tensor4<T> Conv2d<T>::backward(const Tensor4<T>& grad_out) {
  if (grad_out.n != n_ || grad_out.c != out_ || grad_out.h != h_ || grad_out.w != w_) {
    shape_error(name_, "gradient " + dims_string(grad_out.n, grad_out.c, grad_out.h, grad_out.w) +
                           " does not match forward output");
  }
  const std::size_t hw = h_ * w_;
  const std::size_t rows = in_ * k_ * k_;
  const std::size_t cols = n_ * hw;
  RowMat<T> dy(out_, cols);
  for (std::size_t b = 0; b < n_; ++b) {
    for (std::size_t o = 0; o < out_; ++o) {
      const T* src = grad_out.values.data() + (b * out_ + o) * hw;
      for (std::size_t p = 0; p < hw; ++p) dy(o, b * hw + p) = src[p];
    }
  }
  Eigen::Map<const ColMat<T>> cmat(col_.data(), rows, cols);
  Eigen::Map<RowMat<T>> dw(weight.grad.data(), out_, rows);
  dw.noalias() += dy * cmat.transpose();
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(bias.grad.data(), out_);
  db += dy.rowwise().sum();

  Eigen::Map<const RowMat<T>> wmat(weight.value.data(), out_, rows);
  const ColMat<T> dcol = wmat.transpose() * dy;
  Tensor4<T> dx(n_, in_, h_, w_);
  const long pad = static_cast<long>(k_ / 2);
  for (std::size_t b = 0; b < n_; ++b) {
    for (std::size_t y = 0; y < h_; ++y) {
      for (std::size_t xx = 0; xx < w_; ++xx) {
        const T* col = dcol.data() + (b * hw + y * w_ + xx) * rows;
        std::size_t r = 0;
        for (std::size_t ci = 0; ci < in_; ++ci) {
          T* plane = dx.values.data() + (b * in_ + ci) * hw;
          for (std::size_t ky = 0; ky < k_; ++ky) {
            const long sy = static_cast<long>(y) + static_cast<long>(ky) - pad;
            for (std::size_t kx = 0; kx < k_; ++kx, ++r) {
              const long sx = static_cast<long>(xx) + static_cast<long>(kx) - pad;
              if (sy >= 0 && sy < static_cast<long>(h_) && sx >= 0 && sx < static_cast<long>(w_)) {
                plane[static_cast<std::size_t>(sy) * w_ + static_cast<std::size_t>(sx)] += col[r];
              }
            }
          }
        }
      }
    }
  }
  return dx;
}

template <typename T>
Tensor4<T> Relu<T>::forward(const Tensor4<T>& x) {
  Tensor4<T> y = x;
  mask_.assign(x.size(), 0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y.values[i] > T(0)) {
      mask_[i] = 1;
    } else {
      y.values[i] = T(0);
    }
  }
  return y;
}

template <typename T>
Tensor4<T> Relu<T>::backward(const Tensor4<T>& grad_out) {
  if (grad_out.size() != mask_.size()) shape_error("relu", "gradient size differs from input");
  Tensor4<T> dx = grad_out;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!mask_[i]) dx.values[i] = T(0);
  }
  return dx;
}

template <typename T>
Tensor4<T> MaxPool2<T>::forward(const Tensor4<T>& x) {
  if (x.h < 2 || x.w < 2) shape_error("maxpool", "input smaller than 2x2");
  in_n_ = x.n;
  in_c_ = x.c;
  in_h_ = x.h;
  in_w_ = x.w;
  const std::size_t oh = x.h / 2;
  const std::size_t ow = x.w / 2;
  Tensor4<T> y(x.n, x.c, oh, ow);
  argmax_.assign(y.size(), 0);
  for (std::size_t bc = 0; bc < x.n * x.c; ++bc) {
    const std::size_t base = bc * x.h * x.w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = base + (2 * oy) * x.w + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = base + (2 * oy + dy) * x.w + 2 * ox + dx;
            if (x.values[idx] > x.values[best]) best = idx;
          }
        }
        const std::size_t o = (bc * oh + oy) * ow + ox;
        y.values[o] = x.values[best];
        argmax_[o] = best;
      }
    }
  }
  return y;
}

template <typename T>
Tensor4<T> MaxPool2<T>::backward(const Tensor4<T>& grad_out) {
  if (grad_out.size() != argmax_.size()) shape_error("maxpool", "gradient size differs from output");
  Tensor4<T> dx(in_n_, in_c_, in_h_, in_w_);
  for (std::size_t i = 0; i < grad_out.size(); ++i) dx.values[argmax_[i]] += grad_out.values[i];
  return dx;
}

template <typename T>
Dropout<T>::Dropout(double rate) : rate_(rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw UsageError("dropout: rate must lie in [0,1)");
}

template <typename T>
Tensor4<T> Dropout<T>::forward(const Tensor4<T>& x, bool training, Rng* rng) {
  active_ = training && rate_ > 0.0;
  if (!active_) return x;
  if (rng == nullptr) throw UsageError("dropout: training mode requires a random source");
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate_));
  scale_.resize(x.size());
  Tensor4<T> y = x;
  for (std::size_t i = 0; i < y.size(); ++i) {
    scale_[i] = rng->uniform() < rate_ ? T(0) : keep_scale;
    y.values[i] *= scale_[i];
  }
  return y;
}

template <typename T>
Tensor4<T> Dropout<T>::backward(const Tensor4<T>& grad_out) {
  if (!active_) return grad_out;
  if (grad_out.size() != scale_.size()) shape_error("dropout", "gradient size differs from input");
  Tensor4<T> dx = grad_out;
  for (std::size_t i = 0; i < dx.size(); ++i) dx.values[i] *= scale_[i];
  return dx;
}

template <typename T>
Dense<T>::Dense(const std::string& name, std::size_t in_features, std::size_t out_features)
    : weight(name + ".weight", {out_features, in_features}, true),
      bias(name + ".bias", {out_features}, false),
      name_(name),
      in_(in_features),
      out_(out_features) {}

template <typename T>
Tensor4<T> Dense<T>::forward(const Tensor4<T>& x) {
  if (x.sample_size() != in_) {
    shape_error(name_, "expected " + std::to_string(in_) + " input features, got " +
                           dims_string(x.n, x.c, x.h, x.w));
  }
  n_ = x.n;
  c_ = x.c;
  h_ = x.h;
  w_ = x.w;
  input_ = x.values;
  Eigen::Map<const RowMat<T>> xin(input_.data(), n_, in_);
  Eigen::Map<const RowMat<T>> wmat(weight.value.data(), out_, in_);
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.value.data(), out_);
  Tensor4<T> y(n_, out_, 1, 1);
  Eigen::Map<RowMat<T>> ymat(y.values.data(), n_, out_);
  ymat.noalias() = xin * wmat.transpose();
  ymat.rowwise() += b;
  return y;
}

template <typename T>
Tensor4<T> Dense<T>::backward(const Tensor4<T>& grad_out) {
  if (grad_out.n != n_ || grad_out.sample_size() != out_) {
    shape_error(name_, "gradient " + dims_string(grad_out.n, grad_out.c, grad_out.h, grad_out.w) +
                           " does not match forward output");
  }
  Eigen::Map<const RowMat<T>> dy(grad_out.values.data(), n_, out_);
  Eigen::Map<const RowMat<T>> xin(input_.data(), n_, in_);
  Eigen::Map<RowMat<T>> dw(weight.grad.data(), out_, in_);
  dw.noalias() += dy.transpose() * xin;
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(bias.grad.data(), out_);
  db += dy.colwise().sum();
  Eigen::Map<const RowMat<T>> wmat(weight.value.data(), out_, in_);
  Tensor4<T> dx(n_, c_, h_, w_);
  Eigen::Map<RowMat<T>> dxm(dx.values.data(), n_, in_);
  dxm.noalias() = dy * wmat;
  return dx;
}

template <typename T>
std::vector<double> softmax_rows(const Tensor4<T>& logits) {
  const std::size_t k = logits.sample_size();
  std::vector<double> p(logits.n * k);
  for (std::size_t i = 0; i < logits.n; ++i) {
    const T* row = logits.values.data() + i * k;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      p[i * k + j] = std::exp(static_cast<double>(row[j]) - mx);
      sum += p[i * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) p[i * k + j] /= sum;
  }
  return p;
}

template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor4<T>& logits, std::span<const int> labels) {
  const std::size_t k = logits.sample_size();
  if (labels.size() != logits.n) {
    throw UsageError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for a batch of " + std::to_string(logits.n));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw UsageError("softmax_cross_entropy: label " + std::to_string(labels[i]) +
                       " out of range for " + std::to_string(k) + " classes");
    }
  }
  LossResult<T> res;
  res.grad = Tensor4<T>(logits.n, logits.c, logits.h, logits.w);
  if (logits.n == 0) return res;
  const double inv_n = 1.0 / static_cast<double>(logits.n);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.n; ++i) {
    const T* row = logits.values.data() + i * k;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(static_cast<double>(row[j]) - mx);
    const double log_z = mx + std::log(sum);
    const auto label = static_cast<std::size_t>(labels[i]);
    total += log_z - static_cast<double>(row[label]);
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(static_cast<double>(row[j]) - log_z);
      res.grad.values[i * k + j] = static_cast<T>((p - (j == label ? 1.0 : 0.0)) * inv_n);
    }
  }
  res.loss = total * inv_n;
  return res;
}

template struct Parameter<float>;
template struct Parameter<double>;
template class Conv2d<float>;
template class Conv2d<double>;
template class Relu<float>;
template class Relu<double>;
template class MaxPool2<float>;
template class MaxPool2<double>;
template class Dropout<float>;
template class Dropout<double>;
template class Dense<float>;
template class Dense<double>;
template LossResult<float> softmax_cross_entropy(const Tensor4<float>&, std::span<const int>);
template LossResult<double> softmax_cross_entropy(const Tensor4<double>&, std::span<const int>);
template std::vector<double> softmax_rows(const Tensor4<float>&);
template std::vector<double> softmax_rows(const Tensor4<double>&);

}  // namespace colornet
