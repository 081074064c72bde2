#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "colornet/rng.hpp"

namespace colornet {

/// Dense NCHW tensor.
template <typename T>
struct Tensor4 {
  std::size_t n = 0, c = 0, h = 0, w = 0;
  std::vector<T> values;

  Tensor4() = default;
  Tensor4(std::size_t n_, std::size_t c_, std::size_t h_, std::size_t w_, T fill = T(0))
      : n(n_), c(c_), h(h_), w(w_), values(n_ * c_ * h_ * w_, fill) {}

  std::size_t size() const { return values.size(); }
  std::size_t sample_size() const { return c * h * w; }
  bool same_dims(const Tensor4& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }

  T& at(std::size_t b, std::size_t ch, std::size_t y, std::size_t x) {
    return values[((b * c + ch) * h + y) * w + x];
  }
  T at(std::size_t b, std::size_t ch, std::size_t y, std::size_t x) const {
    return values[((b * c + ch) * h + y) * w + x];
  }
};

template <typename T>
struct Parameter {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool decay = true;

  Parameter() = default;
  Parameter(std::string name_, std::vector<std::size_t> shape_, bool decay_);
  std::size_t count() const { return value.size(); }
  void zero_grad();
};

/// 2-D convolution, stride 1, zero "same" padding, odd square kernel.
/// Weight layout: [out][in][ky][kx].
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, std::size_t in_channels, std::size_t out_channels,
         std::size_t kernel = 3);

  Tensor4<T> forward(const Tensor4<T>& x);
  /// Accumulates parameter gradients and returns dL/dx.
  Tensor4<T> backward(const Tensor4<T>& grad_out);

  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }
  std::size_t kernel() const { return k_; }

  Parameter<T> weight;
  Parameter<T> bias;

 private:
  std::string name_;
  std::size_t in_ = 0, out_ = 0, k_ = 0;
  std::size_t n_ = 0, h_ = 0, w_ = 0;
  std::vector<T> col_;
};

template <typename T>
class Relu {
 public:
  Tensor4<T> forward(const Tensor4<T>& x);
  Tensor4<T> backward(const Tensor4<T>& grad_out);

 private:
  std::vector<unsigned char> mask_;
};

/// 2x2 max pooling, stride 2. Odd trailing rows/columns are dropped.
template <typename T>
class MaxPool2 {
 public:
  Tensor4<T> forward(const Tensor4<T>& x);
  Tensor4<T> backward(const Tensor4<T>& grad_out);

 private:
  std::size_t in_n_ = 0, in_c_ = 0, in_h_ = 0, in_w_ = 0;
  std::vector<std::size_t> argmax_;
};

/// Inverted dropout: kept units are scaled by 1/(1-rate) during training, so
/// evaluation mode is the identity.
template <typename T>
class Dropout {
 public:
  Dropout() = default;
  explicit Dropout(double rate);

  Tensor4<T> forward(const Tensor4<T>& x, bool training, Rng* rng);
  Tensor4<T> backward(const Tensor4<T>& grad_out);
  double rate() const { return rate_; }

 private:
  double rate_ = 0.0;
  std::vector<T> scale_;
  bool active_ = false;
};

/// Fully connected layer over the flattened sample. Weight layout: [out][in].
/// Output has dims (n, out, 1, 1).
template <typename T>
class Dense {
 public:
  Dense() = default;
  Dense(const std::string& name, std::size_t in_features, std::size_t out_features);

  Tensor4<T> forward(const Tensor4<T>& x);
  Tensor4<T> backward(const Tensor4<T>& grad_out);

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }

  Parameter<T> weight;
  Parameter<T> bias;

 private:
  std::string name_;
  std::size_t in_ = 0, out_ = 0;
  std::size_t n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<T> input_;
};

template <typename T>
struct LossResult {
  double loss = 0.0;
  Tensor4<T> grad;
};

/// Mean softmax cross-entropy over the batch, computed in double with max
/// subtraction. grad = (softmax - onehot) / batch.
template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor4<T>& logits, std::span<const int> labels);

/// Row-wise softmax in double; rows of `logits` are samples.
template <typename T>
std::vector<double> softmax_rows(const Tensor4<T>& logits);

}  // namespace colornet
