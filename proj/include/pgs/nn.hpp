#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pgs/image.hpp"
#include "pgs/rng.hpp"

namespace pgs::nn {

/// Planar C x H x W activations.
struct Tensor {
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<float> v;

  Tensor() = default;
  Tensor(std::size_t channels, std::size_t height, std::size_t width, float fill = 0.0f)
      : c(channels), h(height), w(width), v(channels * height * width, fill) {}

  std::size_t plane() const noexcept { return h * w; }
  float* channel(std::size_t ch) noexcept { return v.data() + ch * plane(); }
  const float* channel(std::size_t ch) const noexcept { return v.data() + ch * plane(); }
  bool same_shape(const Tensor& o) const noexcept { return c == o.c && h == o.h && w == o.w; }
};

Tensor from_image(const ImageTensor& img);
ImageTensor to_image(const Tensor& t);

/// Trainable parameter with its gradient accumulator.
struct Param {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> value;
  std::vector<float> grad;

  Param() = default;
  Param(std::string n, std::vector<std::size_t> s);
  std::size_t size() const noexcept { return value.size(); }
  void zero_grad();
};

/// k x k convolution, zero padding k / 2, optional stride 2.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, std::size_t cin, std::size_t cout, std::size_t kernel, std::size_t stride = 1);

  /// He-uniform weights, zero bias.
  void init(SeededRng& rng);
  Tensor forward(const Tensor& in) const;
  /// Accumulates parameter gradients; returns d/d input when `want_input_grad`.
  Tensor backward(const Tensor& in, const Tensor& dout, bool want_input_grad);

  Param& weight() noexcept { return weight_; }
  Param& bias() noexcept { return bias_; }
  std::size_t out_size(std::size_t n) const noexcept { return (n + 2 * pad_ - kernel_) / stride_ + 1; }

 private:
  std::size_t cin_ = 0;
  std::size_t cout_ = 0;
  std::size_t kernel_ = 1;
  std::size_t stride_ = 1;
  std::size_t pad_ = 0;
  Param weight_;
  Param bias_;
};

inline constexpr float kLeakySlope = 0.1f;

void leaky_relu_inplace(Tensor& t);
/// `out` is the activation output; its sign equals the input's.
void leaky_relu_backward_inplace(const Tensor& out, Tensor& grad);

Tensor avg_pool2(const Tensor& in);
Tensor avg_pool2_backward(const Tensor& dout, std::size_t h, std::size_t w);
Tensor upsample2(const Tensor& in);
Tensor upsample2_backward(const Tensor& dout);
Tensor concat(const Tensor& a, const Tensor& b);
void split(const Tensor& d, std::size_t first_channels, Tensor& da, Tensor& db);

/// Reflect-pads to a multiple of `factor`, returning the padded tensor.
Tensor reflect_pad_to(const Tensor& in, std::size_t factor);
Tensor crop(const Tensor& in, std::size_t h, std::size_t w);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-8;
};

/// Adam with L2 weight decay folded into the gradient.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Param*> params, AdamConfig cfg);

  void step();
  void zero_grad();
  void set_lr(double lr) noexcept { cfg_.lr = lr; }
  double lr() const noexcept { return cfg_.lr; }
  std::size_t steps() const noexcept { return t_; }

 private:
  std::vector<Param*> params_;
  AdamConfig cfg_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  std::size_t t_ = 0;
};

}  // namespace pgs::nn
