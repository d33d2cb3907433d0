#include "pgs/nn.hpp"

#include <algorithm>
#include <cmath>

#include "pgs/error.hpp"
#include "pgs/simd.hpp"

namespace pgs::nn {

namespace {

void im2col(const Tensor& in, std::size_t k, std::size_t stride, std::size_t pad, std::size_t ho,
            std::size_t wo, std::vector<float>& col) {
  const std::size_t rows = in.c * k * k;
  col.assign(rows * ho * wo, 0.0f);
  for (std::size_t ci = 0; ci < in.c; ++ci) {
    const float* src = in.channel(ci);
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        float* dst = col.data() + ((ci * k + ky) * k + kx) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
          if (iy < 0 || iy >= static_cast<long>(in.h)) continue;
          const float* srow = src + static_cast<std::size_t>(iy) * in.w;
          float* drow = dst + oy * wo;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
            if (ix >= 0 && ix < static_cast<long>(in.w)) drow[ox] = srow[ix];
          }
        }
      }
    }
  }
}

void col2im(const std::vector<float>& col, std::size_t k, std::size_t stride, std::size_t pad, std::size_t ho,
            std::size_t wo, Tensor& out) {
  for (std::size_t ci = 0; ci < out.c; ++ci) {
    float* dst = out.channel(ci);
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const float* src = col.data() + ((ci * k + ky) * k + kx) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
          if (iy < 0 || iy >= static_cast<long>(out.h)) continue;
          float* drow = dst + static_cast<std::size_t>(iy) * out.w;
          const float* srow = src + oy * wo;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
            if (ix >= 0 && ix < static_cast<long>(out.w)) drow[ix] += srow[ox];
          }
        }
      }
    }
  }
}

thread_local std::vector<float> t_col;
thread_local std::vector<float> t_wT;
thread_local std::vector<float> t_pad;

// Zero border of one pixel around every plane, plus kernel read slack.
const float* pad1(const Tensor& in) {
  const std::size_t pw = in.w + 2;
  const std::size_t pplane = (in.h + 2) * pw;
  t_pad.assign(in.c * pplane + simd::kConvSlack, 0.0f);
  for (std::size_t ch = 0; ch < in.c; ++ch) {
    for (std::size_t y = 0; y < in.h; ++y) {
      std::copy_n(in.channel(ch) + y * in.w, in.w, t_pad.data() + ch * pplane + (y + 1) * pw + 1);
    }
  }
  return t_pad.data();
}

std::size_t reflect(long i, std::size_t n) {
  if (n == 1) return 0;
  const long period = 2 * (static_cast<long>(n) - 1);
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < static_cast<long>(n) ? i : period - i);
}

}  // namespace

Tensor from_image(const ImageTensor& img) {
  Tensor t(img.channels(), img.height(), img.width());
  auto src = img.data();
  const auto c = img.channels();
  for (std::size_t i = 0; i < img.pixels(); ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) t.v[ch * t.plane() + i] = src[i * c + ch];
  }
  return t;
}

ImageTensor to_image(const Tensor& t) {
  ImageTensor img(t.h, t.w, t.c);
  auto dst = img.data();
  for (std::size_t i = 0; i < t.plane(); ++i) {
    for (std::size_t ch = 0; ch < t.c; ++ch) dst[i * t.c + ch] = t.v[ch * t.plane() + i];
  }
  return img;
}

Param::Param(std::string n, std::vector<std::size_t> s) : name(std::move(n)), shape(std::move(s)) {
  std::size_t total = 1;
  for (auto d : shape) total *= d;
  value.assign(total, 0.0f);
  grad.assign(total, 0.0f);
}

void Param::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }

Conv2d::Conv2d(std::string name, std::size_t cin, std::size_t cout, std::size_t kernel, std::size_t stride)
    : cin_(cin),
      cout_(cout),
      kernel_(kernel),
      stride_(stride),
      pad_(kernel / 2),
      weight_(name + ".weight", {cout, cin, kernel, kernel}),
      bias_(name + ".bias", {cout}) {
  require(kernel % 2 == 1 && (stride == 1 || stride == 2), ErrorKind::InvalidArgument,
          "conv needs an odd kernel and stride 1 or 2");
}

void Conv2d::init(SeededRng& rng) {
  const double fan_in = static_cast<double>(cin_ * kernel_ * kernel_);
  const double bound = std::sqrt(6.0 / fan_in);
  for (auto& w : weight_.value) w = static_cast<float>((2.0 * rng.uniform() - 1.0) * bound);
  std::fill(bias_.value.begin(), bias_.value.end(), 0.0f);
}

Tensor Conv2d::forward(const Tensor& in) const {
  require(in.c == cin_, ErrorKind::ShapeMismatch, "conv input channel count mismatch");
  const auto ho = out_size(in.h);
  const auto wo = out_size(in.w);
  Tensor out(cout_, ho, wo);
  for (std::size_t o = 0; o < cout_; ++o) std::fill_n(out.channel(o), ho * wo, bias_.value[o]);
  const std::size_t kk = cin_ * kernel_ * kernel_;
  if (kernel_ == 3 && stride_ == 1) {
    simd::active().conv3x3_f32(pad1(in), cin_, in.h, in.w, weight_.value.data(), cout_, out.v.data());
    return out;
  }
  if (kernel_ == 1 && stride_ == 1) {
    simd::gemm(cout_, ho * wo, kk, weight_.value.data(), kk, in.v.data(), ho * wo, out.v.data(), ho * wo);
    return out;
  }
  im2col(in, kernel_, stride_, pad_, ho, wo, t_col);
  simd::gemm(cout_, ho * wo, kk, weight_.value.data(), kk, t_col.data(), ho * wo, out.v.data(), ho * wo);
  return out;
}

Tensor Conv2d::backward(const Tensor& in, const Tensor& dout, bool want_input_grad) {
  const auto ho = out_size(in.h);
  const auto wo = out_size(in.w);
  require(dout.c == cout_ && dout.h == ho && dout.w == wo, ErrorKind::ShapeMismatch,
          "conv output gradient shape mismatch");
  const std::size_t kk = cin_ * kernel_ * kernel_;
  const std::size_t n = ho * wo;

  for (std::size_t o = 0; o < cout_; ++o) {
    const float* d = dout.channel(o);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += d[i];
    bias_.grad[o] += static_cast<float>(s);
  }

  if (kernel_ == 3 && stride_ == 1) {
    simd::active().conv3x3_wgrad_f32(pad1(in), cin_, in.h, in.w, dout.v.data(), cout_, weight_.grad.data());
    if (!want_input_grad) return {};
    // Input gradient is the correlation of dout with the flipped, transposed kernel.
    t_wT.resize(cin_ * cout_ * 9);
    for (std::size_t o = 0; o < cout_; ++o) {
      for (std::size_t ci = 0; ci < cin_; ++ci) {
        for (std::size_t t = 0; t < 9; ++t) t_wT[(ci * cout_ + o) * 9 + 8 - t] = weight_.value[(o * cin_ + ci) * 9 + t];
      }
    }
    Tensor din(in.c, in.h, in.w);
    simd::active().conv3x3_f32(pad1(dout), cout_, in.h, in.w, t_wT.data(), cin_, din.v.data());
    return din;
  }

  const bool direct = kernel_ == 1 && stride_ == 1;
  const float* col = in.v.data();
  if (!direct) {
    im2col(in, kernel_, stride_, pad_, ho, wo, t_col);
    col = t_col.data();
  }
  simd::gemm_nt(cout_, kk, n, dout.v.data(), n, col, n, weight_.grad.data(), kk);

  if (!want_input_grad) return {};
  t_wT.resize(kk * cout_);
  for (std::size_t o = 0; o < cout_; ++o) {
    for (std::size_t r = 0; r < kk; ++r) t_wT[r * cout_ + o] = weight_.value[o * kk + r];
  }
  Tensor din(in.c, in.h, in.w);
  if (direct) {
    simd::gemm(kk, n, cout_, t_wT.data(), cout_, dout.v.data(), n, din.v.data(), n);
    return din;
  }
  std::vector<float> dcol(kk * n, 0.0f);
  simd::gemm(kk, n, cout_, t_wT.data(), cout_, dout.v.data(), n, dcol.data(), n);
  col2im(dcol, kernel_, stride_, pad_, ho, wo, din);
  return din;
}

void leaky_relu_inplace(Tensor& t) {
  for (auto& x : t.v) x = x > 0.0f ? x : kLeakySlope * x;
}

void leaky_relu_backward_inplace(const Tensor& out, Tensor& grad) {
  for (std::size_t i = 0; i < grad.v.size(); ++i) {
    if (!(out.v[i] > 0.0f)) grad.v[i] *= kLeakySlope;
  }
}

Tensor avg_pool2(const Tensor& in) {
  require(in.h % 2 == 0 && in.w % 2 == 0, ErrorKind::ShapeMismatch, "pooling needs even dimensions");
  Tensor out(in.c, in.h / 2, in.w / 2);
  for (std::size_t ch = 0; ch < in.c; ++ch) {
    const float* src = in.channel(ch);
    float* dst = out.channel(ch);
    for (std::size_t y = 0; y < out.h; ++y) {
      for (std::size_t x = 0; x < out.w; ++x) {
        const float* p = src + 2 * y * in.w + 2 * x;
        dst[y * out.w + x] = 0.25f * (p[0] + p[1] + p[in.w] + p[in.w + 1]);
      }
    }
  }
  return out;
}

Tensor avg_pool2_backward(const Tensor& dout, std::size_t h, std::size_t w) {
  Tensor din(dout.c, h, w);
  for (std::size_t ch = 0; ch < dout.c; ++ch) {
    const float* src = dout.channel(ch);
    float* dst = din.channel(ch);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) dst[y * w + x] = 0.25f * src[(y / 2) * dout.w + x / 2];
    }
  }
  return din;
}

Tensor upsample2(const Tensor& in) {
  Tensor out(in.c, in.h * 2, in.w * 2);
  for (std::size_t ch = 0; ch < in.c; ++ch) {
    const float* src = in.channel(ch);
    float* dst = out.channel(ch);
    for (std::size_t y = 0; y < out.h; ++y) {
      for (std::size_t x = 0; x < out.w; ++x) dst[y * out.w + x] = src[(y / 2) * in.w + x / 2];
    }
  }
  return out;
}

Tensor upsample2_backward(const Tensor& dout) {
  Tensor din(dout.c, dout.h / 2, dout.w / 2);
  for (std::size_t ch = 0; ch < dout.c; ++ch) {
    const float* src = dout.channel(ch);
    float* dst = din.channel(ch);
    for (std::size_t y = 0; y < dout.h; ++y) {
      for (std::size_t x = 0; x < dout.w; ++x) dst[(y / 2) * din.w + x / 2] += src[y * dout.w + x];
    }
  }
  return din;
}

Tensor concat(const Tensor& a, const Tensor& b) {
  require(a.h == b.h && a.w == b.w, ErrorKind::ShapeMismatch, "concat needs equal spatial size");
  Tensor out(a.c + b.c, a.h, a.w);
  std::copy(a.v.begin(), a.v.end(), out.v.begin());
  std::copy(b.v.begin(), b.v.end(), out.v.begin() + static_cast<long>(a.v.size()));
  return out;
}

void split(const Tensor& d, std::size_t first_channels, Tensor& da, Tensor& db) {
  da = Tensor(first_channels, d.h, d.w);
  db = Tensor(d.c - first_channels, d.h, d.w);
  std::copy(d.v.begin(), d.v.begin() + static_cast<long>(da.v.size()), da.v.begin());
  std::copy(d.v.begin() + static_cast<long>(da.v.size()), d.v.end(), db.v.begin());
}

Tensor reflect_pad_to(const Tensor& in, std::size_t factor) {
  const auto h = (in.h + factor - 1) / factor * factor;
  const auto w = (in.w + factor - 1) / factor * factor;
  if (h == in.h && w == in.w) return in;
  Tensor out(in.c, h, w);
  for (std::size_t ch = 0; ch < in.c; ++ch) {
    const float* src = in.channel(ch);
    float* dst = out.channel(ch);
    for (std::size_t y = 0; y < h; ++y) {
      const auto sy = reflect(static_cast<long>(y), in.h);
      for (std::size_t x = 0; x < w; ++x) dst[y * w + x] = src[sy * in.w + reflect(static_cast<long>(x), in.w)];
    }
  }
  return out;
}

Tensor crop(const Tensor& in, std::size_t h, std::size_t w) {
  require(h <= in.h && w <= in.w, ErrorKind::ShapeMismatch, "crop larger than tensor");
  Tensor out(in.c, h, w);
  for (std::size_t ch = 0; ch < in.c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      std::copy_n(in.channel(ch) + y * in.w, w, out.channel(ch) + y * w);
    }
  }
  return out;
}

Adam::Adam(std::vector<Param*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (auto* p : params_) {
    m_.emplace_back(p->size(), 0.0f);
    v_.emplace_back(p->size(), 0.0f);
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const double step = cfg_.lr / bc1;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = *params_[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = double(p.grad[i]) + cfg_.weight_decay * double(p.value[i]);
      m[i] = static_cast<float>(cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g);
      v[i] = static_cast<float>(cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g);
      const double denom = std::sqrt(double(v[i]) / bc2) + cfg_.eps;
      p.value[i] = static_cast<float>(double(p.value[i]) - step * double(m[i]) / denom);
    }
  }
}

}  // namespace pgs::nn
