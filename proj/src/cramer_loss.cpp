#include "pgs/cramer_loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pgs/error.hpp"
#include "pgs/simd.hpp"

namespace pgs {

namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

// One channel mapped through the transform, with per-pixel partials.
struct TransformedPlane {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> value;
  std::vector<double> d_alpha;
  std::vector<double> d_sigma;
};

TransformedPlane transform_channel(const ImageTensor& y, std::size_t ch, const NoiseParams& p) {
  require(p.alpha > 0.0, ErrorKind::InvalidArgument, "estimation loss needs alpha > 0");
  TransformedPlane t{y.height(), y.width(), {}, {}, {}};
  const auto n = y.pixels();
  t.value.resize(n);
  t.d_alpha.resize(n);
  t.d_sigma.resize(n);
  auto src = y.data();
  for (std::size_t i = 0; i < n; ++i) {
    const auto g = gat_partials(src[i * y.channels() + ch], p.alpha, p.sigma1);
    t.value[i] = g.value;
    t.d_alpha[i] = g.d_alpha;
    t.d_sigma[i] = g.d_sigma;
  }
  return t;
}

struct EtaTerm {
  double eta = 0.0;
  double d_alpha = 0.0;
  double d_sigma = 0.0;
  std::size_t kept = 0;
};

class TermEvaluator {
 public:
  TermEvaluator(const EstimationLossConfig& cfg, bool with_grad) : cfg_(cfg), with_grad_(with_grad) {}

  EtaTerm eval(const TransformedPlane& t, const BlockRegion& r) {
    std::vector<double> block(r.height * r.width);
    for (std::size_t i = 0; i < r.height; ++i) {
      for (std::size_t j = 0; j < r.width; ++j) {
        block[i * r.width + j] = t.value[(r.row + i) * t.width + r.col + j];
      }
    }
    EstimateOptions opts;
    opts.with_grad = with_grad_;
    if (index_ < cfg_.fixed_kept.size()) opts.fixed_kept = cfg_.fixed_kept[index_];
    ++index_;
    const auto est = estimate_sigma2(PlaneView{block, r.height, r.width}, cfg_.patch, opts);
    EtaTerm term{est.value, 0.0, 0.0, est.kept};
    if (with_grad_) {
      for (std::size_t i = 0; i < r.height; ++i) {
        for (std::size_t j = 0; j < r.width; ++j) {
          const auto src = (r.row + i) * t.width + r.col + j;
          const double g = est.grad[i * r.width + j];
          term.d_alpha += g * t.d_alpha[src];
          term.d_sigma += g * t.d_sigma[src];
        }
      }
    }
    return term;
  }

  EtaTerm from_covariance(const Matrix& cov) {
    const auto values = sym_eigenvalues(cov);
    const auto d = values.size();
    const std::size_t kept = index_ < cfg_.fixed_kept.size() ? std::clamp<std::size_t>(cfg_.fixed_kept[index_], 1, d)
                                                             : truncation_count(values);
    ++index_;
    const double eta = std::accumulate(values.begin(), values.begin() + kept, 0.0) / static_cast<double>(kept);
    return {eta, 0.0, 0.0, kept};
  }

 private:
  const EstimationLossConfig& cfg_;
  bool with_grad_;
  std::size_t index_ = 0;
};

// Patch covariances of several blocks from one pass over the image. Blocks
// anchored on the stride grid share the grid's patches, so the anchor grid is
// cut into zones at every block edge and each zone's moments are summed once.
// Entries for blocks off the grid stay empty.
std::vector<std::optional<Matrix>> shared_covariances(const TransformedPlane& t, std::span<const BlockRegion> regions,
                                                      const PatchConfig& cfg) {
  const auto p = cfg.patch_size;
  const auto s = cfg.stride;
  const auto d = cfg.dim();
  struct Span2 {
    std::size_t r0, r1, c0, c1;
  };
  std::vector<std::optional<Span2>> spans(regions.size());
  std::vector<std::size_t> row_cuts, col_cuts;
  for (std::size_t k = 0; k < regions.size(); ++k) {
    const auto& r = regions[k];
    if (r.row % s || r.col % s || r.height < p || r.width < p) continue;
    if (cfg.count(r.height, r.width) < d) continue;
    const Span2 sp{r.row / s, (r.row + r.height - p) / s + 1, r.col / s, (r.col + r.width - p) / s + 1};
    spans[k] = sp;
    row_cuts.insert(row_cuts.end(), {sp.r0, sp.r1});
    col_cuts.insert(col_cuts.end(), {sp.c0, sp.c1});
  }
  std::vector<std::optional<Matrix>> out(regions.size());
  if (row_cuts.empty()) return out;
  for (auto* cuts : {&row_cuts, &col_cuts}) {
    std::sort(cuts->begin(), cuts->end());
    cuts->erase(std::unique(cuts->begin(), cuts->end()), cuts->end());
  }

  const double shift = std::accumulate(t.value.begin(), t.value.end(), 0.0) / static_cast<double>(t.value.size());
  struct Moments {
    std::size_t n = 0;
    std::vector<double> sum;
    Matrix outer;
  };
  const auto zr = row_cuts.size() - 1;
  const auto zc = col_cuts.size() - 1;
  std::vector<Moments> zones(zr * zc);
  auto inside = [&](const Span2& sp, std::size_t i, std::size_t j) {
    return sp.r0 <= row_cuts[i] && row_cuts[i + 1] <= sp.r1 && sp.c0 <= col_cuts[j] && col_cuts[j + 1] <= sp.c1;
  };
  std::vector<double> x, xt;
  for (std::size_t i = 0; i < zr; ++i) {
    for (std::size_t j = 0; j < zc; ++j) {
      const bool needed = std::any_of(spans.begin(), spans.end(), [&](const auto& sp) { return sp && inside(*sp, i, j); });
      if (!needed) continue;
      const auto rows = row_cuts[i + 1] - row_cuts[i];
      const auto cols = col_cuts[j + 1] - col_cuts[j];
      const auto n = rows * cols;
      x.assign(n * d, 0.0);
      xt.assign(d * n, 0.0);
      Moments& z = zones[i * zc + j];
      z.n = n;
      z.sum.assign(d, 0.0);
      z.outer = Matrix(d, d);
      std::size_t row = 0;
      for (std::size_t a = row_cuts[i]; a < row_cuts[i + 1]; ++a) {
        for (std::size_t b = col_cuts[j]; b < col_cuts[j + 1]; ++b, ++row) {
          for (std::size_t u = 0; u < p; ++u) {
            const double* src = t.value.data() + (a * s + u) * t.width + b * s;
            for (std::size_t v = 0; v < p; ++v) {
              const double val = src[v] - shift;
              x[row * d + u * p + v] = val;
              xt[(u * p + v) * n + row] = val;
              z.sum[u * p + v] += val;
            }
          }
        }
      }
      simd::gemm(d, d, n, xt.data(), n, x.data(), d, z.outer.data.data(), d);
    }
  }

  for (std::size_t k = 0; k < regions.size(); ++k) {
    if (!spans[k]) continue;
    std::size_t n = 0;
    std::vector<double> sum(d, 0.0);
    Matrix cov(d, d);
    for (std::size_t i = 0; i < zr; ++i) {
      for (std::size_t j = 0; j < zc; ++j) {
        if (!inside(*spans[k], i, j)) continue;
        const auto& z = zones[i * zc + j];
        n += z.n;
        for (std::size_t q = 0; q < d; ++q) sum[q] += z.sum[q];
        for (std::size_t q = 0; q < d * d; ++q) cov.data[q] += z.outer.data[q];
      }
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    const double inv = 1.0 / static_cast<double>(n - 1);
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = a; b < d; ++b) {
        const double v = (0.5 * (cov(a, b) + cov(b, a)) - sum[a] * sum[b] * inv_n) * inv;
        cov(a, b) = v;
        cov(b, a) = v;
      }
    }
    out[k] = std::move(cov);
  }
  return out;
}

void add_unit_term(EstimationLoss& out, const EtaTerm& t, double weight) {
  const double dev = t.eta - 1.0;
  out.value += weight * dev * dev;
  out.d_alpha += weight * 2.0 * dev * t.d_alpha;
  out.d_sigma += weight * 2.0 * dev * t.d_sigma;
}

void record(EstimationLoss& out, const EtaTerm& t) {
  out.etas.push_back(t.eta);
  out.kept.push_back(t.kept);
}

BlockRegion whole(const ImageTensor& y) { return {0, 0, y.height(), y.width()}; }

EstimationLoss single_channel_loss(const ImageTensor& y, const NoiseParams& p,
                                   const EstimationLossConfig& cfg, bool with_grad) {
  require(y.channels() == 1, ErrorKind::InvalidArgument, "single-channel loss needs one channel");
  const Grain& g = cfg.grain;
  require(g.coarse || g.corners || g.halves, ErrorKind::InvalidArgument, "grain selects no terms");
  const auto t = transform_channel(y, 0, p);
  std::vector<BlockRegion> regions;
  if (g.corners) {
    for (const auto& r : corner_regions(y.height(), y.width())) regions.push_back(r);
  }
  if (g.halves) {
    for (const auto& r : half_regions(y.height(), y.width())) regions.push_back(r);
  }
  if (g.coarse) regions.push_back(whole(y));

  std::vector<std::optional<Matrix>> shared(regions.size());
  if (!with_grad) shared = shared_covariances(t, regions, cfg.patch);
  TermEvaluator ev(cfg, with_grad);
  EstimationLoss out;
  for (std::size_t k = 0; k < regions.size(); ++k) {
    const auto term = shared[k] ? ev.from_covariance(*shared[k]) : ev.eval(t, regions[k]);
    add_unit_term(out, term, 1.0);
    record(out, term);
  }
  return out;
}

EstimationLoss multi_channel_loss(const ImageTensor& y, const NoiseParams& p,
                                  const EstimationLossConfig& cfg, bool with_grad) {
  const auto c = y.channels();
  require(c >= 2, ErrorKind::InvalidArgument, "cross-channel loss needs at least two channels");
  TermEvaluator ev(cfg, with_grad);
  std::vector<EtaTerm> terms;
  std::vector<double> etas;
  for (std::size_t ch = 0; ch < c; ++ch) {
    terms.push_back(ev.eval(transform_channel(y, ch, p), whole(y)));
    etas.push_back(terms.back().eta);
  }
  const auto combo = cross_channel_combine(etas, cfg.literal_multi);
  EstimationLoss out;
  out.value = combo.value;
  for (std::size_t ch = 0; ch < c; ++ch) {
    out.d_alpha += combo.d_eta[ch] * terms[ch].d_alpha;
    out.d_sigma += combo.d_eta[ch] * terms[ch].d_sigma;
    record(out, terms[ch]);
  }
  return out;
}

}  // namespace

std::array<BlockRegion, 4> corner_regions(std::size_t height, std::size_t width) {
  require(height >= 4 && width >= 4, ErrorKind::InvalidArgument, "image too small for corner blocks");
  const auto h = ceil_div(3 * height, 4);
  const auto w = ceil_div(3 * width, 4);
  return {BlockRegion{0, 0, h, w}, BlockRegion{0, width - w, h, w}, BlockRegion{height - h, 0, h, w},
          BlockRegion{height - h, width - w, h, w}};
}

std::array<BlockRegion, 9> half_regions(std::size_t height, std::size_t width) {
  require(height >= 4 && width >= 4, ErrorKind::InvalidArgument, "image too small for half blocks");
  const auto h = ceil_div(height, 2);
  const auto w = ceil_div(width, 2);
  const std::array<std::size_t, 3> rows{0, (height - h) / 2, height - h};
  const std::array<std::size_t, 3> cols{0, (width - w) / 2, width - w};
  std::array<BlockRegion, 9> out;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) out[i * 3 + j] = {rows[i], cols[j], h, w};
  }
  return out;
}

SubBlockSet crop_corner_blocks(const ImageTensor& img) {
  SubBlockSet set;
  set.regions = corner_regions(img.height(), img.width());
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& r = set.regions[i];
    set.blocks[i] = img.crop(r.row, r.col, r.height, r.width);
  }
  return set;
}

Grain Grain::parse(const std::string& name) {
  if (name == "CG") return {true, false, false};
  if (name == "FG1") return {false, true, false};
  if (name == "CG+FG1") return {true, true, false};
  if (name == "CG+FG2") return {true, false, true};
  if (name == "CG+FG1+FG2") return {true, true, true};
  fail(ErrorKind::InvalidArgument, "unknown grain '" + name + "'");
}

std::string Grain::name() const {
  std::string s;
  auto add = [&](const char* part) {
    if (!s.empty()) s += "+";
    s += part;
  };
  if (coarse) add("CG");
  if (corners) add("FG1");
  if (halves) add("FG2");
  return s;
}

CrossChannel cross_channel_combine(std::span<const double> etas, bool literal) {
  const auto c = etas.size();
  CrossChannel out{0.0, std::vector<double>(c, 0.0)};
  // The literal ordered sum repeats each unit term (c - 1) times and each
  // pair term twice.
  const double unit_w = literal ? static_cast<double>(c - 1) : 1.0;
  const double pair_w = literal ? 2.0 : 1.0;
  for (std::size_t j = 0; j < c; ++j) {
    const double dev = etas[j] - 1.0;
    out.value += unit_w * dev * dev;
    out.d_eta[j] += unit_w * 2.0 * dev;
    for (std::size_t k = j + 1; k < c; ++k) {
      const double diff = etas[j] - etas[k];
      out.value += pair_w * diff * diff;
      out.d_eta[j] += pair_w * 2.0 * diff;
      out.d_eta[k] -= pair_w * 2.0 * diff;
    }
  }
  return out;
}

EstimationLoss gaussian_loss_detail(const ImageTensor& y, const NoiseParams& p,
                                    const EstimationLossConfig& cfg, bool with_grad) {
  p.validate();
  TermEvaluator ev(cfg, with_grad);
  EstimationLoss out;
  const double w = 1.0 / static_cast<double>(y.channels());
  for (std::size_t ch = 0; ch < y.channels(); ++ch) {
    const auto term = ev.eval(transform_channel(y, ch, p), whole(y));
    add_unit_term(out, term, w);
    record(out, term);
  }
  return out;
}

double gaussian_loss(const ImageTensor& y, const NoiseParams& p, const PatchConfig& patch) {
  EstimationLossConfig cfg;
  cfg.patch = patch;
  return gaussian_loss_detail(y, p, cfg, false).value;
}

EstimationLoss cramer_loss_detail(const ImageTensor& y, const NoiseParams& p,
                                  const EstimationLossConfig& cfg, bool with_grad) {
  p.validate();
  return y.channels() == 1 ? single_channel_loss(y, p, cfg, with_grad)
                           : multi_channel_loss(y, p, cfg, with_grad);
}

double cramer_loss_single(const ImageTensor& y, const NoiseParams& p, const EstimationLossConfig& cfg) {
  p.validate();
  return single_channel_loss(y, p, cfg, false).value;
}

double cramer_loss_multi(const ImageTensor& y, const NoiseParams& p, const EstimationLossConfig& cfg) {
  p.validate();
  return multi_channel_loss(y, p, cfg, false).value;
}

}  // namespace pgs
