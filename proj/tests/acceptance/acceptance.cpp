#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "pgs/bench.hpp"
#include "pgs/cramer_loss.hpp"
#include "pgs/dataset.hpp"
#include "pgs/error.hpp"
#include "pgs/masking.hpp"
#include "pgs/noise_model.hpp"
#include "pgs/revisible.hpp"
#include "pgs/trainer.hpp"
#include "pgs/variance_estimator.hpp"

using namespace pgs;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

Outcome gat_stabilization() {
  const auto t0 = Clock::now();
  const auto x = flat_ramp(256, 256);
  SeededRng root(101);
  bool ok = true;
  std::string vals;
  for (int level = 1; level <= 5; ++level) {
    const auto p = pg_level(level);
    auto rng = root.fork(level);
    const double v = estimate_sigma2(gat(corrupt_exact(x, p, rng), p));
    ok = ok && v >= 0.90 && v <= 1.10;
    vals += fmt("%s%.4f", level > 1 ? " " : "", v);
  }
  const double t = seconds_since(t0);
  return {ok && t < 10.0, fmt("sigma2 per PG level: %s; %.2fs", vals.c_str(), t)};
}

Outcome gat_round_trip() {
  const auto t0 = Clock::now();
  SeededRng rng(102);
  double worst = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double alpha = 1e-3 + 0.5 * rng.uniform();
    const double sigma = 0.1 * rng.uniform();
    // Lowest y with a nonnegative root argument.
    const double y_min = -(0.375 * alpha + sigma * sigma / alpha);
    const double y = y_min + (1.5 - y_min) * rng.uniform();
    worst = std::max(worst, std::abs(gat_inverse_value(gat_value(y, alpha, sigma), alpha, sigma) - y));
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-6 && t < 1.0, fmt("max |inverse(gat(y)) - y| = %.3g; %.3fs", worst, t)};
}

// Negative log-density of N(y; mu, Sigma) without the 2 pi constant, by
// Gaussian elimination on the dense covariance.
double dense_gaussian_nll(const std::vector<double>& y, const std::vector<double>& mu,
                          const std::vector<double>& var) {
  const auto n = y.size();
  std::vector<double> a(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) a[i * n + i] = var[i];
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = y[i] - mu[i];
  std::vector<double> b = r;
  double logdet = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double piv = a[k * n + k];
    logdet += std::log(piv);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a[i * n + k] / piv;
      for (std::size_t j = k; j < n; ++j) a[i * n + j] -= f * a[k * n + j];
      b[i] -= f * b[k];
    }
  }
  std::vector<double> z(n);
  for (std::size_t k = n; k-- > 0;) {
    double s = b[k];
    for (std::size_t j = k + 1; j < n; ++j) s -= a[k * n + j] * z[j];
    z[k] = s / a[k * n + k];
  }
  double quad = 0.0;
  for (std::size_t i = 0; i < n; ++i) quad += r[i] * z[i];
  return 0.5 * (quad + logdet);
}

Outcome nll_oracle() {
  SeededRng rng(103);
  double worst = 0.0;
  for (int it = 0; it < 1000; ++it) {
    ImageTensor y(4, 4, 1), mu(4, 4, 1), var(4, 4, 1);
    for (std::size_t i = 0; i < 16; ++i) {
      y.data()[i] = static_cast<float>(rng.uniform());
      mu.data()[i] = static_cast<float>(rng.uniform());
      var.data()[i] = static_cast<float>(1e-3 + 0.2 * rng.uniform());
    }
    const double got = nll(y, MixtureBelief{mu, var, {}});
    const auto d = [](const ImageTensor& t) { return std::vector<double>(t.data().begin(), t.data().end()); };
    const double want = dense_gaussian_nll(d(y), d(mu), d(var)) / 16.0;
    worst = std::max(worst, std::abs(got - want));
  }
  return {worst <= 1e-10, fmt("max |nll - dense oracle| = %.3g over 1000 instances", worst)};
}

struct RandomMixture {
  ImageTensor y, mu_m, var_m, mu_v, var_v;
  double lambda = 3.0;
  NoiseParams p;
};

RandomMixture random_mixture(SeededRng& rng, std::size_t n, bool zero_alpha) {
  RandomMixture m{ImageTensor(1, n, 1), ImageTensor(1, n, 1), ImageTensor(1, n, 1), ImageTensor(1, n, 1),
                  ImageTensor(1, n, 1), 3.0, {}};
  for (std::size_t i = 0; i < n; ++i) {
    m.y.data()[i] = static_cast<float>(rng.uniform());
    m.mu_m.data()[i] = static_cast<float>(0.05 + 0.9 * rng.uniform());
    m.var_m.data()[i] = static_cast<float>(1e-3 + 0.05 * rng.uniform());
    m.mu_v.data()[i] = static_cast<float>(0.05 + 0.9 * rng.uniform());
    m.var_v.data()[i] = static_cast<float>(1e-3 + 0.05 * rng.uniform());
  }
  m.lambda = 1.0 + 10.0 * rng.uniform();
  m.p = {zero_alpha ? 0.0 : 0.005 + 0.1 * rng.uniform(), 0.005 + 0.05 * rng.uniform(),
         0.005 + 0.05 * rng.uniform()};
  return m;
}

// Independent per-sample mixture for the enhanced model.
struct MixSample {
  double mu_y;
  double var_y;
};

MixSample enhanced_sample(double mu_m, double var_m, double mu_v, double var_v, double lambda,
                          const NoiseParams& p) {
  const double pi1 = 1.0 / (1.0 + lambda);
  const double pi2 = lambda / (1.0 + lambda);
  const double mu_y = pi1 * mu_m + pi2 * mu_v;
  const double var = pi1 * pi1 * var_m + pi2 * pi2 * var_v + p.alpha * std::max(mu_y, 0.0) +
                     pi1 * pi1 * p.sigma1 * p.sigma1 + pi2 * pi2 * p.sigma2 * p.sigma2;
  return {mu_y, var};
}

double sample_loss(double y, MixSample s) {
  const double n = y - s.mu_y;
  return 0.5 * (n * n / s.var_y + std::log(s.var_y));
}

Outcome gradient_checks() {
  SeededRng rng(104);
  double worst_a = 0.0, worst_b = 0.0, worst_c = 0.0;
  const double h = 1e-6;
  for (int it = 0; it < 200; ++it) {
    auto m = random_mixture(rng, 8, false);
    const auto masked = BranchBelief::make(m.mu_m, m.var_m);
    const auto visible = BranchBelief::make(m.mu_v, m.var_v);
    const auto stop = nll_grad_mu_m(m.y, masked, visible, m.lambda, NoiseModelVariant::Enhanced, m.p, true);
    const auto full = nll_grad_mu_m(m.y, masked, visible, m.lambda, NoiseModelVariant::Enhanced, m.p, false);
    const double n_pix = 8.0;
    for (std::size_t i = 0; i < 8; ++i) {
      const double y = m.y.data()[i];
      const double mm = m.mu_m.data()[i], vm = m.var_m.data()[i];
      const double mv = m.mu_v.data()[i], vv = m.var_v.data()[i];
      const auto at = [&](double x) { return enhanced_sample(x, vm, mv, vv, m.lambda, m.p); };
      const auto base = at(mm);
      // (a) frozen variance.
      const auto frozen = [&](double x) { return sample_loss(y, {at(x).mu_y, base.var_y}); };
      const double fd_a = (frozen(mm + h) - frozen(mm - h)) / (2 * h) / n_pix;
      const double closed = -(1.0 / (1.0 + m.lambda)) * (y - base.mu_y) / base.var_y / n_pix;
      worst_a = std::max({worst_a, rel_err(stop.data()[i], fd_a), rel_err(stop.data()[i], closed)});
      // (b) variance follows mu_m.
      const auto whole = [&](double x) { return sample_loss(y, at(x)); };
      const double fd_b = (whole(mm + h) - whole(mm - h)) / (2 * h) / n_pix;
      worst_b = std::max(worst_b, rel_err(full.data()[i], fd_b));
    }
    // (c) no Poisson term, so stop-grad changes nothing.
    auto z = random_mixture(rng, 8, true);
    const auto zm = BranchBelief::make(z.mu_m, z.var_m);
    const auto zv = BranchBelief::make(z.mu_v, z.var_v);
    const auto zs = nll_grad_mu_m(z.y, zm, zv, z.lambda, NoiseModelVariant::Enhanced, z.p, true);
    const auto zf = nll_grad_mu_m(z.y, zm, zv, z.lambda, NoiseModelVariant::Enhanced, z.p, false);
    for (std::size_t i = 0; i < 8; ++i) worst_c = std::max(worst_c, rel_err(zs.data()[i], zf.data()[i]));
  }
  const bool ok = worst_a < 1e-4 && worst_b < 1e-4 && worst_c < 1e-4;
  return {ok, fmt("max rel err (a) %.2g (b) %.2g (c) %.2g", worst_a, worst_b, worst_c)};
}

Outcome fixed_point() {
  SeededRng rng(105);
  double worst = 0.0;
  for (int it = 0; it < 100; ++it) {
    const std::size_t n = 8;
    std::vector<SampleInputs> px(n);
    double min_var = 1.0;
    const double lambda = 1.0 + 10.0 * rng.uniform();
    const NoiseParams p = NoiseParams::single(0.01 + 0.05 * rng.uniform(), 0.02);
    for (auto& s : px) {
      s = {rng.uniform(), rng.uniform(), 0.01 + 0.1 * rng.uniform(), rng.uniform(), 0.01 + 0.1 * rng.uniform()};
    }
    // Variances of the mixture at the start, held fixed while the mean moves.
    std::vector<double> var(n);
    for (std::size_t i = 0; i < n; ++i) {
      var[i] = sample_nll(px[i], lambda, NoiseModelVariant::Enhanced, p, {}).var_y;
      min_var = std::min(min_var, var[i]);
    }
    const double pi1 = blind_factor(lambda);
    const double step = 0.5 * static_cast<double>(n) * min_var / (pi1 * pi1);
    for (int k = 0; k < 500; ++k) {
      for (std::size_t i = 0; i < n; ++i) {
        const double mu_y = pi1 * px[i].mu_m + visible_factor(lambda) * px[i].mu_v;
        const double grad = -pi1 * (px[i].y - mu_y) / var[i] / static_cast<double>(n);
        px[i].mu_m -= step * grad;
      }
    }
    for (const auto& s : px) {
      const double mu_y = pi1 * s.mu_m + visible_factor(lambda) * s.mu_v;
      worst = std::max(worst, std::abs(mu_y - s.y));
    }
  }

  bool envelope = true;
  for (int it = 0; it < 2000; ++it) {
    ImageTensor m(1, 8, 1), v(1, 8, 1);
    for (std::size_t i = 0; i < 8; ++i) {
      m.data()[i] = static_cast<float>(2.0 * rng.uniform() - 0.5);
      v.data()[i] = static_cast<float>(2.0 * rng.uniform() - 0.5);
    }
    const double lambda = std::exp(8.0 * rng.uniform() - 4.0);
    const auto x = optimal_clean(m, v, lambda);
    for (std::size_t i = 0; i < 8; ++i) {
      const float lo = std::min(m.data()[i], v.data()[i]);
      const float hi = std::max(m.data()[i], v.data()[i]);
      envelope = envelope && x.data()[i] >= lo && x.data()[i] <= hi;
    }
  }
  return {worst <= 1e-6 && envelope,
          fmt("max |mu_y - y| after 500 steps = %.3g; envelope %s", worst, envelope ? "held" : "violated")};
}

Outcome masking_partition() {
  SeededRng rng(106);
  std::size_t cases = 0;
  for (std::size_t s = 2; s <= 4; ++s) {
    for (std::size_t h = 8; h <= 64; ++h) {
      for (std::size_t w = 8; w <= 64; ++w) {
        ImageTensor ones(h, w, 1, 1.0f);
        const auto vol = build_masked_volume(ones, s, MaskFill::Zero);
        std::vector<int> hits(h * w, 0);
        for (const auto& copy : vol.copies) {
          for (std::size_t i = 0; i < h * w; ++i) hits[i] += copy.data()[i] == 0.0f;
        }
        if (std::any_of(hits.begin(), hits.end(), [](int c) { return c != 1; })) {
          return {false, fmt("blindspots do not partition %zux%zu at s=%zu", h, w, s)};
        }
        ImageTensor z(h, w, 1);
        for (auto& v : z.data()) v = static_cast<float>(rng.uniform());
        const std::vector<ImageTensor> same(vol.copy_count(), z);
        if (!(map_blindspots(same, vol) == z)) {
          return {false, fmt("mapping is not the identity at %zux%zu, s=%zu", h, w, s)};
        }
        ++cases;
      }
    }
  }
  return {true, fmt("%zu grid/cell combinations", cases)};
}

Outcome identifiability() {
  const auto t0 = Clock::now();
  SeededRng root(107);
  std::vector<ImageTensor> clean;
  for (std::uint64_t i = 0; i < 10; ++i) {
    auto r = root.fork(i);
    clean.push_back(synth_clean(r, 256, 256));
  }
  const auto levels = parse_levels("pg3");
  BenchConfig cfg;
  cfg.method = EstimationMethod::Cramer;
  const auto report = bench_estimation(clean, levels, cfg);
  const auto& row = report.rows.at(0);
  const double t = seconds_since(t0);
  const bool ok = std::abs(row.alpha_hat - 0.05) <= 0.3 * 0.05 && std::abs(row.sigma_hat - 0.02) <= 0.015;
  return {ok && t < 300.0, fmt("alpha_hat %.4f sigma_hat %.4f (reference 0.048/0.022); %.1fs", row.alpha_hat,
                               row.sigma_hat, t)};
}

Outcome cross_channel() {
  SeededRng rng(108);
  bool ok = true;
  const std::vector<double> ones{1.0, 1.0, 1.0};
  ok = ok && cross_channel_combine(ones, false).value == 0.0;
  for (int it = 0; it < 1000; ++it) {
    std::vector<double> e(3);
    for (auto& v : e) v = rng.uniform() < 0.5 ? 1.0 : 0.5 + rng.uniform();
    if (rng.uniform() < 0.2) e.assign(3, 0.5 + rng.uniform());
    const bool all_one = std::all_of(e.begin(), e.end(), [](double v) { return v == 1.0; });
    const double base = cross_channel_combine(e, false).value;
    ok = ok && ((base == 0.0) == all_one);
    std::sort(e.begin(), e.end());
    do {
      ok = ok && std::abs(cross_channel_combine(e, false).value - base) <= 1e-15;
    } while (std::next_permutation(e.begin(), e.end()));
  }
  const std::vector<double> example{1.0, 1.0, 1.1};
  const double v = cross_channel_combine(example, false).value;
  ok = ok && std::abs(v - 0.03) < 1e-12;
  return {ok, fmt("(1, 1, 1.1) -> %.15f", v)};
}

struct TrainingRuns {
  std::vector<TrainReport> reports;
  std::string error;
};

TrainingRuns desk_training() {
  TrainingRuns runs;
  for (std::uint64_t seed : {1, 2, 3}) {
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 4;
    cfg.patch_size = 64;
    cfg.synthetic_count = 24;
    cfg.val_count = 4;
    cfg.noise = NoiseParams::single(0.01, 0.02);
    cfg.seed = seed;
    try {
      runs.reports.push_back(run_training(cfg, {}));
    } catch (const Error& e) {
      runs.error = fmt("seed %llu: %s", static_cast<unsigned long long>(seed), e.what());
      return runs;
    }
  }
  return runs;
}

Outcome training_gain(const TrainingRuns& runs, double secs) {
  if (!runs.error.empty()) return {false, runs.error};
  std::vector<double> gains;
  bool finite = true;
  for (const auto& r : runs.reports) {
    gains.push_back(r.final_psnr_val - r.noisy_psnr_val);
    for (const auto& e : r.epochs) finite = finite && std::isfinite(e.nll) && std::isfinite(e.est_loss);
  }
  std::vector<double> sorted = gains;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[1];
  return {median >= 2.0 && finite && secs < 1800.0,
          fmt("PSNR gain per seed %.2f %.2f %.2f dB, median %.2f; losses %s; %.0fs", gains[0], gains[1], gains[2],
              median, finite ? "finite" : "NON-FINITE", secs)};
}

Outcome ablation_contracts(const TrainingRuns& runs) {
  SeededRng rng(109);
  std::vector<ImageTensor> batch;
  for (int i = 0; i < 2; ++i) batch.push_back(corrupt_exact(synth_clean(rng, 64, 64), pg_level(3), rng));
  TrainConfig cfg;
  cfg.patch_size = 64;
  cfg.batch_size = 2;
  cfg.noise = pg_level(3);

  Trainer iid(cfg);
  double visible_iid = 0.0;
  for (int i = 0; i < 2; ++i) visible_iid += iid.train_step(batch, 3.0).visible_grad_abs;
  cfg.revisible.iid = false;
  Trainer non_iid(cfg);
  const double visible_non_iid = non_iid.train_step(batch, 3.0).visible_grad_abs;
  cfg.revisible.iid = true;

  cfg.scheme = TrainScheme::Pretrained;
  Trainer frozen(cfg);
  std::vector<std::vector<float>> before;
  for (auto* p : frozen.estimator().params()) before.push_back(p->value);
  for (int i = 0; i < 3; ++i) frozen.train_step(batch, 3.0);
  bool bitwise = true;
  auto params = frozen.estimator().params();
  for (std::size_t k = 0; k < params.size(); ++k) {
    bitwise = bitwise && std::equal(before[k].begin(), before[k].end(), params[k]->value.begin(),
                                    [](float a, float b) { return std::bit_cast<std::uint32_t>(a) ==
                                                                  std::bit_cast<std::uint32_t>(b); });
  }

  const ReVisibleConfig rv;
  bool lambda_ok = rv.lambda_at(0, 30) == 3.0 && rv.lambda_at(29, 30) == 11.0;
  for (const auto& r : runs.reports) {
    lambda_ok = lambda_ok && r.epochs.front().lambda == 3.0 && r.epochs.back().lambda == 11.0;
  }
  const bool ok = visible_iid == 0.0 && visible_non_iid > 0.0 && bitwise && lambda_ok;
  return {ok, fmt("visible grad iid %.3g non-iid %.3g; T+P estimator %s; lambda endpoints %s", visible_iid,
                  visible_non_iid, bitwise ? "bitwise frozen" : "CHANGED", lambda_ok ? "(3, 11)" : "wrong")};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const Outcome& o) {
    std::printf("[%s] criterion %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  };
  auto guarded = [](const std::function<Outcome()>& fn) {
    try {
      return fn();
    } catch (const std::exception& e) {
      return Outcome{false, std::string("exception: ") + e.what()};
    }
  };

  report(1, "GAT stabilization", guarded(gat_stabilization));
  report(2, "GAT round trip", guarded(gat_round_trip));
  report(3, "NLL oracle", guarded(nll_oracle));
  report(4, "gradient checks", guarded(gradient_checks));
  report(5, "fixed point", guarded(fixed_point));
  report(6, "masking partition", guarded(masking_partition));
  report(7, "estimator identifiability", guarded(identifiability));
  report(8, "cross-channel loss", guarded(cross_channel));
  const auto t0 = Clock::now();
  const auto runs = desk_training();
  const double train_secs = seconds_since(t0);
  report(9, "desk-scale training", guarded([&] { return training_gain(runs, train_secs); }));
  report(10, "ablation contracts", guarded([&] { return ablation_contracts(runs); }));
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
