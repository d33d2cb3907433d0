#include "pgs/bench.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <future>
#include <limits>
#include <sstream>

#include "pgs/dataset.hpp"
#include "pgs/error.hpp"
#include "pgs/networks.hpp"

namespace pgs {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::vector<double> log_space(double lo, double hi, std::size_t n) {
  std::vector<double> out(n);
  if (n == 1) {
    out[0] = std::sqrt(lo * hi);
    return out;
  }
  const double a = std::log(lo);
  const double b = std::log(hi);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(a + (b - a) * double(i) / double(n - 1));
  return out;
}

ImageTensor corrupt_level(const ImageTensor& x, const NoiseParams& p, SeededRng& rng) {
  return p.alpha > 0.0 ? corrupt_exact(x, p, rng) : corrupt_gaussian_approx(x, p, rng);
}

struct PairLoss {
  double value;
  double d_alpha;
  double d_sigma1;
  double d_sigma2;
};

PairLoss pair_loss(const ImageTensor& y, const NoiseParams& p, EstimationMethod method,
                   const EstimationLossConfig& cfg) {
  const auto a = method_loss(y, NoiseParams::single(p.alpha, p.sigma1), method, cfg, true);
  const auto b = method_loss(y, NoiseParams::single(p.alpha, p.sigma2), method, cfg, true);
  return {0.5 * (a.value + b.value), 0.5 * (a.d_alpha + b.d_alpha), 0.5 * a.d_sigma, 0.5 * b.d_sigma};
}

}  // namespace

std::string Table::text() const {
  std::vector<std::size_t> width(header.size(), 0);
  for (std::size_t i = 0; i < header.size(); ++i) width[i] = header[i].size();
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size() && i < width.size(); ++i) width[i] = std::max(width[i], r[i].size());
  }
  std::ostringstream o;
  for (const auto& n : notes) o << "# " << n << '\n';
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) o << "  ";
      o << cells[i] << std::string(width[i] - cells[i].size(), ' ');
    }
    o << '\n';
  };
  line(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  o << std::string(total + 2 * (width.empty() ? 0 : width.size() - 1), '-') << '\n';
  for (const auto& r : rows) line(r);
  return o.str();
}

std::string Table::tsv() const {
  std::ostringstream o;
  for (const auto& n : notes) o << "# " << n << '\n';
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) o << (i ? "\t" : "") << cells[i];
    o << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return o.str();
}

EstimationMethod parse_method(const std::string& name) {
  if (name == "gaussian") return EstimationMethod::Gaussian;
  if (name == "cramer") return EstimationMethod::Cramer;
  fail(ErrorKind::InvalidArgument, "unknown estimation method: " + name);
}

std::string to_string(EstimationMethod m) { return m == EstimationMethod::Gaussian ? "gaussian" : "cramer"; }

EstimationLoss method_loss(const ImageTensor& y, const NoiseParams& p, EstimationMethod method,
                           const EstimationLossConfig& cfg, bool with_grad) {
  if (method == EstimationMethod::Gaussian) return gaussian_loss_detail(y, p, cfg, with_grad);
  return cramer_loss_detail(y, p, cfg, with_grad);
}

namespace {

// Simplex search on (log alpha, sigma); sigma is reflected at zero.
template <class Eval>
void polish(FitResult& best, const GridFitConfig& grid, double step_a, Eval&& evaluate) {
  using Point = std::array<double, 2>;
  const double la_min = std::log(grid.alpha_min), la_max = std::log(grid.alpha_max);
  auto clamp = [&](Point p) {
    p[0] = std::clamp(p[0], la_min, la_max);
    p[1] = std::min(std::abs(p[1]), grid.sigma_max);
    return p;
  };
  std::size_t budget = grid.polish_evaluations;
  auto f = [&](const Point& p) {
    --budget;
    return evaluate(std::exp(p[0]), std::max(p[1], grid.sigma_min));
  };
  const Point c{std::log(best.params.alpha), best.params.sigma1};
  std::array<Point, 3> x{c, clamp({c[0] + step_a, c[1]}), clamp({c[0], c[1] + grid.polish_sigma_step})};
  std::array<double, 3> fx{best.loss, f(x[1]), f(x[2])};
  while (budget > 0) {
    std::array<std::size_t, 3> o{0, 1, 2};
    std::sort(o.begin(), o.end(), [&](std::size_t i, std::size_t j) { return fx[i] < fx[j]; });
    const auto lo = o[0], mid = o[1], hi = o[2];
    const Point m{(x[lo][0] + x[mid][0]) / 2, (x[lo][1] + x[mid][1]) / 2};
    auto along = [&](double t) { return clamp({m[0] + t * (x[hi][0] - m[0]), m[1] + t * (x[hi][1] - m[1])}); };
    const auto r = along(-1.0);
    const double fr = f(r);
    if (fr < fx[lo] && budget > 0) {
      const auto e = along(-2.0);
      const double fe = f(e);
      if (fe < fr) x[hi] = e, fx[hi] = fe;
      else x[hi] = r, fx[hi] = fr;
    } else if (fr < fx[mid]) {
      x[hi] = r, fx[hi] = fr;
    } else if (budget > 0) {
      const auto k = along(fr < fx[hi] ? -0.5 : 0.5);
      const double fk = f(k);
      if (fk < std::min(fr, fx[hi])) {
        x[hi] = k, fx[hi] = fk;
      } else {
        for (auto i : {mid, hi}) {
          if (budget == 0) break;
          x[i] = clamp({(x[i][0] + x[lo][0]) / 2, (x[i][1] + x[lo][1]) / 2});
          fx[i] = f(x[i]);
        }
      }
    }
    const double span = std::max(std::abs(x[hi][0] - x[lo][0]), std::abs(x[mid][0] - x[lo][0]));
    const double sspan = std::max(std::abs(x[hi][1] - x[lo][1]), std::abs(x[mid][1] - x[lo][1]));
    if (span < 1e-3 && sspan < 1e-4) break;
  }
}

}  // namespace

FitResult grid_fit(const ImageTensor& y, EstimationMethod method, const EstimationLossConfig& cfg,
                   const GridFitConfig& grid) {
  return grid_fit(std::span<const ImageTensor>(&y, 1), method, cfg, grid);
}

FitResult grid_fit(std::span<const ImageTensor> images, EstimationMethod method, const EstimationLossConfig& cfg,
                   const GridFitConfig& grid) {
  require(!images.empty(), ErrorKind::InvalidArgument, "no images to fit");
  require(grid.alpha_min > 0.0 && grid.alpha_max > grid.alpha_min && grid.sigma_min > 0.0 &&
              grid.sigma_max > grid.sigma_min && grid.alpha_points >= 2 && grid.sigma_points >= 2 &&
              grid.refine_points >= 3,
          ErrorKind::InvalidArgument, "invalid grid");
  FitResult best;
  best.loss = std::numeric_limits<double>::infinity();
  auto evaluate = [&](double a, double s) {
    double v = 0.0;
    for (const auto& y : images) v += method_loss(y, NoiseParams::single(a, s), method, cfg, false).value;
    v /= static_cast<double>(images.size());
    ++best.evaluations;
    if (v < best.loss) {
      best.loss = v;
      best.params = NoiseParams::single(a, s);
    }
    return v;
  };
  for (double a : log_space(grid.alpha_min, grid.alpha_max, grid.alpha_points)) {
    for (double s : log_space(grid.sigma_min, grid.sigma_max, grid.sigma_points)) evaluate(a, s);
  }
  double step_a = std::log(grid.alpha_max / grid.alpha_min) / double(grid.alpha_points - 1);
  double step_s = std::log(grid.sigma_max / grid.sigma_min) / double(grid.sigma_points - 1);
  for (std::size_t r = 0; r < grid.refinements; ++r) {
    const double ca = std::log(best.params.alpha);
    const double cs = std::log(best.params.sigma1);
    const auto half = static_cast<double>(grid.refine_points - 1) / 2.0;
    step_a /= half;
    step_s /= half;
    for (std::size_t i = 0; i < grid.refine_points; ++i) {
      const double a = std::exp(ca + (double(i) - half) * step_a);
      if (a < grid.alpha_min || a > grid.alpha_max) continue;
      for (std::size_t j = 0; j < grid.refine_points; ++j) {
        const double s = std::exp(cs + (double(j) - half) * step_s);
        if (s < grid.sigma_min || s > grid.sigma_max) continue;
        evaluate(a, s);
      }
    }
  }
  if (grid.polish_evaluations > 0) polish(best, grid, step_a, evaluate);
  return best;
}

NoiseParams net_fit(std::span<const ImageTensor> noisy, EstimationMethod method, const EstimationLossConfig& cfg,
                    const NetFitConfig& net) {
  require(!noisy.empty(), ErrorKind::InvalidArgument, "no images to fit");
  EstimatorNet est(noisy[0].channels());
  SeededRng rng(net.seed);
  auto init_rng = rng.fork(1);
  est.init(init_rng);
  nn::Adam opt(est.params(), {net.lr, 0.9, 0.999, 1e-8, 1e-8});
  for (std::size_t s = 0; s < net.steps; ++s) {
    const auto& img = noisy[s % noisy.size()];
    const auto size = std::min({net.crop, img.height(), img.width()});
    const auto crop = random_crop(img, size, rng);
    opt.zero_grad();
    EstimatorNet::Cache cache;
    const auto p = est.forward(nn::from_image(crop), &cache);
    const auto l = pair_loss(crop, p, method, cfg);
    if (!std::isfinite(l.value)) fail(ErrorKind::Numerical, "non-finite estimation loss while fitting");
    est.backward(cache, {l.d_alpha, l.d_sigma1, l.d_sigma2});
    opt.step();
  }
  NoiseParams mean{};
  for (const auto& img : noisy) {
    const auto p = est.forward(nn::from_image(img), nullptr);
    mean.alpha += p.alpha;
    mean.sigma1 += p.sigma1;
    mean.sigma2 += p.sigma2;
  }
  const double inv = 1.0 / static_cast<double>(noisy.size());
  return {mean.alpha * inv, mean.sigma1 * inv, mean.sigma2 * inv};
}

std::vector<NamedLevel> parse_levels(const std::string& spec) {
  std::vector<NamedLevel> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item.size() == 3 && (item.rfind("pg", 0) == 0 || item.rfind("PG", 0) == 0) && item[2] >= '1' &&
        item[2] <= '5') {
      out.push_back({"PG" + item.substr(2), pg_level(item[2] - '0')});
    } else if (item == "zero") {
      out.push_back({"zero", NoiseParams{}});
    } else {
      const auto colon = item.find(':');
      if (colon == std::string::npos) fail(ErrorKind::InvalidArgument, "bad noise level: " + item);
      try {
        const double a = std::stod(item.substr(0, colon));
        const double s = std::stod(item.substr(colon + 1));
        require(a >= 0.0 && s >= 0.0, ErrorKind::InvalidArgument, "noise level must be >= 0");
        out.push_back({item, NoiseParams::single(a, s)});
      } catch (const std::logic_error&) {
        fail(ErrorKind::InvalidArgument, "bad noise level: " + item);
      }
    }
  }
  require(!out.empty(), ErrorKind::InvalidArgument, "no noise levels given");
  return out;
}

BenchReport bench_estimation(std::span<const ImageTensor> clean, std::span<const NamedLevel> levels,
                             const BenchConfig& cfg) {
  require(!clean.empty(), ErrorKind::InvalidArgument, "dataset is empty");
  const std::size_t count = cfg.max_images ? std::min(cfg.max_images, clean.size()) : clean.size();
  BenchReport report;
  report.title = "noise estimation, method " + to_string(cfg.method) + (cfg.train ? " (network)" : " (grid)") +
                 ", " + std::to_string(count) + " images";
  const SeededRng root(cfg.seed);
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<ImageTensor> noisy;
    for (std::size_t i = 0; i < count; ++i) {
      auto rng = root.fork(l * 100'000 + i);
      noisy.push_back(corrupt_level(clean[i], levels[l].params, rng));
    }
    BenchRow row{levels[l].name, levels[l].params, 0.0, 0.0, 0.0};
    if (cfg.train) {
      const auto p = net_fit(noisy, cfg.method, cfg.loss, cfg.net);
      row.alpha_hat = p.alpha;
      row.sigma_hat = 0.5 * (p.sigma1 + p.sigma2);
    } else {
      const auto fit = grid_fit(noisy, cfg.method, cfg.loss, cfg.grid);
      row.alpha_hat = fit.params.alpha;
      row.sigma_hat = fit.params.sigma1;
    }
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.rows.push_back(row);
  }
  return report;
}

Table BenchReport::table() const {
  Table t;
  t.notes.push_back(title);
  t.header = {"level", "alpha", "sigma", "alpha_hat", "sigma_hat", "seconds"};
  for (const auto& r : rows) {
    t.rows.push_back({r.level, num(r.truth.alpha), num(r.truth.sigma1), num(r.alpha_hat), num(r.sigma_hat),
                      num(r.seconds)});
  }
  return t;
}

AblationAxis parse_axis(const std::string& name) {
  if (name == "grain") return AblationAxis::Grain;
  if (name == "weight") return AblationAxis::Weight;
  if (name == "scheme") return AblationAxis::Scheme;
  if (name == "noise_model") return AblationAxis::NoiseModel;
  if (name == "iid") return AblationAxis::Iid;
  if (name == "lambda") return AblationAxis::Lambda;
  fail(ErrorKind::InvalidArgument, "unknown ablation axis: " + name);
}

std::string to_string(AblationAxis a) {
  switch (a) {
    case AblationAxis::Grain: return "grain";
    case AblationAxis::Weight: return "weight";
    case AblationAxis::Scheme: return "scheme";
    case AblationAxis::NoiseModel: return "noise_model";
    case AblationAxis::Iid: return "iid";
    case AblationAxis::Lambda: return "lambda";
  }
  return "?";
}

std::vector<std::pair<std::string, TrainConfig>> ablation_settings(AblationAxis axis, const TrainConfig& base) {
  std::vector<std::pair<std::string, TrainConfig>> out;
  auto add = [&](std::string name, auto&& edit) {
    TrainConfig c = base;
    edit(c);
    out.emplace_back(std::move(name), std::move(c));
  };
  switch (axis) {
    case AblationAxis::Grain:
      for (const char* g : {"CG", "FG1", "CG+FG1", "CG+FG2", "CG+FG1+FG2"}) {
        add(g, [&](TrainConfig& c) { c.estimation.grain = Grain::parse(g); });
      }
      break;
    case AblationAxis::Weight:
      for (double w : {0.0, 0.01, 1.0, 100.0}) {
        char name[16];
        std::snprintf(name, sizeof name, "%g", w);
        add(name, [&](TrainConfig& c) { c.revisible.estimator_loss_weight = w; });
      }
      break;
    case AblationAxis::Scheme:
      for (auto s : {TrainScheme::Pretrained, TrainScheme::Fixed, TrainScheme::Joint}) {
        add(to_string(s), [&](TrainConfig& c) { c.scheme = s; });
      }
      break;
    case AblationAxis::NoiseModel:
      for (auto v : {NoiseModelVariant::Original, NoiseModelVariant::Simplified, NoiseModelVariant::Enhanced}) {
        add(to_string(v), [&](TrainConfig& c) { c.revisible.variant = v; });
      }
      break;
    case AblationAxis::Iid:
      add("IID", [](TrainConfig& c) { c.revisible.iid = true; });
      add("non-IID", [](TrainConfig& c) { c.revisible.iid = false; });
      break;
    case AblationAxis::Lambda:
      for (double f : {3.0, 11.0, 20.0, 40.0}) {
        char name[16];
        std::snprintf(name, sizeof name, "%g", f);
        add(name, [&](TrainConfig& c) {
          c.revisible.lambda_final = f;
          c.revisible.lambda_start = std::min(c.revisible.lambda_start, f);
        });
      }
      break;
  }
  return out;
}

AblationReport run_ablation(AblationAxis axis, const TrainConfig& base, bool parallel,
                            const std::function<void(const AblationRow&)>& on_row) {
  base.validate();
  const auto settings = ablation_settings(axis, base);
  const auto split = load_split(base);
  AblationReport report;
  report.axis = axis;

  auto run_one = [&](const std::pair<std::string, TrainConfig>& s) {
    AblationRow row;
    row.setting = s.first;
    const auto& cfg = s.second;
    if (axis == AblationAxis::Grain) {
      EstimationLossConfig loss = cfg.estimation;
      double est = 0.0;
      SeededRng root(cfg.seed);
      for (std::size_t i = 0; i < split.val.size(); ++i) {
        auto rng = root.fork(i);
        const auto y = corrupt_level(split.val[i], cfg.noise, rng);
        const auto fit = grid_fit(y, EstimationMethod::Cramer, loss);
        row.alpha_hat += fit.params.alpha / double(split.val.size());
        row.sigma_hat += fit.params.sigma1 / double(split.val.size());
        est += fit.loss / double(split.val.size());
      }
      row.est_loss = est;
      return row;
    }
    const auto r = run_training(cfg, split.train, split.val, {});
    row.psnr = r.final_psnr_val;
    row.ssim = r.final_ssim_val;
    row.alpha_hat = r.epochs.back().alpha_hat;
    row.sigma_hat = 0.5 * (r.epochs.back().sigma1_hat + r.epochs.back().sigma2_hat);
    row.est_loss = r.epochs.back().est_loss;
    return row;
  };

  if (parallel) {
    std::vector<std::future<AblationRow>> futures;
    for (const auto& s : settings) futures.push_back(std::async(std::launch::async, run_one, std::cref(s)));
    for (auto& f : futures) {
      report.rows.push_back(f.get());
      if (on_row) on_row(report.rows.back());
    }
  } else {
    for (const auto& s : settings) {
      report.rows.push_back(run_one(s));
      if (on_row) on_row(report.rows.back());
    }
  }

  auto best_psnr = [&]() {
    std::size_t b = 0;
    for (std::size_t i = 1; i < report.rows.size(); ++i) {
      if (report.rows[i].psnr > report.rows[b].psnr) b = i;
    }
    return report.rows[b].setting;
  };
  switch (axis) {
    case AblationAxis::Grain: {
      std::size_t b = 0;
      auto err = [&](const AblationRow& r) { return std::abs(r.alpha_hat - base.noise.alpha); };
      for (std::size_t i = 1; i < report.rows.size(); ++i) {
        if (err(report.rows[i]) < err(report.rows[b])) b = i;
      }
      report.expectation = "CG+FG1 gives the most accurate alpha";
      report.expectation_met = report.rows[b].setting == "CG+FG1";
      break;
    }
    case AblationAxis::Weight:
      report.expectation = "weight 0.01 gives the best PSNR";
      report.expectation_met = best_psnr() == "0.01";
      break;
    case AblationAxis::Scheme:
      report.expectation = "T+J gives the best PSNR";
      report.expectation_met = best_psnr() == "T+J";
      break;
    case AblationAxis::NoiseModel:
      report.expectation = "M_E gives the best PSNR";
      report.expectation_met = best_psnr() == "M_E";
      break;
    case AblationAxis::Iid:
      report.expectation = "IID PSNR >= non-IID PSNR";
      report.expectation_met = report.rows[0].psnr >= report.rows[1].psnr;
      break;
    case AblationAxis::Lambda:
      report.expectation = "lambda_f = 11 gives the best PSNR";
      report.expectation_met = best_psnr() == "11";
      break;
  }
  return report;
}

Table AblationReport::table() const {
  Table t;
  t.notes.push_back("ablation axis: " + to_string(axis));
  t.notes.push_back("PSNR/SSIM on unclipped reconstructions");
  t.notes.push_back("expectation: " + expectation + (expectation_met ? " [met]" : " [NOT met]"));
  t.header = {"setting", "psnr", "ssim", "alpha_hat", "sigma_hat", "est_loss"};
  for (const auto& r : rows) {
    t.rows.push_back({r.setting, num(r.psnr), num(r.ssim), num(r.alpha_hat), num(r.sigma_hat), num(r.est_loss)});
  }
  return t;
}

}  // namespace pgs
