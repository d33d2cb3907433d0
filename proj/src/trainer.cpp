#include "pgs/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "pgs/config.hpp"
#include "pgs/dataset.hpp"
#include "pgs/error.hpp"
#include "pgs/io.hpp"
#include "pgs/metrics.hpp"

namespace pgs {

namespace {

constexpr std::uint64_t kDatasetSeed = 0xda7a5e7;
constexpr std::uint64_t kValStream = 1'000'000;
constexpr std::uint64_t kPretrainStream = 2'000'000;

void require_finite(double v, const char* term) {
  if (!std::isfinite(v)) fail(ErrorKind::Numerical, std::string("non-finite ") + term + " loss");
}

ImageTensor corrupt(const ImageTensor& x, const TrainConfig& cfg, SeededRng& rng) {
  return cfg.exact_noise ? corrupt_exact(x, cfg.noise, rng) : corrupt_gaussian_approx(x, cfg.noise, rng);
}

ImageTensor center_crop(const ImageTensor& img, std::size_t size) {
  if (size == 0 || (img.height() <= size && img.width() <= size)) return img;
  const auto h = std::min(size, img.height());
  const auto w = std::min(size, img.width());
  return img.crop((img.height() - h) / 2, (img.width() - w) / 2, h, w);
}

double halving(double lr, std::size_t epoch, std::size_t every) {
  if (every == 0) return lr;
  return lr * std::pow(0.5, static_cast<double>(epoch / every));
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s;
}

std::vector<std::pair<std::string, nn::Param*>> named_params(DenoiserNet& den, EstimatorNet& est) {
  std::vector<std::pair<std::string, nn::Param*>> out;
  for (auto* p : den.params()) out.emplace_back("den." + p->name, p);
  for (auto* p : est.params()) out.emplace_back("est." + p->name, p);
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::Io, "cannot write " + path.string());
  f << text;
  if (!f) fail(ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace

TrainScheme parse_scheme(const std::string& name) {
  if (name == "T+P" || name == "pretrained") return TrainScheme::Pretrained;
  if (name == "T+F" || name == "fixed") return TrainScheme::Fixed;
  if (name == "T+J" || name == "joint") return TrainScheme::Joint;
  fail(ErrorKind::InvalidArgument, "unknown training scheme: " + name);
}

std::string to_string(TrainScheme s) {
  switch (s) {
    case TrainScheme::Pretrained: return "T+P";
    case TrainScheme::Fixed: return "T+F";
    case TrainScheme::Joint: return "T+J";
  }
  return "?";
}

void TrainConfig::validate() const {
  require(epochs >= 1, ErrorKind::Config, "epochs must be >= 1");
  require(batch_size >= 1, ErrorKind::Config, "batch_size must be >= 1");
  require(patch_size >= 8 && patch_size % DenoiserNet::kDownFactor == 0, ErrorKind::Config,
          "patch_size must be a multiple of 4 and >= 8");
  require(lr_denoiser > 0.0 && lr_estimator > 0.0, ErrorKind::Config, "learning rates must be positive");
  require(weight_decay >= 0.0, ErrorKind::Config, "weight_decay must be >= 0");
  require(cell_size >= 2, ErrorKind::Config, "cell_size must be >= 2");
  require(channels == 1 || channels == 3, ErrorKind::Config, "channels must be 1 or 3");
  require(noise.alpha >= 0.0 && noise.sigma1 >= 0.0 && noise.sigma2 >= 0.0, ErrorKind::Config,
          "noise parameters must be >= 0");
  require(!exact_noise || noise.alpha > 0.0, ErrorKind::Config, "exact corruption needs alpha > 0");
  estimation.patch.validate();
  revisible.validate();
}

Trainer::Trainer(TrainConfig cfg)
    : cfg_((cfg.validate(), std::move(cfg))),
      denoiser_(cfg_.channels),
      estimator_(cfg_.channels),
      den_opt_(denoiser_.params(), {cfg_.lr_denoiser, 0.9, 0.999, 1e-8, cfg_.weight_decay}),
      est_opt_(estimator_.params(), {cfg_.lr_estimator, 0.9, 0.999, 1e-8, cfg_.weight_decay}),
      rng_(cfg_.seed) {
  auto den_rng = rng_.fork(1);
  auto est_rng = rng_.fork(2);
  rng_ = rng_.fork(3);
  denoiser_.init(den_rng);
  estimator_.init(est_rng);
}

NoiseParams Trainer::noise_params(const ImageTensor& y) const {
  if (cfg_.scheme == TrainScheme::Fixed) return cfg_.noise;
  return estimator_.forward(nn::from_image(y), nullptr);
}

void Trainer::begin_epoch(std::size_t epoch) {
  den_opt_.set_lr(halving(cfg_.lr_denoiser, epoch, cfg_.denoiser_halve_every));
  est_opt_.set_lr(halving(cfg_.lr_estimator, epoch, cfg_.estimator_halve_every));
}

Trainer::SampleOut Trainer::accumulate_sample(const ImageTensor& y, double lambda, double scale, SeededRng& rng) {
  require(y.channels() == cfg_.channels, ErrorKind::ShapeMismatch, "batch channel count differs from config");
  const auto x = nn::from_image(y);
  const bool joint = cfg_.scheme == TrainScheme::Joint;
  EstimatorNet::Cache ecache;
  SampleOut out;
  switch (cfg_.scheme) {
    case TrainScheme::Joint: out.params = estimator_.forward(x, &ecache); break;
    case TrainScheme::Pretrained: out.params = estimator_.forward(x, nullptr); break;
    case TrainScheme::Fixed: out.params = cfg_.noise; break;
  }
  const NoiseParams& p = out.params;

  const auto vol = build_masked_volume(y, cfg_.cell_size, cfg_.mask_fill, &rng);
  const std::size_t copies = vol.copy_count();
  std::vector<DenoiserNet::Cache> caches(copies);
  std::vector<ImageTensor> means;
  std::vector<ImageTensor> logvars;
  means.reserve(copies);
  logvars.reserve(copies);
  for (std::size_t k = 0; k < copies; ++k) {
    auto heads = denoiser_.forward(nn::from_image(vol.copies[k]), &caches[k]);
    means.push_back(nn::to_image(heads.mean));
    logvars.push_back(nn::to_image(heads.logvar));
  }
  const bool visible_grad = !cfg_.revisible.iid;
  DenoiserNet::Cache vcache;
  const auto visible = denoiser_.forward(x, visible_grad ? &vcache : nullptr);
  const auto mu_v = nn::to_image(visible.mean);
  const auto lv_v = nn::to_image(visible.logvar);
  const auto mu_m = map_blindspots(means, vol);
  const auto lv_m = map_blindspots(logvars, vol);

  const std::size_t n = y.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  const GradPolicy policy{cfg_.revisible.stop_grad_noise_term, visible_grad};
  ImageTensor d_mu_m(y.height(), y.width(), y.channels());
  ImageTensor d_lv_m(y.height(), y.width(), y.channels());
  ImageTensor d_mu_v(y.height(), y.width(), y.channels());
  ImageTensor d_lv_v(y.height(), y.width(), y.channels());
  double loss = 0.0;
  std::array<double, 3> d_params{};
  for (std::size_t i = 0; i < n; ++i) {
    const double raw_m = std::exp(double(lv_m.data()[i]));
    const double raw_v = std::exp(double(lv_v.data()[i]));
    const SampleInputs in{y.data()[i], mu_m.data()[i], std::max(raw_m, kVarFloor), mu_v.data()[i],
                          std::max(raw_v, kVarFloor)};
    const auto g = sample_nll(in, lambda, cfg_.revisible.variant, p, policy);
    loss += g.loss;
    const double s = scale * inv_n;
    d_mu_m.data()[i] = static_cast<float>(s * g.d_mu_m);
    d_lv_m.data()[i] = raw_m > kVarFloor ? static_cast<float>(s * g.d_var_m * raw_m) : 0.0f;
    d_mu_v.data()[i] = static_cast<float>(s * g.d_mu_v);
    d_lv_v.data()[i] = raw_v > kVarFloor ? static_cast<float>(s * g.d_var_v * raw_v) : 0.0f;
    out.visible_abs += std::abs(g.d_mu_v) + std::abs(g.d_var_v);
    d_params[0] += g.d_alpha;
    d_params[1] += g.d_sigma1;
    d_params[2] += g.d_sigma2;
  }
  out.nll = loss * inv_n;
  require_finite(out.nll, "nll");

  const auto est = estimation_loss(y, p, cfg_.estimation, joint);
  out.est = est.value;
  require_finite(out.est, "estimation");

  const std::size_t c = y.channels();
  const std::size_t plane = y.pixels();
  std::vector<nn::Tensor> dmean(copies, nn::Tensor(c, y.height(), y.width()));
  std::vector<nn::Tensor> dlv(copies, nn::Tensor(c, y.height(), y.width()));
  for (std::size_t r = 0; r < y.height(); ++r) {
    for (std::size_t col = 0; col < y.width(); ++col) {
      const auto k = vol.copy_of(r, col);
      const auto pix = r * y.width() + col;
      for (std::size_t ch = 0; ch < c; ++ch) {
        dmean[k].v[ch * plane + pix] = d_mu_m.data()[pix * c + ch];
        dlv[k].v[ch * plane + pix] = d_lv_m.data()[pix * c + ch];
      }
    }
  }
  for (std::size_t k = 0; k < copies; ++k) denoiser_.backward(caches[k], dmean[k], dlv[k]);
  if (visible_grad) denoiser_.backward(vcache, nn::from_image(d_mu_v), nn::from_image(d_lv_v));

  if (joint) {
    const double w = cfg_.revisible.estimator_loss_weight;
    const std::array<double, 3> d_out{scale * (d_params[0] * inv_n + w * est.d_alpha),
                                      scale * (d_params[1] * inv_n + w * est.d_sigma1),
                                      scale * (d_params[2] * inv_n + w * est.d_sigma2)};
    estimator_.backward(ecache, d_out);
  }
  return out;
}

StepResult Trainer::train_step(std::span<const ImageTensor> batch, double lambda) {
  require(!batch.empty(), ErrorKind::InvalidArgument, "empty batch");
  den_opt_.zero_grad();
  est_opt_.zero_grad();
  const double scale = 1.0 / static_cast<double>(batch.size());
  StepResult r;
  for (const auto& y : batch) {
    require(y.height() == y.width(), ErrorKind::InvalidArgument, "training patches must be square");
    const auto s = accumulate_sample(y, lambda, scale, rng_);
    r.nll += s.nll * scale;
    r.est_loss += s.est * scale;
    r.mean_params.alpha += s.params.alpha * scale;
    r.mean_params.sigma1 += s.params.sigma1 * scale;
    r.mean_params.sigma2 += s.params.sigma2 * scale;
    r.visible_grad_abs += s.visible_abs;
  }
  r.total = r.nll + cfg_.revisible.estimator_loss_weight * r.est_loss;
  require_finite(r.total, "total");
  den_opt_.step();
  if (cfg_.scheme == TrainScheme::Joint) est_opt_.step();
  ++steps_;
  return r;
}

double Trainer::pretrain_estimator(std::span<const ImageTensor> noisy, std::size_t steps, double lr) {
  require(!noisy.empty(), ErrorKind::InvalidArgument, "no images to pre-train the estimator on");
  nn::Adam opt(estimator_.params(), {lr, 0.9, 0.999, 1e-8, cfg_.weight_decay});
  double last = 0.0;
  for (std::size_t s = 0; s < steps; ++s) {
    const auto& y = noisy[s % noisy.size()];
    opt.zero_grad();
    EstimatorNet::Cache cache;
    const auto p = estimator_.forward(nn::from_image(y), &cache);
    const auto e = estimation_loss(y, p, cfg_.estimation, true);
    require_finite(e.value, "estimation");
    estimator_.backward(cache, {e.d_alpha, e.d_sigma1, e.d_sigma2});
    opt.step();
    last = e.value;
  }
  return last;
}

JointEstimationLoss estimation_loss(const ImageTensor& y, const NoiseParams& p, const EstimationLossConfig& cfg,
                                    bool with_grad) {
  const auto a = cramer_loss_detail(y, NoiseParams::single(p.alpha, p.sigma1), cfg, with_grad);
  JointEstimationLoss out;
  if (p.sigma2 == p.sigma1) {
    out.value = a.value;
    out.d_alpha = a.d_alpha;
    out.d_sigma1 = 0.5 * a.d_sigma;
    out.d_sigma2 = 0.5 * a.d_sigma;
    return out;
  }
  const auto b = cramer_loss_detail(y, NoiseParams::single(p.alpha, p.sigma2), cfg, with_grad);
  out.value = 0.5 * (a.value + b.value);
  out.d_alpha = 0.5 * (a.d_alpha + b.d_alpha);
  out.d_sigma1 = 0.5 * a.d_sigma;
  out.d_sigma2 = 0.5 * b.d_sigma;
  return out;
}

DataSplit load_split(const TrainConfig& cfg) {
  DataSplit split;
  std::vector<ImageTensor> all;
  if (cfg.data_dir.empty()) {
    const SeededRng root(kDatasetSeed);
    for (std::size_t i = 0; i < cfg.synthetic_count; ++i) {
      auto rng = root.fork(i);
      all.push_back(synth_clean(rng, cfg.synthetic_size, cfg.synthetic_size, cfg.channels));
    }
  } else {
    all = load_dataset(cfg.data_dir);
  }
  if (!cfg.val_dir.empty()) {
    split.train = std::move(all);
    split.val = load_dataset(cfg.val_dir);
  } else {
    if (all.size() <= cfg.val_count) {
      fail(ErrorKind::InvalidArgument,
           "dataset too small to hold out " + std::to_string(cfg.val_count) + " validation images");
    }
    split.val.assign(all.end() - static_cast<long>(cfg.val_count), all.end());
    all.resize(all.size() - cfg.val_count);
    split.train = std::move(all);
  }
  require(!split.train.empty() && !split.val.empty(), ErrorKind::InvalidArgument, "empty training or validation set");
  for (const auto& img : split.train) {
    require(img.channels() == cfg.channels, ErrorKind::ShapeMismatch, "image channel count differs from config");
  }
  return split;
}

TrainReport run_training(const TrainConfig& cfg, const std::filesystem::path& out_dir, const EpochCallback& on_epoch) {
  const auto split = load_split(cfg);
  return run_training(cfg, split.train, split.val, out_dir, on_epoch);
}

TrainReport run_training(const TrainConfig& cfg, std::span<const ImageTensor> train_clean,
                         std::span<const ImageTensor> val_clean, const std::filesystem::path& out_dir,
                         const EpochCallback& on_epoch, Trainer* trainer_out) {
  require(!train_clean.empty(), ErrorKind::InvalidArgument, "empty training set");
  require(!val_clean.empty(), ErrorKind::InvalidArgument, "empty validation set");
  std::optional<Trainer> local;
  if (!trainer_out) local.emplace(cfg);
  Trainer& t = trainer_out ? *trainer_out : *local;
  const SeededRng root(cfg.seed);

  std::vector<ImageTensor> val_ref;
  std::vector<ImageTensor> val_noisy;
  TrainReport report;
  for (std::size_t i = 0; i < val_clean.size(); ++i) {
    auto rng = root.fork(kValStream + i);
    val_ref.push_back(center_crop(val_clean[i], cfg.val_crop));
    val_noisy.push_back(corrupt(val_ref.back(), cfg, rng));
    report.noisy_psnr_val += psnr(val_noisy.back(), val_ref.back()).db;
  }
  report.noisy_psnr_val /= static_cast<double>(val_ref.size());

  if (cfg.scheme == TrainScheme::Pretrained) {
    if (!cfg.pretrained_estimator.empty()) {
      auto ck = load_checkpoint(cfg.pretrained_estimator);
      auto src = ck.estimator.params();
      auto dst = t.estimator().params();
      require(src.size() == dst.size(), ErrorKind::ShapeMismatch, "pre-trained estimator layout differs");
      for (std::size_t i = 0; i < src.size(); ++i) {
        require(src[i]->size() == dst[i]->size(), ErrorKind::ShapeMismatch, "pre-trained estimator layout differs");
        dst[i]->value = src[i]->value;
      }
    } else {
      std::vector<ImageTensor> pre;
      for (std::size_t i = 0; i < train_clean.size(); ++i) {
        auto rng = root.fork(kPretrainStream + i);
        pre.push_back(corrupt(random_crop(train_clean[i], cfg.patch_size, rng), cfg, rng));
      }
      t.pretrain_estimator(pre, cfg.pretrain_steps, cfg.pretrain_lr);
    }
  }

  const std::size_t n = train_clean.size();
  const std::size_t steps =
      cfg.steps_per_epoch ? cfg.steps_per_epoch : (n + cfg.batch_size - 1) / cfg.batch_size;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    t.begin_epoch(epoch);
    const double lambda = cfg.revisible.lambda_at(epoch, cfg.epochs);
    auto erng = root.fork(epoch + 1);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[erng.below(i)]);

    EpochMetrics m;
    m.epoch = epoch;
    m.lambda = lambda;
    for (std::size_t s = 0; s < steps; ++s) {
      std::vector<ImageTensor> batch;
      for (std::size_t b = 0; b < cfg.batch_size; ++b) {
        const auto& clean = train_clean[order[(s * cfg.batch_size + b) % n]];
        batch.push_back(corrupt(random_crop(clean, cfg.patch_size, erng), cfg, erng));
      }
      const auto r = t.train_step(batch, lambda);
      m.nll += r.nll / static_cast<double>(steps);
      m.est_loss += r.est_loss / static_cast<double>(steps);
    }
    for (std::size_t i = 0; i < val_ref.size(); ++i) {
      m.psnr_val += psnr(infer(t.denoiser(), val_noisy[i]), val_ref[i]).db;
      const auto p = t.noise_params(val_noisy[i]);
      m.alpha_hat += p.alpha;
      m.sigma1_hat += p.sigma1;
      m.sigma2_hat += p.sigma2;
    }
    const double inv = 1.0 / static_cast<double>(val_ref.size());
    m.psnr_val *= inv;
    m.alpha_hat *= inv;
    m.sigma1_hat *= inv;
    m.sigma2_hat *= inv;
    report.epochs.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  report.final_psnr_val = report.epochs.back().psnr_val;
  for (std::size_t i = 0; i < val_ref.size(); ++i) {
    const auto pred = infer(t.denoiser(), val_noisy[i]);
    if (pred.height() >= 11 && pred.width() >= 11) report.final_ssim_val += ssim(pred, val_ref[i]);
  }
  report.final_ssim_val /= static_cast<double>(val_ref.size());

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ostringstream tsv;
    tsv << "epoch\tlambda\tnll\test_loss\tpsnr_val\talpha_hat\tsigma1_hat\tsigma2_hat\n";
    for (const auto& m : report.epochs) {
      char line[256];
      std::snprintf(line, sizeof line, "%zu\t%.6g\t%.8g\t%.8g\t%.6f\t%.8g\t%.8g\t%.8g\n", m.epoch, m.lambda, m.nll,
                    m.est_loss, m.psnr_val, m.alpha_hat, m.sigma1_hat, m.sigma2_hat);
      tsv << line;
    }
    write_text(out_dir / "metrics.tsv", tsv.str());
    save_checkpoint(out_dir, t);
  }
  return report;
}

void save_checkpoint(const std::filesystem::path& dir, Trainer& trainer) {
  std::filesystem::create_directories(dir);
  std::ostringstream manifest;
  manifest << "# parameters\n";
  for (const auto& [name, p] : named_params(trainer.denoiser(), trainer.estimator())) {
    manifest << name << ' ' << shape_string(p->shape) << " f32\n";
    save_image(ImageTensor(1, p->size(), 1, p->value), dir / (name + ".pgt"), false);
  }
  manifest << "# config\n" << config_text(trainer.config());
  write_text(dir / "manifest.txt", manifest.str());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream f(dir / "manifest.txt", std::ios::binary);
  if (!f) fail(ErrorKind::Io, "cannot open " + (dir / "manifest.txt").string());
  std::map<std::string, std::string> shapes;
  std::string config;
  std::string line;
  bool in_config = false;
  while (std::getline(f, line)) {
    if (line == "# config") {
      in_config = true;
      continue;
    }
    if (in_config) {
      config += line + '\n';
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string name, shape, dtype;
    if (!(ls >> name >> shape >> dtype) || dtype != "f32") fail(ErrorKind::MalformedHeader, "bad manifest line: " + line);
    shapes[name] = shape;
  }
  TrainConfig cfg;
  apply_config(cfg, parse_key_values(config));
  LoadedCheckpoint ck{cfg, DenoiserNet(cfg.channels), EstimatorNet(cfg.channels)};
  for (const auto& [name, p] : named_params(ck.denoiser, ck.estimator)) {
    const auto it = shapes.find(name);
    if (it == shapes.end()) fail(ErrorKind::MalformedHeader, "manifest lacks parameter " + name);
    if (it->second != shape_string(p->shape)) fail(ErrorKind::ShapeMismatch, "shape mismatch for " + name);
    const auto t = load_image(dir / (name + ".pgt"));
    if (t.size() != p->size()) fail(ErrorKind::ShapeMismatch, "size mismatch for " + name);
    p->value.assign(t.data().begin(), t.data().end());
  }
  return ck;
}

}  // namespace pgs
