#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include "pgs/bench.hpp"
#include "pgs/config.hpp"
#include "pgs/dataset.hpp"
#include "pgs/error.hpp"
#include "pgs/io.hpp"
#include "pgs/metrics.hpp"
#include "pgs/networks.hpp"
#include "pgs/noise_model.hpp"
#include "pgs/trainer.hpp"

namespace fs = std::filesystem;
using namespace pgs;

namespace {

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::Io, "cannot write " + path.string());
  f << text;
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Io: return 3;
    case ErrorKind::MalformedHeader:
    case ErrorKind::DimensionOverflow:
    case ErrorKind::TruncatedPayload: return 4;
    case ErrorKind::Config: return 5;
    case ErrorKind::Numerical: return 6;
    default: return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Poisson-Gaussian noise sensing and self-supervised denoising"};
  app.require_subcommand(1);

  struct {
    fs::path out;
    std::size_t count = 24, size = 128, channels = 1;
    std::uint64_t seed = 1;
  } gen;
  auto* gen_cmd = app.add_subcommand("gen", "Write procedural clean images");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--count", gen.count, "Number of images");
  gen_cmd->add_option("--size", gen.size, "Image side length");
  gen_cmd->add_option("--channels", gen.channels, "1 or 3");
  gen_cmd->add_option("--seed", gen.seed, "Seed");

  struct {
    fs::path in, out;
    double alpha = 0.0, sigma = 0.0;
    std::uint64_t seed = 1;
    bool exact = false, approx = false;
  } synth;
  auto* synth_cmd = app.add_subcommand("synth", "Corrupt clean images with Poisson-Gaussian noise");
  synth_cmd->add_option("--in", synth.in, "Clean image directory")->required();
  synth_cmd->add_option("--out", synth.out, "Output directory (raw .pgt, unclipped)")->required();
  synth_cmd->add_option("--alpha", synth.alpha, "Poisson scale")->required();
  synth_cmd->add_option("--sigma", synth.sigma, "Gaussian std")->required();
  synth_cmd->add_option("--seed", synth.seed, "Seed");
  auto* exact_flag = synth_cmd->add_flag("--exact", synth.exact, "Exact Poisson sampling (default)");
  synth_cmd->add_flag("--approx", synth.approx, "Heteroscedastic Gaussian approximation")->excludes(exact_flag);

  struct {
    fs::path in, out;
    double alpha = 0.0, sigma = 0.0;
    bool inverse = false;
  } gatc;
  auto* gat_cmd = app.add_subcommand("gat", "Apply the variance-stabilizing transform");
  gat_cmd->add_option("--in", gatc.in, "Input image")->required();
  gat_cmd->add_option("--out", gatc.out, "Output image")->required();
  gat_cmd->add_option("--alpha", gatc.alpha, "Poisson scale")->required();
  gat_cmd->add_option("--sigma", gatc.sigma, "Gaussian std")->required();
  gat_cmd->add_flag("--inverse", gatc.inverse, "Apply the algebraic inverse");

  struct {
    fs::path in;
    std::string method = "cramer";
    bool grid = false, train = false;
    std::size_t steps = 300;
    std::uint64_t seed = 1;
  } est;
  auto* est_cmd = app.add_subcommand("estimate", "Estimate (alpha, sigma) from one noisy image");
  est_cmd->add_option("--in", est.in, "Noisy image")->required();
  est_cmd->add_option("--method", est.method, "gaussian or cramer")->check(CLI::IsMember({"gaussian", "cramer"}));
  auto* grid_flag = est_cmd->add_flag("--grid", est.grid, "Grid fit (default)");
  est_cmd->add_flag("--train", est.train, "Fit an estimator network")->excludes(grid_flag);
  est_cmd->add_option("--steps", est.steps, "Network fit steps");
  est_cmd->add_option("--seed", est.seed, "Seed");

  struct {
    fs::path data, config, out;
  } train;
  auto* train_cmd = app.add_subcommand("train", "Jointly train the denoiser and noise estimator");
  train_cmd->add_option("--data", train.data, "Clean image directory");
  train_cmd->add_option("--config", train.config, "Config file")->required();
  train_cmd->add_option("--out", train.out, "Checkpoint directory")->required();

  struct {
    fs::path ckpt, in, out;
  } den;
  auto* den_cmd = app.add_subcommand("denoise", "Denoise one image with a checkpoint");
  den_cmd->add_option("--ckpt", den.ckpt, "Checkpoint directory")->required();
  den_cmd->add_option("--in", den.in, "Noisy image")->required();
  den_cmd->add_option("--out", den.out, "Output image")->required();

  struct {
    fs::path pred, ref;
  } ev;
  auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM of predictions against references");
  eval_cmd->add_option("--pred", ev.pred, "Prediction directory")->required();
  eval_cmd->add_option("--ref", ev.ref, "Reference directory")->required();

  struct {
    fs::path data, tsv;
    std::string levels = "pg1,pg2,pg3,pg4,pg5", method = "cramer";
    bool train = false;
    std::size_t max_images = 0;
    std::uint64_t seed = 7;
  } bench;
  auto* bench_cmd = app.add_subcommand("bench", "Noise estimation benchmark");
  bench_cmd->add_option("--data", bench.data, "Clean image directory")->required();
  bench_cmd->add_option("--levels", bench.levels, "Comma list: pg1..pg5, zero, alpha:sigma");
  bench_cmd->add_option("--method", bench.method, "gaussian or cramer")->check(CLI::IsMember({"gaussian", "cramer"}));
  bench_cmd->add_flag("--train", bench.train, "Fit an estimator network instead of the grid");
  bench_cmd->add_option("--max-images", bench.max_images, "Limit the image count");
  bench_cmd->add_option("--seed", bench.seed, "Seed");
  bench_cmd->add_option("--tsv", bench.tsv, "Also write the report as TSV");

  struct {
    std::string axis;
    fs::path config, tsv;
    bool parallel = false;
  } abl;
  auto* abl_cmd = app.add_subcommand("ablate", "Run one ablation axis");
  abl_cmd->add_option("--axis", abl.axis, "grain, weight, scheme, noise_model, iid or lambda")
      ->required()
      ->check(CLI::IsMember({"grain", "weight", "scheme", "noise_model", "iid", "lambda"}));
  abl_cmd->add_option("--config", abl.config, "Config file")->required();
  abl_cmd->add_flag("--parallel", abl.parallel, "Run settings on worker threads");
  abl_cmd->add_option("--tsv", abl.tsv, "Also write the report as TSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_cmd) {
      for (const auto& p : generate_dataset(gen.out, gen.count, gen.size, gen.size, gen.channels, gen.seed)) {
        std::cout << p.string() << '\n';
      }
    } else if (*synth_cmd) {
      const auto p = NoiseParams::single(synth.alpha, synth.sigma);
      const SeededRng root(synth.seed);
      fs::create_directories(synth.out);
      std::uint64_t i = 0;
      for (const auto& path : list_images(synth.in)) {
        auto rng = root.fork(i++);
        const auto x = load_image(path);
        const auto y = synth.approx ? corrupt_gaussian_approx(x, p, rng) : corrupt_exact(x, p, rng);
        const auto dst = synth.out / path.filename().replace_extension(".pgt");
        save_image(y, dst, false);
        std::cout << dst.string() << '\n';
      }
    } else if (*gat_cmd) {
      const auto p = NoiseParams::single(gatc.alpha, gatc.sigma);
      const auto img = load_image(gatc.in);
      save_image(gatc.inverse ? gat_inverse_algebraic(img, p) : gat(img, p), gatc.out, false);
    } else if (*est_cmd) {
      const auto y = load_image(est.in);
      const auto method = parse_method(est.method);
      NoiseParams p;
      if (est.train) {
        NetFitConfig net;
        net.steps = est.steps;
        net.seed = est.seed;
        const std::vector<ImageTensor> one{y};
        p = net_fit(one, method, {}, net);
      } else {
        p = grid_fit(y, method, {}).params;
      }
      std::printf("alpha_hat\t%.6f\nsigma_hat\t%.6f\n", p.alpha, 0.5 * (p.sigma1 + p.sigma2));
    } else if (*train_cmd) {
      auto cfg = load_train_config(train.config);
      if (!train.data.empty()) cfg.data_dir = train.data;
      std::printf("epoch\tlambda\tnll\test_loss\tpsnr_val\talpha_hat\tsigma1_hat\tsigma2_hat\n");
      const auto report = run_training(cfg, train.out, [](const EpochMetrics& m) {
        std::printf("%zu\t%.4g\t%.6f\t%.6f\t%.4f\t%.6f\t%.6f\t%.6f\n", m.epoch, m.lambda, m.nll, m.est_loss,
                    m.psnr_val, m.alpha_hat, m.sigma1_hat, m.sigma2_hat);
        std::fflush(stdout);
      });
      std::printf("noisy_psnr_val\t%.4f\nfinal_psnr_val\t%.4f\nfinal_ssim_val\t%.4f\n", report.noisy_psnr_val,
                  report.final_psnr_val, report.final_ssim_val);
    } else if (*den_cmd) {
      const auto ck = load_checkpoint(den.ckpt);
      save_image(infer(ck.denoiser, load_image(den.in)), den.out, true);
    } else if (*eval_cmd) {
      std::map<std::string, fs::path> refs;
      for (const auto& p : list_images(ev.ref)) refs[p.stem().string()] = p;
      Table t;
      t.notes.push_back("predictions loaded as stored; no extra clipping");
      t.header = {"image", "psnr", "ssim"};
      double sp = 0.0, ss = 0.0;
      std::size_t n = 0;
      for (const auto& p : list_images(ev.pred)) {
        const auto it = refs.find(p.stem().string());
        if (it == refs.end()) continue;
        const auto a = load_image(p);
        const auto b = load_image(it->second);
        const auto ps = psnr(a, b);
        const double s = ssim(a, b);
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6f", s);
        t.rows.push_back({p.stem().string(), ps.str(), buf});
        sp += ps.db;
        ss += s;
        ++n;
      }
      require(n > 0, ErrorKind::InvalidArgument, "no prediction matches a reference by name");
      char mp[32], ms[32];
      std::snprintf(mp, sizeof mp, "%.4f", sp / double(n));
      std::snprintf(ms, sizeof ms, "%.6f", ss / double(n));
      t.rows.push_back({"mean", mp, ms});
      std::cout << t.text();
    } else if (*bench_cmd) {
      const auto clean = load_dataset(bench.data);
      const auto levels = parse_levels(bench.levels);
      BenchConfig cfg;
      cfg.method = parse_method(bench.method);
      cfg.train = bench.train;
      cfg.max_images = bench.max_images;
      cfg.seed = bench.seed;
      const auto table = bench_estimation(clean, levels, cfg).table();
      std::cout << table.text();
      if (!bench.tsv.empty()) write_file(bench.tsv, table.tsv());
    } else if (*abl_cmd) {
      const auto cfg = load_train_config(abl.config);
      const auto report = run_ablation(parse_axis(abl.axis), cfg, abl.parallel, [](const AblationRow& r) {
        std::fprintf(stderr, "done: %s\n", r.setting.c_str());
      });
      const auto table = report.table();
      std::cout << table.text();
      if (!abl.tsv.empty()) write_file(abl.tsv, table.tsv());
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  }
  return 0;
}
