#include "pgs/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "pgs/error.hpp"

namespace pgs {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const ConfigEntry& e, const std::string& expected) {
  fail(ErrorKind::Config, "line " + std::to_string(e.line) + ": " + e.key + " expects " + expected + ", got '" +
                              e.value + "'");
}

double as_double(const ConfigEntry& e) {
  double v = 0.0;
  const auto* end = e.value.data() + e.value.size();
  auto [p, ec] = std::from_chars(e.value.data(), end, v);
  if (ec != std::errc() || p != end) bad_value(e, "a number");
  return v;
}

std::size_t as_size(const ConfigEntry& e) {
  std::size_t v = 0;
  const auto* end = e.value.data() + e.value.size();
  auto [p, ec] = std::from_chars(e.value.data(), end, v);
  if (ec != std::errc() || p != end) bad_value(e, "a non-negative integer");
  return v;
}

bool as_bool(const ConfigEntry& e) {
  if (e.value == "true" || e.value == "1" || e.value == "yes") return true;
  if (e.value == "false" || e.value == "0" || e.value == "no") return false;
  bad_value(e, "true or false");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

using Setter = std::function<void(TrainConfig&, const ConfigEntry&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"epochs", [](TrainConfig& c, const ConfigEntry& e) { c.epochs = as_size(e); }},
      {"batch_size", [](TrainConfig& c, const ConfigEntry& e) { c.batch_size = as_size(e); }},
      {"patch_size", [](TrainConfig& c, const ConfigEntry& e) { c.patch_size = as_size(e); }},
      {"steps_per_epoch", [](TrainConfig& c, const ConfigEntry& e) { c.steps_per_epoch = as_size(e); }},
      {"lr_denoiser", [](TrainConfig& c, const ConfigEntry& e) { c.lr_denoiser = as_double(e); }},
      {"lr_estimator", [](TrainConfig& c, const ConfigEntry& e) { c.lr_estimator = as_double(e); }},
      {"denoiser_halve_every", [](TrainConfig& c, const ConfigEntry& e) { c.denoiser_halve_every = as_size(e); }},
      {"estimator_halve_every", [](TrainConfig& c, const ConfigEntry& e) { c.estimator_halve_every = as_size(e); }},
      {"weight_decay", [](TrainConfig& c, const ConfigEntry& e) { c.weight_decay = as_double(e); }},
      {"seed", [](TrainConfig& c, const ConfigEntry& e) { c.seed = as_size(e); }},
      {"lambda_start", [](TrainConfig& c, const ConfigEntry& e) { c.revisible.lambda_start = as_double(e); }},
      {"lambda_final", [](TrainConfig& c, const ConfigEntry& e) { c.revisible.lambda_final = as_double(e); }},
      {"noise_model",
       [](TrainConfig& c, const ConfigEntry& e) {
         try {
           c.revisible.variant = parse_variant(e.value);
         } catch (const Error&) {
           bad_value(e, "M_O, M_E or M_S");
         }
       }},
      {"iid", [](TrainConfig& c, const ConfigEntry& e) { c.revisible.iid = as_bool(e); }},
      {"stop_grad_noise_term",
       [](TrainConfig& c, const ConfigEntry& e) { c.revisible.stop_grad_noise_term = as_bool(e); }},
      {"estimator_loss_weight",
       [](TrainConfig& c, const ConfigEntry& e) { c.revisible.estimator_loss_weight = as_double(e); }},
      {"scheme",
       [](TrainConfig& c, const ConfigEntry& e) {
         try {
           c.scheme = parse_scheme(e.value);
         } catch (const Error&) {
           bad_value(e, "T+P, T+F or T+J");
         }
       }},
      {"alpha", [](TrainConfig& c, const ConfigEntry& e) { c.noise.alpha = as_double(e); }},
      {"sigma",
       [](TrainConfig& c, const ConfigEntry& e) { c.noise.sigma1 = c.noise.sigma2 = as_double(e); }},
      {"exact_noise", [](TrainConfig& c, const ConfigEntry& e) { c.exact_noise = as_bool(e); }},
      {"cell_size", [](TrainConfig& c, const ConfigEntry& e) { c.cell_size = as_size(e); }},
      {"mask_fill",
       [](TrainConfig& c, const ConfigEntry& e) {
         try {
           c.mask_fill = parse_mask_fill(e.value);
         } catch (const Error&) {
           bad_value(e, "mean, zero or random");
         }
       }},
      {"grain",
       [](TrainConfig& c, const ConfigEntry& e) {
         try {
           c.estimation.grain = Grain::parse(e.value);
         } catch (const Error&) {
           bad_value(e, "CG, FG1, CG+FG1, CG+FG2 or CG+FG1+FG2");
         }
       }},
      {"literal_multi", [](TrainConfig& c, const ConfigEntry& e) { c.estimation.literal_multi = as_bool(e); }},
      {"estimator_patch", [](TrainConfig& c, const ConfigEntry& e) { c.estimation.patch.patch_size = as_size(e); }},
      {"estimator_stride", [](TrainConfig& c, const ConfigEntry& e) { c.estimation.patch.stride = as_size(e); }},
      {"channels", [](TrainConfig& c, const ConfigEntry& e) { c.channels = as_size(e); }},
      {"data_dir", [](TrainConfig& c, const ConfigEntry& e) { c.data_dir = e.value; }},
      {"val_dir", [](TrainConfig& c, const ConfigEntry& e) { c.val_dir = e.value; }},
      {"val_count", [](TrainConfig& c, const ConfigEntry& e) { c.val_count = as_size(e); }},
      {"val_crop", [](TrainConfig& c, const ConfigEntry& e) { c.val_crop = as_size(e); }},
      {"synthetic_count", [](TrainConfig& c, const ConfigEntry& e) { c.synthetic_count = as_size(e); }},
      {"synthetic_size", [](TrainConfig& c, const ConfigEntry& e) { c.synthetic_size = as_size(e); }},
      {"pretrained_estimator", [](TrainConfig& c, const ConfigEntry& e) { c.pretrained_estimator = e.value; }},
      {"pretrain_steps", [](TrainConfig& c, const ConfigEntry& e) { c.pretrain_steps = as_size(e); }},
      {"pretrain_lr", [](TrainConfig& c, const ConfigEntry& e) { c.pretrain_lr = as_double(e); }},
  };
  return table;
}

}  // namespace

std::vector<ConfigEntry> parse_key_values(const std::string& text) {
  std::vector<ConfigEntry> out;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.resize(hash);
    const auto body = trim(raw);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) fail(ErrorKind::Config, "line " + std::to_string(line) + ": expected key = value");
    ConfigEntry e{trim(body.substr(0, eq)), trim(body.substr(eq + 1)), line};
    if (e.key.empty()) fail(ErrorKind::Config, "line " + std::to_string(line) + ": empty key");
    if (!seen.insert(e.key).second) fail(ErrorKind::Config, "line " + std::to_string(line) + ": duplicate key " + e.key);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<ConfigEntry> load_key_values(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::Io, "cannot open config " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_key_values(ss.str());
}

void apply_config(TrainConfig& cfg, const std::vector<ConfigEntry>& entries) {
  const auto& table = setters();
  for (const auto& e : entries) {
    const auto it = table.find(e.key);
    if (it == table.end()) fail(ErrorKind::Config, "line " + std::to_string(e.line) + ": unknown key " + e.key);
    it->second(cfg, e);
  }
  cfg.validate();
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  TrainConfig cfg;
  apply_config(cfg, load_key_values(path));
  return cfg;
}

std::string config_text(const TrainConfig& c) {
  std::ostringstream o;
  auto kv = [&o](const char* k, const std::string& v) { o << k << " = " << v << '\n'; };
  kv("epochs", std::to_string(c.epochs));
  kv("batch_size", std::to_string(c.batch_size));
  kv("patch_size", std::to_string(c.patch_size));
  kv("steps_per_epoch", std::to_string(c.steps_per_epoch));
  kv("lr_denoiser", fmt(c.lr_denoiser));
  kv("lr_estimator", fmt(c.lr_estimator));
  kv("denoiser_halve_every", std::to_string(c.denoiser_halve_every));
  kv("estimator_halve_every", std::to_string(c.estimator_halve_every));
  kv("weight_decay", fmt(c.weight_decay));
  kv("seed", std::to_string(c.seed));
  kv("lambda_start", fmt(c.revisible.lambda_start));
  kv("lambda_final", fmt(c.revisible.lambda_final));
  kv("noise_model", to_string(c.revisible.variant));
  kv("iid", c.revisible.iid ? "true" : "false");
  kv("stop_grad_noise_term", c.revisible.stop_grad_noise_term ? "true" : "false");
  kv("estimator_loss_weight", fmt(c.revisible.estimator_loss_weight));
  kv("scheme", to_string(c.scheme));
  kv("alpha", fmt(c.noise.alpha));
  kv("sigma", fmt(c.noise.sigma1));
  kv("exact_noise", c.exact_noise ? "true" : "false");
  kv("cell_size", std::to_string(c.cell_size));
  kv("mask_fill", to_string(c.mask_fill));
  kv("grain", c.estimation.grain.name());
  kv("literal_multi", c.estimation.literal_multi ? "true" : "false");
  kv("estimator_patch", std::to_string(c.estimation.patch.patch_size));
  kv("estimator_stride", std::to_string(c.estimation.patch.stride));
  kv("channels", std::to_string(c.channels));
  if (!c.data_dir.empty()) kv("data_dir", c.data_dir.string());
  if (!c.val_dir.empty()) kv("val_dir", c.val_dir.string());
  kv("val_count", std::to_string(c.val_count));
  kv("val_crop", std::to_string(c.val_crop));
  kv("synthetic_count", std::to_string(c.synthetic_count));
  kv("synthetic_size", std::to_string(c.synthetic_size));
  if (!c.pretrained_estimator.empty()) kv("pretrained_estimator", c.pretrained_estimator.string());
  kv("pretrain_steps", std::to_string(c.pretrain_steps));
  kv("pretrain_lr", fmt(c.pretrain_lr));
  return o.str();
}

}  // namespace pgs
