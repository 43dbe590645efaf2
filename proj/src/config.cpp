#include "maskcon/config.hpp"

#include <cctype>
#include <fstream>
#include <limits>

#include "maskcon/errors.hpp"

namespace maskcon {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double to_real(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  }
}

std::size_t to_count(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size() || v < 0) throw std::invalid_argument(value);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a nonnegative integer, got '" +
                      value + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an unsigned integer, got '" + value +
                      "'");
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(key + ": expected true/false, got '" + value + "'");
}

Temperature to_tau(const std::string& key, const std::string& value) {
  try {
    return Temperature::parse(value);
  } catch (const NonPositiveTemperature& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

}  // namespace

void apply_override(RunConfig& cfg, const std::string& key,
                    const std::string& value) {
  if (key == "objective") {
    try {
      cfg.objective.kind = parse_objective_kind(value);
    } catch (const ConfigError&) {
      throw ConfigError("objective: unknown kind '" + value + "'");
    }
  } else if (key == "w") {
    cfg.objective.w = to_real(key, value);
  } else if (key == "tau") {
    cfg.objective.tau = to_tau(key, value);
  } else if (key == "tau0") {
    cfg.objective.tau0 = to_real(key, value);
  } else if (key == "adaptive_w") {
    cfg.objective.adaptive_w = to_bool(key, value);
  } else if (key == "hidden_dim") {
    cfg.hidden_dim = to_count(key, value);
  } else if (key == "feat_dim") {
    cfg.feat_dim = to_count(key, value);
  } else if (key == "proj_hidden") {
    cfg.proj_hidden = to_count(key, value);
  } else if (key == "proj_dim") {
    cfg.proj_dim = to_count(key, value);
  } else if (key == "lr") {
    cfg.lr = to_real(key, value);
  } else if (key == "momentum") {
    cfg.momentum = to_real(key, value);
  } else if (key == "weight_decay") {
    cfg.weight_decay = to_real(key, value);
  } else if (key == "wd_bias") {
    cfg.wd_bias = to_bool(key, value);
  } else if (key == "epochs") {
    cfg.epochs = to_count(key, value);
  } else if (key == "batch_size") {
    cfg.batch_size = to_count(key, value);
  } else if (key == "bank_size") {
    cfg.bank_size = to_count(key, value);
  } else if (key == "ema_m") {
    cfg.ema_m = to_real(key, value);
  } else if (key == "data") {
    cfg.data = value;
  } else if (key == "m_coarse") {
    cfg.m_coarse = to_count(key, value);
  } else if (key == "fine_per_coarse") {
    cfg.fine_per_coarse = to_count(key, value);
  } else if (key == "n_per_fine") {
    cfg.n_per_fine = to_count(key, value);
  } else if (key == "dim") {
    cfg.dim = to_count(key, value);
  } else if (key == "coarse_sep") {
    cfg.coarse_sep = to_real(key, value);
  } else if (key == "fine_sep") {
    cfg.fine_sep = to_real(key, value);
  } else if (key == "noise") {
    cfg.noise = to_real(key, value);
  } else if (key == "train_fraction") {
    cfg.train_fraction = to_real(key, value);
  } else if (key == "train_path") {
    cfg.train_path = value;
  } else if (key == "test_path") {
    cfg.test_path = value;
  } else if (key == "coarse_map") {
    cfg.coarse_map = value;
  } else if (key == "noise_sigma") {
    cfg.augment.noise_sigma = to_real(key, value);
  } else if (key == "scale_jitter") {
    cfg.augment.scale_jitter = to_real(key, value);
  } else if (key == "mask_frac") {
    cfg.augment.mask_frac = to_real(key, value);
  } else if (key == "strong") {
    cfg.augment.strong = to_bool(key, value);
  } else if (key == "eval_every") {
    cfg.eval_every = to_count(key, value);
  } else if (key == "eval_space") {
    cfg.eval_space = value;
  } else if (key == "dz_tau") {
    cfg.dz_tau = to_tau(key, value);
  } else if (key == "dz_sample") {
    cfg.dz_sample = to_count(key, value);
  } else if (key == "seed") {
    cfg.seed = to_u64(key, value);
  } else if (key == "out_dir") {
    cfg.out_dir = value;
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  RunConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) {
      line.resize(hash);
    }
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": expected 'key = value'");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": empty key or value");
    }
    apply_override(cfg, key, value);
  }
  return cfg;
}

void validate_config(const RunConfig& cfg) {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (!(cfg.objective.w >= 0.0 && cfg.objective.w <= 1.0)) {
    fail("w must be in [0,1]");
  }
  if (!(cfg.objective.tau0 > 0.0)) fail("tau0 must be > 0");
  if (cfg.epochs < 1) fail("epochs must be >= 1");
  if (cfg.batch_size < 1) fail("batch_size must be >= 1");
  if (cfg.bank_size < cfg.batch_size) fail("bank_size must be >= batch_size");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) {
    fail("momentum must be in [0,1)");
  }
  if (cfg.weight_decay < 0.0) fail("weight_decay must be >= 0");
  if (!(cfg.ema_m >= 0.0 && cfg.ema_m <= 1.0)) fail("ema_m must be in [0,1]");
  if (!(cfg.lr > 0.0)) fail("lr must be > 0");
  if (cfg.hidden_dim == 0 || cfg.feat_dim == 0 || cfg.proj_hidden == 0 ||
      cfg.proj_dim == 0) {
    fail("model widths must be positive");
  }
  if (cfg.data != "synthetic" && cfg.data != "vds" && cfg.data != "cifar") {
    fail("data must be synthetic, vds or cifar");
  }
  if (cfg.data == "synthetic") {
    if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0)) {
      fail("train_fraction must be in (0,1)");
    }
  } else if (cfg.train_path.empty() || cfg.test_path.empty()) {
    fail("train_path and test_path are required for data = " + cfg.data);
  }
  if (!(cfg.augment.noise_sigma >= 0.0)) fail("noise_sigma must be >= 0");
  if (!(cfg.augment.scale_jitter >= 0.0)) fail("scale_jitter must be >= 0");
  if (!(cfg.augment.mask_frac >= 0.0 && cfg.augment.mask_frac < 1.0)) {
    fail("mask_frac must be in [0,1)");
  }
  if (cfg.eval_every < 1) fail("eval_every must be >= 1");
  if (cfg.eval_space != "features" && cfg.eval_space != "projections") {
    fail("eval_space must be features or projections");
  }
  if (cfg.dz_sample < 2) fail("dz_sample must be >= 2");
  if (cfg.out_dir.empty()) fail("out_dir must not be empty");
}

}  // namespace maskcon
