#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "maskcon/data.hpp"
#include "maskcon/losses.hpp"
#include "maskcon/model.hpp"

namespace maskcon {

// Everything a training run needs, resolved from defaults, a config file
// and command-line overrides (in that order). Desk-scale defaults.
struct RunConfig {
  ObjectiveConfig objective;

  // model widths; input_dim and n_coarse come from the dataset
  std::size_t hidden_dim = 256;
  std::size_t feat_dim = 128;
  std::size_t proj_hidden = 512;
  std::size_t proj_dim = 128;

  double lr = 0.02;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  bool wd_bias = true;  // apply weight decay to bias tensors too
  std::size_t epochs = 60;
  std::size_t batch_size = 64;

  std::size_t bank_size = 1024;
  double ema_m = 0.99;

  // data source: synthetic | vds | cifar
  std::string data = "synthetic";
  std::size_t m_coarse = 4;
  std::size_t fine_per_coarse = 3;
  std::size_t n_per_fine = 150;
  std::size_t dim = 100;
  double coarse_sep = 20.0;
  double fine_sep = 4.0;
  double noise = 1.0;
  double train_fraction = 2.0 / 3.0;
  std::string train_path;
  std::string test_path;
  std::string coarse_map;

  AugmentPolicy augment{0.2, 0.05, 0.02, true};

  std::size_t eval_every = 5;
  std::string eval_space = "features";
  Temperature dz_tau = Temperature::finite(0.05);
  std::size_t dz_sample = 36;  // neighbor-scale pools, where d_z is read

  std::uint64_t seed = 1;
  std::string out_dir = "runs/out";
};

// Flat `key = value` lines, '#' comments. Unknown keys are rejected.
RunConfig parse_config(const std::string& path);

// Applies one --key value override; same key names as the file format.
void apply_override(RunConfig& cfg, const std::string& key,
                    const std::string& value);

// Rejects invariant violations (w in [0,1], tau0 > 0, bank >= batch,
// epochs >= 1, ...) before any work happens.
void validate_config(const RunConfig& cfg);

}  // namespace maskcon
