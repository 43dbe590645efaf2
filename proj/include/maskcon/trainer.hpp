#pragma once

#include <string>
#include <utility>

#include "maskcon/config.hpp"
#include "maskcon/eval.hpp"
#include "maskcon/losses.hpp"
#include "maskcon/model.hpp"

namespace maskcon {

// Head gradients pushed down to parameter gradients, flattened in
// trainable_params order for the objective's parameter set.
std::vector<Matrix> objective_backward(const ModelParams& model,
                                       const ObjectiveConfig& cfg,
                                       const ForwardCaches& caches,
                                       const LossOutput& out);

struct TrainResult {
  std::string checkpoint_path;
  std::string metrics_path;
  double final_objective = 0.0;
  RecallReport final_recall;
  DzReport final_dz;
};

// Resolves the configured data source into train/test datasets.
std::pair<Dataset, Dataset> load_datasets(const RunConfig& cfg);

// Warmup bank-fill epoch, then the training loop: forward both views,
// relations, loss, backward, sgd_step, momentum_update, bank push.
// Writes metrics.csv (deterministic given config+seed), timing.csv (wall
// clock, not deterministic) and checkpoint.mkcn into cfg.out_dir.
TrainResult train_run(const RunConfig& cfg);

}  // namespace maskcon
