#include "maskcon/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "maskcon/bank.hpp"
#include "maskcon/checkpoint.hpp"
#include "maskcon/errors.hpp"
#include "maskcon/losses.hpp"
#include "maskcon/numerics.hpp"

namespace maskcon {

namespace {

// fixed rng stream tags so adding a consumer never shifts another stream
constexpr std::uint64_t kStreamData = 0xD5;
constexpr std::uint64_t kStreamInit = 0x11;
constexpr std::uint64_t kStreamWarmup = 0x100;
constexpr std::uint64_t kStreamDz = 0x999;
constexpr std::uint64_t kStreamEpoch = 0x10000;  // + epoch index

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::vector<Matrix> objective_backward(const ModelParams& model,
                                       const ObjectiveConfig& cfg,
                                       const ForwardCaches& caches,
                                       const LossOutput& out) {
  Matrix g_feat;
  std::vector<Layer> proj_grads;
  Layer cls_grads;
  const bool has_proj = !out.grad_proj.empty();
  const bool has_logits = !out.grad_logits.empty();
  if (has_proj) {
    g_feat = project_backward(model, caches.proj, out.grad_proj, proj_grads);
  }
  if (has_logits) {
    Matrix g = classify_backward(model, caches.features, out.grad_logits,
                                 cls_grads);
    if (g_feat.empty()) {
      g_feat = std::move(g);
    } else {
      axpy(1.0, g, g_feat);
    }
  }
  std::vector<Layer> enc_grads;
  mlp_backward(model.encoder, caches.enc, g_feat, enc_grads);

  std::vector<Matrix> grads;
  for (Layer& l : enc_grads) {
    grads.push_back(std::move(l.w));
    grads.push_back(std::move(l.b));
  }
  const ParamSet set = objective_param_set(cfg.kind);
  if (set != ParamSet::EncoderClassifier) {
    for (Layer& l : proj_grads) {
      grads.push_back(std::move(l.w));
      grads.push_back(std::move(l.b));
    }
  }
  if (set != ParamSet::EncoderProjector) {
    grads.push_back(std::move(cls_grads.w));
    grads.push_back(std::move(cls_grads.b));
  }
  return grads;
}

std::pair<Dataset, Dataset> load_datasets(const RunConfig& cfg) {
  if (cfg.data == "synthetic") {
    return gen_hierarchical_gaussian(
        cfg.m_coarse, cfg.fine_per_coarse, cfg.n_per_fine, cfg.dim,
        cfg.coarse_sep, cfg.fine_sep, cfg.noise,
        mix_seed(cfg.seed, kStreamData), cfg.train_fraction);
  }
  if (cfg.data == "vds") {
    Dataset train = load_vds(cfg.train_path, Split::Train);
    Dataset test = load_vds(cfg.test_path, Split::Test);
    if (train.meta.input_dim != test.meta.input_dim) {
      throw DimMismatch("train/test dims differ: " +
                        std::to_string(train.meta.input_dim) + " vs " +
                        std::to_string(test.meta.input_dim));
    }
    return {std::move(train), std::move(test)};
  }
  return load_cifar_pair(cfg.train_path, cfg.test_path, cfg.coarse_map);
}

TrainResult train_run(const RunConfig& cfg) {
  validate_config(cfg);
  auto [train, test] = load_datasets(cfg);

  ModelDims dims;
  dims.input_dim = train.meta.input_dim;
  dims.hidden_dim = cfg.hidden_dim;
  dims.feat_dim = cfg.feat_dim;
  dims.proj_hidden = cfg.proj_hidden;
  dims.proj_dim = cfg.proj_dim;
  dims.n_coarse = train.meta.m_coarse;
  Rng init_rng(mix_seed(cfg.seed, kStreamInit));
  ModelParams model = init_model(dims, init_rng);

  MemoryBank bank(cfg.bank_size, cfg.proj_dim);
  // warmup: fill the bank from key-view projections, no gradients
  for (const Batch& b :
       batches(train, cfg.batch_size, cfg.augment,
               mix_seed(cfg.seed, kStreamWarmup))) {
    bank.push(key_project(model, b.key_views), b.coarse_labels, b.ids);
  }

  const ParamSet set = objective_param_set(cfg.objective.kind);
  std::vector<Matrix*> params = trainable_params(model, set);
  std::vector<std::uint8_t> is_bias = trainable_is_bias(model, set);
  OptimState optim = init_optim_state(
      std::span<const Matrix* const>(params.data(), params.size()), is_bias,
      cfg.lr, cfg.momentum, cfg.weight_decay, cfg.epochs);
  optim.decay_bias = cfg.wd_bias;

  std::filesystem::create_directories(cfg.out_dir);
  if (cfg.data == "synthetic") {
    // the synthetic test split only exists in-process; keep it reachable
    // for the eval command
    save_vds(cfg.out_dir + "/test.vds", test);
  }
  const std::string metrics_path = cfg.out_dir + "/metrics.csv";
  const std::string timing_path = cfg.out_dir + "/timing.csv";
  const std::string ckpt_path = cfg.out_dir + "/checkpoint.mkcn";
  std::ofstream metrics(metrics_path, std::ios::trunc);
  std::ofstream timing(timing_path, std::ios::trunc);
  if (!metrics || !timing) {
    throw IoError("cannot write into " + cfg.out_dir);
  }
  metrics << "epoch,objective,lr,recall@1,recall@2,recall@5,recall@10,"
             "dz_sup,dz_mask\n";
  timing << "epoch,wall_seconds\n";

  const std::size_t ks[] = {1, 2, 5, 10};
  const std::size_t dz_sample = std::min(cfg.dz_sample, test.meta.n);
  const Temperature dz_taus[] = {cfg.dz_tau};

  TrainResult result;
  result.checkpoint_path = ckpt_path;
  result.metrics_path = metrics_path;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    optim.epoch = epoch;
    const double lr = cosine_lr(epoch, cfg.epochs, cfg.lr);

    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (const Batch& batch :
         batches(train, cfg.batch_size, cfg.augment,
                 mix_seed(cfg.seed, kStreamEpoch + epoch))) {
      ForwardCaches caches;
      LossOutput out =
          compute_objective(batch, model, bank, cfg.objective, &caches);
      if (!std::isfinite(out.value)) {
        throw NumericalError("non-finite objective at epoch " +
                             std::to_string(epoch + 1) + " batch " +
                             std::to_string(n_batches + 1));
      }
      std::vector<Matrix> grads =
          objective_backward(model, cfg.objective, caches, out);
      sgd_step(std::span<Matrix* const>(params.data(), params.size()),
               std::span<const Matrix>(grads.data(), grads.size()), optim);
      momentum_update(model, cfg.ema_m);
      if (!caches.key_projections.empty()) {
        bank.push(caches.key_projections, batch.coarse_labels, batch.ids);
      }
      epoch_loss += out.value;
      ++n_batches;
    }
    epoch_loss /= static_cast<double>(n_batches);
    result.final_objective = epoch_loss;

    metrics << epoch + 1 << ',' << fmt(epoch_loss) << ',' << fmt(lr);
    const bool do_eval =
        (epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs;
    if (do_eval) {
      const EmbeddingSpace space = parse_embedding_space(cfg.eval_space);
      const Matrix emb = embed_dataset(model, test, space);
      result.final_recall = recall_at_k(emb, test.fine_labels, ks);
      result.final_recall.space = space;
      result.final_dz = dz_report(model, test, dz_taus, dz_sample,
                                  mix_seed(cfg.seed, kStreamDz));
      for (double s : result.final_recall.scores) metrics << ',' << fmt(s);
      metrics << ',' << fmt(result.final_dz.dz_sup) << ','
              << fmt(result.final_dz.dz_mask[0]);
    } else {
      metrics << ",,,,,,";
    }
    metrics << '\n';

    const std::chrono::duration<double> dt =
        std::chrono::steady_clock::now() - t0;
    timing << epoch + 1 << ',' << fmt(dt.count()) << '\n';
  }
  metrics.close();
  timing.close();
  if (!metrics.good() || !timing.good()) {
    throw IoError("write failed in " + cfg.out_dir);
  }

  save_checkpoint(ckpt_path, model);
  return result;
}

}  // namespace maskcon
