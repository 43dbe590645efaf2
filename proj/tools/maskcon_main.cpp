// Command-line front end: train, eval and sweep over the core engine.

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "maskcon/checkpoint.hpp"
#include "maskcon/config.hpp"
#include "maskcon/errors.hpp"
#include "maskcon/eval.hpp"
#include "maskcon/trainer.hpp"

namespace {

using namespace maskcon;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::size_t end = comma == std::string::npos ? text.size() : comma;
    if (end > start) out.push_back(text.substr(start, end - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

// --key value and --key=value pairs left over after the named options
void apply_extra_overrides(RunConfig& cfg,
                           const std::vector<std::string>& extras) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& tok = extras[i];
    if (tok.rfind("--", 0) != 0 || tok.size() <= 2) {
      throw ConfigError("expected --key value override, got '" + tok + "'");
    }
    std::string key = tok.substr(2);
    std::string value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key.resize(eq);
    } else {
      if (i + 1 >= extras.size()) {
        throw ConfigError("missing value for override --" + key);
      }
      value = extras[++i];
    }
    apply_override(cfg, key, value);
  }
}

RunConfig resolve_config(const std::string& config_path,
                         const std::string& seed, const std::string& out,
                         const std::vector<std::string>& extras) {
  RunConfig cfg = parse_config(config_path);
  if (!seed.empty()) apply_override(cfg, "seed", seed);
  if (!out.empty()) apply_override(cfg, "out_dir", out);
  apply_extra_overrides(cfg, extras);
  validate_config(cfg);
  return cfg;
}

int cmd_train(const std::string& config_path, const std::string& seed,
              const std::string& out, const std::vector<std::string>& extras) {
  const RunConfig cfg = resolve_config(config_path, seed, out, extras);
  const TrainResult res = train_run(cfg);
  std::cout << "checkpoint: " << res.checkpoint_path << "\n";
  std::cout << "metrics: " << res.metrics_path << "\n";
  std::cout << "final objective: " << fmt(res.final_objective) << "\n";
  for (std::size_t i = 0; i < res.final_recall.ks.size(); ++i) {
    std::cout << "recall@" << res.final_recall.ks[i] << ": "
              << fmt(res.final_recall.scores[i]) << "\n";
  }
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path,
             const std::string& ks_text, const std::string& space_name,
             const std::string& out_path) {
  const ModelParams model = load_checkpoint(ckpt_path);
  const Dataset test = load_vds(data_path, Split::Test);
  const EmbeddingSpace space = parse_embedding_space(space_name);

  std::vector<std::size_t> ks;
  for (const std::string& tok : split_list(ks_text)) {
    const long v = std::stol(tok);
    if (v < 1) throw ConfigError("--ks entries must be >= 1");
    ks.push_back(static_cast<std::size_t>(v));
  }
  if (ks.empty()) throw ConfigError("--ks must name at least one K");

  const Matrix emb = embed_dataset(model, test, space);
  const RecallReport report = recall_at_k(emb, test.fine_labels, ks);
  const Temperature dz_taus[] = {Temperature::finite(0.05)};
  const DzReport dz = dz_report(model, test, dz_taus,
                                std::min<std::size_t>(128, test.meta.n), 1);

  std::string csv = "k,score\n";
  for (std::size_t i = 0; i < report.ks.size(); ++i) {
    csv += std::to_string(report.ks[i]) + "," + fmt(report.scores[i]) + "\n";
  }
  std::cout << csv;
  std::cout << "dz_sup," << fmt(dz.dz_sup) << "\n";
  std::cout << "dz_mask@0.05," << fmt(dz.dz_mask[0]) << "\n";
  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + out_path + " for writing");
    out << csv;
    if (!out.good()) throw IoError("write failed on " + out_path);
  }
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& w_text,
              const std::string& tau_text, const std::string& seed,
              const std::string& out, const std::vector<std::string>& extras) {
  const RunConfig base = resolve_config(config_path, seed, out, extras);
  const std::vector<std::string> w_list = split_list(w_text);
  const std::vector<std::string> tau_list = split_list(tau_text);
  if (w_list.empty() || tau_list.empty()) {
    throw ConfigError("--w and --tau must name at least one value each");
  }

  std::string csv = "w,tau,recall@1,recall@2,recall@5,recall@10\n";
  for (const std::string& w : w_list) {
    for (const std::string& tau : tau_list) {
      RunConfig cfg = base;
      apply_override(cfg, "objective", "maskcon");
      apply_override(cfg, "w", w);
      apply_override(cfg, "tau", tau);
      cfg.out_dir = base.out_dir + "/w" + w + "_tau" + tau;
      validate_config(cfg);
      const TrainResult res = train_run(cfg);
      std::string row = w + "," + tau;
      for (double s : res.final_recall.scores) row += "," + fmt(s);
      csv += row + "\n";
      std::cout << row << "\n" << std::flush;
    }
  }
  const std::string grid_path = base.out_dir + "/sweep.csv";
  std::ofstream grid(grid_path, std::ios::trunc);
  if (!grid) throw IoError("cannot open " + grid_path + " for writing");
  grid << csv;
  if (!grid.good()) throw IoError("write failed on " + grid_path);
  std::cout << "grid: " << grid_path << "\n";
  return 0;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) ||
      dynamic_cast<const BadConfig*>(&e) ||
      dynamic_cast<const TooFewPoints*>(&e) ||
      dynamic_cast<const NonPositiveTemperature*>(&e)) {
    return 2;
  }
  if (dynamic_cast<const IoError*>(&e) ||
      dynamic_cast<const MalformedRecord*>(&e) ||
      dynamic_cast<const IncompleteCoarseMap*>(&e) ||
      dynamic_cast<const ChecksumMismatch*>(&e) ||
      dynamic_cast<const DimMismatch*>(&e) ||
      dynamic_cast<const LabelOutOfRange*>(&e)) {
    return 3;
  }
  if (dynamic_cast<const NumericalError*>(&e) ||
      dynamic_cast<const NonFiniteSimilarity*>(&e) ||
      dynamic_cast<const ZeroNormRow*>(&e) ||
      dynamic_cast<const NotNormalized*>(&e)) {
    return 4;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"maskcon: contrastive representation learning from coarse labels"};
  app.require_subcommand(1);

  std::string config_path, seed, out_dir;
  CLI::App* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", config_path, "config file")->required();
  train->add_option("--seed", seed, "override the run seed");
  train->add_option("--out", out_dir, "override the output directory");
  train->allow_extras();

  std::string ckpt_path, data_path, space_name = "features";
  std::string ks_text = "1,2,5,10", eval_out;
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  eval->add_option("--data", data_path, "test dataset (VDS1)")->required();
  eval->add_option("--ks", ks_text, "comma-separated K values");
  eval->add_option("--space", space_name, "features|projections");
  eval->add_option("--out", eval_out, "also write the report CSV here");

  std::string w_text, tau_text, sweep_config, sweep_seed, sweep_out;
  CLI::App* sweep = app.add_subcommand("sweep", "w/tau grid of training runs");
  sweep->add_option("--config", sweep_config, "config file")->required();
  sweep->add_option("--w", w_text, "comma-separated w values")->required();
  sweep->add_option("--tau", tau_text, "comma-separated tau values (0, inf ok)")
      ->required();
  sweep->add_option("--seed", sweep_seed, "override the run seed");
  sweep->add_option("--out", sweep_out, "override the output directory");
  sweep->allow_extras();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train->parsed()) {
      return cmd_train(config_path, seed, out_dir, train->remaining());
    }
    if (eval->parsed()) {
      return cmd_eval(ckpt_path, data_path, ks_text, space_name, eval_out);
    }
    return cmd_sweep(sweep_config, w_text, tau_text, sweep_seed, sweep_out,
                     sweep->remaining());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}
