#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "maskcon/matrix.hpp"
#include "maskcon/model.hpp"
#include "maskcon/rng.hpp"

namespace maskcon {

enum class Split { Train, Test };

struct DatasetMeta {
  std::size_t n = 0;
  std::size_t input_dim = 0;
  std::size_t m_coarse = 0;
  std::size_t m_fine = 0;
  std::string source;
};

// Vectors with aligned coarse and fine labels. Fine labels exist for
// evaluation only; the training path never looks at them.
struct Dataset {
  Matrix vectors;
  std::vector<int> coarse_labels;
  std::vector<int> fine_labels;
  Split split = Split::Train;
  DatasetMeta meta;
};

struct AugmentPolicy {
  double noise_sigma = 0.0;   // additive gaussian
  double scale_jitter = 0.0;  // multiplicative, factor in 1 +- scale_jitter
  double mask_frac = 0.0;     // per-coordinate zeroing probability
  bool strong = true;         // query view doubles the magnitudes
};

// Synthetic coarse/fine hierarchy: coarse centers spread ~coarse_sep apart,
// fine centers offset ~fine_sep from their coarse center, samples at
// fine center + N(0, noise^2 I). Stratified train/test split per fine class.
std::pair<Dataset, Dataset> gen_hierarchical_gaussian(
    std::size_t m_coarse, std::size_t fine_per_coarse, std::size_t n_per_fine,
    std::size_t dim, double coarse_sep, double fine_sep, double noise,
    std::uint64_t seed, double train_fraction = 0.8);

void save_vds(const std::string& path, const Dataset& ds);
Dataset load_vds(const std::string& path, Split split = Split::Test);

// CIFAR-10/100 binary records (record kind inferred from file size).
// CIFAR-10 needs a coarse map; CIFAR-100 falls back to its native coarse
// byte when map_path is empty. Map entries with coarse -1 drop the fine
// class; retained ids are re-indexed densely in ascending order.
// Per-channel mean/std normalization uses constants computed from the
// loaded file (for a shared-constant train/test pair see load_cifar_pair).
Dataset load_cifar_binary(const std::string& path,
                          const std::string& map_path,
                          Split split = Split::Train);
std::pair<Dataset, Dataset> load_cifar_pair(const std::string& train_path,
                                            const std::string& test_path,
                                            const std::string& map_path);

// fine_id<TAB>coarse_id lines, '#' comments; coarse -1 marks a dropped class.
std::vector<std::pair<int, int>> load_coarse_map(const std::string& path);

// Two views of one vector: key view at base magnitudes, query view at
// doubled magnitudes when policy.strong is set.
std::pair<std::vector<double>, std::vector<double>> augment(
    std::vector<double> vec, const AugmentPolicy& policy, Rng& rng);

// One epoch: a seeded permutation chunked into batches, short tail kept.
std::vector<Batch> batches(const Dataset& ds, std::size_t batch_size,
                           const AugmentPolicy& policy, std::uint64_t seed);

}  // namespace maskcon
