#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "maskcon/data.hpp"
#include "maskcon/matrix.hpp"
#include "maskcon/model.hpp"
#include "maskcon/relations.hpp"

namespace maskcon {

enum class EmbeddingSpace { Features, Projections };

EmbeddingSpace parse_embedding_space(const std::string& name);

struct RecallReport {
  std::vector<std::size_t> ks;
  std::vector<double> scores;
  std::size_t n_queries = 0;
  EmbeddingSpace space = EmbeddingSpace::Features;
};

// Fraction of queries whose top-K cosine neighbors (self excluded, ties by
// lower index) contain at least one same-fine-label point.
RecallReport recall_at_k(const Matrix& embeddings,
                         std::span<const int> fine_labels,
                         std::span<const std::size_t> ks);

// Dataset rows through the query encoder (and projector for Projections).
Matrix embed_dataset(const ModelParams& model, const Dataset& ds,
                     EmbeddingSpace space);

// CSV: id,coarse_label,fine_label,e0..e{d-1}; values at full f64 precision.
void export_embeddings(const ModelParams& model, const Dataset& ds,
                       const std::string& path, EmbeddingSpace space);

// d_z of the coarse relation rows and of masked rows at each tau, measured
// against fine-label reference relations on a seeded subsample. Each query
// uses the other subsample points as its pool.
struct DzReport {
  std::vector<Temperature> taus;
  double dz_sup = 0.0;
  std::vector<double> dz_mask;
  std::size_t sample_size = 0;
};

DzReport dz_report(const ModelParams& model, const Dataset& ds,
                   std::span<const Temperature> tau_grid,
                   std::size_t sample_size, std::uint64_t seed);

}  // namespace maskcon
