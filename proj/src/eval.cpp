#include "maskcon/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "maskcon/errors.hpp"
#include "maskcon/numerics.hpp"

namespace maskcon {

EmbeddingSpace parse_embedding_space(const std::string& name) {
  if (name == "features") return EmbeddingSpace::Features;
  if (name == "projections") return EmbeddingSpace::Projections;
  throw ConfigError("unknown embedding space '" + name + "'");
}

RecallReport recall_at_k(const Matrix& embeddings,
                         std::span<const int> fine_labels,
                         std::span<const std::size_t> ks) {
  const std::size_t n = embeddings.rows;
  if (ks.empty()) throw TooFewPoints("recall_at_k: empty k list");
  if (fine_labels.size() != n) {
    throw ShapeMismatch("recall_at_k: label count mismatch");
  }
  const std::size_t max_k = *std::max_element(ks.begin(), ks.end());
  if (n < max_k + 1) {
    throw TooFewPoints("recall_at_k: need at least " +
                       std::to_string(max_k + 1) + " points, have " +
                       std::to_string(n));
  }

  Matrix sims = cosine_similarity_matrix(embeddings, embeddings);
  // first_hit[i]: rank (0-based) of the first same-label neighbor, self
  // excluded, capped at max_k
  std::vector<std::size_t> first_hit(n, max_k);
  std::vector<std::size_t> order(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t w = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) order[w++] = j;
    }
    const double* si = sims.row(i);
    const std::size_t top = std::min(max_k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top),
                      order.end(), [si](std::size_t a, std::size_t b) {
                        if (si[a] != si[b]) return si[a] > si[b];
                        return a < b;  // ties: lower index first
                      });
    for (std::size_t r = 0; r < top; ++r) {
      if (fine_labels[order[r]] == fine_labels[i]) {
        first_hit[i] = r;
        break;
      }
    }
  }

  RecallReport report;
  report.ks.assign(ks.begin(), ks.end());
  report.n_queries = n;
  for (std::size_t k : ks) {
    std::size_t hits = 0;
    for (std::size_t h : first_hit) {
      if (h < k) ++hits;
    }
    report.scores.push_back(static_cast<double>(hits) /
                            static_cast<double>(n));
  }
  // monotone in K whenever the k list is ascending
  for (std::size_t t = 1; t < report.ks.size(); ++t) {
    if (report.ks[t] >= report.ks[t - 1] &&
        report.scores[t] < report.scores[t - 1]) {
      throw NumericalError("recall_at_k: non-monotone scores");
    }
  }
  return report;
}

Matrix embed_dataset(const ModelParams& model, const Dataset& ds,
                     EmbeddingSpace space) {
  if (ds.meta.input_dim != model.dims.input_dim) {
    throw DimMismatch("embed_dataset: dataset dim " +
                      std::to_string(ds.meta.input_dim) + " vs model " +
                      std::to_string(model.dims.input_dim));
  }
  Matrix features = encoder_forward(model, ds.vectors);
  if (space == EmbeddingSpace::Features) return features;
  return project(model, features);
}

void export_embeddings(const ModelParams& model, const Dataset& ds,
                       const std::string& path, EmbeddingSpace space) {
  const Matrix emb = embed_dataset(model, ds, space);
  const std::size_t d = space == EmbeddingSpace::Features
                            ? model.dims.feat_dim
                            : model.dims.proj_dim;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "id,coarse_label,fine_label";
  for (std::size_t j = 0; j < d; ++j) out << ",e" << j;
  out << "\n";
  char buf[32];
  for (std::size_t i = 0; i < emb.rows; ++i) {
    out << i << ',' << ds.coarse_labels[i] << ',' << ds.fine_labels[i];
    const double* row = emb.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", row[j]);
      out << ',' << buf;
    }
    out << "\n";
  }
  if (!out.good()) throw IoError("write failed on " + path);
}

DzReport dz_report(const ModelParams& model, const Dataset& ds,
                   std::span<const Temperature> tau_grid,
                   std::size_t sample_size, std::uint64_t seed) {
  if (sample_size < 2 || sample_size > ds.meta.n) {
    throw TooFewPoints("dz_report: sample_size " +
                       std::to_string(sample_size) + " outside [2, N]");
  }
  std::vector<std::size_t> perm(ds.meta.n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  rng.shuffle(perm);
  perm.resize(sample_size);

  Dataset sub;
  sub.vectors = Matrix(sample_size, ds.meta.input_dim);
  for (std::size_t i = 0; i < sample_size; ++i) {
    std::copy(ds.vectors.row(perm[i]),
              ds.vectors.row(perm[i]) + ds.meta.input_dim,
              sub.vectors.row(i));
    sub.coarse_labels.push_back(ds.coarse_labels[perm[i]]);
    sub.fine_labels.push_back(ds.fine_labels[perm[i]]);
  }
  sub.meta = ds.meta;
  sub.meta.n = sample_size;
  const Matrix proj = embed_dataset(model, sub, EmbeddingSpace::Projections);

  const std::size_t s = sample_size;
  Matrix z_sup(s, s), z_hat(s, s);
  std::vector<Matrix> z_mask;
  for (std::size_t t = 0; t < tau_grid.size(); ++t) z_mask.emplace_back(s, s);

  // per query, the pool is every other subsample point
  BankSnapshot pool;
  pool.projections = Matrix(s - 1, proj.cols);
  pool.labels.resize(s - 1);
  pool.ids.resize(s - 1);
  std::vector<int> pool_fine(s - 1);
  Matrix qrow(1, proj.cols);
  for (std::size_t i = 0; i < s; ++i) {
    std::size_t w = 0;
    for (std::size_t j = 0; j < s; ++j) {
      if (j == i) continue;
      std::copy(proj.row(j), proj.row(j) + proj.cols,
                pool.projections.row(w));
      pool.labels[w] = sub.coarse_labels[j];
      pool.ids[w] = static_cast<std::int64_t>(j);
      pool_fine[w] = sub.fine_labels[j];
      ++w;
    }
    std::copy(proj.row(i), proj.row(i) + proj.cols, qrow.row(0));
    const int ci = sub.coarse_labels[i];
    const int fi = sub.fine_labels[i];
    const std::int64_t qid = static_cast<std::int64_t>(i);

    RelationRows sup = relations_sup(std::span(&ci, 1), pool.labels);
    RelationRows hat = relations_sup(std::span(&fi, 1), pool_fine);
    std::copy(sup.rows.data.begin(), sup.rows.data.end(), z_sup.row(i));
    std::copy(hat.rows.data.begin(), hat.rows.data.end(), z_hat.row(i));
    for (std::size_t t = 0; t < tau_grid.size(); ++t) {
      RelationRows mask = relations_mask(qrow, pool, std::span(&ci, 1),
                                         std::span(&qid, 1), tau_grid[t]);
      std::copy(mask.rows.data.begin(), mask.rows.data.end(),
                z_mask[t].row(i));
    }
  }

  DzReport report;
  report.taus.assign(tau_grid.begin(), tau_grid.end());
  report.sample_size = s;
  report.dz_sup = dz_rows(z_sup, z_hat);
  for (std::size_t t = 0; t < tau_grid.size(); ++t) {
    report.dz_mask.push_back(dz_rows(z_mask[t], z_hat));
  }
  return report;
}

}  // namespace maskcon
