#include "maskcon/losses.hpp"

#include <cmath>

#include "maskcon/errors.hpp"
#include "maskcon/numerics.hpp"

namespace maskcon {

namespace {

void require_unit_rows(const Matrix& m, const char* what) {
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double n = row_norm(m, i);
    if (std::fabs(n - 1.0) > 1e-9) {
      throw NotNormalized(std::string(what) + ": row " + std::to_string(i) +
                          " norm " + std::to_string(n));
    }
  }
}

// Rows rescaled to sum 1.
Matrix normalize_rows_sum1(const Matrix& z) {
  Matrix out = z;
  for (std::size_t i = 0; i < z.rows; ++i) {
    double s = 0.0;
    const double* src = z.row(i);
    for (std::size_t j = 0; j < z.cols; ++j) s += src[j];
    if (s <= 0.0) {
      throw ZeroNormRow("relation row " + std::to_string(i) + " sums to " +
                        std::to_string(s));
    }
    double* dst = out.row(i);
    for (std::size_t j = 0; j < z.cols; ++j) dst[j] = src[j] / s;
  }
  return out;
}

// Core contrastive loss on pre-normalized target rows (each sums to 1).
LossOutput con_loss_rows(const Matrix& query_proj, const Matrix& key_proj,
                         const BankSnapshot& bank, const Matrix& zbar,
                         double tau0) {
  const std::size_t B = query_proj.rows;
  const std::size_t fill = bank.size();
  if (B == 0) throw ShapeMismatch("con_loss: empty batch");
  if (!query_proj.same_shape(key_proj) ||
      (fill > 0 && bank.projections.cols != query_proj.cols)) {
    throw ShapeMismatch("con_loss: projection shape mismatch");
  }
  if (zbar.rows != B || zbar.cols != 1 + fill) {
    throw ShapeMismatch("con_loss: relation rows must be B x (1+fill)");
  }
  if (!(tau0 > 0.0) || !std::isfinite(tau0)) {
    throw NonPositiveTemperature("con_loss: tau0 = " + std::to_string(tau0));
  }
  require_unit_rows(query_proj, "con_loss query");
  require_unit_rows(key_proj, "con_loss key");
  require_unit_rows(bank.projections, "con_loss bank");

  // d = [diag(q k^T) | q bank^T]; unit rows make dot products cosines
  Matrix d(B, 1 + fill);
  for (std::size_t i = 0; i < B; ++i) {
    const double* qi = query_proj.row(i);
    const double* ki = key_proj.row(i);
    double dot = 0.0;
    for (std::size_t c = 0; c < query_proj.cols; ++c) dot += qi[c] * ki[c];
    d(i, 0) = dot;
  }
  if (fill > 0) {
    Matrix sims = matmul_abt(query_proj, bank.projections);
    for (std::size_t i = 0; i < B; ++i) {
      const double* s = sims.row(i);
      double* di = d.row(i);
      for (std::size_t j = 0; j < fill; ++j) di[j + 1] = s[j];
    }
  }

  LossOutput out;
  Matrix q = softmax_rows(d, tau0);
  // value via log-sum-exp for stability
  for (std::size_t i = 0; i < B; ++i) {
    const double* di = d.row(i);
    const double* zi = zbar.row(i);
    double mx = di[0];
    for (std::size_t j = 1; j < d.cols; ++j) mx = std::max(mx, di[j]);
    double lse = 0.0;
    for (std::size_t j = 0; j < d.cols; ++j) {
      lse += std::exp((di[j] - mx) / tau0);
    }
    lse = std::log(lse);
    double dot = 0.0;
    for (std::size_t j = 0; j < d.cols; ++j) {
      dot += zi[j] * (di[j] - mx) / tau0;
    }
    out.value += lse - dot;
  }
  out.value /= static_cast<double>(B);

  // d(value)/d(d) = (q - zbar) / (B tau0); push through the dot products
  Matrix gd(B, 1 + fill);
  const double scale = 1.0 / (static_cast<double>(B) * tau0);
  for (std::size_t k = 0; k < gd.size(); ++k) {
    gd.data[k] = (q.data[k] - zbar.data[k]) * scale;
  }
  out.grad_proj = Matrix(B, query_proj.cols);
  for (std::size_t i = 0; i < B; ++i) {
    const double g0 = gd(i, 0);
    const double* ki = key_proj.row(i);
    double* gi = out.grad_proj.row(i);
    for (std::size_t c = 0; c < query_proj.cols; ++c) gi[c] = g0 * ki[c];
  }
  if (fill > 0) {
    Matrix gbank(B, fill);
    for (std::size_t i = 0; i < B; ++i) {
      const double* gdi = gd.row(i);
      double* gb = gbank.row(i);
      for (std::size_t j = 0; j < fill; ++j) gb[j] = gdi[j + 1];
    }
    axpy(1.0, matmul(gbank, bank.projections), out.grad_proj);
  }
  return out;
}

// Per-sample adaptive weights from the masked relation rows: confidence is
// one minus the normalized entropy of the masked softmax over unmasked
// entries. Rows with a single neighbor are fully confident; rows with no
// neighbor get weight 0 (their masked row already equals the self row).
std::vector<double> adaptive_weights(const RelationRows& z_mask) {
  std::vector<double> w(z_mask.batch_size(), 0.0);
  for (std::size_t i = 0; i < z_mask.batch_size(); ++i) {
    const std::size_t k = z_mask.unmasked_count[i];
    if (k == 0) continue;
    if (k == 1) {
      w[i] = 1.0;
      continue;
    }
    const double* r = z_mask.rows.row(i);
    double s = 0.0;
    for (std::size_t j = 1; j < z_mask.rows.cols; ++j) s += r[j];
    double h = 0.0;
    for (std::size_t j = 1; j < z_mask.rows.cols; ++j) {
      const double p = r[j] / s;
      if (p > 0.0) h -= p * std::log(p);
    }
    w[i] = 1.0 - h / std::log(static_cast<double>(k));
  }
  return w;
}

// zbar = w * norm(a) + (1-w) * norm(b), row-wise weights.
Matrix mix_rows(const Matrix& a, const Matrix& b,
                std::span<const double> w) {
  if (!a.same_shape(b) || w.size() != a.rows) {
    throw ShapeMismatch("mix_rows: shape mismatch");
  }
  Matrix out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double wi = w[i];
    const double* ra = a.row(i);
    const double* rb = b.row(i);
    double* ro = out.row(i);
    for (std::size_t j = 0; j < a.cols; ++j) {
      ro[j] = wi * ra[j] + (1.0 - wi) * rb[j];
    }
  }
  return out;
}

struct QueryForward {
  ForwardCaches local;
  ForwardCaches* caches;

  ForwardCaches& get() { return caches ? *caches : local; }
};

// Shared query-side forward. need_proj/need_logits select the heads.
ForwardCaches& run_forward(const Batch& batch, const ModelParams& model,
                           QueryForward& fw, bool need_proj,
                           bool need_logits) {
  ForwardCaches& c = fw.get();
  c.features = encoder_forward(model, batch.query_views, &c.enc);
  if (need_proj) {
    c.projections = project(model, c.features, &c.proj);
    c.key_projections = key_project(model, batch.key_views);
  }
  if (need_logits) c.logits = classify(model, c.features);
  return c;
}

}  // namespace

ObjectiveKind parse_objective_kind(const std::string& name) {
  if (name == "selfcon") return ObjectiveKind::SelfCon;
  if (name == "supcon") return ObjectiveKind::SupCon;
  if (name == "supce") return ObjectiveKind::SupCE;
  if (name == "grafit") return ObjectiveKind::Grafit;
  if (name == "coins") return ObjectiveKind::CoIns;
  if (name == "maskcon") return ObjectiveKind::MaskCon;
  throw ConfigError("unknown objective '" + name + "'");
}

std::string objective_kind_str(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::SelfCon: return "selfcon";
    case ObjectiveKind::SupCon: return "supcon";
    case ObjectiveKind::SupCE: return "supce";
    case ObjectiveKind::Grafit: return "grafit";
    case ObjectiveKind::CoIns: return "coins";
    case ObjectiveKind::MaskCon: return "maskcon";
  }
  return "?";
}

LossOutput ce_loss(const Matrix& logits, std::span<const int> labels) {
  const std::size_t B = logits.rows;
  const std::size_t M = logits.cols;
  if (B == 0) throw ShapeMismatch("ce_loss: empty batch");
  if (labels.size() != B) throw ShapeMismatch("ce_loss: label count mismatch");
  for (std::size_t i = 0; i < B; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= M) {
      throw LabelOutOfRange("ce_loss: label " + std::to_string(labels[i]) +
                            " outside [0," + std::to_string(M) + ")");
    }
  }
  LossOutput out;
  Matrix p = softmax_rows(logits, 1.0);
  for (std::size_t i = 0; i < B; ++i) {
    const double* li = logits.row(i);
    double mx = li[0];
    for (std::size_t j = 1; j < M; ++j) mx = std::max(mx, li[j]);
    double lse = 0.0;
    for (std::size_t j = 0; j < M; ++j) lse += std::exp(li[j] - mx);
    out.value += std::log(lse) - (li[labels[i]] - mx);
  }
  out.value /= static_cast<double>(B);
  out.grad_logits = p;
  for (std::size_t i = 0; i < B; ++i) {
    out.grad_logits(i, static_cast<std::size_t>(labels[i])) -= 1.0;
  }
  for (double& g : out.grad_logits.data) g /= static_cast<double>(B);
  return out;
}

LossOutput con_loss(const Matrix& query_proj, const Matrix& key_proj,
                    const BankSnapshot& bank, const RelationRows& z,
                    double tau0) {
  return con_loss_rows(query_proj, key_proj, bank,
                       normalize_rows_sum1(z.rows), tau0);
}

LossOutput maskcon_objective(const Batch& batch, const ModelParams& model,
                             const MemoryBank& bank,
                             const ObjectiveConfig& cfg,
                             ForwardCaches* caches) {
  if (cfg.kind != ObjectiveKind::MaskCon) {
    throw ConfigError("maskcon_objective: cfg.kind must be maskcon");
  }
  QueryForward fw{ForwardCaches{}, caches};
  ForwardCaches& c = run_forward(batch, model, fw, true, false);
  const BankSnapshot snap = bank.snapshot();

  RelationRows z_mask = relations_mask(c.key_projections, snap,
                                       batch.coarse_labels, batch.ids,
                                       cfg.tau);
  RelationRows z_self = relations_self(batch.query_views.rows, snap.size());
  std::vector<double> w;
  if (cfg.adaptive_w) {
    w = adaptive_weights(z_mask);
  } else {
    w.assign(batch.query_views.rows, cfg.w);
  }
  Matrix zbar = mix_rows(normalize_rows_sum1(z_mask.rows), z_self.rows, w);
  return con_loss_rows(c.projections, c.key_projections, snap, zbar,
                       cfg.tau0);
}

LossOutput baseline_objective(const Batch& batch, const ModelParams& model,
                              const MemoryBank& bank,
                              const ObjectiveConfig& cfg,
                              ForwardCaches* caches) {
  QueryForward fw{ForwardCaches{}, caches};
  const std::size_t B = batch.query_views.rows;
  switch (cfg.kind) {
    case ObjectiveKind::SelfCon: {
      ForwardCaches& c = run_forward(batch, model, fw, true, false);
      const BankSnapshot snap = bank.snapshot();
      RelationRows z = relations_self(B, snap.size());
      return con_loss_rows(c.projections, c.key_projections, snap, z.rows,
                           cfg.tau0);
    }
    case ObjectiveKind::SupCon: {
      ForwardCaches& c = run_forward(batch, model, fw, true, false);
      const BankSnapshot snap = bank.snapshot();
      RelationRows z = relations_sup(batch.coarse_labels, snap.labels);
      return con_loss_rows(c.projections, c.key_projections, snap,
                           normalize_rows_sum1(z.rows), cfg.tau0);
    }
    case ObjectiveKind::SupCE: {
      ForwardCaches& c = run_forward(batch, model, fw, false, true);
      return ce_loss(c.logits, batch.coarse_labels);
    }
    case ObjectiveKind::Grafit: {
      ForwardCaches& c = run_forward(batch, model, fw, true, false);
      const BankSnapshot snap = bank.snapshot();
      RelationRows z_sup = relations_sup(batch.coarse_labels, snap.labels);
      RelationRows z_self = relations_self(B, snap.size());
      std::vector<double> w(B, cfg.w);
      Matrix zbar =
          mix_rows(normalize_rows_sum1(z_sup.rows), z_self.rows, w);
      return con_loss_rows(c.projections, c.key_projections, snap, zbar,
                           cfg.tau0);
    }
    case ObjectiveKind::CoIns: {
      ForwardCaches& c = run_forward(batch, model, fw, true, true);
      const BankSnapshot snap = bank.snapshot();
      RelationRows z = relations_self(B, snap.size());
      LossOutput self_part = con_loss_rows(c.projections, c.key_projections,
                                           snap, z.rows, cfg.tau0);
      LossOutput ce_part = ce_loss(c.logits, batch.coarse_labels);
      LossOutput out;
      out.value = cfg.w * ce_part.value + (1.0 - cfg.w) * self_part.value;
      out.grad_logits = std::move(ce_part.grad_logits);
      for (double& g : out.grad_logits.data) g *= cfg.w;
      out.grad_proj = std::move(self_part.grad_proj);
      for (double& g : out.grad_proj.data) g *= 1.0 - cfg.w;
      return out;
    }
    case ObjectiveKind::MaskCon:
      throw ConfigError("baseline_objective: use maskcon_objective");
  }
  throw ConfigError("baseline_objective: unknown kind");
}

LossOutput compute_objective(const Batch& batch, const ModelParams& model,
                             const MemoryBank& bank,
                             const ObjectiveConfig& cfg,
                             ForwardCaches* caches) {
  if (cfg.kind == ObjectiveKind::MaskCon) {
    return maskcon_objective(batch, model, bank, cfg, caches);
  }
  return baseline_objective(batch, model, bank, cfg, caches);
}

ParamSet objective_param_set(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::SupCE: return ParamSet::EncoderClassifier;
    case ObjectiveKind::CoIns: return ParamSet::All;
    default: return ParamSet::EncoderProjector;
  }
}

}  // namespace maskcon
