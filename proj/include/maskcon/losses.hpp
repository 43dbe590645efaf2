#pragma once

#include <span>
#include <string>

#include "maskcon/bank.hpp"
#include "maskcon/matrix.hpp"
#include "maskcon/model.hpp"
#include "maskcon/relations.hpp"

namespace maskcon {

enum class ObjectiveKind { SelfCon, SupCon, SupCE, Grafit, CoIns, MaskCon };

ObjectiveKind parse_objective_kind(const std::string& name);
std::string objective_kind_str(ObjectiveKind kind);

struct ObjectiveConfig {
  ObjectiveKind kind = ObjectiveKind::MaskCon;
  double w = 1.0;             // mixing weight of the label-driven term
  Temperature tau = Temperature::finite(0.05);  // relation temperature (MaskCon)
  double tau0 = 0.1;          // softmax temperature of the predicted q
  bool adaptive_w = false;    // entropy-adaptive per-sample w (ASCL variant)
};

// Loss value plus gradients w.r.t. the differentiable heads. Key
// projections, bank contents and relation targets are constants
// (stop-gradient); nothing flows through them.
struct LossOutput {
  double value = 0.0;
  Matrix grad_proj;    // w.r.t. query projections; empty when unused
  Matrix grad_logits;  // w.r.t. classifier logits; empty when unused
};

// Mean cross-entropy over rows; grad = (softmax(logits) - onehot) / B.
LossOutput ce_loss(const Matrix& logits, std::span<const int> labels);

// Contrastive loss over the similarity layout
//   d_i = [cos(h_q_i, h_k_i), cos(h_q_i, bank_1..fill)]
// with q_i = softmax(d_i / tau0) and targets z normalized to sum 1 per row:
//   value = -(1/B) sum_i sum_n zbar_in log q_in.
// All projection rows must be unit-norm within 1e-9.
LossOutput con_loss(const Matrix& query_proj, const Matrix& key_proj,
                    const BankSnapshot& bank, const RelationRows& z,
                    double tau0);

// Query-side forward activations the training loop needs for the backward
// pass and the bank push.
struct ForwardCaches {
  MlpCache enc;
  ProjectCache proj;
  Matrix features;
  Matrix projections;
  Matrix key_projections;
  Matrix logits;  // classifier objectives only
};

// w * L_maskcon + (1-w) * L_selfcon (per-sample w when adaptive_w is set).
// Implemented as one con_loss over mixed normalized relation rows, which
// makes the endpoint and temperature-limit identities exact.
LossOutput maskcon_objective(const Batch& batch, const ModelParams& model,
                             const MemoryBank& bank,
                             const ObjectiveConfig& cfg,
                             ForwardCaches* caches = nullptr);

// SelfCon, SupCon, SupCE, Grafit (w*supcon + (1-w)*selfcon) and CoIns
// (w*ce + (1-w)*selfcon).
LossOutput baseline_objective(const Batch& batch, const ModelParams& model,
                              const MemoryBank& bank,
                              const ObjectiveConfig& cfg,
                              ForwardCaches* caches = nullptr);

// Routes on cfg.kind.
LossOutput compute_objective(const Batch& batch, const ModelParams& model,
                             const MemoryBank& bank,
                             const ObjectiveConfig& cfg,
                             ForwardCaches* caches = nullptr);

// Which parameter tensors the objective trains.
ParamSet objective_param_set(ObjectiveKind kind);

}  // namespace maskcon
