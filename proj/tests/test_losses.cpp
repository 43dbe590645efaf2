#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "maskcon/errors.hpp"
#include "maskcon/losses.hpp"
#include "maskcon/numerics.hpp"
#include "maskcon/trainer.hpp"
#include "test_util.hpp"

using namespace maskcon;
using testutil::rand_matrix;
using testutil::rand_unit_rows;

namespace {

ModelDims tiny_dims(std::size_t input_dim = 5, std::size_t n_coarse = 2) {
  ModelDims d;
  d.input_dim = input_dim;
  d.hidden_dim = 6;
  d.feat_dim = 4;
  d.proj_hidden = 7;
  d.proj_dim = 3;
  d.n_coarse = n_coarse;
  return d;
}

// random state: model, batch and a filled bank with ids disjoint from the
// batch so every bank entry is eligible
struct State {
  ModelParams model;
  Batch batch;
  MemoryBank bank;
};

// smallest |pre-activation| feeding a ReLU on the query branch; finite
// differences are only trustworthy when no unit sits near its kink
double kink_margin(const ForwardCaches& c) {
  double m = 1e300;
  auto scan = [&m](const MlpCache& mc) {
    for (std::size_t l = 0; l + 1 < mc.pre.size(); ++l)
      for (double v : mc.pre[l].data) m = std::min(m, std::abs(v));
  };
  scan(c.enc);
  scan(c.proj.mlp);
  return m;
}

State random_state(std::uint64_t seed, std::size_t batch_size = 4,
                   std::size_t fill = 8, int n_coarse = 2) {
  for (std::uint64_t s = seed;; s += 7919) {
    Rng rng(s);
    ModelDims d = tiny_dims(5, static_cast<std::size_t>(n_coarse));
    State st{init_model(d, rng), Batch{}, MemoryBank(fill, d.proj_dim)};
    st.batch.query_views = rand_matrix(rng, batch_size, d.input_dim);
    st.batch.key_views = rand_matrix(rng, batch_size, d.input_dim);
    for (std::size_t i = 0; i < batch_size; ++i) {
      st.batch.coarse_labels.push_back(static_cast<int>(rng.uniform_index(
          static_cast<std::size_t>(n_coarse))));
      st.batch.fine_labels.push_back(st.batch.coarse_labels.back());
      st.batch.ids.push_back(static_cast<std::int64_t>(i));
    }
    Matrix rows = rand_unit_rows(rng, fill, d.proj_dim);
    std::vector<int> labels(fill);
    std::vector<std::int64_t> ids(fill);
    for (std::size_t j = 0; j < fill; ++j) {
      labels[j] = static_cast<int>(rng.uniform_index(
          static_cast<std::size_t>(n_coarse)));
      ids[j] = static_cast<std::int64_t>(1000 + j);  // never collides
    }
    st.bank.push(rows, labels, ids);

    // reject degenerate draws (dead feature rows, kink-adjacent units)
    try {
      ObjectiveConfig probe;
      probe.kind = ObjectiveKind::MaskCon;
      ForwardCaches caches;
      compute_objective(st.batch, st.model, st.bank, probe, &caches);
      if (kink_margin(caches) > 1e-3) return st;
    } catch (const ZeroNormRow&) {
    }
  }
}

bool same_output(const LossOutput& a, const LossOutput& b) {
  return a.value == b.value && a.grad_proj.data == b.grad_proj.data &&
         a.grad_logits.data == b.grad_logits.data;
}

}  // namespace

TEST_CASE("ce_loss: uniform logits and a dominant margin") {
  Matrix logits(2, 4);  // all zero: uniform
  LossOutput out = ce_loss(logits, std::vector<int>{0, 3});
  CHECK(out.value == doctest::Approx(1.3862943611198906).epsilon(1e-14));

  Matrix sharp(1, 3);
  sharp(0, 1) = 50.0;
  LossOutput hit = ce_loss(sharp, std::vector<int>{1});
  CHECK(hit.value < 1e-9);
  CHECK(hit.value >= 0.0);

  CHECK_THROWS_AS(ce_loss(logits, std::vector<int>{0, 4}), LabelOutOfRange);
  CHECK_THROWS_AS(ce_loss(logits, std::vector<int>{0, -1}), LabelOutOfRange);
  CHECK_THROWS_AS(ce_loss(logits, std::vector<int>{0}), ShapeMismatch);
  CHECK_THROWS_AS(ce_loss(Matrix(0, 3), std::vector<int>{}), ShapeMismatch);
}

TEST_CASE("ce_loss gradient matches finite differences") {
  Rng rng(23);
  Matrix logits = rand_matrix(rng, 3, 4, -2.0, 2.0);
  std::vector<int> labels = {1, 0, 3};
  auto loss_fn = [&](const std::vector<Matrix>& ps) {
    return ce_loss(ps[0], labels).value;
  };
  std::vector<Matrix> fd = finite_diff_grad(loss_fn, {logits});
  LossOutput out = ce_loss(logits, labels);
  CHECK(testutil::max_rel_err({out.grad_logits}, fd) < 1e-6);
}

TEST_CASE("con_loss: frozen values on constructed geometries") {
  // query == key == e1, bank spans the remaining axes: d = [1, 0, 0],
  // self-target loss is ln(1 + 2 exp(-1/tau0))
  Matrix q(2, 3), k(2, 3);
  q(0, 0) = 1.0;
  q(1, 0) = 1.0;
  k(0, 0) = 1.0;
  k(1, 0) = 1.0;
  BankSnapshot bank;
  bank.projections = Matrix(2, 3);
  bank.projections(0, 1) = 1.0;
  bank.projections(1, 2) = 1.0;
  bank.labels = {0, 0};
  bank.ids = {5, 6};

  RelationRows self = relations_self(2, 2);
  LossOutput out = con_loss(q, k, bank, self, 0.1);
  CHECK(out.value == doctest::Approx(9.079573746725622e-05).epsilon(1e-12));

  // identical unit vectors everywhere with uniform targets: every q_in is
  // 1/(1+fill), so the loss is ln(1+fill) whatever tau0 is
  Matrix q1(1, 3), k1(1, 3);
  q1(0, 0) = 1.0;
  k1(0, 0) = 1.0;
  BankSnapshot bank1;
  bank1.projections = Matrix(3, 3);
  for (int j = 0; j < 3; ++j) bank1.projections(j, 0) = 1.0;
  bank1.labels = {0, 0, 0};
  bank1.ids = {1, 2, 3};
  RelationRows uniform;
  uniform.rows = Matrix(1, 4, 1.0);
  LossOutput lu = con_loss(q1, k1, bank1, uniform, 0.37);
  CHECK(lu.value == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("con_loss requires unit rows and a nonempty batch") {
  Matrix q(1, 3), k(1, 3);
  q(0, 0) = 1.0;
  k(0, 0) = 0.9;  // not unit
  BankSnapshot empty_bank;
  empty_bank.projections = Matrix(0, 3);
  RelationRows self = relations_self(1, 0);
  CHECK_THROWS_AS(con_loss(q, k, empty_bank, self, 0.1), NotNormalized);
  k(0, 0) = 1.0;
  CHECK_NOTHROW(con_loss(q, k, empty_bank, self, 0.1));
  CHECK_THROWS_AS(con_loss(q, k, empty_bank, self, 0.0),
                  NonPositiveTemperature);
  CHECK_THROWS_AS(con_loss(Matrix(0, 3), Matrix(0, 3), empty_bank,
                           relations_self(0, 0), 0.1),
                  ShapeMismatch);
}

TEST_CASE("con_loss: targets are row-rescale invariant, value and gradient") {
  Rng rng(31);
  Matrix q = rand_unit_rows(rng, 3, 4);
  Matrix k = rand_unit_rows(rng, 3, 4);
  BankSnapshot bank;
  bank.projections = rand_unit_rows(rng, 5, 4);
  bank.labels = {0, 1, 0, 1, 0};
  bank.ids = {1, 2, 3, 4, 5};

  RelationRows z = relations_sup(std::vector<int>{0, 1, 0}, bank.labels);
  RelationRows z_scaled = z;
  for (std::size_t i = 0; i < z_scaled.rows.rows; ++i)
    for (std::size_t j = 0; j < z_scaled.rows.cols; ++j)
      z_scaled.rows(i, j) *= 3.0 + static_cast<double>(i);

  LossOutput a = con_loss(q, k, bank, z, 0.1);
  LossOutput b = con_loss(q, k, bank, z_scaled, 0.1);
  CHECK(a.value == doctest::Approx(b.value).epsilon(1e-14));
  CHECK(testutil::max_abs_diff(a.grad_proj, b.grad_proj) < 1e-15);
}

TEST_CASE("con_loss value matches a scalar oracle") {
  Rng rng(47);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t B = 1 + rng.uniform_index(4);
    const std::size_t fill = rng.uniform_index(6);
    const std::size_t dim = 3;
    Matrix q = rand_unit_rows(rng, B, dim);
    Matrix k = rand_unit_rows(rng, B, dim);
    BankSnapshot bank;
    bank.projections = rand_unit_rows(rng, fill, dim);
    for (std::size_t j = 0; j < fill; ++j) {
      bank.labels.push_back(0);
      bank.ids.push_back(static_cast<std::int64_t>(j));
    }
    RelationRows z;
    z.rows = rand_matrix(rng, B, 1 + fill, 0.05, 1.0);
    const double tau0 = 0.08 + rng.uniform(0.0, 0.4);

    double want = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
      std::vector<double> d(1 + fill);
      d[0] = testutil::cos_oracle(q.row(i), k.row(i), dim);
      for (std::size_t j = 0; j < fill; ++j)
        d[j + 1] =
            testutil::cos_oracle(q.row(i), bank.projections.row(j), dim);
      double zsum = 0.0, lse = 0.0, mx = -1e300;
      for (double v : d) mx = std::max(mx, v / tau0);
      for (double v : d) lse += std::exp(v / tau0 - mx);
      lse = std::log(lse) + mx;
      for (std::size_t n = 0; n < d.size(); ++n) zsum += z.rows(i, n);
      for (std::size_t n = 0; n < d.size(); ++n)
        want -= z.rows(i, n) / zsum * (d[n] / tau0 - lse);
    }
    want /= static_cast<double>(B);

    LossOutput out = con_loss(q, k, bank, z, tau0);
    CHECK(out.value == doctest::Approx(want).epsilon(1e-11));
  }
}

TEST_CASE("con_loss gradient matches finite differences through "
          "normalization") {
  Rng rng(71);
  Matrix x = rand_matrix(rng, 3, 4, -1.0, 1.0);  // raw query projections
  Matrix k = rand_unit_rows(rng, 3, 4);
  BankSnapshot bank;
  bank.projections = rand_unit_rows(rng, 6, 4);
  bank.labels = {0, 1, 0, 1, 0, 1};
  bank.ids = {1, 2, 3, 4, 5, 6};
  RelationRows z = relations_sup(std::vector<int>{0, 1, 1}, bank.labels);

  auto loss_fn = [&](const std::vector<Matrix>& ps) {
    return con_loss(l2_normalize_rows(ps[0]), k, bank, z, 0.1).value;
  };
  std::vector<Matrix> fd = finite_diff_grad(loss_fn, {x});

  std::vector<double> norms;
  Matrix q = l2_normalize_rows(x, &norms);
  LossOutput out = con_loss(q, k, bank, z, 0.1);
  Matrix gx = l2_normalize_backward(q, norms, out.grad_proj);
  CHECK(testutil::max_rel_err({gx}, fd) < 1e-4);
}

TEST_CASE("objective endpoint identities are exact") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    State s = random_state(seed);
    ObjectiveConfig cfg;
    cfg.tau0 = 0.1;

    // w=0 collapses every mixture onto selfcon
    ObjectiveConfig selfcon = cfg;
    selfcon.kind = ObjectiveKind::SelfCon;
    LossOutput ref_self = compute_objective(s.batch, s.model, s.bank, selfcon);

    for (ObjectiveKind kind :
         {ObjectiveKind::MaskCon, ObjectiveKind::Grafit, ObjectiveKind::CoIns}) {
      ObjectiveConfig c = cfg;
      c.kind = kind;
      c.w = 0.0;
      LossOutput out = compute_objective(s.batch, s.model, s.bank, c);
      CHECK(out.value == ref_self.value);
      CHECK(out.grad_proj.data == ref_self.grad_proj.data);
    }

    // w=1 collapses grafit onto supcon and coins onto supce
    ObjectiveConfig supcon = cfg;
    supcon.kind = ObjectiveKind::SupCon;
    ObjectiveConfig grafit1 = cfg;
    grafit1.kind = ObjectiveKind::Grafit;
    grafit1.w = 1.0;
    CHECK(same_output(compute_objective(s.batch, s.model, s.bank, supcon),
                      compute_objective(s.batch, s.model, s.bank, grafit1)));

    ObjectiveConfig supce = cfg;
    supce.kind = ObjectiveKind::SupCE;
    ObjectiveConfig coins1 = cfg;
    coins1.kind = ObjectiveKind::CoIns;
    coins1.w = 1.0;
    LossOutput a = compute_objective(s.batch, s.model, s.bank, supce);
    LossOutput b = compute_objective(s.batch, s.model, s.bank, coins1);
    CHECK(a.value == b.value);
    CHECK(a.grad_logits.data == b.grad_logits.data);

    // infinite relation temperature turns maskcon into grafit
    for (double w : {0.3, 0.7, 1.0}) {
      ObjectiveConfig mc = cfg;
      mc.kind = ObjectiveKind::MaskCon;
      mc.w = w;
      mc.tau = Temperature::infinity();
      ObjectiveConfig gf = cfg;
      gf.kind = ObjectiveKind::Grafit;
      gf.w = w;
      CHECK(same_output(compute_objective(s.batch, s.model, s.bank, mc),
                        compute_objective(s.batch, s.model, s.bank, gf)));
    }
  }
}

TEST_CASE("maskcon at w=1, tau=0 reduces to nearest-neighbor relations") {
  State s = random_state(99);
  ObjectiveConfig cfg;
  cfg.kind = ObjectiveKind::MaskCon;
  cfg.w = 1.0;
  cfg.tau = Temperature::zero();
  ForwardCaches caches;
  LossOutput out = compute_objective(s.batch, s.model, s.bank, cfg, &caches);

  RelationRows nn = relations_mask(caches.key_projections, s.bank.snapshot(),
                                   s.batch.coarse_labels, s.batch.ids,
                                   Temperature::zero());
  LossOutput ref = con_loss(caches.projections, caches.key_projections,
                            s.bank.snapshot(), nn, cfg.tau0);
  CHECK(out.value == ref.value);
  CHECK(out.grad_proj.data == ref.grad_proj.data);
}

TEST_CASE("adaptive w matches the fixed endpoints it interpolates") {
  // tau=0 relations are one-hot, entropy 0, so adaptive w equals w=1
  State s = random_state(7);
  ObjectiveConfig adaptive;
  adaptive.kind = ObjectiveKind::MaskCon;
  adaptive.tau = Temperature::zero();
  adaptive.adaptive_w = true;
  adaptive.w = 0.123;  // must be ignored
  ObjectiveConfig fixed1 = adaptive;
  fixed1.adaptive_w = false;
  fixed1.w = 1.0;
  CHECK(same_output(compute_objective(s.batch, s.model, s.bank, adaptive),
                    compute_objective(s.batch, s.model, s.bank, fixed1)));

  // tau=inf relations are uniform over K>=2 entries, entropy ln K, so
  // adaptive w equals w=0 when every row has at least two unmasked entries.
  // The entropy ratio only hits 1 up to rounding, hence the tolerance.
  State s2 = random_state(8, 4, 10, 1);  // single coarse label: K = fill
  ObjectiveConfig ad_inf = adaptive;
  ad_inf.tau = Temperature::infinity();
  ObjectiveConfig fixed0 = ad_inf;
  fixed0.adaptive_w = false;
  fixed0.w = 0.0;
  LossOutput av = compute_objective(s2.batch, s2.model, s2.bank, ad_inf);
  LossOutput fv = compute_objective(s2.batch, s2.model, s2.bank, fixed0);
  CHECK(av.value == doctest::Approx(fv.value).epsilon(1e-12));
  CHECK(testutil::max_abs_diff(av.grad_proj, fv.grad_proj) < 1e-12);
}

TEST_CASE("objective gradients match finite differences end to end") {
  for (ObjectiveKind kind :
       {ObjectiveKind::SelfCon, ObjectiveKind::SupCon, ObjectiveKind::SupCE,
        ObjectiveKind::Grafit, ObjectiveKind::CoIns, ObjectiveKind::MaskCon}) {
    State s = random_state(200 + static_cast<std::uint64_t>(kind), 3, 6);
    ObjectiveConfig cfg;
    cfg.kind = kind;
    cfg.w = 0.6;
    cfg.tau = Temperature::finite(0.2);
    cfg.tau0 = 0.15;

    const ParamSet set = objective_param_set(kind);
    std::vector<Matrix*> param_ptrs = trainable_params(s.model, set);
    std::vector<Matrix> params;
    for (Matrix* p : param_ptrs) params.push_back(*p);

    auto loss_fn = [&](const std::vector<Matrix>& ps) {
      ModelParams mm = s.model;
      std::vector<Matrix*> ptrs = trainable_params(mm, set);
      for (std::size_t i = 0; i < ptrs.size(); ++i) *ptrs[i] = ps[i];
      return compute_objective(s.batch, mm, s.bank, cfg).value;
    };
    std::vector<Matrix> fd = finite_diff_grad(loss_fn, params);

    ForwardCaches caches;
    LossOutput out = compute_objective(s.batch, s.model, s.bank, cfg, &caches);
    std::vector<Matrix> analytic =
        objective_backward(s.model, cfg, caches, out);
    REQUIRE(analytic.size() == fd.size());
    CHECK(testutil::max_rel_err(analytic, fd) < 1e-4);
  }
}

TEST_CASE("objective parameter sets and name round trips") {
  CHECK(objective_param_set(ObjectiveKind::SelfCon) ==
        ParamSet::EncoderProjector);
  CHECK(objective_param_set(ObjectiveKind::SupCon) ==
        ParamSet::EncoderProjector);
  CHECK(objective_param_set(ObjectiveKind::MaskCon) ==
        ParamSet::EncoderProjector);
  CHECK(objective_param_set(ObjectiveKind::Grafit) ==
        ParamSet::EncoderProjector);
  CHECK(objective_param_set(ObjectiveKind::SupCE) ==
        ParamSet::EncoderClassifier);
  CHECK(objective_param_set(ObjectiveKind::CoIns) == ParamSet::All);

  for (const char* name :
       {"selfcon", "supcon", "supce", "grafit", "coins", "maskcon"}) {
    CHECK(objective_kind_str(parse_objective_kind(name)) == name);
  }
  CHECK_THROWS_AS(parse_objective_kind("nope"), ConfigError);
}
