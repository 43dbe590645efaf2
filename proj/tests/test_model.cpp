#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "maskcon/errors.hpp"
#include "maskcon/model.hpp"
#include "maskcon/numerics.hpp"
#include "test_util.hpp"

using namespace maskcon;
using testutil::rand_matrix;

namespace {

ModelDims tiny_dims() {
  ModelDims d;
  d.input_dim = 5;
  d.hidden_dim = 6;
  d.feat_dim = 4;
  d.proj_hidden = 7;
  d.proj_dim = 3;
  d.n_coarse = 2;
  return d;
}

// copy every tensor of m into a flat list, matching named_tensors order
std::vector<Matrix> tensor_copies(const ModelParams& m) {
  std::vector<Matrix> out;
  for (const auto& [name, t] : named_tensors(m)) out.push_back(*t);
  return out;
}

}  // namespace

TEST_CASE("init_model shapes and key copies") {
  ModelDims d = tiny_dims();
  Rng rng(1);
  ModelParams m = init_model(d, rng);
  REQUIRE(m.encoder.size() == 2);
  REQUIRE(m.projector.size() == 2);
  CHECK(m.encoder[0].w.rows == 5);
  CHECK(m.encoder[0].w.cols == 6);
  CHECK(m.encoder[1].w.rows == 6);
  CHECK(m.encoder[1].w.cols == 4);
  CHECK(m.projector[0].w.rows == 4);
  CHECK(m.projector[0].w.cols == 7);
  CHECK(m.projector[1].w.rows == 7);
  CHECK(m.projector[1].w.cols == 3);
  CHECK(m.classifier.w.rows == 4);
  CHECK(m.classifier.w.cols == 2);
  for (const Layer& l : m.encoder)
    for (double v : l.b.data) CHECK(v == 0.0);

  // key branch starts as an exact copy
  for (std::size_t i = 0; i < m.encoder.size(); ++i) {
    CHECK(m.key_encoder[i].w.data == m.encoder[i].w.data);
    CHECK(m.key_encoder[i].b.data == m.encoder[i].b.data);
  }
  for (std::size_t i = 0; i < m.projector.size(); ++i)
    CHECK(m.key_projector[i].w.data == m.projector[i].w.data);

  // same seed, same init; different seed, different init
  Rng r2(1);
  ModelParams m2 = init_model(d, r2);
  CHECK(m2.encoder[0].w.data == m.encoder[0].w.data);
  Rng r3(2);
  ModelParams m3 = init_model(d, r3);
  CHECK(m3.encoder[0].w.data != m.encoder[0].w.data);
}

TEST_CASE("mlp_forward: identity layer and ReLU clamp") {
  // single linear layer w = I, b = 0 passes positive inputs through
  std::vector<Layer> layers(1);
  layers[0].w = Matrix(3, 3);
  for (std::size_t i = 0; i < 3; ++i) layers[0].w(i, i) = 1.0;
  layers[0].b = Matrix(1, 3);
  Matrix x(2, 3);
  x.data = {1.0, -2.0, 3.0, 0.5, 0.0, -1.0};
  Matrix y = mlp_forward(layers, x);
  CHECK(y.data == x.data);  // last layer is linear, no ReLU

  // two identity layers: ReLU applies between them
  std::vector<Layer> two(2, layers[0]);
  Matrix y2 = mlp_forward(two, x);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.cols; ++j)
      CHECK(y2(i, j) == std::max(0.0, x(i, j)));

  // bias enters once per layer
  two[1].b(0, 1) = 5.0;
  Matrix y3 = mlp_forward(two, x);
  CHECK(y3(0, 1) == std::max(0.0, x(0, 1)) + 5.0);
}

TEST_CASE("l2_normalize_rows: unit norms and zero-row guard") {
  Rng rng(4);
  Matrix x = rand_matrix(rng, 6, 5, -2.0, 2.0);
  std::vector<double> norms;
  Matrix y = l2_normalize_rows(x, &norms);
  REQUIRE(norms.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    double n = 0.0, xin = 0.0;
    for (std::size_t j = 0; j < 5; ++j) {
      n += y(i, j) * y(i, j);
      xin += x(i, j) * x(i, j);
    }
    CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(norms[i] == doctest::Approx(std::sqrt(xin)).epsilon(1e-12));
  }
  Matrix z(2, 3);
  z(1, 0) = 1.0;
  CHECK_THROWS_AS(l2_normalize_rows(z), ZeroNormRow);
}

TEST_CASE("project outputs unit rows and is positively homogeneous") {
  ModelDims d = tiny_dims();
  Rng rng(9);
  ModelParams m = init_model(d, rng);
  Matrix f = rand_matrix(rng, 4, d.feat_dim);
  Matrix z = project(m, f);
  REQUIRE(z.rows == 4);
  REQUIRE(z.cols == d.proj_dim);
  for (std::size_t i = 0; i < z.rows; ++i) {
    double n = 0.0;
    for (std::size_t j = 0; j < z.cols; ++j) n += z(i, j) * z(i, j);
    CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-12));
  }

  // with zero biases, scaling the input leaves the normalized output as-is
  ModelParams m0 = m;
  for (Layer& l : m0.projector) l.b = Matrix(1, l.b.cols);
  Matrix f2 = f;
  for (double& v : f2.data) v *= 2.0;
  CHECK(testutil::max_abs_diff(project(m0, f), project(m0, f2)) < 1e-12);
}

TEST_CASE("encoder gradient matches finite differences") {
  ModelDims d = tiny_dims();
  Rng rng(21);
  ModelParams m = init_model(d, rng);
  Matrix x = rand_matrix(rng, 3, d.input_dim);
  Matrix r = rand_matrix(rng, 3, d.feat_dim);  // fixed linear head

  std::vector<Matrix> params;
  for (const Layer& l : m.encoder) {
    params.push_back(l.w);
    params.push_back(l.b);
  }
  auto loss_fn = [&](const std::vector<Matrix>& ps) {
    ModelParams mm = m;
    for (std::size_t i = 0; i < mm.encoder.size(); ++i) {
      mm.encoder[i].w = ps[2 * i];
      mm.encoder[i].b = ps[2 * i + 1];
    }
    Matrix feat = encoder_forward(mm, x);
    double s = 0.0;
    for (std::size_t k = 0; k < feat.data.size(); ++k)
      s += feat.data[k] * r.data[k];
    return s;
  };
  std::vector<Matrix> fd = finite_diff_grad(loss_fn, params);

  MlpCache cache;
  encoder_forward(m, x, &cache);
  std::vector<Layer> grads;
  mlp_backward(m.encoder, cache, r, grads);
  std::vector<Matrix> analytic;
  for (Layer& l : grads) {
    analytic.push_back(std::move(l.w));
    analytic.push_back(std::move(l.b));
  }
  CHECK(testutil::max_rel_err(analytic, fd) < 1e-4);
}

TEST_CASE("projector gradient matches finite differences through "
          "normalization") {
  ModelDims d = tiny_dims();
  Rng rng(33);
  ModelParams m = init_model(d, rng);
  Matrix f = rand_matrix(rng, 3, d.feat_dim);
  Matrix r = rand_matrix(rng, 3, d.proj_dim);

  std::vector<Matrix> params;
  for (const Layer& l : m.projector) {
    params.push_back(l.w);
    params.push_back(l.b);
  }
  params.push_back(f);  // also check the grad w.r.t. features
  auto loss_fn = [&](const std::vector<Matrix>& ps) {
    ModelParams mm = m;
    for (std::size_t i = 0; i < mm.projector.size(); ++i) {
      mm.projector[i].w = ps[2 * i];
      mm.projector[i].b = ps[2 * i + 1];
    }
    Matrix z = project(mm, ps.back());
    double s = 0.0;
    for (std::size_t k = 0; k < z.data.size(); ++k) s += z.data[k] * r.data[k];
    return s;
  };
  std::vector<Matrix> fd = finite_diff_grad(loss_fn, params);

  ProjectCache cache;
  project(m, f, &cache);
  std::vector<Layer> grads;
  Matrix gf = project_backward(m, cache, r, grads);
  std::vector<Matrix> analytic;
  for (Layer& l : grads) {
    analytic.push_back(std::move(l.w));
    analytic.push_back(std::move(l.b));
  }
  analytic.push_back(std::move(gf));
  CHECK(testutil::max_rel_err(analytic, fd) < 1e-4);
}

TEST_CASE("classifier gradient matches finite differences") {
  ModelDims d = tiny_dims();
  Rng rng(17);
  ModelParams m = init_model(d, rng);
  Matrix f = rand_matrix(rng, 4, d.feat_dim);
  Matrix r = rand_matrix(rng, 4, d.n_coarse);

  std::vector<Matrix> params = {m.classifier.w, m.classifier.b, f};
  auto loss_fn = [&](const std::vector<Matrix>& ps) {
    ModelParams mm = m;
    mm.classifier.w = ps[0];
    mm.classifier.b = ps[1];
    Matrix logits = classify(mm, ps[2]);
    double s = 0.0;
    for (std::size_t k = 0; k < logits.data.size(); ++k)
      s += logits.data[k] * r.data[k];
    return s;
  };
  std::vector<Matrix> fd = finite_diff_grad(loss_fn, params);

  Layer grads;
  Matrix gf = classify_backward(m, f, r, grads);
  std::vector<Matrix> analytic = {std::move(grads.w), std::move(grads.b),
                                  std::move(gf)};
  CHECK(testutil::max_rel_err(analytic, fd) < 1e-4);
}

TEST_CASE("momentum_update blends toward the query branch") {
  ModelDims d = tiny_dims();
  Rng rng(8);
  ModelParams m = init_model(d, rng);
  // separate the branches first
  for (Layer& l : m.encoder)
    for (double& v : l.w.data) v += 1.0;

  ModelParams m_half = m;
  momentum_update(m_half, 0.0);  // key <- query
  CHECK(m_half.key_encoder[0].w.data == m_half.encoder[0].w.data);
  CHECK(m_half.key_projector[1].w.data == m_half.projector[1].w.data);

  ModelParams m_keep = m;
  momentum_update(m_keep, 1.0);  // key unchanged
  CHECK(m_keep.key_encoder[0].w.data == m.key_encoder[0].w.data);

  ModelParams m_mix = m;
  momentum_update(m_mix, 0.99);
  for (std::size_t k = 0; k < m.key_encoder[0].w.data.size(); ++k) {
    double want = 0.99 * m.key_encoder[0].w.data[k] +
                  0.01 * m.encoder[0].w.data[k];
    CHECK(m_mix.key_encoder[0].w.data[k] ==
          doctest::Approx(want).epsilon(1e-15));
  }
  CHECK_THROWS_AS(momentum_update(m, -0.1), BadConfig);
  CHECK_THROWS_AS(momentum_update(m, 1.5), BadConfig);
}

TEST_CASE("key_project equals query path when branches coincide") {
  ModelDims d = tiny_dims();
  Rng rng(29);
  ModelParams m = init_model(d, rng);  // key starts as a copy
  Matrix x = rand_matrix(rng, 5, d.input_dim);
  Matrix zq = project(m, encoder_forward(m, x));
  Matrix zk = key_project(m, x);
  CHECK(zq.data == zk.data);

  // once the query branch moves, the key branch lags
  for (Layer& l : m.encoder)
    for (double& v : l.w.data) v += 0.5;
  CHECK(key_project(m, x).data == zk.data);
}

TEST_CASE("trainable_params excludes the key branch") {
  ModelDims d = tiny_dims();
  Rng rng(2);
  ModelParams m = init_model(d, rng);

  auto has_tensor = [&](const std::vector<Matrix*>& ps, const Matrix* t) {
    for (const Matrix* p : ps)
      if (p == t) return true;
    return false;
  };

  std::vector<Matrix*> ep = trainable_params(m, ParamSet::EncoderProjector);
  CHECK(ep.size() == 2 * (m.encoder.size() + m.projector.size()));
  CHECK(has_tensor(ep, &m.projector[0].w));
  CHECK(!has_tensor(ep, &m.classifier.w));
  CHECK(!has_tensor(ep, &m.key_encoder[0].w));

  std::vector<Matrix*> ec = trainable_params(m, ParamSet::EncoderClassifier);
  CHECK(ec.size() == 2 * m.encoder.size() + 2);
  CHECK(has_tensor(ec, &m.classifier.w));
  CHECK(!has_tensor(ec, &m.projector[0].w));

  std::vector<Matrix*> all = trainable_params(m, ParamSet::All);
  CHECK(all.size() == 2 * (m.encoder.size() + m.projector.size()) + 2);
  CHECK(!has_tensor(all, &m.key_projector[0].w));

  // bias flags alternate w, b
  std::vector<std::uint8_t> flags =
      trainable_is_bias(m, ParamSet::EncoderProjector);
  REQUIRE(flags.size() == ep.size());
  for (std::size_t i = 0; i < flags.size(); ++i)
    CHECK(flags[i] == (i % 2 == 1 ? 1 : 0));
}

TEST_CASE("an sgd step never touches key tensors") {
  ModelDims d = tiny_dims();
  Rng rng(41);
  ModelParams m = init_model(d, rng);
  std::vector<Matrix> before = tensor_copies(m);

  std::vector<Matrix*> params = trainable_params(m, ParamSet::All);
  std::vector<std::uint8_t> is_bias = trainable_is_bias(m, ParamSet::All);
  OptimState st = init_optim_state(
      std::span<const Matrix* const>(params.data(), params.size()), is_bias,
      0.1, 0.9, 1e-4, 10);
  std::vector<Matrix> grads;
  for (Matrix* p : params) grads.emplace_back(p->rows, p->cols, 0.25);
  sgd_step(std::span<Matrix* const>(params.data(), params.size()),
           std::span<const Matrix>(grads.data(), grads.size()), st);

  auto named = named_tensors(m);
  REQUIRE(named.size() == before.size());
  for (std::size_t i = 0; i < named.size(); ++i) {
    const bool is_key = named[i].first.rfind("key_", 0) == 0;
    if (is_key) {
      CHECK(named[i].second->data == before[i].data);
    } else {
      CHECK(named[i].second->data != before[i].data);
    }
  }
}
