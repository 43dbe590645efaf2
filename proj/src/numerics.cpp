#include "maskcon/numerics.hpp"

#include <cmath>
#include <numbers>

#include "maskcon/errors.hpp"

namespace maskcon {

namespace {

Matrix normalized_rows(const Matrix& m) {
  Matrix out = m;
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double n = row_norm(m, i);
    if (n < kZeroNormTol) {
      throw ZeroNormRow("cosine_similarity_matrix: row " + std::to_string(i) +
                        " has norm " + std::to_string(n));
    }
    double* r = out.row(i);
    for (std::size_t j = 0; j < m.cols; ++j) r[j] /= n;
  }
  return out;
}

}  // namespace

Matrix cosine_similarity_matrix(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols) {
    throw ShapeMismatch("cosine_similarity_matrix: dim mismatch " +
                        std::to_string(a.cols) + " vs " +
                        std::to_string(b.cols));
  }
  return matmul_abt(normalized_rows(a), normalized_rows(b));
}

Matrix softmax_rows(const Matrix& m, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw NonPositiveTemperature("softmax_rows: tau = " + std::to_string(tau));
  }
  Matrix out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double* src = m.row(i);
    double* dst = out.row(i);
    double mx = src[0];
    for (std::size_t j = 1; j < m.cols; ++j) mx = std::max(mx, src[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) {
      dst[j] = std::exp((src[j] - mx) / tau);
      sum += dst[j];
    }
    for (std::size_t j = 0; j < m.cols; ++j) dst[j] /= sum;
  }
  return out;
}

double cosine_lr(std::size_t epoch, std::size_t total, double base_lr) {
  if (epoch >= total) {
    throw BadEpoch("cosine_lr: epoch " + std::to_string(epoch) +
                   " >= total " + std::to_string(total));
  }
  const double t = static_cast<double>(epoch) / static_cast<double>(total);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

OptimState init_optim_state(std::span<const Matrix* const> params,
                            std::span<const std::uint8_t> is_bias,
                            double base_lr, double momentum,
                            double weight_decay, std::size_t total_epochs) {
  if (!is_bias.empty() && is_bias.size() != params.size()) {
    throw ShapeMismatch("init_optim_state: is_bias size mismatch");
  }
  OptimState st;
  st.velocity.reserve(params.size());
  for (const Matrix* p : params) st.velocity.emplace_back(p->rows, p->cols);
  if (is_bias.empty()) {
    st.is_bias.assign(params.size(), 0);
  } else {
    st.is_bias.assign(is_bias.begin(), is_bias.end());
  }
  st.base_lr = base_lr;
  st.momentum = momentum;
  st.weight_decay = weight_decay;
  st.total_epochs = total_epochs;
  return st;
}

void sgd_step(std::span<Matrix* const> params, std::span<const Matrix> grads,
              OptimState& state) {
  if (params.size() != grads.size() ||
      params.size() != state.velocity.size()) {
    throw ShapeMismatch("sgd_step: param/grad/velocity count mismatch");
  }
  const double lr = cosine_lr(state.epoch, state.total_epochs, state.base_lr);
  for (std::size_t t = 0; t < params.size(); ++t) {
    Matrix& p = *params[t];
    const Matrix& g = grads[t];
    Matrix& v = state.velocity[t];
    if (!p.same_shape(g) || !p.same_shape(v)) {
      throw ShapeMismatch("sgd_step: tensor " + std::to_string(t) +
                          " shape mismatch");
    }
    const bool decay = state.decay_bias || !state.is_bias[t];
    const double wd = decay ? state.weight_decay : 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      v.data[k] = state.momentum * v.data[k] + g.data[k] + wd * p.data[k];
      p.data[k] -= lr * v.data[k];
    }
  }
}

std::vector<Matrix> finite_diff_grad(
    const std::function<double(const std::vector<Matrix>&)>& loss_fn,
    std::vector<Matrix> params, double h) {
  std::vector<Matrix> grads;
  grads.reserve(params.size());
  for (const Matrix& p : params) grads.emplace_back(p.rows, p.cols);
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t k = 0; k < params[t].size(); ++k) {
      const double orig = params[t].data[k];
      params[t].data[k] = orig + h;
      const double up = loss_fn(params);
      params[t].data[k] = orig - h;
      const double down = loss_fn(params);
      params[t].data[k] = orig;
      grads[t].data[k] = (up - down) / (2.0 * h);
    }
  }
  return grads;
}

}  // namespace maskcon
