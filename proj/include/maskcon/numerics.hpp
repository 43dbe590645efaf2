#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "maskcon/matrix.hpp"

namespace maskcon {

inline constexpr double kZeroNormTol = 1e-12;

// Pairwise cosine similarities, entry (i,j) = cos(a_i, b_j).
// Throws ZeroNormRow if any row norm is below kZeroNormTol.
Matrix cosine_similarity_matrix(const Matrix& a, const Matrix& b);

// Row-wise temperature softmax with row-max subtraction.
Matrix softmax_rows(const Matrix& m, double tau);

// base_lr * 0.5 * (1 + cos(pi * epoch / total)); throws BadEpoch when
// epoch >= total.
double cosine_lr(std::size_t epoch, std::size_t total, double base_lr);

// SGD with momentum and coupled weight decay:
//   v <- momentum*v + grad + weight_decay*param
//   param <- param - lr(epoch)*v
struct OptimState {
  std::vector<Matrix> velocity;
  std::vector<std::uint8_t> is_bias;  // aligned with velocity
  double base_lr = 0.02;
  double momentum = 0.9;
  double weight_decay = 0.0;
  bool decay_bias = true;  // when false, bias tensors skip weight decay
  std::size_t epoch = 0;
  std::size_t total_epochs = 1;
};

OptimState init_optim_state(std::span<const Matrix* const> params,
                            std::span<const std::uint8_t> is_bias,
                            double base_lr, double momentum,
                            double weight_decay, std::size_t total_epochs);

void sgd_step(std::span<Matrix* const> params, std::span<const Matrix> grads,
              OptimState& state);

// Central-difference gradient oracle for test use:
//   (loss(p + h*e) - loss(p - h*e)) / (2h) per coordinate.
std::vector<Matrix> finite_diff_grad(
    const std::function<double(const std::vector<Matrix>&)>& loss_fn,
    std::vector<Matrix> params, double h = 1e-5);

}  // namespace maskcon
