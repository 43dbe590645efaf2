#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "maskcon/matrix.hpp"
#include "maskcon/rng.hpp"

namespace maskcon {

// One fully-connected layer. w is (in, out), b is (1, out).
struct Layer {
  Matrix w;
  Matrix b;
};

struct ModelDims {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 256;
  std::size_t feat_dim = 128;
  std::size_t proj_hidden = 512;
  std::size_t proj_dim = 128;
  std::size_t n_coarse = 0;
};

// Encoder f, projector h, classifier g, plus EMA key copies of f and h.
// Key copies are only ever written by momentum_update.
struct ModelParams {
  ModelDims dims;
  std::vector<Layer> encoder;
  std::vector<Layer> projector;
  Layer classifier;
  std::vector<Layer> key_encoder;
  std::vector<Layer> key_projector;
};

// Two augmented views of a batch plus labels. Fine labels ride along for
// evaluation only; no loss reads them.
struct Batch {
  Matrix query_views;
  Matrix key_views;
  std::vector<int> coarse_labels;
  std::vector<int> fine_labels;
  std::vector<std::int64_t> ids;
};

// Forward activations kept for the backward pass: the input to each layer
// and each layer's pre-activation output.
struct MlpCache {
  std::vector<Matrix> inputs;
  std::vector<Matrix> pre;
};

// MLP cache plus the pre-normalization projector output and row norms.
struct ProjectCache {
  MlpCache mlp;
  Matrix pre_norm;
  std::vector<double> norms;
};

ModelParams init_model(const ModelDims& dims, Rng& rng);

// ReLU between layers, final layer linear.
Matrix mlp_forward(const std::vector<Layer>& layers, const Matrix& x,
                   MlpCache* cache = nullptr);

// Returns grad w.r.t. the MLP input and fills per-layer grads (aligned with
// layers, same shapes).
Matrix mlp_backward(const std::vector<Layer>& layers, const MlpCache& cache,
                    const Matrix& grad_out, std::vector<Layer>& grads);

Matrix l2_normalize_rows(const Matrix& x, std::vector<double>* norms = nullptr);

// Backward through row normalization y = x/|x|:
//   gx_i = (gy_i - y_i * dot(gy_i, y_i)) / |x_i|
Matrix l2_normalize_backward(const Matrix& y, const std::vector<double>& norms,
                             const Matrix& grad_y);

Matrix encoder_forward(const ModelParams& p, const Matrix& inputs,
                       MlpCache* cache = nullptr);

// Projector forward with L2-normalized rows.
Matrix project(const ModelParams& p, const Matrix& features,
               ProjectCache* cache = nullptr);

// Grad w.r.t. features given grad w.r.t. normalized projections.
Matrix project_backward(const ModelParams& p, const ProjectCache& cache,
                        const Matrix& grad_proj, std::vector<Layer>& grads);

Matrix classify(const ModelParams& p, const Matrix& features);

// Grad w.r.t. features; fills classifier grads.
Matrix classify_backward(const ModelParams& p, const Matrix& features,
                         const Matrix& grad_logits, Layer& grads);

// Key branch: EMA encoder + projector + normalization, no cache, no grads.
Matrix key_project(const ModelParams& p, const Matrix& inputs);

// key <- m*key + (1-m)*query for encoder and projector tensors.
void momentum_update(ModelParams& p, double m);

// Named views over every tensor, stable order; used by the checkpoint codec.
std::vector<std::pair<std::string, Matrix*>> named_tensors(ModelParams& p);
std::vector<std::pair<std::string, const Matrix*>> named_tensors(
    const ModelParams& p);

// Which tensors an objective trains (key copies never appear).
enum class ParamSet { EncoderProjector, EncoderClassifier, All };

std::vector<Matrix*> trainable_params(ModelParams& p, ParamSet set);
std::vector<std::uint8_t> trainable_is_bias(const ModelParams& p,
                                            ParamSet set);

}  // namespace maskcon
