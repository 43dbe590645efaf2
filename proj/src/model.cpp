#include "maskcon/model.hpp"

#include <cmath>

#include "maskcon/errors.hpp"
#include "maskcon/numerics.hpp"

namespace maskcon {

namespace {

Layer init_layer(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Layer l{Matrix(fan_in, fan_out), Matrix(1, fan_out)};
  const double sigma = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (double& v : l.w.data) v = sigma * rng.normal();
  return l;
}

std::vector<Layer> init_mlp(const std::vector<std::size_t>& widths, Rng& rng) {
  std::vector<Layer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    layers.push_back(init_layer(widths[i], widths[i + 1], rng));
  }
  return layers;
}

void add_bias_rows(Matrix& m, const Matrix& b) {
  for (std::size_t i = 0; i < m.rows; ++i) {
    double* r = m.row(i);
    for (std::size_t j = 0; j < m.cols; ++j) r[j] += b.data[j];
  }
}

Matrix colsum(const Matrix& g) {
  Matrix out(1, g.cols);
  for (std::size_t i = 0; i < g.rows; ++i) {
    const double* r = g.row(i);
    for (std::size_t j = 0; j < g.cols; ++j) out.data[j] += r[j];
  }
  return out;
}

void relu_inplace(Matrix& m) {
  for (double& v : m.data) v = v > 0.0 ? v : 0.0;
}

// g <- g masked by relu'(pre)
void relu_backward_inplace(Matrix& g, const Matrix& pre) {
  if (!g.same_shape(pre)) throw ShapeMismatch("relu_backward: shape mismatch");
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (pre.data[k] <= 0.0) g.data[k] = 0.0;
  }
}

void ema_tensor(Matrix& key, const Matrix& query, double m) {
  if (!key.same_shape(query)) {
    throw ShapeMismatch("momentum_update: tensor shape mismatch");
  }
  for (std::size_t k = 0; k < key.size(); ++k) {
    key.data[k] = m * key.data[k] + (1.0 - m) * query.data[k];
  }
}

void ema_layers(std::vector<Layer>& key, const std::vector<Layer>& query,
                double m) {
  if (key.size() != query.size()) {
    throw ShapeMismatch("momentum_update: layer count mismatch");
  }
  for (std::size_t i = 0; i < key.size(); ++i) {
    ema_tensor(key[i].w, query[i].w, m);
    ema_tensor(key[i].b, query[i].b, m);
  }
}

void append_named(std::vector<std::pair<std::string, Matrix*>>& out,
                  const std::string& prefix, std::vector<Layer>& layers) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out.emplace_back(prefix + "." + std::to_string(i) + ".w", &layers[i].w);
    out.emplace_back(prefix + "." + std::to_string(i) + ".b", &layers[i].b);
  }
}

}  // namespace

ModelParams init_model(const ModelDims& dims, Rng& rng) {
  if (dims.input_dim == 0 || dims.n_coarse == 0) {
    throw ShapeMismatch("init_model: input_dim and n_coarse must be set");
  }
  ModelParams p;
  p.dims = dims;
  p.encoder = init_mlp({dims.input_dim, dims.hidden_dim, dims.feat_dim}, rng);
  p.projector = init_mlp({dims.feat_dim, dims.proj_hidden, dims.proj_dim}, rng);
  p.classifier = init_layer(dims.feat_dim, dims.n_coarse, rng);
  p.key_encoder = p.encoder;
  p.key_projector = p.projector;
  return p;
}

Matrix mlp_forward(const std::vector<Layer>& layers, const Matrix& x,
                   MlpCache* cache) {
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  Matrix a = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (a.cols != layers[i].w.rows) {
      throw ShapeMismatch("mlp_forward: layer " + std::to_string(i) +
                          " expects " + std::to_string(layers[i].w.rows) +
                          " inputs, got " + std::to_string(a.cols));
    }
    Matrix pre = matmul(a, layers[i].w);
    add_bias_rows(pre, layers[i].b);
    if (cache) {
      cache->inputs.push_back(std::move(a));
      cache->pre.push_back(pre);
    }
    a = std::move(pre);
    if (i + 1 < layers.size()) relu_inplace(a);
  }
  return a;
}

Matrix mlp_backward(const std::vector<Layer>& layers, const MlpCache& cache,
                    const Matrix& grad_out, std::vector<Layer>& grads) {
  if (cache.inputs.size() != layers.size()) {
    throw ShapeMismatch("mlp_backward: cache does not match layer count");
  }
  grads.clear();
  grads.resize(layers.size());
  Matrix g = grad_out;
  for (std::size_t ii = layers.size(); ii-- > 0;) {
    grads[ii].w = matmul_atb(cache.inputs[ii], g);
    grads[ii].b = colsum(g);
    Matrix ga = matmul_abt(g, layers[ii].w);
    if (ii > 0) relu_backward_inplace(ga, cache.pre[ii - 1]);
    g = std::move(ga);
  }
  return g;
}

Matrix l2_normalize_rows(const Matrix& x, std::vector<double>* norms) {
  Matrix y = x;
  if (norms) norms->assign(x.rows, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const double n = row_norm(x, i);
    if (n < kZeroNormTol) {
      throw ZeroNormRow("l2_normalize_rows: row " + std::to_string(i) +
                        " has near-zero norm");
    }
    if (norms) (*norms)[i] = n;
    double* r = y.row(i);
    for (std::size_t j = 0; j < x.cols; ++j) r[j] /= n;
  }
  return y;
}

Matrix l2_normalize_backward(const Matrix& y, const std::vector<double>& norms,
                             const Matrix& grad_y) {
  if (!y.same_shape(grad_y) || norms.size() != y.rows) {
    throw ShapeMismatch("l2_normalize_backward: shape mismatch");
  }
  Matrix gx(y.rows, y.cols);
  for (std::size_t i = 0; i < y.rows; ++i) {
    const double* yi = y.row(i);
    const double* gi = grad_y.row(i);
    double dot = 0.0;
    for (std::size_t j = 0; j < y.cols; ++j) dot += gi[j] * yi[j];
    double* o = gx.row(i);
    for (std::size_t j = 0; j < y.cols; ++j) {
      o[j] = (gi[j] - yi[j] * dot) / norms[i];
    }
  }
  return gx;
}

Matrix encoder_forward(const ModelParams& p, const Matrix& inputs,
                       MlpCache* cache) {
  return mlp_forward(p.encoder, inputs, cache);
}

Matrix project(const ModelParams& p, const Matrix& features,
               ProjectCache* cache) {
  MlpCache mlp;
  Matrix pre_norm = mlp_forward(p.projector, features, cache ? &mlp : nullptr);
  std::vector<double> norms;
  Matrix y = l2_normalize_rows(pre_norm, &norms);
  if (cache) {
    cache->mlp = std::move(mlp);
    cache->pre_norm = std::move(pre_norm);
    cache->norms = std::move(norms);
  }
  return y;
}

Matrix project_backward(const ModelParams& p, const ProjectCache& cache,
                        const Matrix& grad_proj, std::vector<Layer>& grads) {
  Matrix y(cache.pre_norm.rows, cache.pre_norm.cols);
  for (std::size_t i = 0; i < y.rows; ++i) {
    const double* src = cache.pre_norm.row(i);
    double* dst = y.row(i);
    for (std::size_t j = 0; j < y.cols; ++j) dst[j] = src[j] / cache.norms[i];
  }
  Matrix g_pre = l2_normalize_backward(y, cache.norms, grad_proj);
  return mlp_backward(p.projector, cache.mlp, g_pre, grads);
}

Matrix classify(const ModelParams& p, const Matrix& features) {
  Matrix logits = matmul(features, p.classifier.w);
  add_bias_rows(logits, p.classifier.b);
  return logits;
}

Matrix classify_backward(const ModelParams& p, const Matrix& features,
                         const Matrix& grad_logits, Layer& grads) {
  grads.w = matmul_atb(features, grad_logits);
  grads.b = colsum(grad_logits);
  return matmul_abt(grad_logits, p.classifier.w);
}

Matrix key_project(const ModelParams& p, const Matrix& inputs) {
  Matrix feats = mlp_forward(p.key_encoder, inputs);
  Matrix pre_norm = mlp_forward(p.key_projector, feats);
  return l2_normalize_rows(pre_norm);
}

void momentum_update(ModelParams& p, double m) {
  if (!(m >= 0.0 && m <= 1.0)) {
    throw BadConfig("momentum_update: m must be in [0,1]");
  }
  ema_layers(p.key_encoder, p.encoder, m);
  ema_layers(p.key_projector, p.projector, m);
}

std::vector<std::pair<std::string, Matrix*>> named_tensors(ModelParams& p) {
  std::vector<std::pair<std::string, Matrix*>> out;
  append_named(out, "encoder", p.encoder);
  append_named(out, "projector", p.projector);
  out.emplace_back("classifier.w", &p.classifier.w);
  out.emplace_back("classifier.b", &p.classifier.b);
  append_named(out, "key_encoder", p.key_encoder);
  append_named(out, "key_projector", p.key_projector);
  return out;
}

std::vector<std::pair<std::string, const Matrix*>> named_tensors(
    const ModelParams& p) {
  auto mut = named_tensors(const_cast<ModelParams&>(p));
  std::vector<std::pair<std::string, const Matrix*>> out;
  out.reserve(mut.size());
  for (auto& [name, ptr] : mut) out.emplace_back(name, ptr);
  return out;
}

std::vector<Matrix*> trainable_params(ModelParams& p, ParamSet set) {
  std::vector<Matrix*> out;
  auto add = [&out](std::vector<Layer>& layers) {
    for (Layer& l : layers) {
      out.push_back(&l.w);
      out.push_back(&l.b);
    }
  };
  add(p.encoder);
  if (set != ParamSet::EncoderClassifier) add(p.projector);
  if (set != ParamSet::EncoderProjector) {
    out.push_back(&p.classifier.w);
    out.push_back(&p.classifier.b);
  }
  return out;
}

std::vector<std::uint8_t> trainable_is_bias(const ModelParams& p,
                                            ParamSet set) {
  auto params = trainable_params(const_cast<ModelParams&>(p), set);
  std::vector<std::uint8_t> flags(params.size());
  // every tensor list alternates w, b
  for (std::size_t i = 0; i < flags.size(); ++i) flags[i] = i % 2;
  return flags;
}

}  // namespace maskcon
