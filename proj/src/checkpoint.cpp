#include "maskcon/checkpoint.hpp"

#include <map>

#include "byte_io.hpp"
#include "maskcon/errors.hpp"

namespace maskcon {

namespace {

using ByteReader = detail::ByteReader<ChecksumMismatch>;

constexpr std::uint32_t kVersion = 1;

std::size_t count_layers(const std::map<std::string, Matrix>& tensors,
                         const std::string& prefix) {
  std::size_t n = 0;
  while (tensors.count(prefix + "." + std::to_string(n) + ".w")) ++n;
  return n;
}

std::vector<Layer> take_mlp(std::map<std::string, Matrix>& tensors,
                            const std::string& prefix, const char* path) {
  const std::size_t n = count_layers(tensors, prefix);
  if (n == 0) {
    throw ChecksumMismatch(std::string(path) + ": missing tensors for " +
                           prefix);
  }
  std::vector<Layer> layers;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string base = prefix + "." + std::to_string(i);
    auto w = tensors.find(base + ".w");
    auto b = tensors.find(base + ".b");
    if (w == tensors.end() || b == tensors.end()) {
      throw ChecksumMismatch(std::string(path) + ": missing " + base);
    }
    if (b->second.rows != 1 || b->second.cols != w->second.cols) {
      throw ChecksumMismatch(std::string(path) + ": bad bias shape at " +
                             base);
    }
    layers.push_back({std::move(w->second), std::move(b->second)});
    tensors.erase(w);
    tensors.erase(b);
  }
  return layers;
}

void check_chain(const std::vector<Layer>& layers, const char* what,
                 const char* path) {
  for (std::size_t i = 1; i < layers.size(); ++i) {
    if (layers[i].w.rows != layers[i - 1].w.cols) {
      throw ChecksumMismatch(std::string(path) + ": " + what +
                             " layer widths do not chain");
    }
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params) {
  const auto tensors = named_tensors(params);
  std::string out;
  out += "MKCN";
  detail::append_u32(out, kVersion);
  detail::append_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) {
    detail::append_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    detail::append_u32(out, 2);
    detail::append_u32(out, static_cast<std::uint32_t>(m->rows));
    detail::append_u32(out, static_cast<std::uint32_t>(m->cols));
    for (double v : m->data) detail::append_f64(out, v);
  }
  detail::write_file(path, out);
}

ModelParams load_checkpoint(const std::string& path) {
  const std::string bytes = detail::read_file(path);
  ByteReader r(bytes, path);
  r.magic("MKCN");
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw ChecksumMismatch(path + ": unsupported version " +
                           std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  std::map<std::string, Matrix> tensors;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint32_t name_len = r.u32();
    const std::string name = r.str(name_len);
    const std::uint32_t ndim = r.u32();
    if (ndim != 2) {
      throw ChecksumMismatch(path + ": tensor " + name + " has ndim " +
                             std::to_string(ndim));
    }
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    Matrix m(rows, cols);
    for (double& v : m.data) v = r.f64();
    if (!tensors.emplace(name, std::move(m)).second) {
      throw ChecksumMismatch(path + ": duplicate tensor " + name);
    }
  }
  if (!r.done()) throw ChecksumMismatch(path + ": trailing bytes");

  const char* p = path.c_str();
  ModelParams params;
  params.encoder = take_mlp(tensors, "encoder", p);
  params.projector = take_mlp(tensors, "projector", p);
  auto cw = tensors.find("classifier.w");
  auto cb = tensors.find("classifier.b");
  if (cw == tensors.end() || cb == tensors.end()) {
    throw ChecksumMismatch(path + ": missing classifier tensors");
  }
  params.classifier = {std::move(cw->second), std::move(cb->second)};
  tensors.erase(cw);
  tensors.erase(cb);
  params.key_encoder = take_mlp(tensors, "key_encoder", p);
  params.key_projector = take_mlp(tensors, "key_projector", p);
  if (!tensors.empty()) {
    throw ChecksumMismatch(path + ": unexpected tensor " +
                           tensors.begin()->first);
  }

  check_chain(params.encoder, "encoder", p);
  check_chain(params.projector, "projector", p);
  if (params.key_encoder.size() != params.encoder.size() ||
      params.key_projector.size() != params.projector.size()) {
    throw ChecksumMismatch(path + ": key copies do not mirror query layers");
  }

  ModelDims& d = params.dims;
  d.input_dim = params.encoder.front().w.rows;
  d.hidden_dim = params.encoder.front().w.cols;
  d.feat_dim = params.encoder.back().w.cols;
  d.proj_hidden = params.projector.front().w.cols;
  d.proj_dim = params.projector.back().w.cols;
  d.n_coarse = params.classifier.w.cols;
  if (params.projector.front().w.rows != d.feat_dim ||
      params.classifier.w.rows != d.feat_dim) {
    throw ChecksumMismatch(path + ": head input widths disagree");
  }
  return params;
}

}  // namespace maskcon
