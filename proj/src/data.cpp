#include "maskcon/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "byte_io.hpp"
#include "maskcon/errors.hpp"

namespace maskcon {

namespace {

using detail::append_f64;
using detail::append_u32;
using detail::read_file;
using detail::write_file;
using ByteReader = detail::ByteReader<MalformedRecord>;

constexpr std::size_t kCifarPixels = 3072;
constexpr std::size_t kCifarChannel = 1024;

void check_hierarchy(const std::vector<int>& coarse,
                     const std::vector<int>& fine) {
  std::map<int, int> seen;
  for (std::size_t i = 0; i < fine.size(); ++i) {
    auto [it, inserted] = seen.emplace(fine[i], coarse[i]);
    if (!inserted && it->second != coarse[i]) {
      throw MalformedRecord("fine class " + std::to_string(fine[i]) +
                            " appears under coarse " +
                            std::to_string(it->second) + " and " +
                            std::to_string(coarse[i]));
    }
  }
}

struct ChannelStats {
  double mean[3] = {0, 0, 0};
  double std[3] = {1, 1, 1};
};

Dataset load_cifar_impl(const std::string& path, const std::string& map_path,
                        Split split, const ChannelStats* fixed_stats,
                        ChannelStats* stats_out) {
  const std::string bytes = read_file(path);
  const bool is10 = bytes.size() % (kCifarPixels + 1) == 0;
  const bool is100 = bytes.size() % (kCifarPixels + 2) == 0;
  if (bytes.empty() || is10 == is100) {
    throw MalformedRecord(path + ": size " + std::to_string(bytes.size()) +
                          " matches no CIFAR record layout");
  }
  const std::size_t rec = kCifarPixels + (is10 ? 1 : 2);
  const std::size_t n_records = bytes.size() / rec;

  std::map<int, int> fine_to_coarse;
  bool have_map = !map_path.empty();
  if (have_map) {
    for (auto [f, c] : load_coarse_map(map_path)) fine_to_coarse[f] = c;
  } else if (is10) {
    throw IncompleteCoarseMap(path +
                              ": single-label records need a coarse map");
  }

  std::vector<int> raw_fine, raw_coarse;
  std::vector<std::size_t> kept;
  raw_fine.reserve(n_records);
  raw_coarse.reserve(n_records);
  for (std::size_t r = 0; r < n_records; ++r) {
    const unsigned char* p =
        reinterpret_cast<const unsigned char*>(bytes.data()) + r * rec;
    const int fine = is10 ? p[0] : p[1];
    int coarse;
    if (have_map) {
      auto it = fine_to_coarse.find(fine);
      if (it == fine_to_coarse.end()) {
        throw IncompleteCoarseMap(map_path + ": no entry for fine class " +
                                  std::to_string(fine));
      }
      coarse = it->second;
      if (coarse < 0) continue;  // dropped class
    } else {
      coarse = p[0];
    }
    kept.push_back(r);
    raw_fine.push_back(fine);
    raw_coarse.push_back(coarse);
  }
  check_hierarchy(raw_coarse, raw_fine);

  // dense re-indexing, ascending original ids
  auto dense = [](const std::vector<int>& raw) {
    std::vector<int> ids = raw;
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    std::map<int, int> remap;
    for (std::size_t i = 0; i < ids.size(); ++i) remap[ids[i]] = static_cast<int>(i);
    std::vector<int> out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = remap[raw[i]];
    return std::pair{out, ids.size()};
  };
  auto [fine, m_fine] = dense(raw_fine);
  auto [coarse, m_coarse] = dense(raw_coarse);

  Dataset ds;
  ds.vectors = Matrix(kept.size(), kCifarPixels);
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const unsigned char* p =
        reinterpret_cast<const unsigned char*>(bytes.data()) + kept[i] * rec +
        (is10 ? 1 : 2);
    double* row = ds.vectors.row(i);
    for (std::size_t j = 0; j < kCifarPixels; ++j) row[j] = p[j] / 255.0;
  }

  ChannelStats stats;
  if (fixed_stats) {
    stats = *fixed_stats;
  } else {
    double sum[3] = {0, 0, 0}, sq[3] = {0, 0, 0};
    for (std::size_t i = 0; i < ds.vectors.rows; ++i) {
      const double* row = ds.vectors.row(i);
      for (std::size_t j = 0; j < kCifarPixels; ++j) {
        sum[j / kCifarChannel] += row[j];
        sq[j / kCifarChannel] += row[j] * row[j];
      }
    }
    const double cnt =
        static_cast<double>(ds.vectors.rows) * static_cast<double>(kCifarChannel);
    for (int c = 0; c < 3; ++c) {
      stats.mean[c] = sum[c] / cnt;
      const double var = sq[c] / cnt - stats.mean[c] * stats.mean[c];
      stats.std[c] = var > 1e-12 ? std::sqrt(var) : 1.0;
    }
  }
  if (stats_out) *stats_out = stats;
  for (std::size_t i = 0; i < ds.vectors.rows; ++i) {
    double* row = ds.vectors.row(i);
    for (std::size_t j = 0; j < kCifarPixels; ++j) {
      const std::size_t c = j / kCifarChannel;
      row[j] = (row[j] - stats.mean[c]) / stats.std[c];
    }
  }

  ds.coarse_labels = std::move(coarse);
  ds.fine_labels = std::move(fine);
  ds.split = split;
  ds.meta = {ds.vectors.rows, kCifarPixels, m_coarse, m_fine,
             is10 ? "cifar10" : "cifar100"};
  return ds;
}

}  // namespace

std::pair<Dataset, Dataset> gen_hierarchical_gaussian(
    std::size_t m_coarse, std::size_t fine_per_coarse, std::size_t n_per_fine,
    std::size_t dim, double coarse_sep, double fine_sep, double noise,
    std::uint64_t seed, double train_fraction) {
  if (!(coarse_sep > fine_sep && fine_sep > noise && noise > 0.0)) {
    throw BadConfig("gen_hierarchical_gaussian: need coarse_sep > fine_sep > noise > 0");
  }
  if (dim < 2 || m_coarse == 0 || fine_per_coarse == 0 || n_per_fine == 0) {
    throw BadConfig("gen_hierarchical_gaussian: bad sizes");
  }
  const std::size_t n_train_per_fine =
      static_cast<std::size_t>(train_fraction * static_cast<double>(n_per_fine) + 0.5);
  if (n_train_per_fine == 0 || n_train_per_fine >= n_per_fine) {
    throw BadConfig("gen_hierarchical_gaussian: train_fraction leaves an empty split");
  }
  const std::size_t m_fine = m_coarse * fine_per_coarse;

  Rng rng(seed);
  // sigma chosen so expected pairwise center distance is ~coarse_sep
  const double sigma_c = coarse_sep / std::sqrt(2.0 * static_cast<double>(dim));
  Matrix coarse_centers(m_coarse, dim);
  for (double& v : coarse_centers.data) v = sigma_c * rng.normal();

  const double sigma_f = fine_sep / std::sqrt(static_cast<double>(dim));
  Matrix fine_centers(m_fine, dim);
  for (std::size_t f = 0; f < m_fine; ++f) {
    const double* cc = coarse_centers.row(f / fine_per_coarse);
    double* fc = fine_centers.row(f);
    for (std::size_t j = 0; j < dim; ++j) fc[j] = cc[j] + sigma_f * rng.normal();
  }

  Dataset train, test;
  const std::size_t n_test_per_fine = n_per_fine - n_train_per_fine;
  train.vectors = Matrix(m_fine * n_train_per_fine, dim);
  test.vectors = Matrix(m_fine * n_test_per_fine, dim);
  std::size_t ti = 0, si = 0;
  for (std::size_t f = 0; f < m_fine; ++f) {
    const double* fc = fine_centers.row(f);
    const int coarse = static_cast<int>(f / fine_per_coarse);
    for (std::size_t s = 0; s < n_per_fine; ++s) {
      const bool to_train = s < n_train_per_fine;
      double* row = to_train ? train.vectors.row(ti) : test.vectors.row(si);
      for (std::size_t j = 0; j < dim; ++j) row[j] = fc[j] + noise * rng.normal();
      if (to_train) {
        train.coarse_labels.push_back(coarse);
        train.fine_labels.push_back(static_cast<int>(f));
        ++ti;
      } else {
        test.coarse_labels.push_back(coarse);
        test.fine_labels.push_back(static_cast<int>(f));
        ++si;
      }
    }
  }
  train.split = Split::Train;
  test.split = Split::Test;
  train.meta = {train.vectors.rows, dim, m_coarse, m_fine, "synthetic"};
  test.meta = {test.vectors.rows, dim, m_coarse, m_fine, "synthetic"};
  return {std::move(train), std::move(test)};
}

void save_vds(const std::string& path, const Dataset& ds) {
  std::string out;
  out.reserve(24 + ds.vectors.size() * 8 + ds.meta.n * 8);
  out += "VDS1";
  append_u32(out, 1);
  append_u32(out, static_cast<std::uint32_t>(ds.meta.n));
  append_u32(out, static_cast<std::uint32_t>(ds.meta.input_dim));
  append_u32(out, static_cast<std::uint32_t>(ds.meta.m_coarse));
  append_u32(out, static_cast<std::uint32_t>(ds.meta.m_fine));
  for (double v : ds.vectors.data) append_f64(out, v);
  for (int v : ds.coarse_labels) append_u32(out, static_cast<std::uint32_t>(v));
  for (int v : ds.fine_labels) append_u32(out, static_cast<std::uint32_t>(v));
  write_file(path, out);
}

Dataset load_vds(const std::string& path, Split split) {
  const std::string bytes = read_file(path);
  ByteReader r(bytes, path);
  r.magic("VDS1");
  const std::uint32_t version = r.u32();
  if (version != 1) {
    throw MalformedRecord(path + ": unsupported version " +
                          std::to_string(version));
  }
  Dataset ds;
  const std::uint32_t n = r.u32();
  const std::uint32_t dim = r.u32();
  const std::uint32_t m = r.u32();
  const std::uint32_t mf = r.u32();
  ds.vectors = Matrix(n, dim);
  for (double& v : ds.vectors.data) v = r.f64();
  ds.coarse_labels.resize(n);
  ds.fine_labels.resize(n);
  for (int& v : ds.coarse_labels) v = static_cast<int>(r.u32());
  for (int& v : ds.fine_labels) v = static_cast<int>(r.u32());
  if (!r.done()) throw MalformedRecord(path + ": trailing bytes");
  for (std::size_t i = 0; i < n; ++i) {
    if (ds.coarse_labels[i] < 0 || ds.coarse_labels[i] >= static_cast<int>(m) ||
        ds.fine_labels[i] < 0 || ds.fine_labels[i] >= static_cast<int>(mf)) {
      throw MalformedRecord(path + ": label out of range at row " +
                            std::to_string(i));
    }
  }
  check_hierarchy(ds.coarse_labels, ds.fine_labels);
  ds.split = split;
  ds.meta = {n, dim, m, mf, "vds"};
  return ds;
}

std::vector<std::pair<int, int>> load_coarse_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::pair<int, int>> entries;
  std::map<int, int> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) {
      line.resize(hash);
    }
    std::istringstream ss(line);
    long fine, coarse;
    if (!(ss >> fine)) continue;  // blank line
    std::string rest;
    if (!(ss >> coarse) || (ss >> rest)) {
      throw MalformedRecord(path + ":" + std::to_string(lineno) +
                            ": expected 'fine<TAB>coarse'");
    }
    auto [it, inserted] = seen.emplace(static_cast<int>(fine),
                                       static_cast<int>(coarse));
    if (!inserted) {
      throw MalformedRecord(path + ":" + std::to_string(lineno) +
                            ": duplicate fine id " + std::to_string(fine));
    }
    entries.emplace_back(static_cast<int>(fine), static_cast<int>(coarse));
  }
  return entries;
}

Dataset load_cifar_binary(const std::string& path, const std::string& map_path,
                          Split split) {
  return load_cifar_impl(path, map_path, split, nullptr, nullptr);
}

std::pair<Dataset, Dataset> load_cifar_pair(const std::string& train_path,
                                            const std::string& test_path,
                                            const std::string& map_path) {
  ChannelStats stats;
  Dataset train =
      load_cifar_impl(train_path, map_path, Split::Train, nullptr, &stats);
  Dataset test =
      load_cifar_impl(test_path, map_path, Split::Test, &stats, nullptr);
  return {std::move(train), std::move(test)};
}

std::pair<std::vector<double>, std::vector<double>> augment(
    std::vector<double> vec, const AugmentPolicy& policy, Rng& rng) {
  auto one_view = [&rng, &vec](double jitter, double sigma, double mask) {
    std::vector<double> v = vec;
    const double scale = 1.0 + rng.uniform(-jitter, jitter);
    for (double& x : v) x *= scale;
    for (double& x : v) x += sigma * rng.normal();
    mask = std::min(mask, 1.0 - 1e-12);
    for (double& x : v) {
      if (rng.uniform() < mask) x = 0.0;
    }
    return v;
  };
  const double k = policy.strong ? 2.0 : 1.0;
  std::vector<double> query = one_view(k * policy.scale_jitter,
                                       k * policy.noise_sigma,
                                       k * policy.mask_frac);
  std::vector<double> key = one_view(policy.scale_jitter, policy.noise_sigma,
                                     policy.mask_frac);
  return {std::move(query), std::move(key)};
}

std::vector<Batch> batches(const Dataset& ds, std::size_t batch_size,
                           const AugmentPolicy& policy, std::uint64_t seed) {
  if (batch_size == 0) throw BadConfig("batches: batch_size must be >= 1");
  const std::size_t n = ds.meta.n;
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  rng.shuffle(perm);

  std::vector<Batch> out;
  out.reserve((n + batch_size - 1) / batch_size);
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t b = std::min(batch_size, n - start);
    Batch batch;
    batch.query_views = Matrix(b, ds.meta.input_dim);
    batch.key_views = Matrix(b, ds.meta.input_dim);
    for (std::size_t i = 0; i < b; ++i) {
      const std::size_t src = perm[start + i];
      std::vector<double> x(ds.vectors.row(src),
                            ds.vectors.row(src) + ds.meta.input_dim);
      auto [q, kview] = augment(std::move(x), policy, rng);
      std::copy(q.begin(), q.end(), batch.query_views.row(i));
      std::copy(kview.begin(), kview.end(), batch.key_views.row(i));
      batch.coarse_labels.push_back(ds.coarse_labels[src]);
      batch.fine_labels.push_back(ds.fine_labels[src]);
      batch.ids.push_back(static_cast<std::int64_t>(src));
    }
    out.push_back(std::move(batch));
  }
  return out;
}

}  // namespace maskcon
