#include "maskcon/relations.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "maskcon/errors.hpp"
#include "maskcon/numerics.hpp"

namespace maskcon {

Temperature Temperature::finite(double v) {
  if (!std::isfinite(v) || v <= 0.0) {
    throw NonPositiveTemperature("Temperature::finite: " + std::to_string(v));
  }
  return Temperature(Kind::Finite, v);
}

Temperature Temperature::parse(const std::string& text) {
  std::size_t a = 0, b = text.size();
  while (a < b && std::isspace(static_cast<unsigned char>(text[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(text[b - 1]))) --b;
  std::string t = text.substr(a, b - a);
  std::string lower = t;
  for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "inf") return infinity();
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size() || std::isnan(v)) {
    throw NonPositiveTemperature("Temperature::parse: bad value '" + text +
                                 "'");
  }
  if (v == 0.0) return zero();
  if (std::isinf(v)) {
    if (v < 0.0) {
      throw NonPositiveTemperature("Temperature::parse: negative infinity");
    }
    return infinity();
  }
  return finite(v);
}

double Temperature::value() const {
  if (kind_ != Kind::Finite) {
    throw NonPositiveTemperature("Temperature::value: symbolic temperature");
  }
  return value_;
}

std::string Temperature::str() const {
  switch (kind_) {
    case Kind::Zero:
      return "0";
    case Kind::Infinity:
      return "inf";
    case Kind::Finite: {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%g", value_);
      return buf;
    }
  }
  return "?";
}

RelationRows relations_self(std::size_t batch_size, std::size_t fill) {
  RelationRows z;
  z.kind = RelationKind::Self;
  z.rows = Matrix(batch_size, 1 + fill);
  for (std::size_t i = 0; i < batch_size; ++i) z.rows(i, 0) = 1.0;
  return z;
}

RelationRows relations_sup(std::span<const int> batch_labels,
                           std::span<const int> bank_labels) {
  RelationRows z;
  z.kind = RelationKind::Sup;
  z.rows = Matrix(batch_labels.size(), 1 + bank_labels.size());
  for (std::size_t i = 0; i < batch_labels.size(); ++i) {
    double* r = z.rows.row(i);
    r[0] = 1.0;
    for (std::size_t j = 0; j < bank_labels.size(); ++j) {
      if (bank_labels[j] == batch_labels[i]) r[j + 1] = 1.0;
    }
  }
  return z;
}

RelationRows relations_mask(const Matrix& key_projections,
                            const BankSnapshot& bank,
                            std::span<const int> batch_labels,
                            std::span<const std::int64_t> batch_ids,
                            Temperature tau) {
  const std::size_t B = key_projections.rows;
  const std::size_t fill = bank.size();
  if (batch_labels.size() != B ||
      (!batch_ids.empty() && batch_ids.size() != B)) {
    throw ShapeMismatch("relations_mask: label/id count mismatch");
  }
  RelationRows z;
  z.kind = RelationKind::Mask;
  z.tau = tau;
  z.rows = Matrix(B, 1 + fill);
  z.unmasked_count.assign(B, 0);

  Matrix sims;
  if (fill > 0) {
    sims = cosine_similarity_matrix(key_projections, bank.projections);
    if (!all_finite(sims)) {
      throw NonFiniteSimilarity("relations_mask: non-finite cosine");
    }
  }

  std::vector<std::size_t> unmasked;
  for (std::size_t i = 0; i < B; ++i) {
    unmasked.clear();
    for (std::size_t j = 0; j < fill; ++j) {
      if (bank.labels[j] != batch_labels[i]) continue;
      if (!batch_ids.empty() && bank.ids[j] == batch_ids[i]) continue;
      unmasked.push_back(j);
    }
    double* r = z.rows.row(i);
    r[0] = 1.0;
    z.unmasked_count[i] = unmasked.size();
    if (unmasked.empty()) continue;  // self one-hot fallback

    const double* d = sims.row(i);
    switch (tau.kind()) {
      case Temperature::Kind::Infinity:
        for (std::size_t j : unmasked) r[j + 1] = 1.0;
        break;
      case Temperature::Kind::Zero: {
        std::size_t best = unmasked[0];
        for (std::size_t j : unmasked) {
          if (d[j] > d[best]) best = j;  // ties keep the lowest index
        }
        r[best + 1] = 1.0;
        break;
      }
      case Temperature::Kind::Finite: {
        double dmax = d[unmasked[0]];
        for (std::size_t j : unmasked) dmax = std::max(dmax, d[j]);
        // softmax followed by division by the row max cancels the
        // normalizer, leaving exp((d - dmax)/tau) directly
        for (std::size_t j : unmasked) {
          r[j + 1] = std::exp((d[j] - dmax) / tau.value());
        }
        break;
      }
    }
  }
  return z;
}

double dz_rows(const Matrix& z, const Matrix& z_ref) {
  if (!z.same_shape(z_ref)) throw ShapeMismatch("dz: shape mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < z.rows; ++i) {
    const double* a = z.row(i);
    const double* b = z_ref.row(i);
    double sa = 0.0, sb = 0.0;
    for (std::size_t j = 0; j < z.cols; ++j) {
      sa += a[j];
      sb += b[j];
    }
    if (sa <= 0.0 || sb <= 0.0) {
      throw ZeroNormRow("dz: row " + std::to_string(i) + " sums to zero");
    }
    double sq = 0.0;
    for (std::size_t j = 0; j < z.cols; ++j) {
      const double diff = a[j] / sa - b[j] / sb;
      sq += diff * diff;
    }
    total += std::sqrt(sq);
  }
  return z.rows == 0 ? 0.0 : total / static_cast<double>(z.rows);
}

double dz(const RelationRows& z, const RelationRows& z_ref) {
  return dz_rows(z.rows, z_ref.rows);
}

}  // namespace maskcon
