#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "maskcon/bank.hpp"
#include "maskcon/matrix.hpp"

namespace maskcon {

// Relation temperature: a positive finite value or the symbolic limits.
// ZERO is the nearest-neighbor (argmax) limit, INFINITY the uniform one.
class Temperature {
 public:
  enum class Kind { Zero, Finite, Infinity };

  static Temperature zero() { return Temperature(Kind::Zero, 0.0); }
  static Temperature infinity() { return Temperature(Kind::Infinity, 0.0); }
  static Temperature finite(double v);
  // Accepts "0", "inf" (also "Inf"/"INF") or a positive decimal literal.
  static Temperature parse(const std::string& text);

  Kind kind() const { return kind_; }
  bool is_zero() const { return kind_ == Kind::Zero; }
  bool is_infinity() const { return kind_ == Kind::Infinity; }
  double value() const;  // Finite only
  std::string str() const;

  bool operator==(const Temperature& o) const {
    return kind_ == o.kind_ && (kind_ != Kind::Finite || value_ == o.value_);
  }

 private:
  Temperature(Kind k, double v) : kind_(k), value_(v) {}
  Kind kind_;
  double value_;
};

enum class RelationKind { Self, Sup, Mask };

// Target rows over {key-view self} + {bank snapshot}. Column 0 is the self
// slot and is always 1; columns 1..fill align with the snapshot.
struct RelationRows {
  Matrix rows;
  RelationKind kind = RelationKind::Self;
  Temperature tau = Temperature::infinity();
  // Mask kind only: per row, how many bank entries passed the mask.
  std::vector<std::size_t> unmasked_count;

  std::size_t batch_size() const { return rows.rows; }
  std::size_t fill() const { return rows.cols - 1; }
};

// Each row is the one-hot [1, 0, ..., 0]: instance discrimination.
RelationRows relations_self(std::size_t batch_size, std::size_t fill);

// Row i is 1 at the self slot and at every bank column sharing the query's
// coarse label, 0 elsewhere. Row normalization happens in the loss.
RelationRows relations_sup(std::span<const int> batch_labels,
                           std::span<const int> bank_labels);

// Masked softmax relations. Per row: cosine similarities of the KEY
// projection against the bank, temperature softmax restricted to bank
// entries with the query's coarse label, rescaled so the best unmasked
// entry equals 1, self slot set to 1. Bank entries whose id equals the
// query's id are excluded from the mask (pass empty batch_ids to disable).
// tau=INFINITY gives 1 on every unmasked entry; tau=ZERO gives a one-hot at
// the most similar unmasked entry, ties broken by lowest bank index. Rows
// with no unmasked entry fall back to the self one-hot.
RelationRows relations_mask(const Matrix& key_projections,
                            const BankSnapshot& bank,
                            std::span<const int> batch_labels,
                            std::span<const std::int64_t> batch_ids,
                            Temperature tau);

// Mean row-wise Euclidean distance after normalizing both operands' rows to
// sum 1.
double dz(const RelationRows& z, const RelationRows& z_ref);
double dz_rows(const Matrix& z, const Matrix& z_ref);

}  // namespace maskcon
