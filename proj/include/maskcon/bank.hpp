#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "maskcon/matrix.hpp"

namespace maskcon {

// Oldest-first copy of the bank contents. Labels and ids align with rows.
struct BankSnapshot {
  Matrix projections;
  std::vector<int> labels;
  std::vector<std::int64_t> ids;

  std::size_t size() const { return projections.rows; }
};

// Fixed-capacity FIFO ring of L2-normalized key projections with their
// coarse labels and dataset ids. Ids let relation builders exclude bank
// entries that came from the query's own sample.
class MemoryBank {
 public:
  MemoryBank(std::size_t capacity, std::size_t dim);

  // Appends rows; when full, evicts oldest first. Rows must be unit-norm
  // within 1e-9 (NotNormalized otherwise).
  void push(const Matrix& projections, std::span<const int> labels,
            std::span<const std::int64_t> ids);

  BankSnapshot snapshot() const;

  std::size_t capacity() const { return capacity_; }
  std::size_t dim() const { return dim_; }
  std::size_t fill() const { return fill_; }

 private:
  std::size_t capacity_;
  std::size_t dim_;
  std::size_t fill_ = 0;
  std::size_t head_ = 0;  // next write slot
  Matrix store_;
  std::vector<int> labels_;
  std::vector<std::int64_t> ids_;
};

}  // namespace maskcon
