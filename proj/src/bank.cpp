#include "maskcon/bank.hpp"

#include <cmath>
#include <cstring>

#include "maskcon/errors.hpp"

namespace maskcon {

MemoryBank::MemoryBank(std::size_t capacity, std::size_t dim)
    : capacity_(capacity),
      dim_(dim),
      store_(capacity, dim),
      labels_(capacity, 0),
      ids_(capacity, -1) {
  if (capacity == 0 || dim == 0) {
    throw ShapeMismatch("MemoryBank: capacity and dim must be positive");
  }
}

void MemoryBank::push(const Matrix& projections, std::span<const int> labels,
                      std::span<const std::int64_t> ids) {
  if (projections.cols != dim_ || projections.rows != labels.size() ||
      projections.rows != ids.size()) {
    throw ShapeMismatch("MemoryBank::push: row/label/id mismatch");
  }
  for (std::size_t i = 0; i < projections.rows; ++i) {
    const double n = row_norm(projections, i);
    if (std::fabs(n - 1.0) > 1e-9) {
      throw NotNormalized("MemoryBank::push: row " + std::to_string(i) +
                          " norm " + std::to_string(n));
    }
  }
  for (std::size_t i = 0; i < projections.rows; ++i) {
    std::memcpy(store_.row(head_), projections.row(i), dim_ * sizeof(double));
    labels_[head_] = labels[i];
    ids_[head_] = ids[i];
    head_ = (head_ + 1) % capacity_;
    if (fill_ < capacity_) ++fill_;
  }
}

BankSnapshot MemoryBank::snapshot() const {
  BankSnapshot snap;
  snap.projections = Matrix(fill_, dim_);
  snap.labels.resize(fill_);
  snap.ids.resize(fill_);
  const std::size_t start = (head_ + capacity_ - fill_) % capacity_;
  for (std::size_t i = 0; i < fill_; ++i) {
    const std::size_t src = (start + i) % capacity_;
    std::memcpy(snap.projections.row(i), store_.row(src),
                dim_ * sizeof(double));
    snap.labels[i] = labels_[src];
    snap.ids[i] = ids_[src];
  }
  return snap;
}

}  // namespace maskcon
