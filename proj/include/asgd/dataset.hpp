#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace asgd {

/// Sparse vector with strictly increasing indices.  Explicit zeros are allowed.
class SparseVec {
 public:
  struct Entry {
    std::uint32_t index;
    double value;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  SparseVec() = default;

  SparseVec(std::size_t dim, std::vector<Entry> entries) : dim_(dim), entries_(std::move(entries)) {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].index >= dim_)
        throw std::invalid_argument("SparseVec: index " + std::to_string(entries_[i].index) +
                                    " out of range for dim " + std::to_string(dim_));
      if (i > 0 && entries_[i].index <= entries_[i - 1].index)
        throw std::invalid_argument("SparseVec: indices must be strictly increasing");
    }
  }

  static SparseVec from_dense(std::span<const double> dense) {
    std::vector<Entry> e;
    for (std::size_t j = 0; j < dense.size(); ++j)
      if (dense[j] != 0.0) e.push_back({static_cast<std::uint32_t>(j), dense[j]});
    return SparseVec(dense.size(), std::move(e));
  }

  std::size_t dim() const { return dim_; }
  std::size_t nnz() const { return entries_.size(); }
  std::span<const Entry> entries() const { return entries_; }

  double dot(std::span<const double> x) const {
    double s = 0.0;
    for (const auto& e : entries_) s += e.value * x[e.index];
    return s;
  }

  double squared_norm() const {
    double s = 0.0;
    for (const auto& e : entries_) s += e.value * e.value;
    return s;
  }

  friend bool operator==(const SparseVec&, const SparseVec&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<Entry> entries_;
};

enum class Task { Regression, Binary };

struct Row {
  SparseVec features;
  double label = 0.0;
  friend bool operator==(const Row&, const Row&) = default;
};

/// Immutable collection of labelled rows sharing one dimension.
class Dataset {
 public:
  Dataset(std::size_t dim, std::vector<Row> rows, Task task) : dim_(dim), rows_(std::move(rows)), task_(task) {
    if (dim_ == 0) throw std::invalid_argument("Dataset: dim must be positive");
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      if (rows_[i].features.dim() != dim_)
        throw std::invalid_argument("Dataset: row " + std::to_string(i) + " has dim " +
                                    std::to_string(rows_[i].features.dim()) + ", expected " +
                                    std::to_string(dim_));
      if (task_ == Task::Binary && rows_[i].label != 1.0 && rows_[i].label != -1.0)
        throw std::invalid_argument("Dataset: binary task requires labels in {-1,+1} (row " +
                                    std::to_string(i) + ")");
    }
  }

  std::size_t dim() const { return dim_; }
  std::size_t n_rows() const { return rows_.size(); }
  Task task() const { return task_; }
  const Row& row(std::size_t i) const { return rows_[i]; }
  std::span<const Row> rows() const { return rows_; }

  std::size_t nnz() const {
    std::size_t n = 0;
    for (const auto& r : rows_) n += r.features.nnz();
    return n;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::size_t dim_;
  std::vector<Row> rows_;
  Task task_;
};

}  // namespace asgd
