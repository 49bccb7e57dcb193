#pragma once

// Fixed-capacity FIFO of past projected features. When batches are small the
// assignment problem is enlarged with queued features; only the codes of the
// current batch rows feed the loss.

#include <cstddef>
#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "swav/errors.hpp"
#include "swav/matrix.hpp"

namespace swav {

class FeatureQueue {
 public:
  FeatureQueue() = default;
  FeatureQueue(std::size_t capacity, std::size_t start_epoch)
      : capacity_(capacity), start_epoch_(start_epoch) {}

  std::size_t capacity() const { return capacity_; }
  std::size_t start_epoch() const { return start_epoch_; }
  std::size_t size() const { return rows_.size(); }
  std::size_t dim() const { return dim_; }

  bool enabled(std::size_t epoch) const { return epoch >= start_epoch_; }

  // Current batch rows first, then queued features newest-to-oldest. The
  // second element is the number of batch rows; codes computed on the
  // augmented matrix are sliced to that many rows.
  std::pair<Mat, std::size_t> assemble(const Mat& z_batch) const {
    if (!rows_.empty() && z_batch.cols != dim_) {
      throw ShapeError("FeatureQueue::assemble: batch dim " +
                       std::to_string(z_batch.cols) + " vs queued dim " +
                       std::to_string(dim_));
    }
    Mat aug(z_batch.rows + rows_.size(), z_batch.cols);
    std::copy(z_batch.data.begin(), z_batch.data.end(), aug.data.begin());
    std::size_t r = z_batch.rows;
    for (auto it = rows_.rbegin(); it != rows_.rend(); ++it, ++r) {
      aug.set_row(r, *it);
    }
    return {std::move(aug), z_batch.rows};
  }

  // Rows are inserted in order; the oldest rows fall out once capacity is
  // exceeded.
  void push_batch(const Mat& z_batch) {
    if (z_batch.rows == 0) return;
    if (rows_.empty()) {
      dim_ = z_batch.cols;
    } else if (z_batch.cols != dim_) {
      throw ShapeError("FeatureQueue::push_batch: batch dim " +
                       std::to_string(z_batch.cols) + " vs queued dim " +
                       std::to_string(dim_));
    }
    for (std::size_t i = 0; i < z_batch.rows; ++i) rows_.push_back(z_batch.row(i));
    while (rows_.size() > capacity_) rows_.pop_front();
  }

  // Oldest-to-newest contents, one row each; used for checkpoints.
  Mat contents() const {
    Mat m(rows_.size(), dim_);
    for (std::size_t i = 0; i < rows_.size(); ++i) m.set_row(i, rows_[i]);
    return m;
  }

  void restore(const Mat& contents) {
    rows_.clear();
    if (contents.rows > 0) dim_ = contents.cols;
    for (std::size_t i = 0; i < contents.rows; ++i)
      rows_.push_back(contents.row(i));
    while (rows_.size() > capacity_) rows_.pop_front();
  }

 private:
  std::size_t capacity_ = 3840;
  std::size_t start_epoch_ = 15;
  std::size_t dim_ = 0;
  std::deque<std::vector<double>> rows_;
};

}  // namespace swav
