#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "cgpnas/catalog.hpp"

namespace cgpnas {

// Dense rank-4 array in batch-major NHWC layout: index (b, m, n, c) maps
// to ((b*rows + m)*cols + n)*channels + c, so channels are contiguous.
template <typename S>
class Tensor4 {
 public:
  Tensor4() = default;
  Tensor4(int batch, int rows, int cols, int channels)
      : batch_(batch), rows_(rows), cols_(cols), channels_(channels),
        data_(static_cast<std::size_t>(batch) * rows * cols * channels, S(0)) {}

  Tensor4(int batch, const TensorShape& s) : Tensor4(batch, s.rows, s.cols, s.channels) {}

  int batch() const { return batch_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int channels() const { return channels_; }
  TensorShape shape3() const { return {rows_, cols_, channels_}; }

  std::size_t size() const { return data_.size(); }
  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }

  std::size_t index(int b, int m, int n, int c) const {
    return ((static_cast<std::size_t>(b) * rows_ + m) * cols_ + n) * channels_ + c;
  }
  S& at(int b, int m, int n, int c) { return data_[index(b, m, n, c)]; }
  const S& at(int b, int m, int n, int c) const { return data_[index(b, m, n, c)]; }

  bool same_dims(const Tensor4& o) const {
    return batch_ == o.batch_ && rows_ == o.rows_ && cols_ == o.cols_ &&
           channels_ == o.channels_;
  }

  void fill(S v) { data_.assign(data_.size(), v); }

  bool all_finite() const {
    for (S v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

 private:
  int batch_ = 0, rows_ = 0, cols_ = 0, channels_ = 0;
  std::vector<S> data_;
};

}  // namespace cgpnas
