// Minimal dense row-major matrix; just storage plus row views.
#pragma once

#include <span>
#include <stdexcept>
#include <vector>

namespace prefopt {

template <typename T>
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Mat() = default;
  Mat(int r, int c, T fill = T{})
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {
    if (r < 0 || c < 0) throw std::invalid_argument("negative matrix shape");
  }

  T& operator()(int i, int j) {
    return data[static_cast<std::size_t>(i) * cols + j];
  }
  const T& operator()(int i, int j) const {
    return data[static_cast<std::size_t>(i) * cols + j];
  }

  std::span<T> row(int i) {
    return {data.data() + static_cast<std::size_t>(i) * cols,
            static_cast<std::size_t>(cols)};
  }
  std::span<const T> row(int i) const {
    return {data.data() + static_cast<std::size_t>(i) * cols,
            static_cast<std::size_t>(cols)};
  }

  bool same_shape(const Mat& other) const {
    return rows == other.rows && cols == other.cols;
  }

  void fill(T value) { data.assign(data.size(), value); }

  friend bool operator==(const Mat& a, const Mat& b) {
    return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
  }
};

}  // namespace prefopt
