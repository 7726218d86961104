#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ocdl {

struct Extent {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const noexcept { return rows * cols; }
  friend bool operator==(const Extent&, const Extent&) = default;
};

std::string to_string(Extent e);

// Dense row-major 2-D array of doubles. Used for images, kernels,
// coefficient maps and cross-kernels alike.
class Image {
 public:
  Image() = default;
  explicit Image(Extent extent, double fill = 0.0) : extent_(extent), data_(extent.size(), fill) {}
  Image(std::size_t rows, std::size_t cols, double fill = 0.0) : Image(Extent{rows, cols}, fill) {}
  Image(Extent extent, std::vector<double> values);

  Extent extent() const noexcept { return extent_; }
  std::size_t rows() const noexcept { return extent_.rows; }
  std::size_t cols() const noexcept { return extent_.cols; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) {
    assert(r < extent_.rows && c < extent_.cols);
    return data_[r * extent_.cols + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    assert(r < extent_.rows && c < extent_.cols);
    return data_[r * extent_.cols + c];
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  void fill(double v);

  Image& operator+=(const Image& o);
  Image& operator-=(const Image& o);
  Image& operator*=(double s);

  friend bool operator==(const Image&, const Image&) = default;

 private:
  Extent extent_;
  std::vector<double> data_;
};

Image operator+(Image a, const Image& b);
Image operator-(Image a, const Image& b);
Image operator*(double s, Image a);

double dot(const Image& a, const Image& b);
double squared_norm(const Image& a);
double norm(const Image& a);
double max_abs_diff(const Image& a, const Image& b);
bool all_finite(const Image& a);

// a += s * b
void axpy(double s, const Image& b, Image& a);

// 180-degree rotation (flip along both axes).
Image flipped(const Image& a);

Image crop(const Image& a, std::size_t top, std::size_t left, Extent extent);

// Dense row-major N-D tensor used only at the I/O boundary.
struct Tensor {
  std::vector<std::size_t> dims;
  std::vector<double> values;

  std::size_t element_count() const noexcept;
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

}  // namespace ocdl
