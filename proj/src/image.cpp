#include "ocdl/image.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

#include "ocdl/error.hpp"

namespace ocdl {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidMask: return "InvalidMask";
    case ErrorCode::KernelNormViolation: return "KernelNormViolation";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonFiniteCost: return "NonFiniteCost";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::EmptyMemory: return "EmptyMemory";
    case ErrorCode::AllMasked: return "AllMasked";
    case ErrorCode::PatchTooLarge: return "PatchTooLarge";
    case ErrorCode::EmptySource: return "EmptySource";
    case ErrorCode::NoMissingPixels: return "NoMissingPixels";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

std::string to_string(Extent e) { return std::to_string(e.rows) + "x" + std::to_string(e.cols); }

Image::Image(Extent extent, std::vector<double> values) : extent_(extent), data_(std::move(values)) {
  require(data_.size() == extent.size(), ErrorCode::DimensionMismatch,
          "image " + to_string(extent) + " given " + std::to_string(data_.size()) + " values");
}

void Image::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Image& Image::operator+=(const Image& o) {
  assert(extent_ == o.extent_);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Image& Image::operator-=(const Image& o) {
  assert(extent_ == o.extent_);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

Image& Image::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Image operator+(Image a, const Image& b) { return a += b; }
Image operator-(Image a, const Image& b) { return a -= b; }
Image operator*(double s, Image a) { return a *= s; }

double dot(const Image& a, const Image& b) {
  assert(a.extent() == b.extent());
  return std::inner_product(a.data(), a.data() + a.size(), b.data(), 0.0);
}

double squared_norm(const Image& a) { return dot(a, a); }
double norm(const Image& a) { return std::sqrt(squared_norm(a)); }

double max_abs_diff(const Image& a, const Image& b) {
  assert(a.extent() == b.extent());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

bool all_finite(const Image& a) {
  return std::all_of(a.values().begin(), a.values().end(), [](double v) { return std::isfinite(v); });
}

void axpy(double s, const Image& b, Image& a) {
  assert(a.extent() == b.extent());
  double* out = a.data();
  const double* in = b.data();
  for (std::size_t i = 0; i < a.size(); ++i) out[i] += s * in[i];
}

Image flipped(const Image& a) {
  Image out(a.extent());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.data()[n - 1 - i] = a.data()[i];
  return out;
}

Image crop(const Image& a, std::size_t top, std::size_t left, Extent extent) {
  require(top + extent.rows <= a.rows() && left + extent.cols <= a.cols(), ErrorCode::DimensionMismatch,
          "crop " + to_string(extent) + " at (" + std::to_string(top) + "," + std::to_string(left) +
              ") exceeds " + to_string(a.extent()));
  Image out(extent);
  for (std::size_t r = 0; r < extent.rows; ++r)
    std::copy_n(a.data() + (top + r) * a.cols() + left, extent.cols, out.data() + r * extent.cols);
  return out;
}

std::size_t Tensor::element_count() const noexcept {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace ocdl
