#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ocdl/image.hpp"

namespace ocdl {

// L registered single-channel images sharing one extent.
class ImageStack {
 public:
  ImageStack() = default;
  explicit ImageStack(std::vector<Image> modalities, std::vector<std::string> names = {});
  ImageStack(std::size_t modalities, Extent extent);

  std::size_t modalities() const noexcept { return images_.size(); }
  Extent extent() const noexcept { return images_.empty() ? Extent{} : images_.front().extent(); }

  Image& operator[](std::size_t l) { return images_[l]; }
  const Image& operator[](std::size_t l) const { return images_[l]; }
  const std::vector<std::string>& names() const noexcept { return names_; }

  auto begin() noexcept { return images_.begin(); }
  auto end() noexcept { return images_.end(); }
  auto begin() const noexcept { return images_.begin(); }
  auto end() const noexcept { return images_.end(); }

  friend bool operator==(const ImageStack&, const ImageStack&) = default;

 private:
  std::vector<Image> images_;
  std::vector<std::string> names_;
};

ImageStack operator+(const ImageStack& a, const ImageStack& b);
ImageStack operator-(const ImageStack& a, const ImageStack& b);

// Per-modality measurement operator: identity or a binary diagonal mask.
class SensingOp {
 public:
  enum class Kind { Identity, DiagonalMask };

  static SensingOp identity(Extent extent) { return SensingOp(Kind::Identity, extent, Image{}); }
  // Throws InvalidMask when an entry is not exactly 0 or 1.
  static SensingOp mask(Image phi);

  Kind kind() const noexcept { return kind_; }
  Extent extent() const noexcept { return extent_; }
  // Mask as an image; all ones for Identity.
  Image mask_image() const;

  // H is diagonal, hence self-adjoint: apply == apply_adjoint.
  Image apply(const Image& x) const;
  Image apply_adjoint(const Image& y) const { return apply(y); }

  SensingOp cropped(std::size_t top, std::size_t left, Extent extent) const;

  friend bool operator==(const SensingOp&, const SensingOp&) = default;

 private:
  SensingOp(Kind kind, Extent extent, Image mask) : kind_(kind), extent_(extent), mask_(std::move(mask)) {}

  Kind kind_ = Kind::Identity;
  Extent extent_;
  Image mask_;
};

// y_l on the image grid; unobserved entries hold 0.
using Measurements = ImageStack;
using SensingOps = std::vector<SensingOp>;

// L x K images of a common extent. Base of Dictionary and CoeffMaps.
class ImageBank {
 public:
  ImageBank() = default;
  ImageBank(std::size_t modalities, std::size_t atoms, Extent extent);

  std::size_t modalities() const noexcept { return slices_.size(); }
  std::size_t atoms() const noexcept { return slices_.empty() ? 0 : slices_.front().size(); }
  Extent extent() const noexcept { return extent_; }

  Image& at(std::size_t l, std::size_t k) { return slices_[l][k]; }
  const Image& at(std::size_t l, std::size_t k) const { return slices_[l][k]; }

  // The K images of one modality.
  std::vector<Image>& slice(std::size_t l) { return slices_[l]; }
  const std::vector<Image>& slice(std::size_t l) const { return slices_[l]; }

  friend bool operator==(const ImageBank&, const ImageBank&) = default;

 protected:
  Extent extent_;
  std::vector<std::vector<Image>> slices_;
};

double dot(const ImageBank& a, const ImageBank& b);
double squared_norm(const ImageBank& a);
bool all_finite(const ImageBank& a);

// Convolutional dictionary: kernels d_lk of extent p1 x p2.
class Dictionary : public ImageBank {
 public:
  using ImageBank::ImageBank;
  Extent kernel_extent() const noexcept { return extent_; }
};

// Coefficient maps alpha_lk. For images n and kernels p the maps have
// extent n - p + 1, so that the full convolution d * alpha is n-sized.
class CoeffMaps : public ImageBank {
 public:
  using ImageBank::ImageBank;
  static CoeffMaps zeros_for(std::size_t modalities, std::size_t atoms, Extent image, Extent kernel);
};

Extent map_extent(Extent image, Extent kernel);

struct SolverParams {
  double rho = 1.0;
  double lambda = 0.01;
  double tau = 0.01;
  int max_outer_iters = 250;
  double rel_tol = 1e-5;
  int tv_inner_iters = 20;
  double backtrack_eta = 2.0;
  // Lower bound on the Lipschitz estimate of the smooth part.
  double L0 = 1.0;

  void validate() const;
  friend bool operator==(const SolverParams&, const SolverParams&) = default;
};

// Throws DimensionMismatch, InvalidMask or KernelNormViolation.
void validate_problem(std::size_t modalities, Extent image, const SensingOps& ops, const Dictionary& dict);

inline constexpr double kKernelNormSlack = 1e-9;

}  // namespace ocdl
