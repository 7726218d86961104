#pragma once

// Convolution primitives for the convolutional synthesis model.
//
// Conventions (used everywhere in the library):
//   image x       : n1 x n2
//   kernel d      : p1 x p2, origin at index (0,0)
//   coefficient α : m1 x m2 with m = n - p + 1
//
//   synthesis     x(i) = sum_k sum_j d_k(j) α_k(i - j)        (full convolution)
//   map adjoint   g_k(u) = sum_j d_k(j) r(u + j)              (valid correlation)
//   A^T           G_k(j) = sum_u α_k(u) x(u + j)              (valid correlation)
//   cross kernel  c_kk'(δ) = sum_v α_k(v) α_k'(v + δ),  |δ| <= p - 1
//
// With these sizes A^T A is exactly the restricted convolution
//   (C d)_k(j) = sum_k' sum_j' c_kk'(j - j') d_k'(j'),
// so the memory matrix is fully described by K^2 kernels of extent 2p - 1.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "ocdl/image.hpp"

namespace ocdl::conv {

enum class Backend { Auto, Direct, Fourier };

// Images at least this large on both axes go through the FFT path under Auto.
inline constexpr std::size_t kFourierThreshold = 32;

Backend resolve(Backend requested, Extent image) noexcept;

// K x K kernels of extent (2p1 - 1) x (2p2 - 1) for one modality.
// kernel(k, k') is the spatial flip of kernel(k', k).
class CrossKernels {
 public:
  CrossKernels() = default;
  CrossKernels(std::size_t atoms, Extent kernel);

  std::size_t atoms() const noexcept { return atoms_; }
  Extent kernel_extent() const noexcept { return kernel_; }
  Extent lag_extent() const noexcept { return {2 * kernel_.rows - 1, 2 * kernel_.cols - 1}; }

  Image& at(std::size_t k, std::size_t kp) { return kernels_[k * atoms_ + kp]; }
  const Image& at(std::size_t k, std::size_t kp) const { return kernels_[k * atoms_ + kp]; }

  CrossKernels& operator*=(double s);
  // this += s * other
  void add_scaled(double s, const CrossKernels& other);

  friend bool operator==(const CrossKernels&, const CrossKernels&) = default;

 private:
  std::size_t atoms_ = 0;
  Extent kernel_;
  std::vector<Image> kernels_;
};

// Sum-of-convolutions operator for one modality with the kernels held fixed.
// Caches kernel spectra when the Fourier path is selected.
class SynthesisOperator {
 public:
  SynthesisOperator(std::span<const Image> kernels, Extent image, Backend backend = Backend::Auto);
  ~SynthesisOperator();
  SynthesisOperator(SynthesisOperator&&) noexcept;
  SynthesisOperator& operator=(SynthesisOperator&&) noexcept;

  Extent image_extent() const noexcept { return image_; }
  Extent map_extent() const noexcept { return maps_; }
  std::size_t atoms() const noexcept { return kernels_.size(); }

  Image forward(std::span<const Image> maps) const;
  std::vector<Image> adjoint(const Image& residual) const;

 private:
  struct Spectra;
  std::vector<Image> kernels_;
  Extent image_;
  Extent maps_;
  Backend backend_;
  std::unique_ptr<Spectra> spectra_;
};

// x = sum_k d_k * α_k (full convolution). Image extent is m + p - 1.
Image synthesize(std::span<const Image> kernels, std::span<const Image> maps, Backend backend = Backend::Auto);

// Adjoint of synthesize in the maps, kernels fixed.
std::vector<Image> synthesize_adjoint_maps(std::span<const Image> kernels, const Image& residual,
                                           Backend backend = Backend::Auto);

// Adjoint of d -> synthesize(d, maps), maps fixed. Kernel extent is n - m + 1.
std::vector<Image> apply_A_T(std::span<const Image> maps, const Image& image, Backend backend = Backend::Auto);

CrossKernels cross_kernels(std::span<const Image> maps, Extent kernel, Backend backend = Backend::Auto);

// (C d)_k for all k.
std::vector<Image> apply_cross(const CrossKernels& ck, std::span<const Image> d);
// (C d)_k for a single row k.
Image apply_cross_row(const CrossKernels& ck, std::size_t k, std::span<const Image> d);
// C_kk d_k, the diagonal block acting on one kernel.
Image apply_cross_block(const CrossKernels& ck, std::size_t k, std::size_t kp, const Image& d);

// --- spectral norm -------------------------------------------------------

using LinearMap = std::function<void(std::span<const double> in, std::span<double> out)>;

struct SpectralEstimate {
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct PowerIterationOptions {
  int max_iters = 500;
  double tol = 1e-9;
  unsigned long long seed = 0x0cd1u;
};

// Multiplier applied to power-iteration estimates before use as a Lipschitz constant.
inline constexpr double kLipschitzSafety = 1.01;

// Largest |eigenvalue| of a symmetric operator on R^dim.
SpectralEstimate spectral_norm(const LinearMap& op, std::size_t dim, const PowerIterationOptions& opts = {});

// Largest singular value of a general operator given with its adjoint.
SpectralEstimate spectral_norm(const LinearMap& op, const LinearMap& adjoint, std::size_t dim,
                               const PowerIterationOptions& opts = {});

}  // namespace ocdl::conv
