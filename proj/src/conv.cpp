#include "ocdl/conv.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <random>
#include <utility>

#include "ocdl/error.hpp"

namespace ocdl::conv {

namespace {

using Spectrum = std::vector<std::complex<double>>;

struct PlanPair {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

// FFTW planning is not thread-safe; execution with the new-array interface is.
class PlanCache {
 public:
  ~PlanCache() {
    for (auto& [key, p] : plans_) {
      fftw_destroy_plan(p.forward);
      fftw_destroy_plan(p.inverse);
    }
  }

  PlanPair get(Extent n) {
    std::lock_guard lock(mu_);
    auto key = std::make_pair(n.rows, n.cols);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    std::vector<double> real(n.size());
    Spectrum spec(n.rows * (n.cols / 2 + 1));
    auto* cplx = reinterpret_cast<fftw_complex*>(spec.data());
    const int r = static_cast<int>(n.rows);
    const int c = static_cast<int>(n.cols);
    // ESTIMATE keeps the chosen algorithm, and thus the bits, reproducible.
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    PlanPair p;
    p.forward = fftw_plan_dft_r2c_2d(r, c, real.data(), cplx, flags);
    p.inverse = fftw_plan_dft_c2r_2d(r, c, cplx, real.data(), flags);
    plans_.emplace(key, p);
    return p;
  }

 private:
  std::mutex mu_;
  std::map<std::pair<std::size_t, std::size_t>, PlanPair> plans_;
};

PlanCache& plan_cache() {
  static PlanCache cache;
  return cache;
}

std::size_t spectrum_size(Extent n) { return n.rows * (n.cols / 2 + 1); }

// Zero-pads src into the top-left corner of an n-sized grid and transforms.
Spectrum forward_fft(const Image& src, Extent n) {
  std::vector<double> buf(n.size(), 0.0);
  for (std::size_t r = 0; r < src.rows(); ++r)
    std::copy_n(src.data() + r * src.cols(), src.cols(), buf.data() + r * n.cols);
  Spectrum out(spectrum_size(n));
  fftw_execute_dft_r2c(plan_cache().get(n).forward, buf.data(), reinterpret_cast<fftw_complex*>(out.data()));
  return out;
}

// Inverse transform, normalized, returning the top-left `keep` window.
Image inverse_fft(Spectrum spec, Extent n, Extent keep) {
  std::vector<double> buf(n.size());
  fftw_execute_dft_c2r(plan_cache().get(n).inverse, reinterpret_cast<fftw_complex*>(spec.data()), buf.data());
  const double scale = 1.0 / static_cast<double>(n.size());
  Image out(keep);
  for (std::size_t r = 0; r < keep.rows; ++r)
    for (std::size_t c = 0; c < keep.cols; ++c) out(r, c) = buf[r * n.cols + c] * scale;
  return out;
}

std::vector<double> inverse_fft_full(Spectrum spec, Extent n) {
  std::vector<double> buf(n.size());
  fftw_execute_dft_c2r(plan_cache().get(n).inverse, reinterpret_cast<fftw_complex*>(spec.data()), buf.data());
  const double scale = 1.0 / static_cast<double>(n.size());
  for (double& v : buf) v *= scale;
  return buf;
}

void check_uniform(std::span<const Image> images, const char* what) {
  for (const Image& im : images)
    require(im.extent() == images.front().extent(), ErrorCode::DimensionMismatch,
            std::string(what) + " have differing extents: " + to_string(images.front().extent()) + " vs " +
                to_string(im.extent()));
}

Extent image_from(Extent maps, Extent kernel) {
  return {maps.rows + kernel.rows - 1, maps.cols + kernel.cols - 1};
}

Extent kernel_from(Extent image, Extent maps) {
  require(image.rows >= maps.rows && image.cols >= maps.cols, ErrorCode::DimensionMismatch,
          "image " + to_string(image) + " smaller than maps " + to_string(maps));
  return {image.rows - maps.rows + 1, image.cols - maps.cols + 1};
}

// --- direct kernels ------------------------------------------------------

void direct_synthesis_add(const Image& d, const Image& a, Image& x) {
  const std::size_t p1 = d.rows(), p2 = d.cols();
  const std::size_t n2 = x.cols();
  for (std::size_t u1 = 0; u1 < a.rows(); ++u1)
    for (std::size_t u2 = 0; u2 < a.cols(); ++u2) {
      const double av = a(u1, u2);
      if (av == 0.0) continue;
      for (std::size_t j1 = 0; j1 < p1; ++j1) {
        double* row = x.data() + (u1 + j1) * n2 + u2;
        const double* drow = d.data() + j1 * p2;
        for (std::size_t j2 = 0; j2 < p2; ++j2) row[j2] += av * drow[j2];
      }
    }
}

// out(u) = sum_j small(j) big(u + j), u over out's extent.
void direct_valid_correlation(const Image& small, const Image& big, Image& out) {
  const std::size_t s1 = small.rows(), s2 = small.cols();
  for (std::size_t u1 = 0; u1 < out.rows(); ++u1)
    for (std::size_t u2 = 0; u2 < out.cols(); ++u2) {
      double acc = 0.0;
      for (std::size_t j1 = 0; j1 < s1; ++j1) {
        const double* brow = big.data() + (u1 + j1) * big.cols() + u2;
        const double* srow = small.data() + j1 * s2;
        for (std::size_t j2 = 0; j2 < s2; ++j2) acc += srow[j2] * brow[j2];
      }
      out(u1, u2) = acc;
    }
}

}  // namespace

Backend resolve(Backend requested, Extent image) noexcept {
  if (requested != Backend::Auto) return requested;
  return (image.rows >= kFourierThreshold && image.cols >= kFourierThreshold) ? Backend::Fourier : Backend::Direct;
}

// --- CrossKernels ----------------------------------------------------------

CrossKernels::CrossKernels(std::size_t atoms, Extent kernel)
    : atoms_(atoms), kernel_(kernel), kernels_(atoms * atoms, Image(Extent{2 * kernel.rows - 1, 2 * kernel.cols - 1})) {}

CrossKernels& CrossKernels::operator*=(double s) {
  for (Image& im : kernels_) im *= s;
  return *this;
}

void CrossKernels::add_scaled(double s, const CrossKernels& other) {
  require(atoms_ == other.atoms_ && kernel_ == other.kernel_, ErrorCode::DimensionMismatch,
          "cross kernels of different shapes");
  for (std::size_t i = 0; i < kernels_.size(); ++i) axpy(s, other.kernels_[i], kernels_[i]);
}

// --- SynthesisOperator -----------------------------------------------------

struct SynthesisOperator::Spectra {
  std::vector<Spectrum> kernels;
};

SynthesisOperator::SynthesisOperator(std::span<const Image> kernels, Extent image, Backend backend)
    : kernels_(kernels.begin(), kernels.end()), image_(image), backend_(resolve(backend, image)) {
  require(!kernels_.empty(), ErrorCode::DimensionMismatch, "no kernels");
  check_uniform(kernels, "kernels");
  const Extent p = kernels_.front().extent();
  require(image.rows >= p.rows && image.cols >= p.cols, ErrorCode::DimensionMismatch,
          "image " + to_string(image) + " smaller than kernel " + to_string(p));
  maps_ = {image.rows - p.rows + 1, image.cols - p.cols + 1};
  if (backend_ == Backend::Fourier) {
    spectra_ = std::make_unique<Spectra>();
    for (const Image& d : kernels_) spectra_->kernels.push_back(forward_fft(d, image_));
  }
}

SynthesisOperator::~SynthesisOperator() = default;
SynthesisOperator::SynthesisOperator(SynthesisOperator&&) noexcept = default;
SynthesisOperator& SynthesisOperator::operator=(SynthesisOperator&&) noexcept = default;

Image SynthesisOperator::forward(std::span<const Image> maps) const {
  require(maps.size() == kernels_.size(), ErrorCode::DimensionMismatch,
          std::to_string(kernels_.size()) + " kernels but " + std::to_string(maps.size()) + " maps");
  for (const Image& a : maps)
    require(a.extent() == maps_, ErrorCode::DimensionMismatch,
            "map " + to_string(a.extent()) + ", expected " + to_string(maps_));
  if (backend_ == Backend::Direct) {
    Image x(image_);
    for (std::size_t k = 0; k < maps.size(); ++k) direct_synthesis_add(kernels_[k], maps[k], x);
    return x;
  }
  Spectrum acc(spectrum_size(image_));
  for (std::size_t k = 0; k < maps.size(); ++k) {
    const Spectrum a = forward_fft(maps[k], image_);
    const Spectrum& d = spectra_->kernels[k];
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += d[i] * a[i];
  }
  return inverse_fft(std::move(acc), image_, image_);
}

std::vector<Image> SynthesisOperator::adjoint(const Image& residual) const {
  require(residual.extent() == image_, ErrorCode::DimensionMismatch,
          "residual " + to_string(residual.extent()) + ", expected " + to_string(image_));
  std::vector<Image> out(kernels_.size(), Image(maps_));
  if (backend_ == Backend::Direct) {
    for (std::size_t k = 0; k < kernels_.size(); ++k) direct_valid_correlation(kernels_[k], residual, out[k]);
    return out;
  }
  const Spectrum r = forward_fft(residual, image_);
  for (std::size_t k = 0; k < kernels_.size(); ++k) {
    Spectrum prod(r.size());
    const Spectrum& d = spectra_->kernels[k];
    for (std::size_t i = 0; i < r.size(); ++i) prod[i] = std::conj(d[i]) * r[i];
    out[k] = inverse_fft(std::move(prod), image_, maps_);
  }
  return out;
}

// --- free functions --------------------------------------------------------

Image synthesize(std::span<const Image> kernels, std::span<const Image> maps, Backend backend) {
  require(!maps.empty(), ErrorCode::DimensionMismatch, "no maps");
  check_uniform(maps, "maps");
  require(!kernels.empty(), ErrorCode::DimensionMismatch, "no kernels");
  return SynthesisOperator(kernels, image_from(maps.front().extent(), kernels.front().extent()), backend)
      .forward(maps);
}

std::vector<Image> synthesize_adjoint_maps(std::span<const Image> kernels, const Image& residual, Backend backend) {
  return SynthesisOperator(kernels, residual.extent(), backend).adjoint(residual);
}

std::vector<Image> apply_A_T(std::span<const Image> maps, const Image& image, Backend backend) {
  require(!maps.empty(), ErrorCode::DimensionMismatch, "no maps");
  check_uniform(maps, "maps");
  const Extent p = kernel_from(image.extent(), maps.front().extent());
  std::vector<Image> out(maps.size(), Image(p));
  if (resolve(backend, image.extent()) == Backend::Direct) {
    for (std::size_t k = 0; k < maps.size(); ++k) direct_valid_correlation(maps[k], image, out[k]);
    return out;
  }
  const Extent n = image.extent();
  const Spectrum x = forward_fft(image, n);
  for (std::size_t k = 0; k < maps.size(); ++k) {
    Spectrum a = forward_fft(maps[k], n);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::conj(a[i]) * x[i];
    out[k] = inverse_fft(std::move(a), n, p);
  }
  return out;
}

CrossKernels cross_kernels(std::span<const Image> maps, Extent kernel, Backend backend) {
  require(!maps.empty(), ErrorCode::DimensionMismatch, "no maps");
  check_uniform(maps, "maps");
  const std::size_t K = maps.size();
  const Extent m = maps.front().extent();
  const Extent n = image_from(m, kernel);
  CrossKernels ck(K, kernel);
  const long q1 = static_cast<long>(kernel.rows) - 1;
  const long q2 = static_cast<long>(kernel.cols) - 1;

  if (resolve(backend, n) == Backend::Direct) {
    const long m1 = static_cast<long>(m.rows), m2 = static_cast<long>(m.cols);
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t kp = 0; kp < K; ++kp) {
        Image& c = ck.at(k, kp);
        for (long d1 = -q1; d1 <= q1; ++d1)
          for (long d2 = -q2; d2 <= q2; ++d2) {
            double acc = 0.0;
            const long v1lo = std::max(0L, -d1), v1hi = std::min(m1, m1 - d1);
            const long v2lo = std::max(0L, -d2), v2hi = std::min(m2, m2 - d2);
            for (long v1 = v1lo; v1 < v1hi; ++v1)
              for (long v2 = v2lo; v2 < v2hi; ++v2)
                acc += maps[k](v1, v2) * maps[kp](v1 + d1, v2 + d2);
            c(d1 + q1, d2 + q2) = acc;
          }
      }
    return ck;
  }

  std::vector<Spectrum> spectra;
  spectra.reserve(K);
  for (const Image& a : maps) spectra.push_back(forward_fft(a, n));
  const long n1 = static_cast<long>(n.rows), n2 = static_cast<long>(n.cols);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t kp = 0; kp < K; ++kp) {
      Spectrum prod(spectra[k].size());
      for (std::size_t i = 0; i < prod.size(); ++i) prod[i] = std::conj(spectra[k][i]) * spectra[kp][i];
      const std::vector<double> full = inverse_fft_full(std::move(prod), n);
      Image& c = ck.at(k, kp);
      for (long d1 = -q1; d1 <= q1; ++d1)
        for (long d2 = -q2; d2 <= q2; ++d2) {
          const long r = (d1 + n1) % n1, s = (d2 + n2) % n2;
          c(d1 + q1, d2 + q2) = full[r * n2 + s];
        }
    }
  return ck;
}

Image apply_cross_block(const CrossKernels& ck, std::size_t k, std::size_t kp, const Image& d) {
  const Extent p = ck.kernel_extent();
  require(d.extent() == p, ErrorCode::DimensionMismatch,
          "kernel " + to_string(d.extent()) + ", expected " + to_string(p));
  const Image& c = ck.at(k, kp);
  const std::size_t q1 = p.rows - 1, q2 = p.cols - 1;
  const std::size_t cw = c.cols();
  Image out(p);
  // out(j) = sum_j' c(j - j' + q) d(j')
  for (std::size_t jp1 = 0; jp1 < p.rows; ++jp1)
    for (std::size_t jp2 = 0; jp2 < p.cols; ++jp2) {
      const double dv = d(jp1, jp2);
      if (dv == 0.0) continue;
      for (std::size_t j1 = 0; j1 < p.rows; ++j1) {
        const double* crow = c.data() + (j1 + q1 - jp1) * cw + (q2 - jp2);
        double* orow = out.data() + j1 * p.cols;
        for (std::size_t j2 = 0; j2 < p.cols; ++j2) orow[j2] += dv * crow[j2];
      }
    }
  return out;
}

Image apply_cross_row(const CrossKernels& ck, std::size_t k, std::span<const Image> d) {
  require(d.size() == ck.atoms(), ErrorCode::DimensionMismatch,
          std::to_string(ck.atoms()) + " atoms in cross kernels, " + std::to_string(d.size()) + " kernels given");
  Image out(ck.kernel_extent());
  for (std::size_t kp = 0; kp < d.size(); ++kp) out += apply_cross_block(ck, k, kp, d[kp]);
  return out;
}

std::vector<Image> apply_cross(const CrossKernels& ck, std::span<const Image> d) {
  std::vector<Image> out;
  out.reserve(ck.atoms());
  for (std::size_t k = 0; k < ck.atoms(); ++k) out.push_back(apply_cross_row(ck, k, d));
  return out;
}

// --- spectral norm ---------------------------------------------------------

namespace {

double vec_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

SpectralEstimate power_iterate(const LinearMap& step, std::size_t dim, const PowerIterationOptions& opts) {
  SpectralEstimate est;
  if (dim == 0) {
    est.converged = true;
    return est;
  }
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> gauss;
  std::vector<double> v(dim), w(dim);
  for (double& x : v) x = gauss(rng);
  double nv = vec_norm(v);
  for (double& x : v) x /= nv;

  double prev = 0.0;
  for (int it = 1; it <= opts.max_iters; ++it) {
    std::fill(w.begin(), w.end(), 0.0);
    step(v, w);
    const double nw = vec_norm(w);
    est.iterations = it;
    if (nw == 0.0 || !std::isfinite(nw)) {
      est.value = std::isfinite(nw) ? 0.0 : nw;
      est.converged = std::isfinite(nw);
      return est;
    }
    est.value = nw;
    for (std::size_t i = 0; i < dim; ++i) v[i] = w[i] / nw;
    if (it > 1 && std::abs(nw - prev) <= opts.tol * nw) {
      est.converged = true;
      return est;
    }
    prev = nw;
  }
  return est;
}

}  // namespace

SpectralEstimate spectral_norm(const LinearMap& op, std::size_t dim, const PowerIterationOptions& opts) {
  return power_iterate(op, dim, opts);
}

SpectralEstimate spectral_norm(const LinearMap& op, const LinearMap& adjoint, std::size_t dim,
                               const PowerIterationOptions& opts) {
  std::vector<double> tmp(dim);
  auto gram = [&](std::span<const double> in, std::span<double> out) {
    std::fill(tmp.begin(), tmp.end(), 0.0);
    op(in, tmp);
    adjoint(tmp, out);
  };
  SpectralEstimate est = power_iterate(gram, dim, opts);
  est.value = std::sqrt(est.value);
  return est;
}

}  // namespace ocdl::conv
