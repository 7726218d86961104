#include "ocdl/types.hpp"

#include <cmath>

#include "ocdl/error.hpp"

namespace ocdl {

ImageStack::ImageStack(std::vector<Image> modalities, std::vector<std::string> names)
    : images_(std::move(modalities)), names_(std::move(names)) {
  for (const Image& im : images_)
    require(im.extent() == images_.front().extent(), ErrorCode::DimensionMismatch,
            "modalities of an image stack differ in extent: " + to_string(images_.front().extent()) + " vs " +
                to_string(im.extent()));
  require(names_.empty() || names_.size() == images_.size(), ErrorCode::DimensionMismatch,
          "modality name count does not match image count");
  if (names_.empty())
    for (std::size_t l = 0; l < images_.size(); ++l) names_.push_back("modality" + std::to_string(l));
}

ImageStack::ImageStack(std::size_t modalities, Extent extent)
    : ImageStack(std::vector<Image>(modalities, Image(extent))) {}

namespace {
void check_same(const ImageStack& a, const ImageStack& b) {
  require(a.modalities() == b.modalities() && a.extent() == b.extent(), ErrorCode::DimensionMismatch,
          "stacks " + std::to_string(a.modalities()) + "x" + to_string(a.extent()) + " and " +
              std::to_string(b.modalities()) + "x" + to_string(b.extent()));
}
}  // namespace

ImageStack operator+(const ImageStack& a, const ImageStack& b) {
  check_same(a, b);
  ImageStack out = a;
  for (std::size_t l = 0; l < a.modalities(); ++l) out[l] += b[l];
  return out;
}

ImageStack operator-(const ImageStack& a, const ImageStack& b) {
  check_same(a, b);
  ImageStack out = a;
  for (std::size_t l = 0; l < a.modalities(); ++l) out[l] -= b[l];
  return out;
}

SensingOp SensingOp::mask(Image phi) {
  for (std::size_t i = 0; i < phi.size(); ++i) {
    const double v = phi.data()[i];
    require(v == 0.0 || v == 1.0, ErrorCode::InvalidMask,
            "entry " + std::to_string(i) + " is " + std::to_string(v) + ", expected 0 or 1");
  }
  const Extent e = phi.extent();
  return SensingOp(Kind::DiagonalMask, e, std::move(phi));
}

Image SensingOp::mask_image() const { return kind_ == Kind::Identity ? Image(extent_, 1.0) : mask_; }

Image SensingOp::apply(const Image& x) const {
  require(x.extent() == extent_, ErrorCode::DimensionMismatch,
          "sensing operator " + to_string(extent_) + " applied to " + to_string(x.extent()));
  if (kind_ == Kind::Identity) return x;
  Image out(extent_);
  for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = mask_.data()[i] * x.data()[i];
  return out;
}

SensingOp SensingOp::cropped(std::size_t top, std::size_t left, Extent extent) const {
  if (kind_ == Kind::Identity) {
    require(top + extent.rows <= extent_.rows && left + extent.cols <= extent_.cols, ErrorCode::DimensionMismatch,
            "crop exceeds sensing extent " + to_string(extent_));
    return identity(extent);
  }
  return SensingOp(Kind::DiagonalMask, extent, crop(mask_, top, left, extent));
}

ImageBank::ImageBank(std::size_t modalities, std::size_t atoms, Extent extent)
    : extent_(extent), slices_(modalities, std::vector<Image>(atoms, Image(extent))) {}

double dot(const ImageBank& a, const ImageBank& b) {
  double s = 0.0;
  for (std::size_t l = 0; l < a.modalities(); ++l)
    for (std::size_t k = 0; k < a.atoms(); ++k) s += dot(a.at(l, k), b.at(l, k));
  return s;
}

double squared_norm(const ImageBank& a) { return dot(a, a); }

bool all_finite(const ImageBank& a) {
  for (std::size_t l = 0; l < a.modalities(); ++l)
    for (const Image& im : a.slice(l))
      if (!all_finite(im)) return false;
  return true;
}

Extent map_extent(Extent image, Extent kernel) {
  require(image.rows >= kernel.rows && image.cols >= kernel.cols, ErrorCode::DimensionMismatch,
          "image " + to_string(image) + " smaller than kernel " + to_string(kernel));
  return {image.rows - kernel.rows + 1, image.cols - kernel.cols + 1};
}

CoeffMaps CoeffMaps::zeros_for(std::size_t modalities, std::size_t atoms, Extent image, Extent kernel) {
  return CoeffMaps(modalities, atoms, map_extent(image, kernel));
}

void SolverParams::validate() const {
  auto check = [](bool ok, const char* what) { require(ok, ErrorCode::InvalidArgument, what); };
  check(rho > 0.0 && std::isfinite(rho), "rho must be positive");
  check(lambda >= 0.0 && std::isfinite(lambda), "lambda must be nonnegative");
  check(tau >= 0.0 && std::isfinite(tau), "tau must be nonnegative");
  check(max_outer_iters >= 1, "max_outer_iters must be at least 1");
  check(rel_tol >= 0.0, "rel_tol must be nonnegative");
  check(tv_inner_iters >= 1, "tv_inner_iters must be at least 1");
  check(backtrack_eta > 1.0, "backtrack_eta must exceed 1");
  check(L0 > 0.0, "L0 must be positive");
}

void validate_problem(std::size_t modalities, Extent image, const SensingOps& ops, const Dictionary& dict) {
  require(ops.size() == modalities, ErrorCode::DimensionMismatch,
          "image stack has " + std::to_string(modalities) + " modalities, sensing ops " + std::to_string(ops.size()));
  require(dict.modalities() == modalities, ErrorCode::DimensionMismatch,
          "image stack has " + std::to_string(modalities) + " modalities, dictionary " +
              std::to_string(dict.modalities()));
  for (std::size_t l = 0; l < ops.size(); ++l) {
    require(ops[l].extent() == image, ErrorCode::DimensionMismatch,
            "mask " + std::to_string(l) + " is " + to_string(ops[l].extent()) + ", image is " + to_string(image));
    if (ops[l].kind() == SensingOp::Kind::DiagonalMask) {
      const Image m = ops[l].mask_image();
      for (double v : m.values())
        require(v == 0.0 || v == 1.0, ErrorCode::InvalidMask, "mask " + std::to_string(l) + " is not binary");
    }
  }
  const Extent p = dict.kernel_extent();
  require(image.rows >= p.rows && image.cols >= p.cols, ErrorCode::DimensionMismatch,
          "image " + to_string(image) + " smaller than kernel " + to_string(p));
  for (std::size_t l = 0; l < dict.modalities(); ++l)
    for (std::size_t k = 0; k < dict.atoms(); ++k) {
      const double n = norm(dict.at(l, k));
      require(n <= 1.0 + kKernelNormSlack, ErrorCode::KernelNormViolation,
              "kernel (" + std::to_string(l) + "," + std::to_string(k) + ") has norm " + std::to_string(n));
    }
}

}  // namespace ocdl
