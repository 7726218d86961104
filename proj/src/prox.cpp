#include "ocdl/prox.hpp"

#include <algorithm>
#include <cmath>

#include "ocdl/error.hpp"

namespace ocdl::prox {

double group_l21_norm(const CoeffMaps& maps) {
  const std::size_t L = maps.modalities();
  if (L == 0) return 0.0;
  double total = 0.0;
  const std::size_t positions = maps.extent().size();
  for (std::size_t k = 0; k < maps.atoms(); ++k)
    for (std::size_t n = 0; n < positions; ++n) {
      double s = 0.0;
      for (std::size_t l = 0; l < L; ++l) {
        const double v = maps.at(l, k).data()[n];
        s += v * v;
      }
      total += std::sqrt(s);
    }
  return total;
}

void prox_group_l21_inplace(CoeffMaps& maps, double threshold) {
  require(threshold >= 0.0, ErrorCode::InvalidArgument, "negative threshold");
  if (threshold == 0.0) return;
  const std::size_t L = maps.modalities();
  const std::size_t positions = maps.extent().size();
  for (std::size_t k = 0; k < maps.atoms(); ++k)
    for (std::size_t n = 0; n < positions; ++n) {
      double s = 0.0;
      for (std::size_t l = 0; l < L; ++l) {
        const double v = maps.at(l, k).data()[n];
        s += v * v;
      }
      const double g = std::sqrt(s);
      const double scale = g > threshold ? (g - threshold) / g : 0.0;
      for (std::size_t l = 0; l < L; ++l) maps.at(l, k).data()[n] *= scale;
    }
}

CoeffMaps prox_group_l21(const CoeffMaps& maps, double threshold) {
  CoeffMaps out = maps;
  prox_group_l21_inplace(out, threshold);
  return out;
}

void gradient(const Image& x, Image& dx_rows, Image& dx_cols) {
  const std::size_t n1 = x.rows(), n2 = x.cols();
  dx_rows = Image(x.extent());
  dx_cols = Image(x.extent());
  for (std::size_t i = 0; i < n1; ++i)
    for (std::size_t j = 0; j < n2; ++j) {
      if (i + 1 < n1) dx_rows(i, j) = x(i + 1, j) - x(i, j);
      if (j + 1 < n2) dx_cols(i, j) = x(i, j + 1) - x(i, j);
    }
}

Image divergence(const Image& p_rows, const Image& p_cols) {
  const std::size_t n1 = p_rows.rows(), n2 = p_rows.cols();
  Image div(p_rows.extent());
  for (std::size_t i = 0; i < n1; ++i)
    for (std::size_t j = 0; j < n2; ++j) {
      double v = 0.0;
      if (i + 1 < n1) v += p_rows(i, j);
      if (i > 0) v -= p_rows(i - 1, j);
      if (j + 1 < n2) v += p_cols(i, j);
      if (j > 0) v -= p_cols(i, j - 1);
      div(i, j) = v;
    }
  return div;
}

double tv_value(const Image& x) {
  Image gr, gc;
  gradient(x, gr, gc);
  double tv = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) tv += std::hypot(gr.data()[i], gc.data()[i]);
  return tv;
}

namespace {

double prox_objective(const Image& u, const Image& b, double weight) {
  double q = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double d = u.data()[i] - b.data()[i];
    q += d * d;
  }
  return 0.5 * q + weight * tv_value(u);
}

void project_dual(Image& pr, Image& pc) {
  for (std::size_t i = 0; i < pr.size(); ++i) {
    const double m = std::hypot(pr.data()[i], pc.data()[i]);
    if (m > 1.0) {
      pr.data()[i] /= m;
      pc.data()[i] /= m;
    }
  }
}

}  // namespace

TVProxResult prox_tv_iso(const Image& image, double weight, int inner_iters, const TVDualState& warm) {
  require(weight >= 0.0, ErrorCode::InvalidArgument, "negative TV weight");
  require(inner_iters >= 1, ErrorCode::InvalidArgument, "inner_iters must be at least 1");
  const Extent e = image.extent();
  TVDualState dual = warm.matches(e) ? warm : TVDualState{Image(e), Image(e)};
  if (weight == 0.0) return {image, std::move(dual)};

  // Dual problem: min_{|p| <= 1} 1/2 |b + w div p|^2 with gradient -w grad(u);
  // the gradient operator norm squared is at most 8.
  const double step = 1.0 / (8.0 * weight);
  Image pr = dual.p_rows, pc = dual.p_cols;  // current dual iterate
  Image qr = pr, qc = pc;                    // extrapolated point
  double t = 1.0;
  Image gr, gc;
  for (int it = 0; it < inner_iters; ++it) {
    Image u = image;
    axpy(weight, divergence(qr, qc), u);
    gradient(u, gr, gc);
    Image nr = qr, nc = qc;
    axpy(step, gr, nr);
    axpy(step, gc, nc);
    project_dual(nr, nc);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double beta = (t - 1.0) / t_next;
    qr = nr;
    qc = nc;
    for (std::size_t i = 0; i < qr.size(); ++i) {
      qr.data()[i] += beta * (nr.data()[i] - pr.data()[i]);
      qc.data()[i] += beta * (nc.data()[i] - pc.data()[i]);
    }
    pr = std::move(nr);
    pc = std::move(nc);
    t = t_next;
  }
  Image u = image;
  axpy(weight, divergence(pr, pc), u);
  dual = {std::move(pr), std::move(pc)};
  // Never worse than the input point itself.
  if (prox_objective(u, image, weight) > weight * tv_value(image)) return {image, std::move(dual)};
  return {std::move(u), std::move(dual)};
}

Image project_unit_ball(const Image& kernel) {
  const double n = norm(kernel);
  if (n <= 1.0) return kernel;
  // Shrink the scale by ulps until the rounded result lies in the ball, so a
  // second projection is a no-op.
  double scale = 1.0 / n;
  Image out = kernel;
  out *= scale;
  while (norm(out) > 1.0) {
    scale = std::nextafter(scale, 0.0);
    out = kernel;
    out *= scale;
  }
  return out;
}

}  // namespace ocdl::prox
