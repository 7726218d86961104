#pragma once

// Brute-force reference implementations. They index arrays directly and never
// call into the library's convolution code.

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <vector>

#include "ocdl/image.hpp"
#include "ocdl/types.hpp"

namespace oracle {

using ocdl::Extent;
using ocdl::Image;

inline Image random_image(std::mt19937_64& rng, Extent e, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Image im(e);
  for (double& v : im.values()) v = n(rng);
  return im;
}

inline std::vector<Image> random_images(std::mt19937_64& rng, std::size_t count, Extent e) {
  std::vector<Image> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(random_image(rng, e));
  return out;
}

inline double inner(const std::vector<Image>& a, const std::vector<Image>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t i = 0; i < a[k].size(); ++i) s += a[k].data()[i] * b[k].data()[i];
  return s;
}

inline double inner(const Image& a, const Image& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

inline double l2(const std::vector<Image>& a) { return std::sqrt(inner(a, a)); }
inline double l2(const Image& a) { return std::sqrt(inner(a, a)); }

// x(i) = sum_k sum_j d_k(j) a_k(i - j), image extent m + p - 1.
inline Image full_conv(const std::vector<Image>& d, const std::vector<Image>& a) {
  const Extent p = d.front().extent(), m = a.front().extent();
  Image x(m.rows + p.rows - 1, m.cols + p.cols - 1);
  for (std::size_t k = 0; k < d.size(); ++k)
    for (std::size_t i1 = 0; i1 < x.rows(); ++i1)
      for (std::size_t i2 = 0; i2 < x.cols(); ++i2)
        for (std::size_t j1 = 0; j1 < p.rows; ++j1)
          for (std::size_t j2 = 0; j2 < p.cols; ++j2) {
            const long u1 = static_cast<long>(i1) - static_cast<long>(j1);
            const long u2 = static_cast<long>(i2) - static_cast<long>(j2);
            if (u1 < 0 || u2 < 0 || u1 >= static_cast<long>(m.rows) || u2 >= static_cast<long>(m.cols)) continue;
            x(i1, i2) += d[k](j1, j2) * a[k](static_cast<std::size_t>(u1), static_cast<std::size_t>(u2));
          }
  return x;
}

// Column (k, j) of the N x KP matrix A with x = A d for fixed maps.
inline Eigen::MatrixXd dense_A(const std::vector<Image>& a, Extent p) {
  const Extent m = a.front().extent();
  const Extent n{m.rows + p.rows - 1, m.cols + p.cols - 1};
  const std::size_t K = a.size();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<long>(n.size()), static_cast<long>(K * p.size()));
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j1 = 0; j1 < p.rows; ++j1)
      for (std::size_t j2 = 0; j2 < p.cols; ++j2) {
        const long col = static_cast<long>(k * p.size() + j1 * p.cols + j2);
        for (std::size_t u1 = 0; u1 < m.rows; ++u1)
          for (std::size_t u2 = 0; u2 < m.cols; ++u2)
            A(static_cast<long>((u1 + j1) * n.cols + u2 + j2), col) += a[k](u1, u2);
      }
  return A;
}

// Column (k, u) of the N x KM matrix D with x = D alpha for fixed kernels.
inline Eigen::MatrixXd dense_D(const std::vector<Image>& d, Extent m) {
  const Extent p = d.front().extent();
  const Extent n{m.rows + p.rows - 1, m.cols + p.cols - 1};
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(static_cast<long>(n.size()), static_cast<long>(d.size() * m.size()));
  for (std::size_t k = 0; k < d.size(); ++k)
    for (std::size_t u1 = 0; u1 < m.rows; ++u1)
      for (std::size_t u2 = 0; u2 < m.cols; ++u2)
        for (std::size_t j1 = 0; j1 < p.rows; ++j1)
          for (std::size_t j2 = 0; j2 < p.cols; ++j2)
            D(static_cast<long>((u1 + j1) * n.cols + u2 + j2), static_cast<long>(k * m.size() + u1 * m.cols + u2)) +=
                d[k](j1, j2);
  return D;
}

inline Eigen::VectorXd flatten(const std::vector<Image>& v) {
  std::size_t total = 0;
  for (const Image& im : v) total += im.size();
  Eigen::VectorXd out(static_cast<long>(total));
  long i = 0;
  for (const Image& im : v)
    for (double x : im.values()) out(i++) = x;
  return out;
}

inline Eigen::VectorXd flatten(const Image& im) { return flatten(std::vector<Image>{im}); }

inline std::vector<Image> unflatten(const Eigen::VectorXd& v, std::size_t count, Extent e) {
  std::vector<Image> out(count, Image(e));
  long i = 0;
  for (Image& im : out)
    for (double& x : im.values()) x = v(i++);
  return out;
}

inline double max_abs(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).cwiseAbs().maxCoeff(); }

// Forward-difference isotropic TV with zero differences across the last row/column.
inline double tv(const Image& x) {
  double s = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) {
      const double dr = r + 1 < x.rows() ? x(r + 1, c) - x(r, c) : 0.0;
      const double dc = c + 1 < x.cols() ? x(r, c + 1) - x(r, c) : 0.0;
      s += std::sqrt(dr * dr + dc * dc);
    }
  return s;
}

struct TvDual {
  std::vector<double> rows, cols;
};

// Fast gradient projection on the dual of 1/2|u - b|^2 + w TV(u), written with
// explicit loops and Neumann forward differences. `warm` is read and updated.
inline Image tv_prox_oracle(const Image& b, double w, int iters, TvDual* warm = nullptr) {
  if (w == 0.0) return b;
  const std::size_t R = b.rows(), C = b.cols();
  std::vector<double> pr(R * C, 0.0), pc(R * C, 0.0);
  if (warm && warm->rows.size() == R * C) {
    pr = warm->rows;
    pc = warm->cols;
  }
  std::vector<double> qr = pr, qc = pc, pr_old, pc_old;
  auto at = [C](std::size_t r, std::size_t c) { return r * C + c; };
  auto primal = [&](const std::vector<double>& vr, const std::vector<double>& vc) {
    Image u(b.extent());
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) {
        double div = 0.0;
        div += (r + 1 < R ? vr[at(r, c)] : 0.0) - (r > 0 ? vr[at(r - 1, c)] : 0.0);
        div += (c + 1 < C ? vc[at(r, c)] : 0.0) - (c > 0 ? vc[at(r, c - 1)] : 0.0);
        u(r, c) = b(r, c) + w * div;
      }
    return u;
  };
  double t = 1.0;
  for (int it = 0; it < iters; ++it) {
    const Image u = primal(qr, qc);
    pr_old = pr;
    pc_old = pc;
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) {
        const double gr = r + 1 < R ? u(r + 1, c) - u(r, c) : 0.0;
        const double gc = c + 1 < C ? u(r, c + 1) - u(r, c) : 0.0;
        const double a = qr[at(r, c)] + gr / (8.0 * w);
        const double bb = qc[at(r, c)] + gc / (8.0 * w);
        const double n = std::max(1.0, std::sqrt(a * a + bb * bb));
        pr[at(r, c)] = a / n;
        pc[at(r, c)] = bb / n;
      }
    const double tn = (1.0 + std::sqrt(1.0 + 4.0 * t * t)) / 2.0;
    for (std::size_t i = 0; i < pr.size(); ++i) {
      qr[i] = pr[i] + (t - 1.0) / tn * (pr[i] - pr_old[i]);
      qc[i] = pc[i] + (t - 1.0) / tn * (pc[i] - pc_old[i]);
    }
    t = tn;
  }
  if (warm) *warm = {pr, pc};
  return primal(pr, pc);
}

}  // namespace oracle
