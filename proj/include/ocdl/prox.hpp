#pragma once

#include "ocdl/image.hpp"
#include "ocdl/types.hpp"

namespace ocdl::prox {

// sum over (k, position) of the l2 norm across modalities.
double group_l21_norm(const CoeffMaps& maps);

// Group soft-threshold: g -> (|g| - threshold)_+ g / |g|.
CoeffMaps prox_group_l21(const CoeffMaps& maps, double threshold);
void prox_group_l21_inplace(CoeffMaps& maps, double threshold);

// Forward differences with Neumann boundary (zero across the last row/column).
void gradient(const Image& x, Image& dx_rows, Image& dx_cols);
// Negative adjoint of gradient.
Image divergence(const Image& p_rows, const Image& p_cols);

// Isotropic total variation.
double tv_value(const Image& x);

// Dual fields for the TV prox; warm-start state owned by one solver.
struct TVDualState {
  Image p_rows;
  Image p_cols;

  bool matches(Extent e) const noexcept { return p_rows.extent() == e && p_cols.extent() == e; }
};

struct TVProxResult {
  Image image;
  TVDualState dual;
};

// Approximate argmin_u 1/2 |u - image|^2 + weight TV(u) by fast gradient
// projection on the dual, warm-started from `warm` when its extent matches.
TVProxResult prox_tv_iso(const Image& image, double weight, int inner_iters, const TVDualState& warm = {});

// d / max(|d|, 1).
Image project_unit_ball(const Image& kernel);

}  // namespace ocdl::prox
