#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ocdl/conv.hpp"
#include "ocdl/types.hpp"

namespace ocdl {

// Running surrogate statistics for the dictionary update:
//   b_l = average of A_l^T x_l^hi,   C_l = average of A_l^T A_l (as cross-kernels).
struct MemoryState {
  ImageBank b;                              // [L, K, p1, p2]
  std::vector<conv::CrossKernels> c;        // one per modality
  std::int64_t t = 0;                       // completed rounds
  double gamma = 0.0;                       // forgetting exponent

  static MemoryState empty(std::size_t modalities, std::size_t atoms, Extent kernel, double gamma = 0.0);

  std::size_t modalities() const noexcept { return c.size(); }
  std::size_t atoms() const noexcept { return b.atoms(); }
  Extent kernel_extent() const noexcept { return b.extent(); }

  friend bool operator==(const MemoryState&, const MemoryState&) = default;
};

// One coded sample: high-pass image paired with its coefficient maps.
struct CodedSample {
  ImageStack x_hi;
  CoeffMaps alpha;
};

// Weight on the old statistics at round t: (1 - 1/t)^(1 + gamma).
double forgetting_weight(std::int64_t t, double gamma);

MemoryState memory_update(const MemoryState& state, std::span<const CodedSample> batch);

// sum_l 1/2 <d_l, C_l d_l> - <b_l, d_l>
double surrogate_value(const MemoryState& state, const Dictionary& dict);

// C_lk d_l - b_lk
Image block_gradient(const MemoryState& state, const Dictionary& dict, std::size_t l, std::size_t k);

struct DictUpdateOptions {
  int max_sweeps = 10;
  double tol = 1e-6;
};

struct DictUpdateReport {
  int sweeps = 0;
  int dead_kernels = 0;
  double surrogate_before = 0.0;
  double surrogate_after = 0.0;
};

// Projected block-coordinate descent on the surrogate, Gauss-Seidel over (l, k).
Dictionary dict_update(const MemoryState& state, const Dictionary& dict_prev, const DictUpdateOptions& opts = {},
                       DictUpdateReport* report = nullptr);

// Below this block Lipschitz constant a kernel is considered unused.
inline constexpr double kDeadKernelFloor = 1e-12;

}  // namespace ocdl
