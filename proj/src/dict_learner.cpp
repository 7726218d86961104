#include "ocdl/dict_learner.hpp"

#include <algorithm>
#include <cmath>

#include "ocdl/error.hpp"
#include "ocdl/prox.hpp"

namespace ocdl {

namespace {

void check_dims(const MemoryState& state, const Dictionary& dict) {
  require(dict.modalities() == state.modalities() && dict.atoms() == state.atoms() &&
              dict.kernel_extent() == state.kernel_extent(),
          ErrorCode::DimensionMismatch,
          "dictionary " + std::to_string(dict.modalities()) + "x" + std::to_string(dict.atoms()) + "x" +
              to_string(dict.kernel_extent()) + " vs memory " + std::to_string(state.modalities()) + "x" +
              std::to_string(state.atoms()) + "x" + to_string(state.kernel_extent()));
}

void require_memory(const MemoryState& state) {
  require(state.t >= 1, ErrorCode::EmptyMemory, "memory holds no samples (t = 0)");
}

}  // namespace

MemoryState MemoryState::empty(std::size_t modalities, std::size_t atoms, Extent kernel, double gamma) {
  require(gamma >= 0.0, ErrorCode::InvalidArgument, "gamma must be nonnegative");
  MemoryState s;
  s.b = ImageBank(modalities, atoms, kernel);
  s.c.assign(modalities, conv::CrossKernels(atoms, kernel));
  s.gamma = gamma;
  return s;
}

double forgetting_weight(std::int64_t t, double gamma) {
  if (t <= 1) return 0.0;
  return std::pow(1.0 - 1.0 / static_cast<double>(t), 1.0 + gamma);
}

MemoryState memory_update(const MemoryState& state, std::span<const CodedSample> batch) {
  require(!batch.empty(), ErrorCode::EmptyBatch, "memory update needs at least one sample");
  const std::size_t L = state.modalities(), K = state.atoms();
  const Extent p = state.kernel_extent();

  MemoryState fresh = MemoryState::empty(L, K, p, state.gamma);
  for (const CodedSample& s : batch) {
    require(s.x_hi.modalities() == L && s.alpha.modalities() == L && s.alpha.atoms() == K,
            ErrorCode::DimensionMismatch, "sample modality/atom counts disagree with memory");
    require(s.alpha.extent() == map_extent(s.x_hi.extent(), p), ErrorCode::DimensionMismatch,
            "sample maps " + to_string(s.alpha.extent()) + " inconsistent with image " + to_string(s.x_hi.extent()) +
                " and kernel " + to_string(p));
    for (std::size_t l = 0; l < L; ++l) {
      const std::vector<Image> atx = conv::apply_A_T(s.alpha.slice(l), s.x_hi[l]);
      for (std::size_t k = 0; k < K; ++k) fresh.b.at(l, k) += atx[k];
      fresh.c[l].add_scaled(1.0, conv::cross_kernels(s.alpha.slice(l), p));
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());

  MemoryState next = state;
  next.t = state.t + 1;
  const double theta = forgetting_weight(next.t, state.gamma);
  const double w_new = (1.0 - theta) * inv;
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t k = 0; k < K; ++k) {
      Image& b = next.b.at(l, k);
      b *= theta;
      axpy(w_new, fresh.b.at(l, k), b);
    }
    next.c[l] *= theta;
    next.c[l].add_scaled(w_new, fresh.c[l]);
  }
  return next;
}

double surrogate_value(const MemoryState& state, const Dictionary& dict) {
  require_memory(state);
  check_dims(state, dict);
  double v = 0.0;
  for (std::size_t l = 0; l < state.modalities(); ++l) {
    const std::vector<Image> cd = conv::apply_cross(state.c[l], dict.slice(l));
    for (std::size_t k = 0; k < state.atoms(); ++k)
      v += 0.5 * dot(dict.at(l, k), cd[k]) - dot(state.b.at(l, k), dict.at(l, k));
  }
  return v;
}

Image block_gradient(const MemoryState& state, const Dictionary& dict, std::size_t l, std::size_t k) {
  require_memory(state);
  check_dims(state, dict);
  require(l < state.modalities() && k < state.atoms(), ErrorCode::InvalidArgument, "block index out of range");
  Image g = conv::apply_cross_row(state.c[l], k, dict.slice(l));
  g -= state.b.at(l, k);
  return g;
}

Dictionary dict_update(const MemoryState& state, const Dictionary& dict_prev, const DictUpdateOptions& opts,
                       DictUpdateReport* report) {
  require_memory(state);
  check_dims(state, dict_prev);
  const std::size_t L = state.modalities(), K = state.atoms();
  const std::size_t P = state.kernel_extent().size();
  const Extent p = state.kernel_extent();

  // Block Lipschitz constants depend only on the memory.
  std::vector<double> lipschitz(L * K);
  int dead = 0;
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t k = 0; k < K; ++k) {
      const conv::CrossKernels& ck = state.c[l];
      auto block = [&](std::span<const double> in, std::span<double> out) {
        const Image d(p, std::vector<double>(in.begin(), in.end()));
        const Image r = conv::apply_cross_block(ck, k, k, d);
        std::copy(r.values().begin(), r.values().end(), out.begin());
      };
      conv::PowerIterationOptions po;
      po.max_iters = 200;
      po.tol = 1e-6;
      const double est = conv::spectral_norm(block, P, po).value;
      lipschitz[l * K + k] = est * conv::kLipschitzSafety;
      if (lipschitz[l * K + k] < kDeadKernelFloor) ++dead;
    }

  Dictionary dict = dict_prev;
  DictUpdateReport rep;
  rep.dead_kernels = dead;
  rep.surrogate_before = surrogate_value(state, dict);
  for (int s = 1; s <= opts.max_sweeps; ++s) {
    double change = 0.0;
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t k = 0; k < K; ++k) {
        const double lk = lipschitz[l * K + k];
        if (lk < kDeadKernelFloor) continue;
        Image g = block_gradient(state, dict, l, k);
        Image cand = dict.at(l, k);
        axpy(-1.0 / lk, g, cand);
        cand = prox::project_unit_ball(cand);
        change = std::max(change, max_abs_diff(cand, dict.at(l, k)));
        dict.at(l, k) = std::move(cand);
      }
    rep.sweeps = s;
    if (change < opts.tol) break;
  }
  rep.surrogate_after = surrogate_value(state, dict);
  if (report) *report = rep;
  return dict;
}

}  // namespace ocdl
