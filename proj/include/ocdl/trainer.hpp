#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "ocdl/dict_learner.hpp"
#include "ocdl/sparse_coder.hpp"
#include "ocdl/types.hpp"

namespace ocdl {

enum class DictInit { Deltas, RandomUnitNorm };

struct TrainConfig {
  std::size_t modalities = 2;
  std::size_t atoms = 32;
  Extent kernel{15, 15};
  SolverParams solver;
  double gamma = 0.0;
  std::size_t batch_size = 8;
  Extent patch{50, 50};
  int rounds = 160;
  std::uint64_t seed = 1;
  DictInit init = DictInit::Deltas;
  // Non-positive selects kernel.rows / 4.
  double lowpass_sigma = 0.0;
  int max_sweeps = 10;
  double sweep_tol = 1e-6;
  // 0 disables checkpoints.
  int checkpoint_every = 0;

  double effective_sigma() const noexcept {
    return lowpass_sigma > 0.0 ? lowpass_sigma : static_cast<double>(kernel.rows) / 4.0;
  }
  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// One streamed observation (y, H), optionally with ground truth for evaluation.
struct StreamSample {
  Measurements y;
  SensingOps sensing;
  std::optional<ImageStack> truth;

  Extent extent() const noexcept { return y.extent(); }
};

// Gaussian blur of masked data divided by the blurred mask; pixels with no
// observation in reach take the value of the nearest computed pixel.
Image lowpass_mask_aware(const Image& y, const Image& mask, double sigma);
ImageStack lowpass_stack(const StreamSample& sample, double sigma);

// Separable Gaussian blur (radius ceil(3 sigma), replicate boundary).
Image gaussian_blur(const Image& x, double sigma);

std::vector<StreamSample> sample_patches(const StreamSample& sample, std::size_t count, Extent patch,
                                         std::mt19937_64& rng);

Dictionary init_dictionary(const TrainConfig& config, std::mt19937_64& rng);

struct RoundDiagnostics {
  std::vector<double> sample_costs;
  std::vector<double> sparsity;  // fraction of zero groups per sample
  int dead_kernels = 0;
  int sweeps = 0;
  double surrogate_before = 0.0;
  double surrogate_after = 0.0;
};

struct RoundResult {
  Dictionary dict;
  MemoryState memory;
  RoundDiagnostics diagnostics;
};

// Code every sample with the current dictionary, fold (x_hat - x_lo, alpha_hat)
// into memory, then update the dictionary.
RoundResult train_round(const Dictionary& dict, const MemoryState& memory, std::span<const StreamSample> batch,
                        const TrainConfig& config);

struct Checkpoint {
  Dictionary dict;
  MemoryState memory;
  std::int64_t round = 0;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

struct TrainLogRow {
  std::int64_t round = 0;
  std::size_t sample = 0;
  double cost = 0.0;
  double sparsity = 0.0;
  double surrogate_before = 0.0;
  double surrogate_after = 0.0;
  int dead_kernels = 0;
  double wall_ms = 0.0;
};

// Yields the next streamed sample or nullopt when exhausted.
using SampleSource = std::function<std::optional<StreamSample>()>;

struct StreamHooks {
  std::function<void(const Checkpoint&)> on_checkpoint;
  std::function<void(const Dictionary&, std::int64_t round, const StreamSample& frame)> on_round;
};

struct TrainOutcome {
  Dictionary dict;
  MemoryState memory;
  std::int64_t rounds_done = 0;
  std::vector<TrainLogRow> log;
};

// Online learning loop. With `resume`, the first resume->round source items are
// skipped and training continues from the stored state. `initial` replaces the
// configured initialization (used to specialize a pre-trained dictionary).
TrainOutcome train_stream(const SampleSource& source, const TrainConfig& config,
                          const std::optional<Checkpoint>& resume = std::nullopt, const StreamHooks& hooks = {},
                          const std::optional<Dictionary>& initial = std::nullopt);

// Per-round generator derived from (seed, round) so resumed runs draw the same patches.
std::mt19937_64 round_rng(std::uint64_t seed, std::int64_t round);

// Worker count for mini-batch coding: OCDL_THREADS if set, else hardware concurrency.
unsigned worker_threads();

}  // namespace ocdl
