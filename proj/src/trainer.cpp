#include "ocdl/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <string>
#include <thread>

#include "ocdl/error.hpp"

namespace ocdl {

void TrainConfig::validate() const {
  auto check = [](bool ok, const std::string& what) { require(ok, ErrorCode::InvalidArgument, what); };
  check(modalities >= 1, "modalities must be at least 1");
  check(atoms >= 1, "K must be at least 1");
  check(kernel.rows >= 1 && kernel.cols >= 1, "kernel dims must be positive");
  check(patch.rows >= kernel.rows && patch.cols >= kernel.cols,
        "patch " + to_string(patch) + " smaller than kernel " + to_string(kernel));
  check(gamma >= 0.0, "gamma must be nonnegative");
  check(batch_size >= 1, "batch_size must be at least 1");
  check(rounds >= 0, "rounds must be nonnegative");
  check(max_sweeps >= 1, "max_sweeps must be at least 1");
  check(sweep_tol >= 0.0, "sweep_tol must be nonnegative");
  check(checkpoint_every >= 0, "checkpoint_every must be nonnegative");
  check(std::isfinite(lowpass_sigma), "lowpass_sigma must be finite");
  solver.validate();
}

unsigned worker_threads() {
  if (const char* env = std::getenv("OCDL_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::mt19937_64 round_rng(std::uint64_t seed, std::int64_t round) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(round), static_cast<std::uint32_t>(static_cast<std::uint64_t>(round) >> 32),
                    0x70a7du};
  return std::mt19937_64(seq);
}

// --- low-pass ------------------------------------------------------------------

Image gaussian_blur(const Image& x, double sigma) {
  require(sigma > 0.0, ErrorCode::InvalidArgument, "sigma must be positive");
  const long radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> w(2 * radius + 1);
  double sum = 0.0;
  for (long i = -radius; i <= radius; ++i) sum += w[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : w) v /= sum;

  const long n1 = static_cast<long>(x.rows()), n2 = static_cast<long>(x.cols());
  auto clamp = [](long v, long hi) { return std::clamp(v, 0L, hi - 1); };
  Image tmp(x.extent()), out(x.extent());
  for (long r = 0; r < n1; ++r)
    for (long c = 0; c < n2; ++c) {
      double acc = 0.0;
      for (long i = -radius; i <= radius; ++i) acc += w[i + radius] * x(r, clamp(c + i, n2));
      tmp(r, c) = acc;
    }
  for (long r = 0; r < n1; ++r)
    for (long c = 0; c < n2; ++c) {
      double acc = 0.0;
      for (long i = -radius; i <= radius; ++i) acc += w[i + radius] * tmp(clamp(r + i, n1), c);
      out(r, c) = acc;
    }
  return out;
}

Image lowpass_mask_aware(const Image& y, const Image& mask, double sigma) {
  require(y.extent() == mask.extent(), ErrorCode::DimensionMismatch,
          "data " + to_string(y.extent()) + " vs mask " + to_string(mask.extent()));
  for (double v : mask.values()) require(v == 0.0 || v == 1.0, ErrorCode::InvalidMask, "mask is not binary");
  require(std::any_of(mask.values().begin(), mask.values().end(), [](double v) { return v == 1.0; }),
          ErrorCode::AllMasked, "mask has no observed pixel");

  Image masked(y.extent());
  for (std::size_t i = 0; i < y.size(); ++i) masked.data()[i] = y.data()[i] * mask.data()[i];
  const Image num = gaussian_blur(masked, sigma);
  const Image den = gaussian_blur(mask, sigma);

  Image out(y.extent());
  std::vector<std::size_t> computed, missing;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (den.data()[i] > 1e-12) {
      out.data()[i] = num.data()[i] / den.data()[i];
      computed.push_back(i);
    } else {
      missing.push_back(i);
    }
  }
  require(!computed.empty(), ErrorCode::AllMasked, "no pixel reachable by the low-pass filter");
  const std::size_t n2 = y.cols();
  for (std::size_t i : missing) {
    const long r = static_cast<long>(i / n2), c = static_cast<long>(i % n2);
    long best = std::numeric_limits<long>::max();
    std::size_t arg = computed.front();
    for (std::size_t j : computed) {
      const long dr = static_cast<long>(j / n2) - r, dc = static_cast<long>(j % n2) - c;
      const long d = dr * dr + dc * dc;
      if (d < best) {
        best = d;
        arg = j;
      }
    }
    out.data()[i] = out.data()[arg];
  }
  return out;
}

ImageStack lowpass_stack(const StreamSample& sample, double sigma) {
  std::vector<Image> out;
  for (std::size_t l = 0; l < sample.y.modalities(); ++l)
    out.push_back(lowpass_mask_aware(sample.y[l], sample.sensing[l].mask_image(), sigma));
  return ImageStack(std::move(out), sample.y.names());
}

// --- sampling and init -----------------------------------------------------------

std::vector<StreamSample> sample_patches(const StreamSample& sample, std::size_t count, Extent patch,
                                         std::mt19937_64& rng) {
  const Extent n = sample.extent();
  require(patch.rows <= n.rows && patch.cols <= n.cols, ErrorCode::PatchTooLarge,
          "patch " + to_string(patch) + " does not fit frame " + to_string(n));
  std::uniform_int_distribution<std::size_t> top_dist(0, n.rows - patch.rows);
  std::uniform_int_distribution<std::size_t> left_dist(0, n.cols - patch.cols);
  std::vector<StreamSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t top = top_dist(rng);
    const std::size_t left = left_dist(rng);
    StreamSample s;
    std::vector<Image> ys;
    for (const Image& y : sample.y) ys.push_back(crop(y, top, left, patch));
    s.y = ImageStack(std::move(ys), sample.y.names());
    for (const SensingOp& h : sample.sensing) s.sensing.push_back(h.cropped(top, left, patch));
    if (sample.truth) {
      std::vector<Image> ts;
      for (const Image& x : *sample.truth) ts.push_back(crop(x, top, left, patch));
      s.truth = ImageStack(std::move(ts), sample.truth->names());
    }
    out.push_back(std::move(s));
  }
  return out;
}

Dictionary init_dictionary(const TrainConfig& config, std::mt19937_64& rng) {
  const std::size_t L = config.modalities, K = config.atoms;
  const std::size_t P = config.kernel.size();
  Dictionary dict(L, K, config.kernel);
  if (config.init == DictInit::Deltas) {
    for (std::size_t k = 0; k < K; ++k) {
      // Spread the impulses over the support; cycle once K exceeds it.
      const std::size_t q = K <= P ? static_cast<std::size_t>((static_cast<double>(k) + 0.5) * P / K) : k % P;
      for (std::size_t l = 0; l < L; ++l) dict.at(l, k).data()[q] = 1.0;
    }
    return dict;
  }
  std::normal_distribution<double> gauss;
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t k = 0; k < K; ++k) {
      Image& d = dict.at(l, k);
      for (double& v : d.values()) v = gauss(rng);
      const double n = norm(d);
      if (n > 0.0) d *= 1.0 / n;
    }
  return dict;
}

// --- training ----------------------------------------------------------------------

namespace {

template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(count, worker_threads());
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

RoundResult train_round(const Dictionary& dict, const MemoryState& memory, std::span<const StreamSample> batch,
                        const TrainConfig& config) {
  require(!batch.empty(), ErrorCode::EmptyBatch, "training round needs at least one sample");
  const double sigma = config.effective_sigma();

  std::vector<CodedSample> coded(batch.size());
  std::vector<double> costs(batch.size()), sparsity(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) {
    const StreamSample& s = batch[i];
    const ImageStack x_lo = lowpass_stack(s, sigma);
    const CodingProblem problem{s.y, s.sensing, dict, x_lo, config.solver};
    CodingResult r = solve(problem);
    costs[i] = r.cost_trace.back();
    sparsity[i] = zero_group_fraction(r.alpha_hat);
    coded[i] = CodedSample{r.x_hat - x_lo, std::move(r.alpha_hat)};
  });

  RoundResult out;
  out.memory = memory_update(memory, coded);
  DictUpdateReport report;
  out.dict = dict_update(out.memory, dict, {config.max_sweeps, config.sweep_tol}, &report);
  out.diagnostics.sample_costs = std::move(costs);
  out.diagnostics.sparsity = std::move(sparsity);
  out.diagnostics.dead_kernels = report.dead_kernels;
  out.diagnostics.sweeps = report.sweeps;
  out.diagnostics.surrogate_before = report.surrogate_before;
  out.diagnostics.surrogate_after = report.surrogate_after;
  return out;
}

TrainOutcome train_stream(const SampleSource& source, const TrainConfig& config,
                          const std::optional<Checkpoint>& resume, const StreamHooks& hooks,
                          const std::optional<Dictionary>& initial) {
  config.validate();
  TrainOutcome out;
  std::int64_t round = 0;
  if (resume) {
    out.dict = resume->dict;
    out.memory = resume->memory;
    round = resume->round;
    for (std::int64_t i = 0; i < round; ++i)
      require(source().has_value(), ErrorCode::EmptySource, "source exhausted while skipping to the checkpoint");
  } else {
    if (initial) {
      out.dict = *initial;
    } else {
      std::mt19937_64 rng = round_rng(config.seed, -1);
      out.dict = init_dictionary(config, rng);
    }
    out.memory = MemoryState::empty(config.modalities, config.atoms, config.kernel, config.gamma);
  }
  require(out.dict.modalities() == config.modalities && out.dict.atoms() == config.atoms &&
              out.dict.kernel_extent() == config.kernel,
          ErrorCode::DimensionMismatch, "starting dictionary does not match the training configuration");

  bool first = true;
  for (; round < config.rounds; ++round) {
    std::optional<StreamSample> frame = source();
    if (!frame) {
      require(!first || resume.has_value(), ErrorCode::EmptySource, "source yielded no samples");
      break;
    }
    first = false;
    require(frame->y.modalities() == config.modalities, ErrorCode::DimensionMismatch,
            "frame has " + std::to_string(frame->y.modalities()) + " modalities, config expects " +
                std::to_string(config.modalities));
    const auto started = std::chrono::steady_clock::now();
    std::mt19937_64 rng = round_rng(config.seed, round);
    const std::vector<StreamSample> batch = sample_patches(*frame, config.batch_size, config.patch, rng);
    RoundResult r = train_round(out.dict, out.memory, batch, config);
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    out.dict = std::move(r.dict);
    out.memory = std::move(r.memory);
    for (std::size_t i = 0; i < batch.size(); ++i)
      out.log.push_back({round + 1, i, r.diagnostics.sample_costs[i], r.diagnostics.sparsity[i],
                         r.diagnostics.surrogate_before, r.diagnostics.surrogate_after, r.diagnostics.dead_kernels,
                         ms});
    if (hooks.on_round) hooks.on_round(out.dict, round + 1, *frame);
    if (hooks.on_checkpoint && config.checkpoint_every > 0 && (round + 1) % config.checkpoint_every == 0)
      hooks.on_checkpoint(Checkpoint{out.dict, out.memory, round + 1});
  }
  out.rounds_done = round;
  return out;
}

}  // namespace ocdl
