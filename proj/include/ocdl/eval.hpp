#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ocdl/trainer.hpp"
#include "ocdl/types.hpp"

namespace ocdl::eval {

inline constexpr double kPsnrCap = 99.0;
inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();

// Modality 0 is sensed by identity, the others by a random mask keeping
// ceil(N / factor) pixels. Gaussian noise has std range / 10^(psnr_db / 20).
StreamSample synthesize_measurements(const ImageStack& truth, int subsample_factor, double noise_psnr_db,
                                     std::mt19937_64& rng);

double dynamic_range(const Image& x);

// PSNR over the pixels where mask == 0; peak defaults to the dynamic range of x_ref.
double psnr_missing(const Image& x_ref, const Image& x_pred, const Image& mask,
                    std::optional<double> peak = std::nullopt);

// Inverse-distance weighting (power 2) over the 4 nearest observed pixels.
Image linear_baseline(const Image& y, const Image& mask);

// Piecewise-planar depth and shaded, textured intensity sharing region edges.
// Returns {intensity, depth}.
ImageStack synthetic_scene(std::size_t n1, std::size_t n2, std::mt19937_64& rng);

// Frames of a scene whose shapes drift a fraction of a pixel per frame.
std::vector<ImageStack> synthetic_video(std::size_t n1, std::size_t n2, std::size_t frames, std::mt19937_64& rng);

enum class PredictionMode { DictPlusLowpass, XHat };

struct ExperimentSpec {
  enum class Scene { SyntheticShapes, FromFiles };
  Scene scene = Scene::SyntheticShapes;
  Extent frame{64, 64};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  int subsample_factor = 2;
  double noise_psnr_db = 30.0;
  TrainConfig train;
  PredictionMode mode = PredictionMode::DictPlusLowpass;
  // Rounds on separate training scenes, then rounds on the test frame itself.
  int global_rounds = 40;
  int specialize_rounds = 0;
  std::size_t training_scenes = 8;
  // Used when scene == FromFiles.
  std::vector<ImageStack> frames;

  void validate() const;
};

struct MetricRow {
  std::string method;
  int factor = 0;
  std::uint64_t seed = 0;
  double psnr_db = 0.0;
  double wall_ms = 0.0;

  friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

// Reconstruct a sensed frame with a dictionary and return the chosen prediction.
ImageStack reconstruct(const StreamSample& frame, const Dictionary& dict, const SolverParams& params,
                       double lowpass_sigma, PredictionMode mode);

// Rows for methods linear, proposed-delta-dict and proposed-learned, one per seed.
std::vector<MetricRow> run_experiment(const ExperimentSpec& spec);

struct StreamRow {
  std::size_t frame = 0;
  double psnr_delta_db = 0.0;
};

struct StreamSpec {
  Extent frame{64, 64};
  std::size_t frames = 30;
  std::uint64_t seed = 7;
  int subsample_factor = 2;
  double noise_psnr_db = 30.0;
  TrainConfig train;
  PredictionMode mode = PredictionMode::DictPlusLowpass;
};

// One training round per frame; each frame is then reconstructed with the
// current and with the initial delta dictionary and the PSNR gain recorded.
std::vector<StreamRow> run_stream_experiment(const StreamSpec& spec);

void write_metrics_csv(std::ostream& os, const std::vector<MetricRow>& rows);
std::vector<MetricRow> parse_metrics_csv(std::istream& is);
void write_stream_csv(std::ostream& os, const std::vector<StreamRow>& rows);

}  // namespace ocdl::eval
