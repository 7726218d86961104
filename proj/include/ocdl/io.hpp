#pragma once

// File formats.
//
// TensorFile (little-endian):
//   magic   "MDT1"
//   version u32   1 = binary32 payload, 2 = binary64 payload
//   rank    u32   <= 6
//   dims    rank x u32
//   payload row-major values
//
// A checkpoint is four binary64 TensorFiles back to back:
//   meta [3] = (round, t, gamma), dictionary [L,K,p1,p2],
//   memory vector [L,K,p1,p2], cross-kernels [L,K,K,2p1-1,2p2-1].

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ocdl/eval.hpp"
#include "ocdl/image.hpp"
#include "ocdl/trainer.hpp"
#include "ocdl/types.hpp"

namespace ocdl::io {

enum class Precision : std::uint32_t { Float32 = 1, Float64 = 2 };

inline constexpr std::size_t kMaxRank = 6;

void write_tensor(std::ostream& os, const Tensor& t, Precision precision = Precision::Float32);
// `name` labels error messages.
Tensor read_tensor(std::istream& is, const std::string& name = "<stream>");

// Writes to a temporary sibling, then renames over the target.
void save_tensor(const std::filesystem::path& path, const Tensor& t, Precision precision = Precision::Float32);
Tensor load_tensor(const std::filesystem::path& path);

Tensor to_tensor(const ImageStack& stack);
ImageStack stack_from_tensor(const Tensor& t);
Tensor to_tensor(const ImageBank& bank);
Dictionary dictionary_from_tensor(const Tensor& t);
// Loads [L,K,p1,p2]; kernels whose norm exceeds 1 only by binary32 rounding
// (at most kRoundingSlack) are rescaled to unit norm.
Dictionary load_dictionary(const std::filesystem::path& path);
inline constexpr double kRoundingSlack = 1e-6;
Tensor image_to_tensor(const Image& im);
Image image_from_tensor(const Tensor& t);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// 8-bit binary PGM, min-max scaled; the scale goes to "<path>.scale".
void write_pgm_preview(const std::filesystem::path& path, const Image& im);

struct PgmImage {
  std::size_t width = 0;
  std::size_t height = 0;
  int maxval = 0;
  std::vector<std::uint8_t> pixels;
};
PgmImage read_pgm(const std::filesystem::path& path);

void atomic_write(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

// Flat "key = value" configuration covering training, solver and experiment keys.
struct Config {
  TrainConfig train;
  int subsample_factor = 2;
  double noise_psnr_db = 30.0;
  eval::PredictionMode prediction = eval::PredictionMode::DictPlusLowpass;
  eval::ExperimentSpec::Scene scene = eval::ExperimentSpec::Scene::SyntheticShapes;
  int global_rounds = 40;
  int specialize_rounds = 0;

  friend bool operator==(const Config&, const Config&) = default;
};

// Unknown keys, malformed lines and bad values raise ConfigError naming the line.
Config parse_config(const std::string& text);
Config load_config(const std::filesystem::path& path);
std::string print_config(const Config& config);

}  // namespace ocdl::io
