// ocdl: synthesize data, train a dictionary, reconstruct and evaluate.
//
// Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numerical failure.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>

#include "ocdl/error.hpp"
#include "ocdl/eval.hpp"
#include "ocdl/io.hpp"
#include "ocdl/sparse_coder.hpp"
#include "ocdl/trainer.hpp"

namespace fs = std::filesystem;
using namespace ocdl;

namespace {

enum Exit { kOk = 0, kConfig = 2, kData = 3, kNumeric = 4 };

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::InvalidArgument:
      return kConfig;
    case ErrorCode::NonFiniteCost:
      return kNumeric;
    default:
      return kData;
  }
}

ImageStack mask_stack(const SensingOps& ops) {
  std::vector<Image> masks;
  for (const SensingOp& op : ops) masks.push_back(op.mask_image());
  return ImageStack(std::move(masks));
}

SensingOps ops_from_masks(const ImageStack& masks) {
  SensingOps ops;
  for (const Image& m : masks) {
    const bool full = std::all_of(m.values().begin(), m.values().end(), [](double v) { return v == 1.0; });
    ops.push_back(full ? SensingOp::identity(m.extent()) : SensingOp::mask(m));
  }
  return ops;
}

void write_stack(const fs::path& dir, const std::string& stem, const ImageStack& s) {
  io::save_tensor(dir / (stem + ".mdt"), io::to_tensor(s));
  for (std::size_t l = 0; l < s.modalities(); ++l)
    io::write_pgm_preview(dir / (stem + "_" + std::to_string(l) + ".pgm"), s[l]);
}

// A data directory holds meas.mdt + mask.mdt (and optionally truth.mdt),
// either directly or in frame_NNNN subdirectories.
std::vector<fs::path> frame_dirs(const fs::path& data) {
  require(fs::is_directory(data), ErrorCode::IoError, "data directory " + data.string() + " not found");
  if (fs::exists(data / "meas.mdt")) return {data};
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(data))
    if (entry.is_directory() && entry.path().filename().string().starts_with("frame_")) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  require(!dirs.empty(), ErrorCode::IoError, "no frames under " + data.string());
  return dirs;
}

StreamSample load_frame(const fs::path& dir) {
  StreamSample s;
  s.y = io::stack_from_tensor(io::load_tensor(dir / "meas.mdt"));
  const ImageStack masks = io::stack_from_tensor(io::load_tensor(dir / "mask.mdt"));
  require(masks.modalities() == s.y.modalities() && masks.extent() == s.y.extent(), ErrorCode::DimensionMismatch,
          "mask " + std::to_string(masks.modalities()) + "x" + to_string(masks.extent()) + " vs measurements " +
              std::to_string(s.y.modalities()) + "x" + to_string(s.y.extent()));
  s.sensing = ops_from_masks(masks);
  if (fs::exists(dir / "truth.mdt")) s.truth = io::stack_from_tensor(io::load_tensor(dir / "truth.mdt"));
  return s;
}

fs::path resolve_file(const fs::path& p, const std::string& default_name) {
  return fs::is_directory(p) ? p / default_name : p;
}

int cmd_synth(const fs::path& out, std::uint64_t seed, std::size_t size, std::size_t frames, int factor,
              double noise_db) {
  require(frames >= 1, ErrorCode::InvalidArgument, "--frames must be >= 1");
  require(size >= 8, ErrorCode::InvalidArgument, "--size must be >= 8");
  require(factor >= 1, ErrorCode::InvalidArgument, "--factor must be >= 1");
  fs::create_directories(out);
  std::mt19937_64 rng(seed);
  std::vector<ImageStack> truth;
  if (frames == 1)
    truth.push_back(eval::synthetic_scene(size, size, rng));
  else
    truth = eval::synthetic_video(size, size, frames, rng);
  for (std::size_t f = 0; f < truth.size(); ++f) {
    fs::path dir = out;
    if (frames > 1) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%04zu", f);
      dir /= name;
      fs::create_directories(dir);
    }
    const StreamSample s = eval::synthesize_measurements(truth[f], factor, noise_db, rng);
    write_stack(dir, "truth", truth[f]);
    write_stack(dir, "meas", s.y);
    write_stack(dir, "mask", mask_stack(s.sensing));
  }
  return kOk;
}

int cmd_train(const fs::path& config_path, const fs::path& data, const fs::path& out,
              const std::optional<fs::path>& resume_path, std::optional<fs::path> ckpt_dir,
              std::optional<fs::path> log_path) {
  const io::Config config = io::load_config(config_path);
  const std::vector<fs::path> dirs = frame_dirs(data);
  std::vector<StreamSample> frames;
  for (const fs::path& d : dirs) frames.push_back(load_frame(d));

  std::size_t next = 0;
  SampleSource source = [&]() -> std::optional<StreamSample> { return frames[next++ % frames.size()]; };

  std::optional<Checkpoint> resume;
  if (resume_path) resume = io::load_checkpoint(*resume_path);

  const fs::path out_dir = out.has_parent_path() ? out.parent_path() : fs::path(".");
  if (!ckpt_dir) ckpt_dir = out_dir;
  fs::create_directories(*ckpt_dir);
  StreamHooks hooks;
  hooks.on_checkpoint = [&](const Checkpoint& c) {
    char name[32];
    std::snprintf(name, sizeof name, "ckpt_%06lld.mdt", static_cast<long long>(c.round));
    io::save_checkpoint(*ckpt_dir / name, c);
  };

  const TrainOutcome result = train_stream(source, config.train, resume, hooks);
  io::save_tensor(out, io::to_tensor(result.dict));

  if (!log_path) log_path = fs::path(out.string() + ".log.csv");
  std::ostringstream log;
  log << "round,sample,cost,sparsity,surrogate_before,surrogate_after,dead_kernels,wall_ms\n";
  for (const TrainLogRow& r : result.log)
    log << r.round << ',' << r.sample << ',' << r.cost << ',' << r.sparsity << ',' << r.surrogate_before << ','
        << r.surrogate_after << ',' << r.dead_kernels << ',' << r.wall_ms << '\n';
  io::atomic_write(*log_path, log.str());
  std::cout << "rounds " << result.rounds_done << "\n";
  return kOk;
}

int cmd_reconstruct(const fs::path& dict_path, const fs::path& meas_dir, const fs::path& config_path,
                    const fs::path& out) {
  const io::Config config = io::load_config(config_path);
  const Dictionary dict = io::load_dictionary(dict_path);
  const StreamSample frame = load_frame(meas_dir);
  require(dict.modalities() == frame.y.modalities(), ErrorCode::DimensionMismatch,
          "dictionary [" + std::to_string(dict.modalities()) + "," + std::to_string(dict.atoms()) + "," +
              to_string(dict.kernel_extent()) + "] vs measurements [" + std::to_string(frame.y.modalities()) + "," +
              to_string(frame.y.extent()) + "]");
  validate_problem(frame.y.modalities(), frame.y.extent(), frame.sensing, dict);

  const ImageStack x_lo = lowpass_stack(frame, config.train.effective_sigma());
  const CodingProblem problem{frame.y, frame.sensing, dict, x_lo, config.train.solver};
  const CodingResult r = solve(problem);

  fs::create_directories(out);
  write_stack(out, "pred_lowpass", predict(dict, r.alpha_hat, x_lo));
  write_stack(out, "pred_xhat", r.x_hat);
  std::ostringstream msg;
  msg.precision(17);
  msg << "cost " << (r.cost_trace.empty() ? 0.0 : r.cost_trace.back()) << " iterations " << r.iterations << "\n";
  std::cout << msg.str();
  return kOk;
}

int cmd_eval(const fs::path& truth_path, const fs::path& pred_path, const fs::path& mask_path,
             const std::string& prediction) {
  const ImageStack truth = io::stack_from_tensor(io::load_tensor(resolve_file(truth_path, "truth.mdt")));
  const ImageStack pred =
      io::stack_from_tensor(io::load_tensor(resolve_file(pred_path, "pred_" + prediction + ".mdt")));
  const ImageStack masks = io::stack_from_tensor(io::load_tensor(resolve_file(mask_path, "mask.mdt")));
  require(truth.modalities() == pred.modalities() && truth.extent() == pred.extent() &&
              masks.modalities() == truth.modalities() && masks.extent() == truth.extent(),
          ErrorCode::DimensionMismatch,
          "truth [" + std::to_string(truth.modalities()) + "," + to_string(truth.extent()) + "] pred [" +
              std::to_string(pred.modalities()) + "," + to_string(pred.extent()) + "] mask [" +
              std::to_string(masks.modalities()) + "," + to_string(masks.extent()) + "]");
  const std::size_t depth = truth.modalities() - 1;
  const Image& mask = masks[depth];
  const double observed = std::count(mask.values().begin(), mask.values().end(), 1.0);
  const int factor = observed > 0 ? static_cast<int>(std::lround(static_cast<double>(mask.size()) / observed)) : 0;
  const double psnr = eval::psnr_missing(truth[depth], pred[depth], mask);
  eval::write_metrics_csv(std::cout, {{"proposed", factor, 0, psnr, 0.0}});
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online convolutional dictionary learning for multimodal reconstruction"};
  app.require_subcommand(1);

  fs::path synth_out;
  std::uint64_t synth_seed = 1;
  std::size_t synth_size = 64, synth_frames = 1;
  int synth_factor = 2;
  double synth_noise = 30.0;
  auto* synth = app.add_subcommand("synth", "Write a synthetic scene and its measurements");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "Random seed");
  synth->add_option("--size", synth_size, "Frame side length");
  synth->add_option("--frames", synth_frames, "Number of frames");
  synth->add_option("--factor", synth_factor, "Depth subsampling factor");
  synth->add_option("--noise-db", synth_noise, "Noise level as PSNR in dB");

  fs::path train_config, train_data, train_out;
  std::optional<fs::path> train_resume, train_ckpt, train_log;
  auto* train = app.add_subcommand("train", "Learn a dictionary from a data directory");
  train->add_option("--config", train_config)->required();
  train->add_option("--data", train_data)->required();
  train->add_option("--out", train_out, "Dictionary TensorFile")->required();
  train->add_option("--resume", train_resume, "Checkpoint to resume from");
  train->add_option("--checkpoint-dir", train_ckpt, "Checkpoint directory (default: next to --out)");
  train->add_option("--log", train_log, "CSV training log (default: <out>.log.csv)");

  fs::path rec_dict, rec_meas, rec_config, rec_out;
  auto* rec = app.add_subcommand("reconstruct", "Reconstruct a frame with a dictionary");
  rec->add_option("--dict", rec_dict)->required();
  rec->add_option("--measurements", rec_meas)->required();
  rec->add_option("--config", rec_config)->required();
  rec->add_option("--out", rec_out)->required();

  fs::path ev_truth, ev_pred, ev_mask;
  std::string ev_which = "lowpass";
  auto* ev = app.add_subcommand("eval", "PSNR over the missing depth pixels");
  ev->add_option("--truth", ev_truth)->required();
  ev->add_option("--pred", ev_pred)->required();
  ev->add_option("--mask", ev_mask)->required();
  ev->add_option("--prediction", ev_which, "lowpass or xhat when --pred is a directory")
      ->check(CLI::IsMember({"lowpass", "xhat"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*synth) return cmd_synth(synth_out, synth_seed, synth_size, synth_frames, synth_factor, synth_noise);
    if (*train) return cmd_train(train_config, train_data, train_out, train_resume, train_ckpt, train_log);
    if (*rec) return cmd_reconstruct(rec_dict, rec_meas, rec_config, rec_out);
    if (*ev) return cmd_eval(ev_truth, ev_pred, ev_mask, ev_which);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}
