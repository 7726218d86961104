#include "ocdl/eval.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "ocdl/error.hpp"
#include "ocdl/sparse_coder.hpp"

namespace ocdl::eval {

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace

// --- measurements ------------------------------------------------------------

double dynamic_range(const Image& x) {
  if (x.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(x.values().begin(), x.values().end());
  return *hi - *lo;
}

StreamSample synthesize_measurements(const ImageStack& truth, int subsample_factor, double noise_psnr_db,
                                     std::mt19937_64& rng) {
  require(subsample_factor >= 1, ErrorCode::InvalidArgument, "subsample factor must be at least 1");
  require(!std::isnan(noise_psnr_db), ErrorCode::InvalidArgument, "noise PSNR is NaN");
  for (const Image& x : truth) require(all_finite(x), ErrorCode::InvalidArgument, "ground truth is not finite");
  const Extent n = truth.extent();
  const std::size_t N = n.size();

  StreamSample s;
  s.truth = truth;
  std::vector<Image> ys;
  for (std::size_t l = 0; l < truth.modalities(); ++l) {
    if (l == 0) {
      s.sensing.push_back(SensingOp::identity(n));
    } else {
      std::vector<std::size_t> idx(N);
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      std::shuffle(idx.begin(), idx.end(), rng);
      const std::size_t keep = (N + static_cast<std::size_t>(subsample_factor) - 1) / subsample_factor;
      Image phi(n);
      for (std::size_t i = 0; i < keep; ++i) phi.data()[idx[i]] = 1.0;
      s.sensing.push_back(SensingOp::mask(std::move(phi)));
    }
    Image y = truth[l];
    if (std::isfinite(noise_psnr_db)) {
      const double sigma = dynamic_range(truth[l]) / std::pow(10.0, noise_psnr_db / 20.0);
      std::normal_distribution<double> noise(0.0, 1.0);
      for (double& v : y.values()) v += sigma * noise(rng);
    }
    ys.push_back(s.sensing[l].apply(y));
  }
  s.y = ImageStack(std::move(ys), truth.names());
  return s;
}

double psnr_missing(const Image& x_ref, const Image& x_pred, const Image& mask, std::optional<double> peak) {
  require(x_ref.extent() == x_pred.extent() && x_ref.extent() == mask.extent(), ErrorCode::DimensionMismatch,
          "reference " + to_string(x_ref.extent()) + ", prediction " + to_string(x_pred.extent()) + ", mask " +
              to_string(mask.extent()));
  double se = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < x_ref.size(); ++i) {
    if (mask.data()[i] != 0.0) continue;
    const double d = x_ref.data()[i] - x_pred.data()[i];
    se += d * d;
    ++count;
  }
  require(count > 0, ErrorCode::NoMissingPixels, "mask has no missing pixel");
  const double pk = peak.value_or(dynamic_range(x_ref));
  const double mse = se / static_cast<double>(count);
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(pk * pk / mse));
}

Image linear_baseline(const Image& y, const Image& mask) {
  require(y.extent() == mask.extent(), ErrorCode::DimensionMismatch,
          "data " + to_string(y.extent()) + " vs mask " + to_string(mask.extent()));
  const long n1 = static_cast<long>(y.rows()), n2 = static_cast<long>(y.cols());
  std::size_t observed = 0;
  for (double v : mask.values()) observed += v != 0.0;
  require(observed > 0, ErrorCode::AllMasked, "no observed pixel to interpolate from");
  const std::size_t want = std::min<std::size_t>(4, observed);

  Image out(y.extent());
  struct Candidate {
    long d2;
    long index;
  };
  std::vector<Candidate> cand;
  for (long r = 0; r < n1; ++r)
    for (long c = 0; c < n2; ++c) {
      if (mask(r, c) != 0.0) {
        out(r, c) = y(r, c);
        continue;
      }
      // Grow square rings; every point within Euclidean distance R lies within ring R.
      cand.clear();
      for (long R = 1;; ++R) {
        for (long dr = -R; dr <= R; ++dr)
          for (long dc = -R; dc <= R; ++dc) {
            if (std::max(std::abs(dr), std::abs(dc)) != R) continue;
            const long rr = r + dr, cc = c + dc;
            if (rr < 0 || rr >= n1 || cc < 0 || cc >= n2 || mask(rr, cc) == 0.0) continue;
            cand.push_back({dr * dr + dc * dc, rr * n2 + cc});
          }
        const long within = std::count_if(cand.begin(), cand.end(), [R](const Candidate& k) { return k.d2 <= R * R; });
        const bool exhausted = R > std::max(n1, n2);
        if (static_cast<std::size_t>(within) >= want || exhausted) break;
      }
      std::sort(cand.begin(), cand.end(),
                [](const Candidate& a, const Candidate& b) { return a.d2 != b.d2 ? a.d2 < b.d2 : a.index < b.index; });
      // Offsets from the nearest value keep constant neighbourhoods exact.
      const double base = y.data()[cand.front().index];
      double wsum = 0.0, acc = 0.0;
      for (std::size_t i = 0; i < want && i < cand.size(); ++i) {
        const double w = 1.0 / static_cast<double>(cand[i].d2);
        wsum += w;
        acc += w * (y.data()[cand[i].index] - base);
      }
      out(r, c) = base + acc / wsum;
    }
  return out;
}

// --- synthetic scenes -------------------------------------------------------------

namespace {

struct Shape {
  bool disc = false;
  double cy = 0, cx = 0;     // center
  double hy = 0, hx = 0;     // half extents (disc uses hy as radius)
  double vy = 0, vx = 0;     // drift per frame
  double depth = 0, gy = 0, gx = 0;
  double albedo = 0;
  double tex_amp = 0, tex_freq = 0, tex_theta = 0, tex_phase = 0;
};

struct SceneModel {
  Shape background;
  std::vector<Shape> shapes;
};

SceneModel draw_scene(std::size_t n1, std::size_t n2, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uni = [&](double a, double b) { return a + (b - a) * u01(rng); };
  const double scale = static_cast<double>(std::min(n1, n2));
  std::vector<double> albedos;
  auto pick_albedo = [&] {
    double a = uni(0.1, 0.9);
    for (int tries = 0; tries < 200; ++tries) {
      const bool ok = std::all_of(albedos.begin(), albedos.end(), [&](double b) { return std::abs(a - b) >= 0.12; });
      if (ok) break;
      a = uni(0.1, 0.9);
    }
    albedos.push_back(a);
    return a;
  };
  auto texture = [&](Shape& s) {
    s.tex_amp = uni(0.01, 0.03);
    s.tex_freq = uni(0.3, 0.8);
    s.tex_theta = uni(0.0, 3.14159265358979);
    s.tex_phase = uni(0.0, 6.28318530717959);
  };

  SceneModel m;
  Shape& bg = m.background;
  bg.cy = 0.5 * static_cast<double>(n1);
  bg.cx = 0.5 * static_cast<double>(n2);
  bg.depth = uni(0.75, 0.9);
  bg.gy = uni(-0.1, 0.1) / scale;
  bg.gx = uni(-0.1, 0.1) / scale;
  bg.albedo = pick_albedo();
  texture(bg);

  const std::size_t count = std::max<std::size_t>(3, static_cast<std::size_t>(std::lround(scale / 16.0)));
  for (std::size_t i = 0; i < count; ++i) {
    Shape s;
    s.disc = u01(rng) < 0.5;
    s.cy = uni(0.15, 0.85) * static_cast<double>(n1);
    s.cx = uni(0.15, 0.85) * static_cast<double>(n2);
    s.hy = uni(0.1, 0.22) * scale;
    s.hx = s.disc ? s.hy : uni(0.1, 0.22) * scale;
    const double speed = uni(0.3, 1.0);
    const double heading = uni(0.0, 6.28318530717959);
    s.vy = speed * std::sin(heading);
    s.vx = speed * std::cos(heading);
    s.depth = uni(0.15, 0.65);
    s.gy = uni(-0.25, 0.25) / scale;
    s.gx = uni(-0.25, 0.25) / scale;
    s.albedo = pick_albedo();
    texture(s);
    m.shapes.push_back(s);
  }
  return m;
}

ImageStack render(const SceneModel& m, std::size_t n1, std::size_t n2, double frame) {
  Image intensity(n1, n2), depth(n1, n2);
  for (std::size_t r = 0; r < n1; ++r)
    for (std::size_t c = 0; c < n2; ++c) {
      const double y = static_cast<double>(r), x = static_cast<double>(c);
      const Shape* hit = &m.background;
      double oy = m.background.cy, ox = m.background.cx;
      for (const Shape& s : m.shapes) {
        const double cy = s.cy + s.vy * frame, cx = s.cx + s.vx * frame;
        const double dy = y - cy, dx = x - cx;
        const bool inside = s.disc ? dy * dy + dx * dx <= s.hy * s.hy : std::abs(dy) <= s.hy && std::abs(dx) <= s.hx;
        if (inside) {
          hit = &s;
          oy = cy;
          ox = cx;
        }
      }
      const double ly = y - oy, lx = x - ox;
      const double d = hit->depth + hit->gy * ly + hit->gx * lx;
      const double tex =
          hit->tex_amp *
          std::sin(hit->tex_freq * (std::cos(hit->tex_theta) * ly + std::sin(hit->tex_theta) * lx) + hit->tex_phase);
      // Nearer surfaces are lit more strongly.
      depth(r, c) = d;
      intensity(r, c) = hit->albedo + 0.3 * (hit->depth - d) + tex;
    }
  return ImageStack({std::move(intensity), std::move(depth)}, {"intensity", "depth"});
}

}  // namespace

ImageStack synthetic_scene(std::size_t n1, std::size_t n2, std::mt19937_64& rng) {
  require(n1 >= 1 && n2 >= 1, ErrorCode::InvalidArgument, "scene must be nonempty");
  return render(draw_scene(n1, n2, rng), n1, n2, 0.0);
}

std::vector<ImageStack> synthetic_video(std::size_t n1, std::size_t n2, std::size_t frames, std::mt19937_64& rng) {
  require(n1 >= 1 && n2 >= 1, ErrorCode::InvalidArgument, "scene must be nonempty");
  const SceneModel m = draw_scene(n1, n2, rng);
  std::vector<ImageStack> out;
  out.reserve(frames);
  for (std::size_t f = 0; f < frames; ++f) out.push_back(render(m, n1, n2, static_cast<double>(f)));
  return out;
}

// --- experiments ---------------------------------------------------------------------

void ExperimentSpec::validate() const {
  require(subsample_factor >= 1, ErrorCode::InvalidArgument, "subsample factor must be at least 1");
  require(!std::isnan(noise_psnr_db), ErrorCode::InvalidArgument, "noise PSNR is NaN");
  require(global_rounds >= 0 && specialize_rounds >= 0, ErrorCode::InvalidArgument, "round counts must be >= 0");
  require(training_scenes >= 1, ErrorCode::InvalidArgument, "need at least one training scene");
  require(scene != Scene::FromFiles || !frames.empty(), ErrorCode::InvalidArgument, "no frames given");
  train.validate();
}

ImageStack reconstruct(const StreamSample& frame, const Dictionary& dict, const SolverParams& params,
                       double lowpass_sigma, PredictionMode mode) {
  const ImageStack x_lo = lowpass_stack(frame, lowpass_sigma);
  const CodingProblem problem{frame.y, frame.sensing, dict, x_lo, params};
  CodingResult r = solve(problem);
  if (mode == PredictionMode::XHat) return std::move(r.x_hat);
  return predict(dict, r.alpha_hat, x_lo);
}

namespace {

bool has_missing(const Image& mask) {
  return std::any_of(mask.values().begin(), mask.values().end(), [](double v) { return v == 0.0; });
}

double depth_psnr(const StreamSample& frame, const Image& pred) {
  const Image mask = frame.sensing.back().mask_image();
  if (!has_missing(mask)) return kPsnrCap;
  require(frame.truth.has_value(), ErrorCode::InvalidArgument, "frame carries no ground truth");
  return psnr_missing((*frame.truth)[frame.truth->modalities() - 1], pred, mask);
}

}  // namespace

std::vector<MetricRow> run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  TrainConfig delta_cfg = spec.train;
  delta_cfg.init = DictInit::Deltas;
  std::mt19937_64 init_rng(0);
  const Dictionary deltas = init_dictionary(delta_cfg, init_rng);
  const double sigma = spec.train.effective_sigma();

  // Global training on scenes disjoint from the evaluated ones.
  Dictionary global;
  {
    std::mt19937_64 init = round_rng(spec.train.seed, -1);
    global = init_dictionary(spec.train, init);
  }
  if (spec.global_rounds > 0) {
    std::vector<StreamSample> training;
    for (std::size_t i = 0; i < spec.training_scenes; ++i) {
      std::mt19937_64 rng(0x9e3779b97f4a7c15ULL ^ (spec.train.seed * 1000003ULL + i));
      ImageStack truth = spec.scene == ExperimentSpec::Scene::FromFiles
                             ? spec.frames[i % spec.frames.size()]
                             : synthetic_scene(spec.frame.rows, spec.frame.cols, rng);
      training.push_back(synthesize_measurements(truth, spec.subsample_factor, spec.noise_psnr_db, rng));
    }
    std::size_t next = 0;
    SampleSource source = [&]() -> std::optional<StreamSample> { return training[next++ % training.size()]; };
    TrainConfig cfg = spec.train;
    cfg.rounds = spec.global_rounds;
    global = train_stream(source, cfg).dict;
  }

  std::vector<MetricRow> rows;
  const std::size_t tests = spec.scene == ExperimentSpec::Scene::FromFiles ? spec.frames.size() : spec.seeds.size();
  for (std::size_t i = 0; i < tests; ++i) {
    const std::uint64_t seed = spec.scene == ExperimentSpec::Scene::FromFiles ? i : spec.seeds[i];
    std::mt19937_64 rng(seed);
    const ImageStack truth = spec.scene == ExperimentSpec::Scene::FromFiles
                                 ? spec.frames[i]
                                 : synthetic_scene(spec.frame.rows, spec.frame.cols, rng);
    const StreamSample frame = synthesize_measurements(truth, spec.subsample_factor, spec.noise_psnr_db, rng);
    const std::size_t depth = truth.modalities() - 1;

    auto t0 = std::chrono::steady_clock::now();
    const Image lin = linear_baseline(frame.y[depth], frame.sensing[depth].mask_image());
    rows.push_back({"linear", spec.subsample_factor, seed, depth_psnr(frame, lin), elapsed_ms(t0)});

    t0 = std::chrono::steady_clock::now();
    const ImageStack pd = reconstruct(frame, deltas, spec.train.solver, sigma, spec.mode);
    rows.push_back({"proposed-delta-dict", spec.subsample_factor, seed, depth_psnr(frame, pd[depth]), elapsed_ms(t0)});

    t0 = std::chrono::steady_clock::now();
    Dictionary learned = global;
    if (spec.specialize_rounds > 0) {
      SampleSource same = [&]() -> std::optional<StreamSample> { return frame; };
      TrainConfig cfg = spec.train;
      cfg.rounds = spec.specialize_rounds;
      cfg.seed = spec.train.seed ^ seed;
      learned = train_stream(same, cfg, std::nullopt, {}, global).dict;
    }
    const ImageStack pl = reconstruct(frame, learned, spec.train.solver, sigma, spec.mode);
    rows.push_back({"proposed-learned", spec.subsample_factor, seed, depth_psnr(frame, pl[depth]), elapsed_ms(t0)});
  }
  return rows;
}

std::vector<StreamRow> run_stream_experiment(const StreamSpec& spec) {
  spec.train.validate();
  std::mt19937_64 rng(spec.seed);
  const std::vector<ImageStack> video = synthetic_video(spec.frame.rows, spec.frame.cols, spec.frames, rng);
  std::vector<StreamSample> sensed;
  for (const ImageStack& f : video)
    sensed.push_back(synthesize_measurements(f, spec.subsample_factor, spec.noise_psnr_db, rng));

  TrainConfig cfg = spec.train;
  cfg.init = DictInit::Deltas;
  cfg.rounds = static_cast<int>(spec.frames);
  std::mt19937_64 init_rng(0);
  const Dictionary deltas = init_dictionary(cfg, init_rng);
  const double sigma = cfg.effective_sigma();

  std::vector<StreamRow> rows;
  std::size_t next = 0;
  SampleSource source = [&]() -> std::optional<StreamSample> {
    if (next >= sensed.size()) return std::nullopt;
    return sensed[next++];
  };
  StreamHooks hooks;
  hooks.on_round = [&](const Dictionary& dict, std::int64_t round, const StreamSample& frame) {
    const std::size_t depth = frame.y.modalities() - 1;
    const double learned = depth_psnr(frame, reconstruct(frame, dict, cfg.solver, sigma, spec.mode)[depth]);
    const double delta = depth_psnr(frame, reconstruct(frame, deltas, cfg.solver, sigma, spec.mode)[depth]);
    rows.push_back({static_cast<std::size_t>(round - 1), learned - delta});
  };
  train_stream(source, cfg, std::nullopt, hooks);
  return rows;
}

// --- CSV -------------------------------------------------------------------------------

namespace {

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

template <typename T>
T parse_number(std::string_view s, std::size_t line) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc{} && ptr == s.data() + s.size(), ErrorCode::IoError,
          "bad number '" + std::string(s) + "' on CSV line " + std::to_string(line));
  return v;
}

}  // namespace

void write_metrics_csv(std::ostream& os, const std::vector<MetricRow>& rows) {
  os << "# psnr_peak=dynamic_range_of_truth\n";
  os << "method,factor,seed,psnr_db,wall_ms\n";
  for (const MetricRow& r : rows)
    os << r.method << ',' << r.factor << ',' << r.seed << ',' << format_double(r.psnr_db) << ','
       << format_double(r.wall_ms) << '\n';
}

std::vector<MetricRow> parse_metrics_csv(std::istream& is) {
  std::vector<MetricRow> rows;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    if (!header) {
      require(line == "method,factor,seed,psnr_db,wall_ms", ErrorCode::IoError,
              "unexpected CSV header '" + line + "'");
      header = true;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    require(cells.size() == 5, ErrorCode::IoError, "CSV line " + std::to_string(lineno) + " has " +
                                                       std::to_string(cells.size()) + " fields, expected 5");
    rows.push_back({cells[0], parse_number<int>(cells[1], lineno), parse_number<std::uint64_t>(cells[2], lineno),
                    parse_number<double>(cells[3], lineno), parse_number<double>(cells[4], lineno)});
  }
  require(header, ErrorCode::IoError, "CSV has no header");
  return rows;
}

void write_stream_csv(std::ostream& os, const std::vector<StreamRow>& rows) {
  os << "frame,psnr_delta_db\n";
  for (const StreamRow& r : rows) os << r.frame << ',' << format_double(r.psnr_delta_db) << '\n';
}

}  // namespace ocdl::eval
