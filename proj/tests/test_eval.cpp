#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "ocdl/error.hpp"
#include "ocdl/eval.hpp"
#include "oracles.hpp"

using namespace ocdl;
using namespace ocdl::eval;

namespace {

Image random_mask(std::mt19937_64& rng, Extent n, double keep) {
  std::bernoulli_distribution b(keep);
  Image m(n);
  for (double& v : m.values()) v = b(rng) ? 1.0 : 0.0;
  return m;
}

double psnr_oracle(const Image& ref, const Image& pred, const Image& mask) {
  double lo = ref(0, 0), hi = ref(0, 0), se = 0.0;
  int count = 0;
  for (std::size_t r = 0; r < ref.rows(); ++r)
    for (std::size_t c = 0; c < ref.cols(); ++c) {
      lo = std::min(lo, ref(r, c));
      hi = std::max(hi, ref(r, c));
      if (mask(r, c) == 0.0) {
        se += (ref(r, c) - pred(r, c)) * (ref(r, c) - pred(r, c));
        ++count;
      }
    }
  return 10.0 * std::log10((hi - lo) * (hi - lo) / (se / count));
}

Image laplacian(const Image& x) {
  Image out(x.extent());
  for (std::size_t r = 1; r + 1 < x.rows(); ++r)
    for (std::size_t c = 1; c + 1 < x.cols(); ++c)
      out(r, c) = x(r - 1, c) + x(r + 1, c) + x(r, c - 1) + x(r, c + 1) - 4.0 * x(r, c);
  return out;
}

// Pixel differs from some 8-neighbour by more than `jump`.
bool is_edge(const Image& x, std::size_t r, std::size_t c, double jump) {
  for (int dr = -1; dr <= 1; ++dr)
    for (int dc = -1; dc <= 1; ++dc) {
      const long rr = static_cast<long>(r) + dr, cc = static_cast<long>(c) + dc;
      if (rr < 0 || cc < 0 || rr >= static_cast<long>(x.rows()) || cc >= static_cast<long>(x.cols())) continue;
      if (std::abs(x(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc)) - x(r, c)) > jump) return true;
    }
  return false;
}

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::IoError;
}

}  // namespace

TEST_CASE("noiseless full sampling reproduces the truth") {
  std::mt19937_64 rng(1);
  const ImageStack truth = synthetic_scene(20, 24, rng);
  const StreamSample s = synthesize_measurements(truth, 1, kNoNoise, rng);
  CHECK(s.y == truth);
  CHECK(*s.truth == truth);
  CHECK(s.sensing[1].mask_image() == Image(truth.extent(), 1.0));
}

TEST_CASE("mask keeps ceil(N / factor) pixels") {
  std::mt19937_64 rng(2);
  const ImageStack truth = synthetic_scene(15, 13, rng);
  for (int factor : {2, 3, 4, 7}) {
    const StreamSample s = synthesize_measurements(truth, factor, 30.0, rng);
    const Image mask = s.sensing[1].mask_image();
    double kept = 0.0;
    for (double v : mask.values()) kept += v;
    CHECK(kept == static_cast<double>((195 + factor - 1) / factor));
    CHECK(s.sensing[0].mask_image() == Image(truth.extent(), 1.0));
  }
}

TEST_CASE("noise standard deviation follows the requested PSNR") {
  const std::size_t n = 1000;
  Image ramp(n, n);
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp.data()[i] = static_cast<double>(i) / static_cast<double>(n * n - 1);
  const ImageStack truth({ramp, 2.0 * ramp});
  std::mt19937_64 rng(3);
  const StreamSample s = synthesize_measurements(truth, 1, 30.0, rng);
  for (std::size_t l = 0; l < 2; ++l) {
    const double target = dynamic_range(truth[l]) / std::pow(10.0, 1.5);
    double sum = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < ramp.size(); ++i) {
      const double e = s.y[l].data()[i] - truth[l].data()[i];
      sum += e;
      sq += e * e;
    }
    const double mean = sum / static_cast<double>(ramp.size());
    const double sd = std::sqrt(sq / static_cast<double>(ramp.size()) - mean * mean);
    CHECK(std::abs(sd - target) <= 0.01 * target);
  }
}

TEST_CASE("measurements are reproducible") {
  std::mt19937_64 a(4), b(4);
  const ImageStack ta = synthetic_scene(16, 16, a), tb = synthetic_scene(16, 16, b);
  CHECK(ta == tb);
  const StreamSample sa = synthesize_measurements(ta, 3, 25.0, a), sb = synthesize_measurements(tb, 3, 25.0, b);
  CHECK(sa.y == sb.y);
  CHECK(sa.sensing[1].mask_image() == sb.sensing[1].mask_image());
}

TEST_CASE("psnr over missing pixels") {
  std::mt19937_64 rng(5);
  const Image ref = oracle::random_image(rng, {10, 10});
  const Image mask = random_mask(rng, {10, 10}, 0.5);
  CHECK(psnr_missing(ref, ref, mask) == kPsnrCap);

  Image x(4, 4), mask2(4, 4);
  x(0, 0) = 255.0;
  mask2(0, 0) = 1.0;
  mask2(1, 1) = 1.0;
  Image pred = x;
  for (std::size_t i = 0; i < 16; ++i)
    if (mask2.data()[i] == 0.0) pred.data()[i] += 10.0;
  const double db = psnr_missing(x, pred, mask2, 255.0);
  CHECK(db == doctest::Approx(20.0 * std::log10(25.5)).epsilon(1e-14));
  CHECK(std::round(db * 100.0) / 100.0 == 28.13);

  for (int trial = 0; trial < 20; ++trial) {
    const Image r = oracle::random_image(rng, {9, 11});
    const Image p = oracle::random_image(rng, {9, 11});
    const Image m = random_mask(rng, {9, 11}, 0.4);
    CHECK(std::abs(psnr_missing(r, p, m) - psnr_oracle(r, p, m)) <= 1e-10);

    // Observed pixels of the prediction do not matter.
    Image q = p;
    for (std::size_t i = 0; i < q.size(); ++i)
      if (m.data()[i] == 1.0) q.data()[i] = 1e6;
    CHECK(psnr_missing(r, q, m) == psnr_missing(r, p, m));
  }

  CHECK(code_of([&] { psnr_missing(ref, ref, Image(10, 10, 1.0)); }) == ErrorCode::NoMissingPixels);
  CHECK(code_of([&] { psnr_missing(ref, Image(9, 10), mask); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("linear baseline") {
  std::mt19937_64 rng(6);
  const Image y = oracle::random_image(rng, {12, 9});
  CHECK(linear_baseline(y, Image(y.extent(), 1.0)) == y);

  const Image mask = random_mask(rng, y.extent(), 0.3);
  Image constant(y.extent());
  for (std::size_t i = 0; i < y.size(); ++i) constant.data()[i] = mask.data()[i] * 1.75;
  const Image filled = linear_baseline(constant, mask);
  for (double v : filled.values()) CHECK(v == doctest::Approx(1.75).epsilon(1e-14));

  Image single(y.extent()), one(y.extent());
  single(4, 7) = -2.5;
  one(4, 7) = 1.0;
  const Image spread = linear_baseline(single, one);
  for (double v : spread.values()) CHECK(v == -2.5);

  Image masked = y;
  for (std::size_t i = 0; i < y.size(); ++i) masked.data()[i] *= mask.data()[i];
  const Image out = linear_baseline(masked, mask);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (mask.data()[i] == 1.0) CHECK(out.data()[i] == y.data()[i]);
  }
  CHECK(linear_baseline(masked, mask) == out);
  CHECK(code_of([&] { linear_baseline(y, Image(y.extent())); }) == ErrorCode::AllMasked);
}

TEST_CASE("linear baseline weights the four nearest observations by inverse squared distance") {
  Image y(1, 9), mask(1, 9);
  for (std::size_t c : {0u, 2u, 5u, 8u}) {
    mask(0, c) = 1.0;
    y(0, c) = static_cast<double>(c);
  }
  const Image out = linear_baseline(y, mask);
  // Pixel 3: distances 1 (c=2), 2 (c=5), 3 (c=0), 5 (c=8).
  const double w[] = {1.0, 0.25, 1.0 / 9.0, 1.0 / 25.0};
  const double v[] = {2.0, 5.0, 0.0, 8.0};
  double num = 0.0, den = 0.0;
  for (int i = 0; i < 4; ++i) {
    num += w[i] * v[i];
    den += w[i];
  }
  CHECK(out(0, 3) == doctest::Approx(num / den).epsilon(1e-14));
}

TEST_CASE("synthetic scenes are piecewise planar with shared edges") {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    std::mt19937_64 rng(seed);
    const ImageStack scene = synthetic_scene(64, 64, rng);
    std::mt19937_64 again(seed);
    CHECK(synthetic_scene(64, 64, again) == scene);

    const Image lap = laplacian(scene[1]);
    std::size_t kinks = 0, shared = 0, interior = 0;
    for (std::size_t r = 1; r + 1 < 64; ++r)
      for (std::size_t c = 1; c + 1 < 64; ++c) {
        ++interior;
        if (std::abs(lap(r, c)) <= 1e-9) continue;
        ++kinks;
        if (is_edge(scene[0], r, c, 0.04)) ++shared;
      }
    CHECK(static_cast<double>(kinks) < 0.15 * static_cast<double>(interior));
    CHECK(kinks > 0);
    CHECK(static_cast<double>(shared) >= 0.6 * static_cast<double>(kinks));
  }
}

TEST_CASE("synthetic video drifts smoothly from the first frame") {
  std::mt19937_64 a(9), b(9);
  const auto video = synthetic_video(32, 32, 4, a);
  REQUIRE(video.size() == 4);
  CHECK(video[0] == synthetic_scene(32, 32, b));
  CHECK_FALSE(video[3] == video[0]);
}

TEST_CASE("degenerate experiment reports the sentinel for every method") {
  ExperimentSpec spec;
  spec.frame = {16, 16};
  spec.seeds = {1, 2};
  spec.subsample_factor = 1;
  spec.noise_psnr_db = kNoNoise;
  spec.train.atoms = 4;
  spec.train.kernel = {3, 3};
  spec.train.patch = {8, 8};
  spec.train.batch_size = 2;
  spec.global_rounds = 2;
  spec.training_scenes = 2;
  const auto rows = run_experiment(spec);
  REQUIRE(rows.size() == 6);
  for (const MetricRow& r : rows) {
    CHECK(r.psnr_db == kPsnrCap);
    CHECK(r.factor == 1);
  }
  CHECK(rows[0].method == "linear");
  CHECK(rows[1].method == "proposed-delta-dict");
  CHECK(rows[2].method == "proposed-learned");
}

TEST_CASE("metrics CSV round trip") {
  const std::vector<MetricRow> rows{{"linear", 2, 1, 21.304958373, 3.5},
                                    {"proposed-learned", 4, 18446744073709551615ULL, 1.0 / 3.0, 0.0},
                                    {"proposed-delta-dict", 3, 7, kPsnrCap, 1e-300}};
  std::stringstream ss;
  write_metrics_csv(ss, rows);
  CHECK(parse_metrics_csv(ss) == rows);

  std::stringstream bad("method,factor,seed,psnr_db,wall_ms\nlinear,2,1,abc,0\n");
  CHECK(code_of([&] { parse_metrics_csv(bad); }) == ErrorCode::IoError);
  std::stringstream short_row("method,factor,seed,psnr_db,wall_ms\nlinear,2\n");
  CHECK(code_of([&] { parse_metrics_csv(short_row); }) == ErrorCode::IoError);
}
