#include <doctest.h>

#include <random>

#include "ocdl/error.hpp"
#include "ocdl/types.hpp"
#include "oracles.hpp"

using namespace ocdl;

namespace {

Dictionary unit_dictionary(std::size_t L, std::size_t K, Extent p) {
  Dictionary d(L, K, p);
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t k = 0; k < K; ++k) d.at(l, k)(k % p.rows, 0) = 1.0;
  return d;
}

SensingOps two_ops(Extent n) {
  Image mask(n, 0.0);
  for (std::size_t i = 0; i < mask.size(); i += 2) mask.data()[i] = 1.0;
  return {SensingOp::identity(n), SensingOp::mask(mask)};
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

TEST_CASE("validate_problem accepts a consistent problem") {
  const Extent n{64, 64};
  CHECK_NOTHROW(validate_problem(2, n, two_ops(n), unit_dictionary(2, 32, {15, 15})));
}

TEST_CASE("validate_problem rejects a mask of the wrong size") {
  const Extent n{64, 64};
  SensingOps ops = two_ops(n);
  ops[1] = SensingOp::mask(Image(32, 32, 1.0));
  CHECK(code_of([&] { validate_problem(2, n, ops, unit_dictionary(2, 4, {3, 3})); }) ==
        ErrorCode::DimensionMismatch);
}

TEST_CASE("validate_problem names the offending kernel") {
  const Extent n{16, 16};
  Dictionary d = unit_dictionary(2, 3, {3, 3});
  d.at(1, 2).fill(0.0);
  d.at(1, 2)(0, 0) = 1.5;
  try {
    validate_problem(2, n, two_ops(n), d);
    FAIL("expected KernelNormViolation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::KernelNormViolation);
    CHECK(std::string(e.what()).find("(1,2)") != std::string::npos);
  }
}

TEST_CASE("validate_problem rejects modality count disagreements") {
  const Extent n{16, 16};
  CHECK(code_of([&] { validate_problem(2, n, two_ops(n), unit_dictionary(1, 2, {3, 3})); }) ==
        ErrorCode::DimensionMismatch);
  CHECK(code_of([&] { validate_problem(3, n, two_ops(n), unit_dictionary(3, 2, {3, 3})); }) ==
        ErrorCode::DimensionMismatch);
}

TEST_CASE("validate_problem is pure") {
  const Extent n{16, 16};
  const SensingOps ops = two_ops(n);
  Dictionary bad = unit_dictionary(2, 2, {3, 3});
  bad.at(0, 0) *= 2.0;
  for (int i = 0; i < 3; ++i) {
    CHECK_NOTHROW(validate_problem(2, n, ops, unit_dictionary(2, 2, {3, 3})));
    CHECK(code_of([&] { validate_problem(2, n, ops, bad); }) == ErrorCode::KernelNormViolation);
  }
}

TEST_CASE("coefficient maps have extent n - p + 1") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> dim(1, 20);
  for (int trial = 0; trial < 200; ++trial) {
    const Extent p{dim(rng), dim(rng)};
    const Extent n{p.rows + dim(rng) - 1, p.cols + dim(rng) - 1};
    const CoeffMaps a = CoeffMaps::zeros_for(2, 3, n, p);
    CHECK(a.extent() == Extent{n.rows - p.rows + 1, n.cols - p.cols + 1});
    CHECK(a.modalities() == 2);
    CHECK(a.atoms() == 3);
  }
  CHECK(code_of([] { CoeffMaps::zeros_for(1, 1, {4, 4}, {5, 5}); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("sensing operators") {
  std::mt19937_64 rng(1);
  const Image x = oracle::random_image(rng, {5, 7});
  const SensingOp id = SensingOp::identity(x.extent());
  CHECK(id.apply_adjoint(id.apply(x)) == x);
  CHECK(id.mask_image() == Image(x.extent(), 1.0));

  Image m(x.extent(), 0.0);
  m(2, 3) = 1.0;
  const SensingOp h = SensingOp::mask(m);
  const Image y = h.apply(x);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 7; ++c) CHECK(y(r, c) == (r == 2 && c == 3 ? x(2, 3) : 0.0));

  m(0, 0) = 0.5;
  CHECK(code_of([&] { SensingOp::mask(m); }) == ErrorCode::InvalidMask);
  CHECK(code_of([&] { h.apply(Image(4, 4)); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("image stacks require a shared extent") {
  CHECK(code_of([] { ImageStack({Image(4, 4), Image(4, 5)}); }) == ErrorCode::DimensionMismatch);
  const ImageStack s({Image(4, 4, 1.0), Image(4, 4, 2.0)});
  CHECK(s.names() == std::vector<std::string>{"modality0", "modality1"});
  const ImageStack sum = s + s;
  CHECK(sum[1](3, 3) == 4.0);
  CHECK((sum - s) == s);
}

TEST_CASE("image helpers") {
  Image a(2, 3);
  for (std::size_t i = 0; i < 6; ++i) a.data()[i] = static_cast<double>(i);
  const Image f = flipped(a);
  CHECK(f(0, 0) == 5.0);
  CHECK(f(1, 2) == 0.0);
  const Image c = crop(a, 1, 1, {1, 2});
  CHECK(c(0, 0) == 4.0);
  CHECK(c(0, 1) == 5.0);
  CHECK(squared_norm(a) == doctest::Approx(55.0));
  Image b = a;
  axpy(2.0, a, b);
  CHECK(b(1, 2) == 15.0);
  CHECK(max_abs_diff(a, b) == 10.0);
  Image bad = a;
  bad(0, 0) = std::nan("");
  CHECK_FALSE(all_finite(bad));
  CHECK(Tensor{}.element_count() == 1);
  CHECK(Tensor{{2, 0, 3}, {}}.element_count() == 0);
}

TEST_CASE("solver parameters are validated") {
  SolverParams p;
  CHECK_NOTHROW(p.validate());
  auto bad = [](auto mutate) {
    SolverParams q;
    mutate(q);
    return code_of([&] { q.validate(); });
  };
  CHECK(bad([](SolverParams& q) { q.rho = 0.0; }) == ErrorCode::InvalidArgument);
  CHECK(bad([](SolverParams& q) { q.lambda = -1.0; }) == ErrorCode::InvalidArgument);
  CHECK(bad([](SolverParams& q) { q.tau = -1e-3; }) == ErrorCode::InvalidArgument);
  CHECK(bad([](SolverParams& q) { q.backtrack_eta = 1.0; }) == ErrorCode::InvalidArgument);
  CHECK(bad([](SolverParams& q) { q.L0 = 0.0; }) == ErrorCode::InvalidArgument);
  CHECK(bad([](SolverParams& q) { q.max_outer_iters = 0; }) == ErrorCode::InvalidArgument);
  CHECK(bad([](SolverParams& q) { q.tv_inner_iters = 0; }) == ErrorCode::InvalidArgument);
}
