#pragma once

#include <optional>
#include <vector>

#include "ocdl/error.hpp"
#include "ocdl/types.hpp"

namespace ocdl {

// Everything the joint reconstruction needs besides the unknowns.
struct CodingProblem {
  const Measurements& y;
  const SensingOps& sensing;
  const Dictionary& dict;
  const ImageStack& x_lo;
  SolverParams params;
};

struct CodingResult {
  ImageStack x_hat;
  CoeffMaps alpha_hat;
  std::vector<double> cost_trace;
  int iterations = 0;
  bool converged = false;
};

struct CodingInit {
  ImageStack x;
  CoeffMaps alpha;
};

// Thrown by solve() when the cost becomes non-finite; carries the last
// finite iterate.
class NonFiniteCostError : public Error {
 public:
  NonFiniteCostError(const std::string& what, CodingResult last)
      : Error(ErrorCode::NonFiniteCost, what), last_(std::move(last)) {}
  const CodingResult& last_valid() const noexcept { return last_; }

 private:
  CodingResult last_;
};

// 1/2|y - Hx|^2 + rho/2 |x - x_lo - D alpha|^2 + lambda |alpha|_21 + tau sum_l TV(x_l)
double coding_cost(const CodingProblem& problem, const ImageStack& x, const CoeffMaps& alpha);

struct SmoothGradient {
  ImageStack grad_x;
  CoeffMaps grad_alpha;
};

// Gradient of the two quadratic terms.
SmoothGradient smooth_gradient(const CodingProblem& problem, const ImageStack& x, const CoeffMaps& alpha);

// Monotone FISTA with backtracking; init defaults to (x_lo, 0).
CodingResult solve(const CodingProblem& problem, const std::optional<CodingInit>& init = std::nullopt);

// D alpha + x_lo per modality.
ImageStack predict(const Dictionary& dict, const CoeffMaps& alpha, const ImageStack& x_lo);
inline const ImageStack& predict_x(const CodingResult& result) { return result.x_hat; }

// Fraction of (k, position) groups that are exactly zero.
double zero_group_fraction(const CoeffMaps& alpha);

}  // namespace ocdl
