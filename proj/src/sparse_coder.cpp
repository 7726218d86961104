#include "ocdl/sparse_coder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ocdl/conv.hpp"
#include "ocdl/prox.hpp"

namespace ocdl {

namespace {

// Evaluating the cost or its gradient is meaningful for rho = 0; solving is not.
void check_problem(const CodingProblem& pb, bool allow_zero_rho = false) {
  SolverParams params = pb.params;
  if (allow_zero_rho && params.rho == 0.0) params.rho = 1.0;
  params.validate();
  const std::size_t L = pb.y.modalities();
  const Extent n = pb.y.extent();
  validate_problem(L, n, pb.sensing, pb.dict);
  require(pb.x_lo.modalities() == L && pb.x_lo.extent() == n, ErrorCode::DimensionMismatch,
          "x_lo is " + std::to_string(pb.x_lo.modalities()) + "x" + to_string(pb.x_lo.extent()) +
              ", measurements are " + std::to_string(L) + "x" + to_string(n));
}

void check_unknowns(const CodingProblem& pb, const ImageStack& x, const CoeffMaps& a) {
  const Extent n = pb.y.extent();
  const Extent m = map_extent(n, pb.dict.kernel_extent());
  require(x.modalities() == pb.y.modalities() && x.extent() == n, ErrorCode::DimensionMismatch,
          "x is " + std::to_string(x.modalities()) + "x" + to_string(x.extent()) + ", expected " +
              std::to_string(pb.y.modalities()) + "x" + to_string(n));
  require(a.modalities() == pb.dict.modalities() && a.atoms() == pb.dict.atoms() && a.extent() == m,
          ErrorCode::DimensionMismatch,
          "alpha is " + std::to_string(a.modalities()) + "x" + std::to_string(a.atoms()) + "x" +
              to_string(a.extent()) + ", expected " + std::to_string(pb.dict.modalities()) + "x" +
              std::to_string(pb.dict.atoms()) + "x" + to_string(m));
}

// A point of the joint variable together with its synthesis D alpha.
struct Point {
  ImageStack x;
  CoeffMaps a;
  ImageStack da;
};

// out = s0 * p0 + s1 * p1 + s2 * p2, elementwise over all components.
Point combine(double s0, const Point& p0, double s1, const Point& p1, double s2, const Point& p2) {
  Point out = p0;
  auto mix = [&](Image& o, const Image& i1, const Image& i2) {
    double* od = o.data();
    const double* d1 = i1.data();
    const double* d2 = i2.data();
    for (std::size_t i = 0; i < o.size(); ++i) od[i] = s0 * od[i] + s1 * d1[i] + s2 * d2[i];
  };
  for (std::size_t l = 0; l < out.x.modalities(); ++l) {
    mix(out.x[l], p1.x[l], p2.x[l]);
    mix(out.da[l], p1.da[l], p2.da[l]);
    for (std::size_t k = 0; k < out.a.atoms(); ++k) mix(out.a.at(l, k), p1.a.at(l, k), p2.a.at(l, k));
  }
  return out;
}

class Engine {
 public:
  explicit Engine(const CodingProblem& pb) : pb_(pb) {
    for (std::size_t l = 0; l < pb.y.modalities(); ++l) {
      ops_.emplace_back(pb.dict.slice(l), pb.y.extent());
      masks_.push_back(pb.sensing[l].mask_image());
    }
  }

  ImageStack synth(const CoeffMaps& a) const {
    std::vector<Image> out;
    out.reserve(ops_.size());
    for (std::size_t l = 0; l < ops_.size(); ++l) out.push_back(ops_[l].forward(a.slice(l)));
    return ImageStack(std::move(out));
  }

  Point make_point(ImageStack x, CoeffMaps a) const {
    ImageStack da = synth(a);
    return {std::move(x), std::move(a), std::move(da)};
  }

  double smooth(const Point& pt) const {
    const Params& p = pb_.params;
    double fid = 0.0, cpl = 0.0;
    for (std::size_t l = 0; l < ops_.size(); ++l) {
      const double* x = pt.x[l].data();
      const double* y = pb_.y[l].data();
      const double* phi = masks_[l].data();
      const double* lo = pb_.x_lo[l].data();
      const double* da = pt.da[l].data();
      for (std::size_t i = 0; i < pt.x[l].size(); ++i) {
        const double r = y[i] - phi[i] * x[i];
        const double c = x[i] - lo[i] - da[i];
        fid += r * r;
        cpl += c * c;
      }
    }
    return 0.5 * fid + 0.5 * p.rho * cpl;
  }

  double nonsmooth(const Point& pt) const {
    const Params& p = pb_.params;
    double tv = 0.0;
    if (p.tau != 0.0)
      for (const Image& xl : pt.x) tv += prox::tv_value(xl);
    const double l21 = p.lambda != 0.0 ? prox::group_l21_norm(pt.a) : 0.0;
    return p.lambda * l21 + p.tau * tv;
  }

  SmoothGradient gradient(const Point& pt) const {
    const double rho = pb_.params.rho;
    SmoothGradient g{pt.x, CoeffMaps(pt.a.modalities(), pt.a.atoms(), pt.a.extent())};
    for (std::size_t l = 0; l < ops_.size(); ++l) {
      Image coupling(pt.x[l].extent());
      Image& gx = g.grad_x[l];
      const double* x = pt.x[l].data();
      const double* y = pb_.y[l].data();
      const double* phi = masks_[l].data();
      const double* lo = pb_.x_lo[l].data();
      const double* da = pt.da[l].data();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        const double c = x[i] - lo[i] - da[i];
        coupling.data()[i] = c;
        gx.data()[i] = phi[i] * (phi[i] * x[i] - y[i]) + rho * c;
      }
      if (rho != 0.0) {
        std::vector<Image> ga = ops_[l].adjoint(coupling);
        for (std::size_t k = 0; k < ga.size(); ++k) {
          ga[k] *= -rho;
          g.grad_alpha.at(l, k) = std::move(ga[k]);
        }
      }
    }
    return g;
  }

  // Largest eigenvalue of the smooth part's Hessian, taken over modalities.
  double lipschitz() const {
    const double rho = pb_.params.rho;
    const Extent n = pb_.y.extent();
    double best = 0.0;
    for (std::size_t l = 0; l < ops_.size(); ++l) {
      const auto& op = ops_[l];
      const std::size_t K = op.atoms();
      const Extent m = op.map_extent();
      const std::size_t N = n.size(), M = m.size();
      const Image& phi = masks_[l];
      auto hessian = [&](std::span<const double> in, std::span<double> out) {
        Image x(n, std::vector<double>(in.begin(), in.begin() + N));
        std::vector<Image> a;
        for (std::size_t k = 0; k < K; ++k)
          a.emplace_back(m, std::vector<double>(in.begin() + N + k * M, in.begin() + N + (k + 1) * M));
        Image c = x - op.forward(a);
        for (std::size_t i = 0; i < N; ++i) out[i] = phi.data()[i] * x.data()[i] + rho * c.data()[i];
        std::vector<Image> ga = op.adjoint(c);
        for (std::size_t k = 0; k < K; ++k)
          for (std::size_t i = 0; i < M; ++i) out[N + k * M + i] = -rho * ga[k].data()[i];
      };
      conv::PowerIterationOptions opts;
      opts.max_iters = 60;
      opts.tol = 1e-4;
      best = std::max(best, conv::spectral_norm(hessian, N + K * M, opts).value);
    }
    return best;
  }

  // Separable prox of the nonsmooth part evaluated at v - step * grad.
  Point prox_step(const Point& v, const SmoothGradient& g, double step, std::vector<prox::TVDualState>& duals) const {
    const Params& p = pb_.params;
    ImageStack x = v.x;
    CoeffMaps a = v.a;
    for (std::size_t l = 0; l < x.modalities(); ++l) {
      axpy(-step, g.grad_x[l], x[l]);
      for (std::size_t k = 0; k < a.atoms(); ++k) axpy(-step, g.grad_alpha.at(l, k), a.at(l, k));
      if (p.tau != 0.0) {
        prox::TVProxResult r = prox::prox_tv_iso(x[l], p.tau * step, p.tv_inner_iters, duals[l]);
        x[l] = std::move(r.image);
        duals[l] = std::move(r.dual);
      }
    }
    if (p.lambda != 0.0) prox::prox_group_l21_inplace(a, p.lambda * step);
    return make_point(std::move(x), std::move(a));
  }

 private:
  using Params = SolverParams;
  const CodingProblem& pb_;
  std::vector<conv::SynthesisOperator> ops_;
  std::vector<Image> masks_;
};

double inner(const SmoothGradient& g, const Point& z, const Point& v) {
  double s = 0.0;
  for (std::size_t l = 0; l < z.x.modalities(); ++l) {
    s += dot(g.grad_x[l], z.x[l] - v.x[l]);
    for (std::size_t k = 0; k < z.a.atoms(); ++k) s += dot(g.grad_alpha.at(l, k), z.a.at(l, k) - v.a.at(l, k));
  }
  return s;
}

double distance_sq(const Point& z, const Point& v) {
  double s = 0.0;
  for (std::size_t l = 0; l < z.x.modalities(); ++l) {
    s += squared_norm(z.x[l] - v.x[l]);
    for (std::size_t k = 0; k < z.a.atoms(); ++k) s += squared_norm(z.a.at(l, k) - v.a.at(l, k));
  }
  return s;
}

}  // namespace

double coding_cost(const CodingProblem& problem, const ImageStack& x, const CoeffMaps& alpha) {
  check_problem(problem, true);
  check_unknowns(problem, x, alpha);
  Engine engine(problem);
  const Point pt = engine.make_point(x, alpha);
  return engine.smooth(pt) + engine.nonsmooth(pt);
}

SmoothGradient smooth_gradient(const CodingProblem& problem, const ImageStack& x, const CoeffMaps& alpha) {
  check_problem(problem, true);
  check_unknowns(problem, x, alpha);
  Engine engine(problem);
  return engine.gradient(engine.make_point(x, alpha));
}

CodingResult solve(const CodingProblem& problem, const std::optional<CodingInit>& init) {
  check_problem(problem);
  const SolverParams& params = problem.params;
  const std::size_t L = problem.y.modalities();
  Engine engine(problem);

  Point current = init ? engine.make_point(init->x, init->alpha)
                       : engine.make_point(problem.x_lo, CoeffMaps::zeros_for(L, problem.dict.atoms(), problem.y.extent(),
                                                                              problem.dict.kernel_extent()));
  check_unknowns(problem, current.x, current.a);

  CodingResult result;
  double cost = engine.smooth(current) + engine.nonsmooth(current);
  auto snapshot = [&] {
    result.x_hat = current.x;
    result.alpha_hat = current.a;
  };
  if (!std::isfinite(cost)) {
    snapshot();
    throw NonFiniteCostError("initial cost is not finite", result);
  }
  result.cost_trace.push_back(cost);

  double step = 1.0 / std::max(params.L0, conv::kLipschitzSafety * engine.lipschitz());
  std::vector<prox::TVDualState> duals(L);
  Point v = current;
  double t = 1.0;

  for (int it = 1; it <= params.max_outer_iters; ++it) {
    const double fv = engine.smooth(v);
    if (!std::isfinite(fv)) {
      snapshot();
      result.iterations = it - 1;
      throw NonFiniteCostError("cost diverged at iteration " + std::to_string(it), result);
    }
    const SmoothGradient g = engine.gradient(v);
    Point z;
    double fz = 0.0;
    for (int bt = 0; bt < 60; ++bt) {
      z = engine.prox_step(v, g, step, duals);
      fz = engine.smooth(z);
      const double bound = fv + inner(g, z, v) + distance_sq(z, v) / (2.0 * step);
      if (fz <= bound + 1e-12 * std::abs(fv)) break;
      step /= params.backtrack_eta;
    }
    const double cz = fz + engine.nonsmooth(z);
    const bool accepted = std::isfinite(cz) && cz <= cost;

    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double c1 = t / t_next;
    const double c2 = (t - 1.0) / t_next;
    Point next = accepted ? std::move(z) : current;
    const double next_cost = accepted ? cz : cost;
    // v = X_k + c1 (z - X_k) + c2 (X_k - X_{k-1})
    if (accepted) {
      v = combine(1.0 + c2, next, 0.0, next, -c2, current);
    } else {
      v = combine(1.0 - c1, current, c1, z, 0.0, current);
    }
    const double change = std::abs(cost - next_cost) / std::max(std::abs(cost), std::numeric_limits<double>::min());
    current = std::move(next);
    cost = next_cost;
    t = t_next;
    result.cost_trace.push_back(cost);
    result.iterations = it;
    if (accepted && change < params.rel_tol) {
      result.converged = true;
      break;
    }
  }
  snapshot();
  return result;
}

ImageStack predict(const Dictionary& dict, const CoeffMaps& alpha, const ImageStack& x_lo) {
  require(dict.modalities() == x_lo.modalities() && alpha.modalities() == x_lo.modalities() &&
              alpha.atoms() == dict.atoms(),
          ErrorCode::DimensionMismatch, "dictionary, maps and x_lo disagree on modality or atom count");
  require(alpha.extent() == map_extent(x_lo.extent(), dict.kernel_extent()), ErrorCode::DimensionMismatch,
          "maps " + to_string(alpha.extent()) + " do not match image " + to_string(x_lo.extent()) + " and kernel " +
              to_string(dict.kernel_extent()));
  ImageStack out = x_lo;
  for (std::size_t l = 0; l < out.modalities(); ++l) out[l] += conv::synthesize(dict.slice(l), alpha.slice(l));
  return out;
}

double zero_group_fraction(const CoeffMaps& alpha) {
  const std::size_t positions = alpha.extent().size();
  const std::size_t total = positions * alpha.atoms();
  if (total == 0) return 1.0;
  std::size_t zeros = 0;
  for (std::size_t k = 0; k < alpha.atoms(); ++k)
    for (std::size_t n = 0; n < positions; ++n) {
      bool zero = true;
      for (std::size_t l = 0; l < alpha.modalities() && zero; ++l) zero = alpha.at(l, k).data()[n] == 0.0;
      zeros += zero;
    }
  return static_cast<double>(zeros) / static_cast<double>(total);
}

}  // namespace ocdl
