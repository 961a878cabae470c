#include "wadamp/lmi_barrier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace wadamp::lmi {

Mat AffineMatrix::evaluate(const Vec& z) const {
  Mat out = constant;
  for (std::size_t k = 0; k < coefficients.size(); ++k) {
    if (z(k) != 0.0) out.noalias() += z(k) * coefficients[k];
  }
  return out;
}

AffineMatrix linearize(const std::function<Mat(const Vec&)>& map, int num_vars) {
  AffineMatrix out;
  Vec z = Vec::Zero(num_vars);
  out.constant = map(z);
  out.coefficients.reserve(num_vars);
  for (int k = 0; k < num_vars; ++k) {
    z.setZero();
    z(k) = 1.0;
    Mat Fk = map(z) - out.constant;
    out.coefficients.push_back(0.5 * (Fk + Fk.transpose()));
  }
  out.constant = 0.5 * (out.constant + out.constant.transpose()).eval();
  return out;
}

namespace {

// -sum log det F_b(z); +inf outside the domain.
double log_barrier(std::span<const AffineMatrix> blocks, const Vec& z) {
  double value = 0.0;
  for (const auto& b : blocks) {
    Eigen::LLT<Mat> llt(b.evaluate(z));
    if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
    const Vec diag = llt.matrixLLT().diagonal();
    if ((diag.array() <= 0.0).any()) return std::numeric_limits<double>::infinity();
    value -= 2.0 * diag.array().log().sum();
  }
  return value;
}

}  // namespace

bool strictly_feasible(std::span<const AffineMatrix> blocks, const Vec& z) {
  return std::isfinite(log_barrier(blocks, z));
}

double min_eigenvalue(std::span<const AffineMatrix> blocks, const Vec& z) {
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& b : blocks) {
    Eigen::SelfAdjointEigenSolver<Mat> es(b.evaluate(z), Eigen::EigenvaluesOnly);
    lo = std::min(lo, es.eigenvalues()(0));
  }
  return lo;
}

BarrierResult minimize(const Vec& c, std::span<const AffineMatrix> blocks, const Vec& z0,
                       const BarrierOptions& options) {
  const int m = static_cast<int>(c.size());
  BarrierResult result;
  result.z = z0;
  if (!strictly_feasible(blocks, z0)) return result;

  int total_order = 0;
  for (const auto& b : blocks) total_order += b.order();

  Vec& z = result.z;
  double t = options.initial_t;
  auto merit = [&](const Vec& v) { return t * c.dot(v) + log_barrier(blocks, v); };

  for (int outer = 0; outer < options.max_outer; ++outer) {
    for (int it = 0; it < options.max_newton; ++it) {
      Vec grad = t * c;
      Mat hess = Mat::Zero(m, m);
      std::vector<Mat> W(m);
      for (const auto& b : blocks) {
        Eigen::LLT<Mat> llt(b.evaluate(z));
        for (int k = 0; k < m; ++k) W[k] = llt.solve(b.coefficients[k]);
        for (int k = 0; k < m; ++k) {
          grad(k) -= W[k].trace();
          for (int l = k; l < m; ++l) {
            const double v = W[k].cwiseProduct(W[l].transpose()).sum();
            hess(k, l) += v;
            if (l != k) hess(l, k) += v;
          }
        }
      }
      // Jacobi scaling first; variables live on very different scales and a
      // global ridge would freeze the small ones.
      const Vec d = hess.diagonal().cwiseAbs().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
      Mat hs = d.asDiagonal() * hess * d.asDiagonal();
      hs.diagonal().array() += 1e-12;
      const Vec step = -(d.asDiagonal() * hs.ldlt().solve(d.asDiagonal() * grad)).eval();
      const double decrement = -grad.dot(step);
      ++result.newton_steps;
      if (!std::isfinite(decrement) || decrement < 0.0) break;
      if (0.5 * decrement < 1e-11) break;

      const double f0 = merit(z);
      double s = 1.0;
      Vec trial = z + step;
      double f1 = merit(trial);
      while (!(f1 <= f0 - 0.25 * s * decrement)) {
        s *= 0.5;
        if (s < 1e-14) break;
        trial = z + s * step;
        f1 = merit(trial);
      }
      if (s < 1e-14 || !std::isfinite(f1)) break;
      z = trial;
      if (options.stop_below && c.dot(z) < *options.stop_below) {
        result.objective = c.dot(z);
        result.converged = true;
        return result;
      }
    }
    // Relative gap; an absolute one leaves slack below rounding for large data.
    if (total_order / t < options.gap * std::max(1.0, std::abs(c.dot(z)))) {
      result.converged = true;
      break;
    }
    t *= options.growth;
  }
  result.objective = c.dot(z);
  return result;
}

PhaseOneResult phase_one(std::span<const AffineMatrix> blocks, const Vec& z0, double margin,
                         const BarrierOptions& options) {
  const int m = static_cast<int>(z0.size());
  PhaseOneResult out;
  out.z = z0;
  out.shift = -min_eigenvalue(blocks, z0);
  if (out.shift < -margin) {
    out.feasible = true;
    return out;
  }

  // Shifted problem in (z, s), with a cap on s to keep the domain bounded.
  const double s0 = std::max(0.0, out.shift) + 1.0;
  std::vector<AffineMatrix> shifted;
  shifted.reserve(blocks.size() + 1);
  for (const auto& b : blocks) {
    AffineMatrix a = b;
    a.coefficients.push_back(Mat::Identity(b.order(), b.order()));
    shifted.push_back(std::move(a));
  }
  AffineMatrix cap;
  cap.constant = Mat::Constant(1, 1, 10.0 * s0);
  cap.coefficients.assign(m + 1, Mat::Zero(1, 1));
  cap.coefficients[m](0, 0) = -1.0;
  shifted.push_back(std::move(cap));

  Vec c = Vec::Zero(m + 1);
  c(m) = 1.0;
  Vec start(m + 1);
  start << z0, s0;
  BarrierOptions opts = options;
  opts.stop_below = -margin;
  const BarrierResult r = minimize(c, shifted, start, opts);
  const Vec z = r.z.head(m);
  const double shift = -min_eigenvalue(blocks, z);
  if (shift < out.shift) {
    out.z = z;
    out.shift = shift;
  }
  out.feasible = out.shift < -margin && strictly_feasible(blocks, out.z);
  return out;
}

}  // namespace wadamp::lmi
