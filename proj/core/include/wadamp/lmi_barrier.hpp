#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "wadamp/reduced_model.hpp"

// Small dense log-det barrier method for problems of the form
//
//   minimize c'z  subject to  F_b(z) = F_b0 + sum_k z_k F_bk  > 0  for every block b.
//
// Sizes here are tiny (tens of variables, blocks of order ten), so the Newton
// system is formed densely from traces of S^{-1} F_k products.
namespace wadamp::lmi {

struct AffineMatrix {
  Mat constant;
  std::vector<Mat> coefficients;  // one per variable

  int order() const { return static_cast<int>(constant.rows()); }
  Mat evaluate(const Vec& z) const;
};

/// Sample an affine matrix-valued map at the origin and the unit vectors.
AffineMatrix linearize(const std::function<Mat(const Vec&)>& map, int num_vars);

struct BarrierOptions {
  double gap = 1e-8;        // stop when (sum of block orders) / t < gap
  double initial_t = 1.0;
  double growth = 8.0;
  int max_newton = 80;      // per centering step
  int max_outer = 60;
  // Return as soon as c'z falls below this value (phase-I style early exit).
  std::optional<double> stop_below;
};

struct BarrierResult {
  Vec z;
  double objective = 0.0;
  int newton_steps = 0;
  bool converged = false;
};

/// True when every block is positive definite at z.
bool strictly_feasible(std::span<const AffineMatrix> blocks, const Vec& z);

/// Smallest eigenvalue over all blocks.
double min_eigenvalue(std::span<const AffineMatrix> blocks, const Vec& z);

/// Requires a strictly feasible starting point.
BarrierResult minimize(const Vec& c, std::span<const AffineMatrix> blocks, const Vec& z0,
                       const BarrierOptions& options = {});

struct PhaseOneResult {
  Vec z;               // best point found
  double shift = 0.0;  // smallest s with F_b(z) + s I > 0 for all b
  bool feasible = false;
};

/// Phase I: minimize the uniform shift s with F_b(z) + s I > 0, stopping once
/// s < -margin. Works from any z0.
PhaseOneResult phase_one(std::span<const AffineMatrix> blocks, const Vec& z0,
                         double margin = 1e-9, const BarrierOptions& options = {});

}  // namespace wadamp::lmi
