#pragma once

#include <span>
#include <vector>

#include "wadamp/lmi_barrier.hpp"
#include "wadamp/reduced_model.hpp"

namespace wadamp {

/// Linear plant used for synthesis. The designable gain F acts through
/// B_act, so the closed-loop drift is A - B_act F. The passivity input B is
/// matched to the output dimension.
struct DmiPlant {
  Mat A;
  Mat B;      // nx x ny
  Mat C;      // ny x nx
  Mat B_act;  // nx x p

  int states() const { return static_cast<int>(A.rows()); }
  Mat closed_loop(const Mat& F) const { return A - B_act * F; }
};

/// Plant of one area. The scalar input channel b is lifted to b w' so the
/// input pairs with the 2-dim output; the gain has two rows, the local
/// feedback K and the AGC integral gain K^I.
DmiPlant generator_plant(const GeneratorParams& params, const Eigen::Vector2d& channel = {1.0, 1.0});

/// LQR gain for (A, B_act) with state cost C'C + state_weight I and input
/// cost input_weight I. Used as the starting point of the synthesis since the
/// droop/AGC gain leaves the angle/integrator combination marginal.
Mat initial_gain(const DmiPlant& plant, double state_weight = 1e-3, double input_weight = 1e-2);

/// Row 0 of F is the feedback, row 1 the integral gain.
LocalControl to_local_control(const Mat& F);
Mat gain_matrix(const LocalControl& control);

struct DmiWeights {
  double alpha_ii = 0.5;
  std::vector<double> alpha_ij;  // aligned with the neighbor list

  /// Throws InvalidInput unless 0 < alpha_ii < 1, alpha_ij >= 0 and the sum < 1.
  void validate() const;
};

struct DmiCertificate {
  Mat P;
  Mat F;
  double eps_ii = 0.0;
  std::vector<double> eps_ij;  // zero for neighbors with H_ij = 0
  double rho = 0.0;
  double objective = 0.0;
  double margin = 0.0;  // lambda_max of the optimized inequality
  int iterations = 0;
  std::vector<double> objective_history;
};

struct FeasibilityResult {
  bool feasible = false;
  double margin = 0.0;
};

/// A'P + PA + rho C'C + (1/eps)(PB - C')(B'P - C). Throws NonPositiveEpsilon.
Mat assemble_Mi(const Mat& A_bar, const Mat& B, const Mat& C, const Mat& P, double rho,
                double eps_ii);

/// Block form over [x, y_j..., u]. Throws DimensionMismatch or NonPositiveEpsilon.
Mat assemble_Mbar(const Mat& A_bar, const Mat& B, const Mat& C, const Mat& P, double rho,
                  double eps_ii, std::span<const Mat> H, std::span<const double> eps_ij);

/// M_i minus the coupling terms. Neighbors with H_ij = 0 contribute nothing.
Mat assemble_Mprime(const Mat& A_bar, const Mat& B, const Mat& C, const Mat& P, double rho,
                    double eps_ii, std::span<const Mat> H, std::span<const double> eps_ij);

FeasibilityResult check_feasible(const Mat& M, double tol = 1e-8);

struct SynthesisOptions {
  double p_max = 1.0;          // storage scale: P <= p_max I
  double condition_cap = 1e8;  // P >= (p_max / condition_cap) I
  double eps_min = 1e-6;
  double eps_max = 1e8;
  double rho_max = 1e8;
  double gain_cap = 2000.0;  // |F_k| bound in the gain step
  double strict_margin = 1e-6;  // M_bar <= -strict_margin I
  int max_rounds = 10;
  int phase_one_rounds = 20;
  double objective_tol = 1e-6;
  double feasibility_tol = 1e-8;
  lmi::BarrierOptions barrier;
};

/// Alternating synthesis without neighbors. Throws Infeasible.
DmiCertificate optimize_local(const DmiPlant& plant, const DmiWeights& weights, const Mat& F0,
                              const SynthesisOptions& options = {});

/// With P, F, rho and eps_ii fixed, the smallest weighted eps_ij keeping the
/// interconnected inequality negative semidefinite. Throws Infeasible.
std::vector<double> optimize_interconnection(const DmiPlant& plant, const DmiCertificate& cert,
                                             std::span<const Mat> H, const DmiWeights& weights,
                                             const SynthesisOptions& options = {});

/// Joint synthesis over (P, F, rho, eps_ii, eps_ij). The warm start may be a
/// previous certificate (P etc. reused when still feasible) or just a gain.
/// Throws Infeasible.
DmiCertificate optimize_combined(const DmiPlant& plant, std::span<const Mat> H,
                                 const DmiWeights& weights, const Mat& F0,
                                 const SynthesisOptions& options = {},
                                 const DmiCertificate* warm = nullptr);

/// Interconnected inequality of a certificate at coupling H.
Mat certificate_Mprime(const DmiPlant& plant, const DmiCertificate& cert, std::span<const Mat> H);

/// Largest |dh| such that replacing H_ij by (1 + dh / h_ij) H_ij keeps the
/// inequality negative semidefinite, given `margin` = -lambda_max(M') >= 0.
/// Throws ZeroCouplingGain.
double delay_robustness_bound(const DmiCertificate& cert, const Mat& C, const Mat& H_ij,
                              double h_ij, double eps_ij, double margin);

}  // namespace wadamp
