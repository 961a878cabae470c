#pragma once

#include <vector>

#include "wadamp/reduced_model.hpp"

namespace wadamp {

enum class TopologyKind { AllToAll, Sparsest };

/// Communication graph. S may carry self-loops; they cancel in L = D - S.
struct CommTopology {
  Mat S;
  Mat D;
  Mat L;
  Vec gamma;  // left null vector of L, positive, summing to one

  int size() const { return static_cast<int>(S.rows()); }
};

/// Throws NotStronglyConnected or InvalidInput.
CommTopology topology_from_adjacency(const Mat& S);

/// AllToAll uses S = 11'. Sparsest links every member of a group with each
/// other and adds one link pair between the first members of each pair of
/// groups. Groups hold zero-based area indices.
CommTopology build_topology(int n, TopologyKind kind,
                            const std::vector<std::vector<int>>& groups = {});

/// gamma' L = 0, gamma > 0, sum gamma = 1. Throws NotStronglyConnected.
Vec left_eigenvector(const Mat& L);

/// Smallest eigenvalue above `tol` of the symmetric part of M.
double smallest_nonzero_eigenvalue(const Mat& M, double tol = 1e-9);

/// Per-area data entering the gain design. eps(i, j) is area i's impact
/// coefficient for neighbor j (zero when not a neighbor).
struct AreaDissipativity {
  Vec eps_ii;
  Vec rho;
  Mat eps;
};

/// phi_i = gamma_i rho_i - sum_j gamma_j eps(j, i).
Vec compute_phi(const CommTopology& topo, const AreaDissipativity& d);

/// psi_i = gamma_i rho_i / k_i - sum_j gamma_j eps(j, i) / k_j.
Vec compute_psi(const CommTopology& topo, const AreaDissipativity& d, const Vec& kc);

/// Q = Gamma L + L' Gamma - L' K_c W L + Psi, for per-area gains.
Mat assemble_Q(const CommTopology& topo, const AreaDissipativity& d, const Vec& kc);

/// Uniform-gain form: Q = -k L' W L + Gamma L + L' Gamma + Phi / k.
Mat assemble_Q_uniform(const CommTopology& topo, const AreaDissipativity& d, double kc);

enum class GainCase { PhiNonneg, PhiMixed, Infeasible };

struct WideAreaDesign {
  Vec phi;
  double lambda_a = 0.0;  // lambda_max(L' W L)
  double lambda_b = 0.0;  // smallest nonzero eigenvalue of Gamma L + L' Gamma
  double kc = 0.0;
  double kc_lower = 0.0;  // admissible open interval
  double kc_upper = 0.0;
  GainCase gain_case = GainCase::Infeasible;
};

const char* to_string(GainCase c);

/// Midpoint of the admissible interval (half the upper bound when phi >= 0),
/// capped at kc_max. Throws Infeasible when no admissible gain exists.
WideAreaDesign select_kc(const CommTopology& topo, const AreaDissipativity& d, double kc_max);

/// Lifted control: u = -kc (L kron I_2) y with y stacked per area as
/// [angle, speed].
Vec cooperative_control_lifted(const Vec& y, const CommTopology& topo, double kc);

/// Scalar per-area input w' u_i of the lifted control.
Vec cooperative_control(const Vec& y, const CommTopology& topo, double kc,
                        const Eigen::Vector2d& channel = {1.0, 1.0});

}  // namespace wadamp
