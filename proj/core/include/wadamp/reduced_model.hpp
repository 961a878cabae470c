#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

namespace wadamp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowVec = Eigen::RowVectorXd;

enum class GeneratorKind { Conventional, InverterBased };

/// Physical parameters of one aggregated area.
///
/// Conventional areas carry the swing equation, a two-lag turbine/governor and
/// an AGC integrator (5 states). Inverter-based areas emulate a synchronous
/// machine without the governor lags (3 states).
struct GeneratorParams {
  GeneratorKind kind = GeneratorKind::Conventional;
  double inertia = 1.0;           // M_i
  double damping = 0.0;           // D_i
  double tau1 = 0.0;              // turbine lag, s
  double tau2 = 0.0;              // governor lag, s
  double xd_prime = 0.0;          // transient reactance, p.u.
  double internal_voltage = 1.0;  // E_i
  RowVec integral_gain;           // AGC gain K_i^I, one entry per state
  double pg_ref = 0.0;            // dispatch set point
  // Angle rate per unit speed deviation: delta' = omega_base * omega.
  double omega_base = 1.0;

  int state_dim() const { return kind == GeneratorKind::Conventional ? 5 : 3; }
  void validate() const;
};

// Indices into a per-area state vector. The first two entries are the output.
inline constexpr int kAngle = 0;
inline constexpr int kSpeed = 1;
inline constexpr int kMech = 2;      // Conventional only
inline constexpr int kGovernor = 3;  // Conventional only
inline int agc_index(GeneratorKind kind) { return kind == GeneratorKind::Conventional ? 4 : 2; }

/// Generator-level equivalent network: Y_red = G + jB between internal buses.
struct ReducedNetwork {
  Mat G;
  Mat B;
  Vec E;

  int size() const { return static_cast<int>(E.size()); }
  void validate() const;
};

struct Equilibrium {
  Vec delta;  // delta_1 = 0
  Vec pg;
  Vec qg;
  Vec alpha;
};

struct SystemMatrices {
  Mat A;
  Mat B;
  Mat C;
  Mat A_bar;  // A - B K
};

struct PowerInjection {
  Vec p;
  Vec q;
};

/// Secant slope of the active power exchanged between two areas, taken
/// between the equilibrium angle difference and the current one. At the
/// removable singularity the analytic derivative is returned.
double coupling_gain(double G_ij, double B_ij, double E_i, double E_j, double delta_ij,
                     double delta_ij_star);

/// All pairwise coupling gains h_ij for the given angles; the diagonal is zero.
Mat coupling_gains(const ReducedNetwork& net, const Vec& delta, const Vec& delta_star);

PowerInjection electrical_power(const ReducedNetwork& net, const Vec& delta);

struct EquilibriumOptions {
  // Share of the dispatch mismatch absorbed by each area's AGC. Empty means
  // equal shares.
  Vec participation;
  double tolerance = 1e-9;
  int max_iterations = 50;
};

/// Newton solve of the reduced power balance with delta_1 pinned to zero.
/// Throws Error{NoConvergence} on a singular Jacobian or iteration overrun.
Equilibrium solve_equilibrium(const ReducedNetwork& net, const Vec& pg_ref,
                              const EquilibriumOptions& options = {});

/// Throws Error{DimensionMismatch} if `feedback` does not match the state size.
SystemMatrices system_matrices(const GeneratorParams& params, const RowVec& feedback);

/// Coupling matrix H_ij (state_dim x 2) for a given h_ij.
Mat coupling_matrix(const GeneratorParams& params, double h_ij);

/// Feedback applied locally: v_i = -feedback * x_i + u_i, alpha_i' = -integral * x_i.
struct LocalControl {
  RowVec feedback;
  RowVec integral;
};

/// Offsets of each area's block inside the stacked plant state.
class StateLayout {
 public:
  StateLayout() = default;
  explicit StateLayout(std::span<const GeneratorParams> params);

  int areas() const { return static_cast<int>(offsets_.size()); }
  int offset(int area) const { return offsets_[area]; }
  int dim(int area) const { return dims_[area]; }
  int total() const { return total_; }

 private:
  std::vector<int> offsets_;
  std::vector<int> dims_;
  int total_ = 0;
};

/// Physical (absolute) plant state at the given equilibrium:
/// [delta*, 0, Pg*, Pg*, alpha*] per conventional area, [delta*, 0, alpha*] otherwise.
Vec equilibrium_state(std::span<const GeneratorParams> params, const Equilibrium& eq);

/// Deviation x = z - z* for every area, stacked.
Vec deviation(std::span<const GeneratorParams> params, const Equilibrium& eq, const Vec& z);

/// Closed-loop right-hand side on the stacked physical state z, given scalar
/// wide-area inputs u (one per area). `net` is whatever network is active,
/// including fault or load overlays.
Vec dynamics_rhs(const Vec& z, std::span<const GeneratorParams> params,
                 std::span<const LocalControl> control, const ReducedNetwork& net,
                 const Equilibrium& eq, const Vec& u);

/// Exact Jacobian of dynamics_rhs with respect to z.
Mat dynamics_jacobian(const Vec& z, std::span<const GeneratorParams> params,
                      std::span<const LocalControl> control, const ReducedNetwork& net,
                      const Equilibrium& eq);

/// State-dependent affine form: with u = 0, dynamics_rhs(z) == sdc_matrix(z) * x
/// where x = deviation(z) and the coupling gains are frozen at their current values.
Mat sdc_matrix(const Vec& z, std::span<const GeneratorParams> params,
               std::span<const LocalControl> control, const ReducedNetwork& net,
               const Equilibrium& eq);

/// Traditional droop + AGC gains: feedback = [0, k, 0...], integral = [0, kI, 0...].
LocalControl droop_agc_control(const GeneratorParams& params, double droop, double integral);

}  // namespace wadamp
