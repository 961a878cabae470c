#pragma once

#include <cstdint>

#include <complex>
#include <span>
#include <utility>
#include <vector>

#include "wadamp/reduced_model.hpp"

namespace wadamp {

using CMat = Eigen::MatrixXcd;

struct Bus {
  int id = 0;
  double p_load = 0.0;
  double q_load = 0.0;
};

struct Line {
  int from = 0;
  int to = 0;
  double r = 0.0;
  double x = 0.0;
  double b_shunt = 0.0;  // total line charging
};

/// Generator internal node, tied to its terminal bus through x'_d.
struct GeneratorBranch {
  int bus = 0;
  double xd_prime = 0.0;
};

struct FullNetwork {
  std::vector<Bus> buses;
  std::vector<Line> lines;
  std::vector<GeneratorBranch> generators;

  /// Position of a bus id inside `buses`; throws InvalidInput if unknown.
  int bus_index(int id) const;
  void validate() const;
};

/// Extra shunt admittance per bus id (fault to ground, load changes).
struct ShuntOverlay {
  std::vector<std::pair<int, std::complex<double>>> shunts;
};

/// Bus admittance matrix over `buses` (in their listed order). Series
/// admittance plus half the charging at each end; loads become constant
/// shunt admittances at 1 p.u. voltage. Throws DisconnectedNetwork.
CMat admittance_from_lines(const FullNetwork& net, const ShuntOverlay& overlay = {});

/// Y-bus extended with one internal node per generator, appended after the
/// buses in generator order.
CMat augmented_admittance(const FullNetwork& net, const ShuntOverlay& overlay = {});

/// Y_red = Y_kk - Y_ke Y_ee^{-1} Y_ek. Throws SingularInteriorBlock.
CMat kron_reduce(const CMat& Y, std::span<const int> keep);

/// Reduce to the generator internal nodes.
ReducedNetwork reduce_to_generators(const FullNetwork& net, const Vec& E,
                                    const ShuntOverlay& overlay = {});

/// Time series of internal-node quantities, one row per sample.
struct MeasurementWindow {
  std::vector<double> time;
  Mat delta;  // samples x n
  Mat p;
  Mat q;
  Vec E;

  int samples() const { return static_cast<int>(delta.rows()); }
  int areas() const { return static_cast<int>(delta.cols()); }
};

struct ReducedEstimate {
  Mat G;
  Mat B;
  double residual_norm = 0.0;
};

/// Noise-free window from a known network at the given angle samples.
MeasurementWindow synthesize_window(const ReducedNetwork& net, const Mat& delta, double dt);

/// Angle samples delta*_i + amplitude * sum_k sin(2 pi f_k t + phase_ik) with
/// three tones and phases drawn from the seed. Enough excitation for the
/// least-squares regressor to have full rank.
Mat excitation_angles(const Vec& delta_star, int samples, double dt, double amplitude,
                      std::uint64_t seed);

/// Adds N(0, sigma^2) to every p and q entry.
void add_measurement_noise(MeasurementWindow& window, double sigma, std::uint64_t seed);

/// Frobenius error of [G B] relative to the truth.
double relative_error(const Mat& G_est, const Mat& B_est, const Mat& G, const Mat& B);

/// Least squares on the reduced power equations with one unknown per
/// symmetric pair. Throws RankDeficient when the regressor loses rank and
/// InsufficientData on malformed windows.
ReducedEstimate estimate_reduced_params(const MeasurementWindow& window);

/// Range of the coupling gain as delta_ij - delta_ij* sweeps [lo, hi].
std::pair<double, double> h_bounds(double G_ij, double B_ij, double E_i, double E_j,
                                   double delta_ij_star, double lo, double hi);

}  // namespace wadamp
