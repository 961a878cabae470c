#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wadamp/dmi_synthesis.hpp"
#include "wadamp/network_estimation.hpp"
#include "wadamp/reduced_model.hpp"
#include "wadamp/wide_area.hpp"

namespace wadamp {

/// Everything describing the plant: full network, one aggregated generator
/// per area (generator g sits behind network.generators[g]), and the lines
/// whose flows are recorded.
struct SystemData {
  FullNetwork network;
  std::vector<GeneratorParams> generators;
  std::vector<std::pair<int, int>> monitored_lines;

  int areas() const { return static_cast<int>(generators.size()); }
  Vec internal_voltages() const;
  Vec dispatch() const;
  void validate() const;
};

struct FaultEvent {
  int bus = 0;
  double t_start = 0.0;
  double t_clear = 0.0;
};

/// Permanent change of the constant-power load at a bus (negative = decrease).
struct LoadStepEvent {
  int bus = 0;
  double delta_p = 0.0;
  double delta_q = 0.0;
  double t = 0.0;
};

enum class ControllerKind { Traditional, DmiAdaptive };

const char* to_string(ControllerKind k);

struct TopologySpec {
  TopologyKind kind = TopologyKind::AllToAll;
  std::vector<std::vector<int>> groups;
};

struct ControllerConfig {
  ControllerKind kind = ControllerKind::Traditional;
  double droop = 30.0;
  double integral = 0.3;
  double alpha_ii = 0.4;
  double alpha_ij = 0.2;  // per neighbor
  double kc_max = 10.0;
  Eigen::Vector2d channel{1.0, 1.0};
  SynthesisOptions synthesis;
};

struct Scenario {
  double t_end = 60.0;
  double dt = 1e-3;
  int record_every = 10;
  std::vector<FaultEvent> faults;
  std::vector<LoadStepEvent> load_steps;
  ControllerConfig controller;
  double comm_delay = 0.0;
  // Per-area scheduler thresholds; empty means threshold_fraction of the
  // initial hbar_i.
  std::vector<double> thresholds;
  double threshold_fraction = 0.01;
  double check_interval = 0.02;
  double fault_admittance = 1e4;
  TopologySpec topology;
  std::uint64_t seed = 0;
  std::string system_file;  // optional reference to the system data file

  void validate(int areas) const;
  /// Time after which no further events occur.
  double last_event_time() const;
};

struct ResynthesisRecord {
  double t = 0.0;
  bool success = false;
  double kc = 0.0;
  GainCase gain_case = GainCase::Infeasible;
  double wall_ms = 0.0;
  Vec hbar;
  Mat h;  // coupling gains the synthesis saw
  std::vector<DmiCertificate> certificates;
  std::string message;
};

/// Uniformly sampled run record.
struct Trajectory {
  int areas = 0;
  std::vector<int> dims;  // per-area state dimension
  std::vector<double> t;
  Mat delta;  // samples x n, absolute angles
  Mat omega;
  Mat pm;     // NaN for inverter areas
  Mat u;      // physical scalar wide-area input
  Mat u_lifted;  // samples x 2n
  Mat x;      // deviation from the active reference, samples x nz
  Mat xdot;   // time derivative of x
  Mat h;      // samples x n*n, row-major coupling gains
  Mat hbar;   // samples x n
  Vec V;      // composite storage (zero without certificates)
  Vec kc;
  Mat line_p;  // samples x monitored lines
  std::vector<std::string> line_names;
  std::vector<int> design_index;  // index into resyntheses of the active design, -1 if none
  std::vector<ResynthesisRecord> resyntheses;
  Vec gamma;
  Mat laplacian;
  double post_event_start = 0.0;
  double comm_delay = 0.0;
  // max_i |omega_i| at every integration step, for metrics on the full grid.
  std::vector<double> step_t;
  std::vector<double> step_omega_max;

  int samples() const { return static_cast<int>(t.size()); }
};

/// Classical RK4 step. Throws NonFiniteState.
Vec integrate_step(const Vec& x, double t, double dt,
                   const std::function<Vec(double, const Vec&)>& rhs);

/// hbar_i = sum_j |h_ij|.
Vec coupling_activity(const Mat& h);

/// Compares hbar against the value seen at the previous check.
class UpdateScheduler {
 public:
  explicit UpdateScheduler(Vec thresholds) : thresholds_(std::move(thresholds)) {}
  /// True when any area moved by at least its threshold since the previous
  /// call (always true on the first call).
  bool should_update(const Vec& hbar);

 private:
  Vec thresholds_;
  std::optional<Vec> previous_;
};

struct WideAreaState {
  std::vector<DmiCertificate> certificates;
  CommTopology topology;
  WideAreaDesign design;
};

/// Resynthesize every area at coupling gains h (warm start from `previous`
/// when given) and select the cooperative gain. Throws Infeasible.
WideAreaState resynthesize(const SystemData& sys, const Mat& h, const ControllerConfig& cfg,
                           const CommTopology& topology, const WideAreaState* previous);

/// Throws NoConvergence, NonFiniteState, InvalidInput.
Trajectory run_scenario(const SystemData& sys, const Scenario& sc);

struct AuditReport {
  int samples_checked = 0;
  int area_violations = 0;
  double worst_area_margin = 0.0;  // max of (Vdot_i - bound_i), <= 0 when satisfied
  int network_violations = 0;
  double worst_network_margin = 0.0;
  std::vector<double> violation_times;
};

/// Checks the per-area dissipation bound with the active certificates and the
/// instantaneous coupling, and the composite bound Vdot <= -y'Qy/2.
AuditReport dissipation_audit(const Trajectory& tr, const SystemData& sys, double tol = 1e-9);

struct Metrics {
  double dominant_frequency_hz = 0.0;
  double settling_time = 0.0;  // +inf when never settled
  double overshoot = 0.0;
  double rms_consensus_error = 0.0;
};

/// Throws InsufficientData when fewer than 10 s follow the last event.
Metrics metrics(const Trajectory& tr, int probe_area = 2, double band = 2e-4, double hold = 2.0);

/// Zero-crossing frequency of a linearly detrended signal.
double dominant_frequency(std::span<const double> t, std::span<const double> v);

/// First time after which every |omega_i| stays below band until the end, with
/// at least `hold` seconds remaining; +inf otherwise.
double settling_time(std::span<const double> t, const Mat& omega, double band, double hold);
/// Same with the per-sample max_i |omega_i| already reduced.
double settling_time(std::span<const double> t, std::span<const double> omega_max, double band,
                     double hold);

}  // namespace wadamp
