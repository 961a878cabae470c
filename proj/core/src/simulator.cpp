#include "wadamp/simulator.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <future>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>

#include "wadamp/error.hpp"

namespace wadamp {

Vec SystemData::internal_voltages() const {
  Vec E(areas());
  for (int i = 0; i < areas(); ++i) E(i) = generators[i].internal_voltage;
  return E;
}

Vec SystemData::dispatch() const {
  Vec p(areas());
  for (int i = 0; i < areas(); ++i) p(i) = generators[i].pg_ref;
  return p;
}

void SystemData::validate() const {
  network.validate();
  if (generators.size() != network.generators.size() || generators.size() < 2) {
    throw Error(ErrorCode::InvalidInput, "need one generator record per internal node (n >= 2)");
  }
  for (std::size_t g = 0; g < generators.size(); ++g) {
    generators[g].validate();
    if (std::abs(generators[g].xd_prime - network.generators[g].xd_prime) > 1e-15) {
      throw Error(ErrorCode::InvalidInput, "generator xd_prime disagrees with the network branch");
    }
  }
  for (auto [a, b] : monitored_lines) {
    const bool found = std::any_of(network.lines.begin(), network.lines.end(), [&](const Line& l) {
      return (l.from == a && l.to == b) || (l.from == b && l.to == a);
    });
    if (!found) {
      throw Error(ErrorCode::InvalidInput,
                  "monitored line " + std::to_string(a) + "-" + std::to_string(b) + " not found");
    }
  }
}

const char* to_string(ControllerKind k) {
  return k == ControllerKind::Traditional ? "traditional" : "dmi";
}

void Scenario::validate(int areas) const {
  auto bad = [](const std::string& m) { throw Error(ErrorCode::InvalidInput, m); };
  if (!(dt > 0.0) || !(t_end > 0.0)) bad("dt and t_end must be positive");
  if (record_every < 1) bad("record_every must be at least 1");
  for (const auto& f : faults) {
    if (f.t_start < 0.0 || f.t_clear < f.t_start || f.t_clear > t_end) bad("fault times out of range");
  }
  for (const auto& l : load_steps) {
    if (l.t < 0.0 || l.t > t_end) bad("load step time out of range");
  }
  if (comm_delay < 0.0) bad("comm_delay must be nonnegative");
  const double steps = comm_delay / dt;
  if (std::abs(steps - std::round(steps)) > 1e-6) bad("comm_delay must be a multiple of dt");
  if (!thresholds.empty() && static_cast<int>(thresholds.size()) != areas) {
    bad("one scheduler threshold per area");
  }
  if (!(check_interval >= dt)) bad("check_interval must be at least dt");
  if (controller.kind == ControllerKind::DmiAdaptive) {
    DmiWeights w{controller.alpha_ii, std::vector<double>(areas - 1, controller.alpha_ij)};
    w.validate();
    if (!(controller.kc_max > 0.0)) bad("kc_max must be positive");
  }
}

double Scenario::last_event_time() const {
  double t = 0.0;
  for (const auto& f : faults) t = std::max(t, f.t_clear);
  for (const auto& l : load_steps) t = std::max(t, l.t);
  return t;
}

Vec integrate_step(const Vec& x, double t, double dt,
                   const std::function<Vec(double, const Vec&)>& rhs) {
  const Vec k1 = rhs(t, x);
  const Vec k2 = rhs(t + 0.5 * dt, x + 0.5 * dt * k1);
  const Vec k3 = rhs(t + 0.5 * dt, x + 0.5 * dt * k2);
  const Vec k4 = rhs(t + dt, x + dt * k3);
  Vec out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!out.allFinite()) {
    throw Error(ErrorCode::NonFiniteState, "state became non-finite at t = " + std::to_string(t));
  }
  return out;
}

Vec coupling_activity(const Mat& h) { return h.cwiseAbs().rowwise().sum(); }

bool UpdateScheduler::should_update(const Vec& hbar) {
  bool fire = true;
  if (previous_) {
    fire = false;
    for (int i = 0; i < hbar.size(); ++i) {
      if (!(std::abs(hbar(i) - (*previous_)(i)) < thresholds_(i))) fire = true;
    }
  }
  previous_ = hbar;
  return fire;
}

namespace {

std::vector<Mat> neighbor_couplings(const SystemData& sys, const Mat& h, int i) {
  std::vector<Mat> H;
  for (int j = 0; j < sys.areas(); ++j) {
    if (j != i) H.push_back(coupling_matrix(sys.generators[i], h(i, j)));
  }
  return H;
}

}  // namespace

WideAreaState resynthesize(const SystemData& sys, const Mat& h, const ControllerConfig& cfg,
                           const CommTopology& topology, const WideAreaState* previous) {
  const int n = sys.areas();
  const DmiWeights weights{cfg.alpha_ii, std::vector<double>(n - 1, cfg.alpha_ij)};
  std::vector<std::future<DmiCertificate>> jobs;
  for (int i = 0; i < n; ++i) {
    jobs.push_back(std::async(std::launch::async, [&, i] {
      const auto& p = sys.generators[i];
      const DmiPlant plant = generator_plant(p, cfg.channel);
      const std::vector<Mat> H = neighbor_couplings(sys, h, i);
      const DmiCertificate* warm = previous ? &previous->certificates[i] : nullptr;
      const Mat F0 = warm ? warm->F : initial_gain(plant);
      return optimize_combined(plant, H, weights, F0, cfg.synthesis, warm);
    }));
  }
  WideAreaState out;
  out.topology = topology;
  std::optional<Error> failure;
  for (int i = 0; i < n; ++i) {
    try {
      out.certificates.push_back(jobs[i].get());
    } catch (const Error& e) {
      if (!failure) failure = Error(e.code(), "area " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  if (failure) throw *failure;

  AreaDissipativity d{Vec(n), Vec(n), Mat::Zero(n, n)};
  for (int i = 0; i < n; ++i) {
    const auto& c = out.certificates[i];
    d.eps_ii(i) = c.eps_ii;
    d.rho(i) = c.rho;
    int k = 0;
    for (int j = 0; j < n; ++j) {
      if (j != i) d.eps(i, j) = c.eps_ij[k++];
    }
  }
  out.design = select_kc(topology, d, cfg.kc_max);
  return out;
}

namespace {

struct NetworkConfig {
  ReducedNetwork reduced;
  CMat bus_from_internal;  // bus voltages = this * internal phasors
};

class NetworkCache {
 public:
  NetworkCache(const SystemData& sys, const Scenario& sc) : sys_(sys), sc_(sc) {}

  // fault: index into sc.faults or -1; loads: number of load steps applied.
  const NetworkConfig& get(int fault, int loads) {
    const auto key = std::make_pair(fault, loads);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    ShuntOverlay overlay;
    for (int k = 0; k < loads; ++k) {
      const auto& l = sc_.load_steps[order_[k]];
      overlay.shunts.emplace_back(l.bus, std::complex<double>(l.delta_p, -l.delta_q));
    }
    if (fault >= 0) {
      overlay.shunts.emplace_back(sc_.faults[fault].bus,
                                  std::complex<double>(sc_.fault_admittance, 0.0));
    }
    NetworkConfig cfg;
    cfg.reduced = reduce_to_generators(sys_.network, sys_.internal_voltages(), overlay);
    const CMat Y = augmented_admittance(sys_.network, overlay);
    const int nb = static_cast<int>(sys_.network.buses.size());
    const int ng = sys_.areas();
    cfg.bus_from_internal =
        -Y.topLeftCorner(nb, nb).fullPivLu().solve(Y.topRightCorner(nb, ng));
    return cache_.emplace(key, std::move(cfg)).first->second;
  }

  void set_load_order(std::vector<int> order) { order_ = std::move(order); }

 private:
  const SystemData& sys_;
  const Scenario& sc_;
  std::vector<int> order_;
  std::map<std::pair<int, int>, NetworkConfig> cache_;
};

Vec angles(const Vec& z, const StateLayout& layout) {
  Vec d(layout.areas());
  for (int i = 0; i < layout.areas(); ++i) d(i) = z(layout.offset(i) + kAngle);
  return d;
}

}  // namespace

Trajectory run_scenario(const SystemData& sys, const Scenario& sc) {
  sys.validate();
  const int n = sys.areas();
  sc.validate(n);
  const std::span<const GeneratorParams> params(sys.generators);
  const StateLayout layout(params);
  const bool adaptive = sc.controller.kind == ControllerKind::DmiAdaptive;

  // Event schedule in integer steps.
  const auto to_step = [&](double t) { return static_cast<long>(std::llround(t / sc.dt)); };
  const long steps = to_step(sc.t_end);
  std::vector<int> load_order(sc.load_steps.size());
  std::iota(load_order.begin(), load_order.end(), 0);
  std::stable_sort(load_order.begin(), load_order.end(),
                   [&](int a, int b) { return sc.load_steps[a].t < sc.load_steps[b].t; });
  NetworkCache networks(sys, sc);
  networks.set_load_order(load_order);
  auto active_fault = [&](long k) {
    for (std::size_t f = 0; f < sc.faults.size(); ++f) {
      if (k >= to_step(sc.faults[f].t_start) && k < to_step(sc.faults[f].t_clear)) {
        return static_cast<int>(f);
      }
    }
    return -1;
  };
  auto loads_applied = [&](long k) {
    int c = 0;
    for (int idx : load_order) {
      if (k >= to_step(sc.load_steps[idx].t)) ++c;
    }
    return c;
  };

  const Vec pg_ref = sys.dispatch();
  Equilibrium eq = solve_equilibrium(networks.get(-1, 0).reduced, pg_ref);
  Vec z = equilibrium_state(params, eq);

  std::vector<LocalControl> control;
  for (const auto& p : sys.generators) {
    control.push_back(droop_agc_control(p, sc.controller.droop, sc.controller.integral));
  }

  CommTopology topology =
      build_topology(n, sc.topology.kind, sc.topology.groups);
  std::optional<WideAreaState> design;
  int design_index = -1;
  double kc = 0.0;

  Vec thresholds;
  {
    const Mat h0 = coupling_gains(networks.get(-1, 0).reduced, eq.delta, eq.delta);
    const Vec hb0 = coupling_activity(h0);
    thresholds = sc.thresholds.empty()
                     ? Vec(sc.threshold_fraction * hb0)
                     : Eigen::Map<const Vec>(sc.thresholds.data(), n).eval();
  }
  UpdateScheduler scheduler(thresholds);

  const long delay_steps = to_step(sc.comm_delay);
  const long check_every = std::max<long>(1, to_step(sc.check_interval));
  std::deque<Vec> y_history;  // lifted outputs, newest at the back

  Trajectory tr;
  tr.areas = n;
  for (int i = 0; i < n; ++i) tr.dims.push_back(layout.dim(i));
  tr.gamma = topology.gamma;
  tr.laplacian = topology.L;
  tr.post_event_start = sc.last_event_time();
  tr.comm_delay = sc.comm_delay;
  for (auto [a, b] : sys.monitored_lines) {
    tr.line_names.push_back("line_" + std::to_string(a) + "_" + std::to_string(b) + "_P");
  }
  const long samples = steps / sc.record_every + 1;
  const int nz = layout.total();
  const int nl = static_cast<int>(sys.monitored_lines.size());
  tr.delta.resize(samples, n);
  tr.omega.resize(samples, n);
  tr.pm.resize(samples, n);
  tr.u.resize(samples, n);
  tr.u_lifted.resize(samples, 2 * n);
  tr.x.resize(samples, nz);
  tr.xdot.resize(samples, nz);
  tr.h.resize(samples, n * n);
  tr.hbar.resize(samples, n);
  tr.V.resize(samples);
  tr.kc.resize(samples);
  tr.step_t.reserve(steps + 1);
  tr.step_omega_max.reserve(steps + 1);
  tr.line_p.resize(samples, nl);

  int prev_loads = 0;
  long rec = 0;
  for (long k = 0; k <= steps; ++k) {
    const double t = k * sc.dt;
    const int fault = active_fault(k);
    const int loads = loads_applied(k);
    const NetworkConfig& net = networks.get(fault, loads);
    if (loads != prev_loads) {
      // New operating point for the references; the fault (if any) is not
      // part of the steady state.
      eq = solve_equilibrium(networks.get(-1, loads).reduced, pg_ref);
      prev_loads = loads;
      spdlog::info("t={:.3f}: load step applied, references re-solved", t);
    }
    const Vec x = deviation(params, eq, z);
    Vec y(2 * n);
    for (int i = 0; i < n; ++i) y.segment<2>(2 * i) = x.segment<2>(layout.offset(i));
    y_history.push_back(y);
    while (static_cast<long>(y_history.size()) > delay_steps + 1) y_history.pop_front();
    const Vec& y_old = y_history.front();

    const Vec delta = angles(z, layout);
    const Mat h = coupling_gains(net.reduced, delta, eq.delta);

    if (adaptive && k % check_every == 0) {
      const Vec hb = coupling_activity(h);
      if (scheduler.should_update(hb)) {
        ResynthesisRecord r;
        r.t = t;
        r.hbar = hb;
        r.h = h;
        const auto start = std::chrono::steady_clock::now();
        try {
          WideAreaState next = resynthesize(sys, h, sc.controller, topology,
                                            design ? &*design : nullptr);
          for (int i = 0; i < n; ++i) control[i] = to_local_control(next.certificates[i].F);
          kc = next.design.kc;
          r.success = true;
          r.kc = kc;
          r.gain_case = next.design.gain_case;
          r.certificates = next.certificates;
          design = std::move(next);
        } catch (const Error& e) {
          r.success = false;
          r.kc = kc;
          r.message = e.what();
          spdlog::warn("t={:.3f}: resynthesis failed, keeping previous gains: {}", t, e.what());
        }
        r.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - start)
                        .count();
        if (r.success) {
          design_index = static_cast<int>(tr.resyntheses.size());
          spdlog::info("t={:.3f}: resynthesized ({}), kc = {:.4g}, {:.1f} ms", t,
                       to_string(r.gain_case), kc, r.wall_ms);
        }
        tr.resyntheses.push_back(std::move(r));
      }
    }

    // Wide-area input from current own outputs and delayed neighbor outputs.
    Vec u_lift = Vec::Zero(2 * n);
    if (design) {
      const Mat& L = topology.L;
      for (int i = 0; i < n; ++i) {
        Eigen::Vector2d acc = L(i, i) * y.segment<2>(2 * i);
        for (int j = 0; j < n; ++j) {
          if (j != i) acc += L(i, j) * y_old.segment<2>(2 * j);
        }
        u_lift.segment<2>(2 * i) = -kc * acc;
      }
    }
    Vec u(n);
    for (int i = 0; i < n; ++i) u(i) = sc.controller.channel.dot(u_lift.segment<2>(2 * i));

    auto rhs = [&](double, const Vec& s) {
      return dynamics_rhs(s, params, control, net.reduced, eq, u);
    };

    {
      double peak = 0.0;
      for (int i = 0; i < n; ++i) peak = std::max(peak, std::abs(z(layout.offset(i) + kSpeed)));
      tr.step_t.push_back(t);
      tr.step_omega_max.push_back(peak);
    }
    if (k % sc.record_every == 0) {
      tr.t.push_back(t);
      const Vec dz = rhs(t, z);
      for (int i = 0; i < n; ++i) {
        const int o = layout.offset(i);
        tr.delta(rec, i) = z(o + kAngle);
        tr.omega(rec, i) = z(o + kSpeed);
        tr.pm(rec, i) = sys.generators[i].kind == GeneratorKind::Conventional
                            ? z(o + kMech)
                            : std::numeric_limits<double>::quiet_NaN();
      }
      tr.u.row(rec) = u.transpose();
      tr.u_lifted.row(rec) = u_lift.transpose();
      tr.x.row(rec) = x.transpose();
      tr.xdot.row(rec) = dz.transpose();
      tr.h.row(rec) = Eigen::Map<const RowVec>(Mat(h.transpose()).data(), n * n);
      tr.hbar.row(rec) = coupling_activity(h).transpose();
      double V = 0.0;
      if (design && kc > 0.0) {
        for (int i = 0; i < n; ++i) {
          const auto xi = x.segment(layout.offset(i), layout.dim(i));
          V += topology.gamma(i) / kc * 0.5 * xi.dot(design->certificates[i].P * xi);
        }
      }
      tr.V(rec) = V;
      tr.kc(rec) = kc;
      tr.design_index.push_back(design_index);
      if (nl > 0) {
        Eigen::VectorXcd Ein(n);
        for (int i = 0; i < n; ++i) Ein(i) = std::polar(sys.generators[i].internal_voltage, delta(i));
        const Eigen::VectorXcd Vb = net.bus_from_internal * Ein;
        for (int l = 0; l < nl; ++l) {
          const auto [a, b] = sys.monitored_lines[l];
          const auto it = std::find_if(
              sys.network.lines.begin(), sys.network.lines.end(), [&](const Line& ln) {
                return (ln.from == a && ln.to == b) || (ln.from == b && ln.to == a);
              });
          const int ia = sys.network.bus_index(a);
          const int ib = sys.network.bus_index(b);
          const std::complex<double> ys = 1.0 / std::complex<double>(it->r, it->x);
          const std::complex<double> I =
              (Vb(ia) - Vb(ib)) * ys + Vb(ia) * std::complex<double>(0.0, 0.5 * it->b_shunt);
          tr.line_p(rec, l) = std::real(Vb(ia) * std::conj(I));
        }
      }
      ++rec;
    }
    if (k == steps) break;
    z = integrate_step(z, t, sc.dt, rhs);
  }
  return tr;
}

AuditReport dissipation_audit(const Trajectory& tr, const SystemData& sys, double tol) {
  AuditReport rep;
  const int n = tr.areas;
  std::vector<int> offset(n, 0);
  for (int i = 1; i < n; ++i) offset[i] = offset[i - 1] + tr.dims[i - 1];
  CommTopology topo;
  topo.L = tr.laplacian;
  topo.S = Mat::Zero(n, n);
  topo.gamma = tr.gamma;

  for (int s = 0; s < tr.samples(); ++s) {
    const int di = tr.design_index[s];
    if (di < 0) continue;
    const auto& rec = tr.resyntheses[di];
    ++rep.samples_checked;
    AreaDissipativity d{Vec(n), Vec(n), Mat::Zero(n, n)};
    Vec y(2 * n);
    for (int i = 0; i < n; ++i) y.segment<2>(2 * i) = tr.x.row(s).segment(offset[i], 2).transpose();
    double vdot_total = 0.0;
    bool area_bad = false;
    for (int i = 0; i < n; ++i) {
      const auto& c = rec.certificates[i];
      const Vec xi = tr.x.row(s).segment(offset[i], tr.dims[i]).transpose();
      const Vec xd = tr.xdot.row(s).segment(offset[i], tr.dims[i]).transpose();
      const Eigen::Vector2d yi = y.segment<2>(2 * i);
      const Eigen::Vector2d ui = tr.u_lifted.row(s).segment<2>(2 * i).transpose();
      const double vdot = xi.dot(c.P * xd);
      double bound = ui.dot(yi) + 0.5 * c.eps_ii * ui.squaredNorm() - 0.5 * c.rho * yi.squaredNorm();
      int k = 0;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        bound += 0.5 * c.eps_ij[k] * y.segment<2>(2 * j).squaredNorm();
        d.eps(i, j) = c.eps_ij[k];
        ++k;
      }
      d.eps_ii(i) = c.eps_ii;
      d.rho(i) = c.rho;
      const double excess = vdot - bound;
      const double scale = 1.0 + std::abs(vdot) + std::abs(bound);
      rep.worst_area_margin = std::max(rep.worst_area_margin, excess);
      if (excess > tol * scale) {
        ++rep.area_violations;
        area_bad = true;
      }
      vdot_total += tr.gamma(i) / rec.kc * vdot;
    }
    if (area_bad) rep.violation_times.push_back(tr.t[s]);
    if (rec.kc > 0.0) {
      const Mat Q = assemble_Q_uniform(topo, d, rec.kc);
      const Eigen::Map<const Mat> Y(y.data(), 2, n);
      const double quad = (Y * Q * Y.transpose()).trace();
      const double excess = vdot_total + 0.5 * quad;
      rep.worst_network_margin = std::max(rep.worst_network_margin, excess);
      if (excess > tol * (1.0 + std::abs(vdot_total) + std::abs(quad))) ++rep.network_violations;
    }
  }
  (void)sys;
  return rep;
}

namespace {

// Half-period count over the span between first and last zero crossing of
// v - (a + b t); 0 when fewer than two crossings.
double crossing_frequency(std::span<const double> t, std::span<const double> v, double a, double b) {
  double first = 0.0, last = 0.0;
  int count = 0;
  double prev = v[0] - (a + b * t[0]);
  for (std::size_t k = 1; k < t.size(); ++k) {
    const double cur = v[k] - (a + b * t[k]);
    if ((prev < 0.0 && cur >= 0.0) || (prev > 0.0 && cur <= 0.0)) {
      const double tc = t[k - 1] + prev / (prev - cur) * (t[k] - t[k - 1]);
      if (count == 0) first = tc;
      last = tc;
      ++count;
    }
    prev = cur;
  }
  if (count < 2 || last <= first) return 0.0;
  return 0.5 * (count - 1) / (last - first);
}

}  // namespace

double dominant_frequency(std::span<const double> t, std::span<const double> v) {
  const std::size_t m = t.size();
  if (m < 3 || v.size() != m) throw Error(ErrorCode::InsufficientData, "signal too short");
  const Eigen::Map<const Vec> tv(t.data(), static_cast<Eigen::Index>(m));
  const Eigen::Map<const Vec> vv(v.data(), static_cast<Eigen::Index>(m));
  // A plain line fit over a few cycles soaks up part of the oscillation and
  // skews the crossings, so the trend is refit jointly with a sinusoid at
  // the current estimate.
  Mat X(m, 2);
  X.col(0).setOnes();
  X.col(1) = tv;
  Vec coef = X.colPivHouseholderQr().solve(vv);
  double f = crossing_frequency(t, v, coef(0), coef(1));
  for (int it = 0; it < 8 && f > 0.0; ++it) {
    Mat Xs(m, 4);
    Xs.leftCols(2) = X;
    Xs.col(2) = (2.0 * std::numbers::pi * f * tv).array().sin();
    Xs.col(3) = (2.0 * std::numbers::pi * f * tv).array().cos();
    coef = Xs.colPivHouseholderQr().solve(vv);
    const double next = crossing_frequency(t, v, coef(0), coef(1));
    if (next <= 0.0) break;
    const bool done = std::abs(next - f) <= 1e-9 * f;
    f = next;
    if (done) break;
  }
  return f;
}

double settling_time(std::span<const double> t, std::span<const double> omega_max, double band,
                     double hold) {
  const int m = static_cast<int>(t.size());
  if (m == 0) throw Error(ErrorCode::InsufficientData, "empty trajectory");
  if (omega_max.size() != t.size()) throw Error(ErrorCode::DimensionMismatch, "one value per time");
  int last_bad = -1;
  for (int k = 0; k < m; ++k) {
    if (!(omega_max[k] < band)) last_bad = k;
  }
  if (last_bad == m - 1) return std::numeric_limits<double>::infinity();
  const double ts = last_bad < 0 ? t[0] : t[last_bad + 1];
  if (t[m - 1] - ts < hold) return std::numeric_limits<double>::infinity();
  return ts - t[0];
}

double settling_time(std::span<const double> t, const Mat& omega, double band, double hold) {
  if (omega.rows() != static_cast<Eigen::Index>(t.size())) {
    throw Error(ErrorCode::DimensionMismatch, "one row per time");
  }
  std::vector<double> peak(t.size());
  for (Eigen::Index k = 0; k < omega.rows(); ++k) peak[k] = omega.row(k).cwiseAbs().maxCoeff();
  return settling_time(t, peak, band, hold);
}

Metrics metrics(const Trajectory& tr, int probe_area, double band, double hold) {
  const int m = tr.samples();
  if (m == 0 || tr.t.back() - tr.post_event_start < 10.0 - 1e-9) {
    throw Error(ErrorCode::InsufficientData, "need at least 10 s after the last event");
  }
  if (probe_area < 0 || probe_area >= tr.areas) throw Error(ErrorCode::InvalidInput, "probe area");
  Metrics out;
  std::vector<double> tw, vw;
  for (int k = 0; k < m; ++k) {
    if (tr.t[k] >= tr.post_event_start && tr.t[k] <= tr.post_event_start + 5.0) {
      tw.push_back(tr.t[k]);
      vw.push_back(tr.omega(k, probe_area));
    }
  }
  out.dominant_frequency_hz = dominant_frequency(tw, vw);
  out.settling_time = tr.step_t.empty() ? settling_time(tr.t, tr.omega, band, hold)
                                         : settling_time(tr.step_t, tr.step_omega_max, band, hold);
  double peak = 0.0;
  double acc = 0.0;
  const int n = tr.areas;
  std::vector<int> offset(n, 0);
  for (int i = 1; i < n; ++i) offset[i] = offset[i - 1] + tr.dims[i - 1];
  for (int k = 0; k < m; ++k) {
    if (tr.t[k] >= tr.post_event_start) peak = std::max(peak, tr.omega.row(k).cwiseAbs().maxCoeff());
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (int i = 0; i < n; ++i) mean += tr.x.row(k).segment<2>(offset[i]).transpose();
    mean /= n;
    double e = 0.0;
    for (int i = 0; i < n; ++i) {
      e += (tr.x.row(k).segment<2>(offset[i]).transpose() - mean).squaredNorm();
    }
    acc += e / n;
  }
  out.overshoot = peak;
  out.rms_consensus_error = std::sqrt(acc / m);
  return out;
}

}  // namespace wadamp
