// wadamp: reduce | estimate | synthesize | run
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "wadamp/error.hpp"
#include "wadamp/system_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace wadamp;

namespace {

enum Exit { kOk = 0, kValidation = 2, kRank = 3, kInfeasible = 4, kDivergence = 5 };

int exit_code(ErrorCode c, bool estimating) {
  switch (c) {
    case ErrorCode::RankDeficient: return kRank;
    case ErrorCode::InsufficientData: return estimating ? kRank : kValidation;
    case ErrorCode::Infeasible:
    case ErrorCode::NonPositiveEpsilon:
    case ErrorCode::NotStronglyConnected: return kInfeasible;
    case ErrorCode::NonFiniteState:
    case ErrorCode::NoConvergence: return kDivergence;
    default: return kValidation;
  }
}

void configure_logging() {
  spdlog::set_level(spdlog::level::info);
  const char* env = std::getenv("WADAMP_LOG");
  if (!env) return;
  const std::string v = env;
  if (v == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (v == "info") {
    spdlog::set_level(spdlog::level::info);
  } else if (v == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    spdlog::warn("WADAMP_LOG='{}' not recognised, using info", v);
  }
  spdlog::set_pattern("[%l] %v");
}

struct Common {
  std::string config;
  std::string system;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<double> delay_ms;
  std::string controller;
  std::optional<double> dt;
};

fs::path ensure_out(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) {
    throw Error(ErrorCode::InvalidInput, "cannot create output directory " + dir);
  }
  return p;
}

void require_config(const Common& c) {
  if (c.config.empty()) throw Error(ErrorCode::InvalidInput, "--config is required");
}

// Scenario plus the system it refers to (or --system).
std::pair<Scenario, SystemData> load_run_inputs(const Common& c) {
  require_config(c);
  Scenario sc = io::load_scenario(c.config);
  const std::string sys_path = !c.system.empty() ? c.system : sc.system_file;
  if (sys_path.empty()) {
    throw Error(ErrorCode::InvalidInput, "scenario has no \"system\" entry and --system is not set");
  }
  SystemData sys = io::load_system(sys_path);
  if (c.seed) sc.seed = *c.seed;
  if (c.dt) sc.dt = *c.dt;
  if (c.delay_ms) sc.comm_delay = *c.delay_ms / 1000.0;
  if (!c.controller.empty()) {
    if (c.controller == "traditional") {
      sc.controller.kind = ControllerKind::Traditional;
    } else if (c.controller == "dmi") {
      sc.controller.kind = ControllerKind::DmiAdaptive;
    } else if (c.controller != "both") {
      throw Error(ErrorCode::InvalidInput, "--controller must be traditional, dmi or both");
    }
  }
  sys.validate();
  sc.validate(sys.areas());
  return {sc, sys};
}

// ---- reduce ----------------------------------------------------------------

int cmd_reduce(const Common& c, bool keep_all) {
  require_config(c);
  const SystemData sys = io::load_system(c.config);
  sys.validate();
  const fs::path out = ensure_out(c.out);
  if (keep_all) {
    const CMat Y = augmented_admittance(sys.network, {});
    std::vector<int> all(Y.rows());
    for (int k = 0; k < static_cast<int>(all.size()); ++k) all[k] = k;
    const CMat R = kron_reduce(Y, all);
    json j;
    j["schema_version"] = io::kSchemaVersion;
    j["nodes"] = Y.rows();
    j["G"] = json::array();
    j["B"] = json::array();
    for (int r = 0; r < R.rows(); ++r) {
      json g = json::array(), b = json::array();
      for (int k = 0; k < R.cols(); ++k) {
        g.push_back(R(r, k).real());
        b.push_back(R(r, k).imag());
      }
      j["G"].push_back(g);
      j["B"].push_back(b);
    }
    io::write_file(out / "reduced.json", j.dump(2) + "\n");
    spdlog::info("kept all {} nodes", Y.rows());
    return kOk;
  }
  const ReducedNetwork net = reduce_to_generators(sys.network, sys.internal_voltages());
  const Equilibrium eq = solve_equilibrium(net, sys.dispatch());
  io::write_file(out / "reduced.json", io::reduced_json(net, eq));
  io::write_file(out / "gij_bij.csv", io::gij_bij_csv(net.G, net.B, Mat(), Mat()));
  spdlog::info("reduced to {} internal nodes, written to {}", net.size(), out.string());
  return kOk;
}

// ---- estimate --------------------------------------------------------------

// Columns t, delta_1..n, p_1..n, q_1..n.
MeasurementWindow read_window(const std::string& path, const Vec& E) {
  std::istringstream in(io::read_file(path));
  std::string line;
  const int n = static_cast<int>(E.size());
  if (!std::getline(in, line)) throw Error(ErrorCode::InsufficientData, path + ": empty window");
  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidInput, path + ":" + std::to_string(lineno) + ": bad number");
      }
    }
    if (static_cast<int>(row.size()) != 1 + 3 * n) {
      throw Error(ErrorCode::InvalidInput,
                  path + ":" + std::to_string(lineno) + ": expected " + std::to_string(1 + 3 * n) +
                      " columns");
    }
    rows.push_back(std::move(row));
  }
  MeasurementWindow w;
  const int m = static_cast<int>(rows.size());
  w.delta.resize(m, n);
  w.p.resize(m, n);
  w.q.resize(m, n);
  w.E = E;
  for (int k = 0; k < m; ++k) {
    w.time.push_back(rows[k][0]);
    for (int i = 0; i < n; ++i) {
      w.delta(k, i) = rows[k][1 + i];
      w.p(k, i) = rows[k][1 + n + i];
      w.q(k, i) = rows[k][1 + 2 * n + i];
    }
  }
  return w;
}

struct EstimateFlags {
  std::string window;
  double noise = 0.0;
  int samples = 500;
  double amplitude = 0.1;
  double sample_dt = 0.01;
};

int cmd_estimate(const Common& c, const EstimateFlags& f) {
  require_config(c);
  const SystemData sys = io::load_system(c.config);
  sys.validate();
  const fs::path out = ensure_out(c.out);
  const ReducedNetwork truth = reduce_to_generators(sys.network, sys.internal_voltages());
  const std::uint64_t seed = c.seed.value_or(0);

  MeasurementWindow w;
  if (!f.window.empty()) {
    w = read_window(f.window, truth.E);
  } else {
    const Equilibrium eq = solve_equilibrium(truth, sys.dispatch());
    w = synthesize_window(truth, excitation_angles(eq.delta, f.samples, f.sample_dt, f.amplitude, seed),
                          f.sample_dt);
  }
  // Different stream from the excitation phases.
  add_measurement_noise(w, f.noise, seed ^ 0x9e3779b97f4a7c15ULL);
  const ReducedEstimate est = estimate_reduced_params(w);

  io::write_file(out / "estimates.csv", io::gij_bij_csv(truth.G, truth.B, est.G, est.B));
  json j;
  j["schema_version"] = io::kSchemaVersion;
  j["samples"] = w.samples();
  j["noise_sigma"] = f.noise;
  j["seed"] = seed;
  j["residual_norm"] = est.residual_norm;
  // The system file is the reference whenever the window came from it.
  j["relative_error"] = relative_error(est.G, est.B, truth.G, truth.B);
  io::write_file(out / "estimate.json", j.dump(2) + "\n");
  spdlog::info("estimated {} areas, relative error {:.3e}", w.areas(),
               j["relative_error"].get<double>());
  return kOk;
}

// ---- synthesize -------------------------------------------------------------

struct SynthFlags {
  std::optional<double> alpha_ii;
  std::optional<double> alpha_ij;
  std::optional<double> kc_max;
};

int cmd_synthesize(const Common& c, const SynthFlags& f) {
  auto [sc, sys] = load_run_inputs(c);
  auto& cfg = sc.controller;
  if (f.alpha_ii) cfg.alpha_ii = *f.alpha_ii;
  if (f.alpha_ij) cfg.alpha_ij = *f.alpha_ij;
  if (f.kc_max) cfg.kc_max = *f.kc_max;
  DmiWeights{cfg.alpha_ii, std::vector<double>(sys.areas() - 1, cfg.alpha_ij)}.validate();
  if (!(cfg.kc_max > 0.0)) throw Error(ErrorCode::InvalidInput, "kc_max must be positive");
  const fs::path out = ensure_out(c.out);

  const ReducedNetwork net = reduce_to_generators(sys.network, sys.internal_voltages());
  const Equilibrium eq = solve_equilibrium(net, sys.dispatch());
  const Mat h = coupling_gains(net, eq.delta, eq.delta);
  const CommTopology topo = build_topology(sys.areas(), sc.topology.kind, sc.topology.groups);
  const WideAreaState state = resynthesize(sys, h, cfg, topo, nullptr);
  io::write_file(out / "certificates.json", io::certificates_json(state.certificates));
  io::write_file(out / "kc.json", io::kc_json(topo, state.design));
  for (std::size_t i = 0; i < state.certificates.size(); ++i) {
    spdlog::info("area {}: margin {:.3e}, rho {:.4g}, eps_ii {:.4g}", i + 1,
                 state.certificates[i].margin, state.certificates[i].rho,
                 state.certificates[i].eps_ii);
  }
  spdlog::info("kc = {:.6g} ({})", state.design.kc, to_string(state.design.gain_case));
  return kOk;
}

// ---- run --------------------------------------------------------------------

struct RunResult {
  std::string label;
  Scenario scenario;
  Trajectory trajectory;
  Metrics metrics;
  std::optional<AuditReport> audit;
};

RunResult run_one(const SystemData& sys, Scenario sc, std::string label) {
  RunResult r{std::move(label), sc, run_scenario(sys, sc), {}, std::nullopt};
  r.metrics = metrics(r.trajectory);
  if (sc.controller.kind == ControllerKind::DmiAdaptive) {
    r.audit = dissipation_audit(r.trajectory, sys);
  }
  return r;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      v.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidInput, "bad number in list: '" + cell + "'");
    }
  }
  return v;
}

int cmd_run(const Common& c, const std::string& sweep) {
  auto [base, sys] = load_run_inputs(c);
  const fs::path out = ensure_out(c.out);

  std::vector<std::pair<std::string, Scenario>> jobs;
  if (!sweep.empty()) {
    for (double ms : parse_list(sweep)) {
      Scenario sc = base;
      sc.controller.kind = ControllerKind::DmiAdaptive;
      sc.comm_delay = ms / 1000.0;
      sc.validate(sys.areas());
      std::ostringstream label;
      label << "dmi_delay_" << ms << "ms";
      jobs.emplace_back(label.str(), sc);
    }
  } else if (c.controller == "both") {
    Scenario trad = base;
    trad.controller.kind = ControllerKind::Traditional;
    Scenario dmi = base;
    dmi.controller.kind = ControllerKind::DmiAdaptive;
    jobs.emplace_back("traditional", trad);
    jobs.emplace_back("dmi", dmi);
  } else {
    jobs.emplace_back(to_string(base.controller.kind), base);
  }

  // Independent variants run in parallel; results are collected in order.
  std::vector<std::future<RunResult>> futures;
  for (const auto& [label, sc] : jobs) {
    futures.push_back(std::async(std::launch::async, run_one, std::cref(sys), sc, label));
  }
  std::vector<RunResult> results;
  std::optional<Error> failure;
  for (auto& f : futures) {
    try {
      results.push_back(f.get());
    } catch (const Error& e) {
      if (!failure) failure = e;
    }
  }
  if (failure) throw *failure;

  json summary;
  summary["schema_version"] = io::kSchemaVersion;
  summary["runs"] = json::array();
  std::vector<std::pair<std::string, std::string>> plots;
  for (const auto& r : results) {
    const std::string traj = "trajectory_" + r.label + ".csv";
    io::write_file(out / traj, io::trajectory_csv(r.trajectory));
    io::write_file(out / ("resyntheses_" + r.label + ".csv"), io::resynthesis_csv(r.trajectory));
    json s = json::parse(io::summary_json(r.scenario, r.trajectory, r.metrics,
                                          r.audit ? &*r.audit : nullptr));
    s["label"] = r.label;
    summary["runs"].push_back(s);
    plots.emplace_back(r.label, traj);
    spdlog::info("{}: frequency {:.3f} Hz, settling {:.3f} s, {} resyntheses", r.label,
                 r.metrics.dominant_frequency_hz, r.metrics.settling_time,
                 r.trajectory.resyntheses.size());
  }
  if (!sweep.empty()) {
    std::ostringstream csv;
    csv << "delay_ms,settling_time,dominant_frequency_hz,overshoot\n";
    csv.precision(10);
    for (const auto& r : results) {
      csv << r.scenario.comm_delay * 1000.0 << ',' << r.metrics.settling_time << ','
          << r.metrics.dominant_frequency_hz << ',' << r.metrics.overshoot << '\n';
    }
    io::write_file(out / "delay_sweep.csv", csv.str());
  }
  io::write_file(out / "summary.json", summary.dump(2) + "\n");
  io::write_file(out / "plot.py", io::plot_script(plots));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Wide-area damping control toolkit"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "Input JSON (system for reduce/estimate, scenario otherwise)");
    sub->add_option("--system", common.system, "System JSON, overrides the scenario reference");
    sub->add_option("--out", common.out, "Output directory");
    sub->add_option("--seed", common.seed, "Random seed");
    sub->add_option("--delay", common.delay_ms, "Communication delay in ms");
    sub->add_option("--controller", common.controller, "traditional, dmi or both");
    sub->add_option("--dt", common.dt, "Integration step in s");
  };

  bool keep_all = false;
  auto* reduce = app.add_subcommand("reduce", "Kron-reduce the network to generator nodes");
  add_common(reduce);
  reduce->add_flag("--keep-all", keep_all, "Keep every node (identity reduction)");

  EstimateFlags ef;
  auto* estimate = app.add_subcommand("estimate", "Least-squares estimate of reduced G, B");
  add_common(estimate);
  estimate->add_option("--window", ef.window, "CSV with t, delta_i, p_i, q_i columns");
  estimate->add_option("--noise", ef.noise, "Measurement noise sigma for the synthetic window");
  estimate->add_option("--samples", ef.samples, "Synthetic window length");
  estimate->add_option("--amplitude", ef.amplitude, "Synthetic angle excursion in rad");

  SynthFlags sf;
  auto* synth = app.add_subcommand("synthesize", "Per-area certificates and cooperative gain");
  add_common(synth);
  synth->add_option("--alpha-ii", sf.alpha_ii, "Weight of eps_ii");
  synth->add_option("--alpha-ij", sf.alpha_ij, "Weight of each eps_ij");
  synth->add_option("--kc-max", sf.kc_max, "Cap on the cooperative gain");

  std::string sweep;
  auto* run = app.add_subcommand("run", "Simulate a scenario");
  add_common(run);
  run->add_option("--delay-sweep", sweep, "Comma-separated delays in ms for DMI runs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (*reduce) return cmd_reduce(common, keep_all);
    if (*estimate) return cmd_estimate(common, ef);
    if (*synth) return cmd_synthesize(common, sf);
    if (*run) return cmd_run(common, sweep);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return exit_code(e.code(), estimate->parsed());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kValidation;
  }
  return kValidation;
}
