#include "wadamp/system_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "json.hpp"
#include "wadamp/error.hpp"

namespace wadamp::io {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& source, const std::string& msg) {
  throw Error(ErrorCode::InvalidInput, source + ": " + msg);
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& source,
                const std::string& where) {
  if (!j.is_object()) fail(source, where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!ok.count(it.key())) fail(source, "unknown key '" + it.key() + "' in " + where);
  }
}

template <class T>
T get(const json& j, const char* key, const std::string& source, const std::string& where) {
  if (!j.contains(key)) fail(source, "missing key '" + std::string(key) + "' in " + where);
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(source, "key '" + std::string(key) + "' in " + where + " has the wrong type");
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& source,
         const std::string& where) {
  return j.contains(key) ? get<T>(j, key, source, where) : fallback;
}

json parse(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + upto, '\n');
    fail(source, "line " + std::to_string(line) + ": malformed JSON (" + e.what() + ")");
  }
}

void check_version(const json& j, const std::string& source) {
  const int v = get<int>(j, "schema_version", source, "top level");
  if (v != kSchemaVersion) {
    fail(source, "schema_version " + std::to_string(v) + " is not supported (expected " +
                     std::to_string(kSchemaVersion) + ")");
  }
}

json matrix(const Mat& M) {
  json rows = json::array();
  for (int r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    rows.push_back(row);
  }
  return rows;
}

json vector(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}


json maybe_number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidInput, "cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::InvalidInput, "cannot write " + path.string());
  out << text;
}

SystemData parse_system(const std::string& text, const std::string& source) {
  const json j = parse(text, source);
  check_keys(j, {"schema_version", "name", "buses", "lines", "generators", "monitored_lines"},
             source, "top level");
  check_version(j, source);
  SystemData sys;
  for (const auto& b : get<json>(j, "buses", source, "top level")) {
    check_keys(b, {"id", "p_load", "q_load"}, source, "bus");
    sys.network.buses.push_back({get<int>(b, "id", source, "bus"),
                                 get_or<double>(b, "p_load", 0.0, source, "bus"),
                                 get_or<double>(b, "q_load", 0.0, source, "bus")});
  }
  for (const auto& l : get<json>(j, "lines", source, "top level")) {
    check_keys(l, {"from", "to", "r", "x", "b"}, source, "line");
    sys.network.lines.push_back({get<int>(l, "from", source, "line"), get<int>(l, "to", source, "line"),
                                 get<double>(l, "r", source, "line"),
                                 get<double>(l, "x", source, "line"),
                                 get_or<double>(l, "b", 0.0, source, "line")});
  }
  for (const auto& g : get<json>(j, "generators", source, "top level")) {
    const std::string where = "generator";
    check_keys(g, {"name", "bus", "kind", "inertia", "damping", "xd_prime", "tau1", "tau2", "E",
                   "pg_ref", "integral_gain", "omega_base"},
               source, where);
    GeneratorParams p;
    const std::string kind = get_or<std::string>(g, "kind", "conventional", source, where);
    if (kind == "conventional") {
      p.kind = GeneratorKind::Conventional;
    } else if (kind == "inverter") {
      p.kind = GeneratorKind::InverterBased;
    } else {
      fail(source, "generator kind must be 'conventional' or 'inverter'");
    }
    p.inertia = get<double>(g, "inertia", source, where);
    p.damping = get<double>(g, "damping", source, where);
    p.xd_prime = get<double>(g, "xd_prime", source, where);
    p.tau1 = get_or<double>(g, "tau1", 0.0, source, where);
    p.tau2 = get_or<double>(g, "tau2", 0.0, source, where);
    p.internal_voltage = get<double>(g, "E", source, where);
    p.pg_ref = get<double>(g, "pg_ref", source, where);
    p.omega_base = get_or<double>(g, "omega_base", 1.0, source, where);
    if (g.contains("integral_gain")) {
      const auto v = get<std::vector<double>>(g, "integral_gain", source, where);
      p.integral_gain = Eigen::Map<const RowVec>(v.data(), static_cast<Eigen::Index>(v.size()));
    } else {
      p.integral_gain = RowVec::Zero(p.state_dim());
    }
    sys.generators.push_back(p);
    sys.network.generators.push_back({get<int>(g, "bus", source, where), p.xd_prime});
  }
  if (j.contains("monitored_lines")) {
    for (const auto& l : get<json>(j, "monitored_lines", source, "top level")) {
      const auto pair = l.get<std::vector<int>>();
      if (pair.size() != 2) fail(source, "monitored_lines entries are [from, to]");
      sys.monitored_lines.emplace_back(pair[0], pair[1]);
    }
  }
  try {
    sys.validate();
  } catch (const Error& e) {
    fail(source, e.what());
  }
  return sys;
}

Scenario parse_scenario(const std::string& text, const std::string& source) {
  const json j = parse(text, source);
  check_keys(j, {"schema_version", "name", "t_end", "dt", "record_every", "events", "controller",
                 "comm_delay", "thresholds", "threshold_fraction", "check_interval",
                 "fault_admittance", "topology", "seed", "system"},
             source, "top level");
  check_version(j, source);
  Scenario sc;
  const std::string top = "top level";
  sc.t_end = get_or<double>(j, "t_end", sc.t_end, source, top);
  sc.dt = get_or<double>(j, "dt", sc.dt, source, top);
  sc.record_every = get_or<int>(j, "record_every", sc.record_every, source, top);
  sc.comm_delay = get_or<double>(j, "comm_delay", sc.comm_delay, source, top);
  sc.thresholds = get_or<std::vector<double>>(j, "thresholds", {}, source, top);
  sc.threshold_fraction = get_or<double>(j, "threshold_fraction", sc.threshold_fraction, source, top);
  sc.check_interval = get_or<double>(j, "check_interval", sc.check_interval, source, top);
  sc.fault_admittance = get_or<double>(j, "fault_admittance", sc.fault_admittance, source, top);
  sc.seed = get_or<std::uint64_t>(j, "seed", 0, source, top);
  sc.system_file = get_or<std::string>(j, "system", "", source, top);
  if (j.contains("events")) {
    for (const auto& e : get<json>(j, "events", source, top)) {
      const std::string type = get<std::string>(e, "type", source, "event");
      if (type == "fault") {
        check_keys(e, {"type", "bus", "t_start", "t_clear"}, source, "fault event");
        sc.faults.push_back({get<int>(e, "bus", source, "fault event"),
                             get<double>(e, "t_start", source, "fault event"),
                             get<double>(e, "t_clear", source, "fault event")});
      } else if (type == "load_step") {
        check_keys(e, {"type", "bus", "delta_p", "delta_q", "t"}, source, "load_step event");
        sc.load_steps.push_back({get<int>(e, "bus", source, "load_step event"),
                                 get<double>(e, "delta_p", source, "load_step event"),
                                 get_or<double>(e, "delta_q", 0.0, source, "load_step event"),
                                 get<double>(e, "t", source, "load_step event")});
      } else {
        fail(source, "event type must be 'fault' or 'load_step'");
      }
    }
  }
  if (j.contains("controller")) {
    const json& c = j.at("controller");
    const std::string where = "controller";
    check_keys(c, {"kind", "droop", "integral", "alpha_ii", "alpha_ij", "kc_max", "channel",
                   "gain_cap", "p_max"},
               source, where);
    auto& cc = sc.controller;
    const std::string kind = get_or<std::string>(c, "kind", "traditional", source, where);
    if (kind == "traditional") {
      cc.kind = ControllerKind::Traditional;
    } else if (kind == "dmi") {
      cc.kind = ControllerKind::DmiAdaptive;
    } else {
      fail(source, "controller kind must be 'traditional' or 'dmi'");
    }
    cc.droop = get_or<double>(c, "droop", cc.droop, source, where);
    cc.integral = get_or<double>(c, "integral", cc.integral, source, where);
    cc.alpha_ii = get_or<double>(c, "alpha_ii", cc.alpha_ii, source, where);
    cc.alpha_ij = get_or<double>(c, "alpha_ij", cc.alpha_ij, source, where);
    cc.kc_max = get_or<double>(c, "kc_max", cc.kc_max, source, where);
    cc.synthesis.gain_cap = get_or<double>(c, "gain_cap", cc.synthesis.gain_cap, source, where);
    cc.synthesis.p_max = get_or<double>(c, "p_max", cc.synthesis.p_max, source, where);
    if (c.contains("channel")) {
      const auto w = get<std::vector<double>>(c, "channel", source, where);
      if (w.size() != 2) fail(source, "controller.channel needs two weights");
      cc.channel = {w[0], w[1]};
    }
  }
  if (j.contains("topology")) {
    const json& t = j.at("topology");
    check_keys(t, {"kind", "groups"}, source, "topology");
    const std::string kind = get<std::string>(t, "kind", source, "topology");
    if (kind == "all_to_all") {
      sc.topology.kind = TopologyKind::AllToAll;
    } else if (kind == "sparsest") {
      sc.topology.kind = TopologyKind::Sparsest;
    } else {
      fail(source, "topology kind must be 'all_to_all' or 'sparsest'");
    }
    // Areas are numbered from 1 in files.
    for (auto g : get_or<std::vector<std::vector<int>>>(t, "groups", {}, source, "topology")) {
      for (int& a : g) --a;
      sc.topology.groups.push_back(g);
    }
  }
  return sc;
}

SystemData load_system(const std::filesystem::path& path) {
  return parse_system(read_file(path), path.string());
}

Scenario load_scenario(const std::filesystem::path& path) {
  Scenario sc = parse_scenario(read_file(path), path.string());
  // A relative system reference is taken from the scenario's directory.
  if (!sc.system_file.empty() && std::filesystem::path(sc.system_file).is_relative()) {
    sc.system_file = (path.parent_path() / sc.system_file).lexically_normal().string();
  }
  return sc;
}

std::string reduced_json(const ReducedNetwork& net, const Equilibrium& eq) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["G"] = matrix(net.G);
  j["B"] = matrix(net.B);
  j["E"] = vector(net.E);
  j["delta_star"] = vector(eq.delta);
  j["pg_star"] = vector(eq.pg);
  j["qg_star"] = vector(eq.qg);
  j["alpha_star"] = vector(eq.alpha);
  return j.dump(2) + "\n";
}

std::string gij_bij_csv(const Mat& G_true, const Mat& B_true, const Mat& G_est, const Mat& B_est) {
  std::ostringstream os;
  os << "i,j,G_true,B_true,G_est,B_est\n";
  const bool est = G_est.size() > 0;
  for (int i = 0; i < G_true.rows(); ++i) {
    for (int j = i; j < G_true.cols(); ++j) {
      os << i + 1 << ',' << j + 1 << ',' << num(G_true(i, j)) << ',' << num(B_true(i, j)) << ',';
      if (est) os << num(G_est(i, j)) << ',' << num(B_est(i, j));
      else os << ',';
      os << '\n';
    }
  }
  return os.str();
}

std::string certificates_json(const std::vector<DmiCertificate>& certs) {
  json arr = json::array();
  const int n = static_cast<int>(certs.size());
  for (int i = 0; i < n; ++i) {
    const auto& c = certs[i];
    json e;
    e["area"] = i + 1;
    e["P"] = std::vector<double>();
    for (int r = 0; r < c.P.rows(); ++r) {
      for (int k = 0; k < c.P.cols(); ++k) e["P"].push_back(c.P(r, k));
    }
    e["K"] = vector(c.F.row(0).transpose());
    if (c.F.rows() > 1) e["K_integral"] = vector(c.F.row(1).transpose());
    e["eps_ii"] = c.eps_ii;
    json m = json::object();
    int k = 0;
    for (int j = 0; j < n && k < static_cast<int>(c.eps_ij.size()); ++j) {
      if (j == i) continue;
      m[std::to_string(j + 1)] = c.eps_ij[k++];
    }
    e["eps_ij"] = m;
    e["rho"] = c.rho;
    e["objective"] = c.objective;
    e["margin"] = c.margin;
    e["iterations"] = c.iterations;
    arr.push_back(e);
  }
  json j;
  j["schema_version"] = kSchemaVersion;
  j["certificates"] = arr;
  return j.dump(2) + "\n";
}

std::string kc_json(const CommTopology& topo, const WideAreaDesign& d) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["kc"] = d.kc;
  j["case"] = to_string(d.gain_case);
  j["interval"] = {maybe_number(d.kc_lower), maybe_number(d.kc_upper)};
  j["lambda_a"] = d.lambda_a;
  j["lambda_b"] = d.lambda_b;
  j["phi"] = vector(d.phi);
  j["gamma"] = vector(topo.gamma);
  j["laplacian"] = matrix(topo.L);
  return j.dump(2) + "\n";
}

std::string trajectory_csv(const Trajectory& tr) {
  std::ostringstream os;
  const int n = tr.areas;
  os << "t";
  for (const char* name : {"delta", "omega", "Pm", "u"}) {
    for (int i = 0; i < n; ++i) os << ',' << name << '_' << i + 1;
  }
  os << ",V,kc";
  for (const auto& l : tr.line_names) os << ',' << l;
  os << '\n';
  os << std::setprecision(10);
  for (int k = 0; k < tr.samples(); ++k) {
    os << tr.t[k];
    for (const Mat* M : {&tr.delta, &tr.omega, &tr.pm, &tr.u}) {
      for (int i = 0; i < n; ++i) {
        const double v = (*M)(k, i);
        os << ',';
        if (std::isfinite(v)) os << v;
      }
    }
    os << ',' << tr.V(k) << ',' << tr.kc(k);
    for (int l = 0; l < tr.line_p.cols(); ++l) os << ',' << tr.line_p(k, l);
    os << '\n';
  }
  return os.str();
}

std::string resynthesis_csv(const Trajectory& tr) {
  std::ostringstream os;
  os << "t,success,kc,case,wall_ms";
  for (int i = 0; i < tr.areas; ++i) os << ",hbar_" << i + 1;
  os << ",message\n";
  for (const auto& r : tr.resyntheses) {
    os << num(r.t) << ',' << (r.success ? 1 : 0) << ',' << num(r.kc) << ','
       << to_string(r.gain_case) << ',' << num(r.wall_ms);
    for (int i = 0; i < r.hbar.size(); ++i) os << ',' << num(r.hbar(i));
    std::string msg = r.message;
    std::replace(msg.begin(), msg.end(), ',', ';');
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    os << ',' << msg << '\n';
  }
  return os.str();
}

std::string summary_json(const Scenario& sc, const Trajectory& tr, const Metrics& m,
                         const AuditReport* audit) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["controller"] = to_string(sc.controller.kind);
  j["comm_delay"] = sc.comm_delay;
  j["dt"] = sc.dt;
  j["t_end"] = sc.t_end;
  j["seed"] = sc.seed;
  j["metrics"] = {{"dominant_frequency_hz", m.dominant_frequency_hz},
                  {"settling_time", maybe_number(m.settling_time)},
                  {"overshoot", m.overshoot},
                  {"rms_consensus_error", m.rms_consensus_error}};
  int ok = 0;
  json times = json::array();
  for (const auto& r : tr.resyntheses) {
    ok += r.success ? 1 : 0;
    times.push_back(r.t);
  }
  j["resyntheses"] = {{"count", tr.resyntheses.size()}, {"successful", ok}, {"times", times}};
  if (audit) {
    j["audit"] = {{"samples_checked", audit->samples_checked},
                  {"area_violations", audit->area_violations},
                  {"worst_area_margin", audit->worst_area_margin},
                  {"network_violations", audit->network_violations},
                  {"worst_network_margin", audit->worst_network_margin}};
  }
  return j.dump(2) + "\n";
}

std::string plot_script(const std::vector<std::pair<std::string, std::string>>& labelled_csvs) {
  std::ostringstream os;
  os << "#!/usr/bin/env python3\n"
        "# Plot omega_3 and the first monitored line flow for each run.\n"
        "import csv\nimport sys\n\nimport matplotlib.pyplot as plt\n\n"
        "RUNS = [\n";
  for (const auto& [label, path] : labelled_csvs) {
    os << "    (\"" << label << "\", \"" << path << "\"),\n";
  }
  os << "]\n\n"
        "def load(path):\n"
        "    with open(path) as f:\n"
        "        rows = list(csv.DictReader(f))\n"
        "    return rows\n\n"
        "fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(8, 6))\n"
        "for label, path in RUNS:\n"
        "    rows = load(path)\n"
        "    t = [float(r['t']) for r in rows]\n"
        "    ax1.plot(t, [float(r['omega_3']) for r in rows], label=label)\n"
        "    lines = [k for k in rows[0] if k.startswith('line_')]\n"
        "    if lines:\n"
        "        ax2.plot(t, [float(r[lines[0]]) for r in rows], label=label)\n"
        "        ax2.set_ylabel(lines[0])\n"
        "ax1.set_ylabel('omega_3 (p.u.)')\n"
        "ax2.set_xlabel('t (s)')\n"
        "ax1.legend()\n"
        "fig.tight_layout()\n"
        "out = sys.argv[1] if len(sys.argv) > 1 else 'wadamp_run.png'\n"
        "fig.savefig(out, dpi=120)\n"
        "print('wrote', out)\n";
  return os.str();
}

}  // namespace wadamp::io
