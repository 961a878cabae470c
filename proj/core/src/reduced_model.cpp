#include "wadamp/reduced_model.hpp"

#include <cmath>
#include <sstream>

#include "wadamp/error.hpp"

namespace wadamp {

namespace {

// sin(x)/x with the removable singularity filled in.
double sinc(double x) {
  if (std::abs(x) < 1e-9) return 1.0 - x * x / 6.0;
  return std::sin(x) / x;
}

SystemMatrices closed_loop_matrices(const GeneratorParams& p, const LocalControl& control) {
  GeneratorParams q = p;
  q.integral_gain = control.integral;
  return system_matrices(q, control.feedback);
}

void require(bool ok, ErrorCode code, const std::string& msg) {
  if (!ok) throw Error(code, msg);
}

}  // namespace

void GeneratorParams::validate() const {
  require(inertia > 0.0, ErrorCode::InvalidInput, "inertia must be positive");
  require(damping >= 0.0, ErrorCode::InvalidInput, "damping must be nonnegative");
  require(internal_voltage > 0.0, ErrorCode::InvalidInput, "internal voltage must be positive");
  require(omega_base > 0.0, ErrorCode::InvalidInput, "omega_base must be positive");
  if (kind == GeneratorKind::Conventional) {
    require(tau1 > 0.0 && tau2 > 0.0, ErrorCode::InvalidInput,
            "turbine and governor time constants must be positive");
  }
  require(integral_gain.size() == state_dim(), ErrorCode::DimensionMismatch,
          "integral gain size does not match state dimension");
}

void ReducedNetwork::validate() const {
  const auto n = E.size();
  require(G.rows() == n && G.cols() == n && B.rows() == n && B.cols() == n,
          ErrorCode::DimensionMismatch, "G/B must be n x n");
  require((G - G.transpose()).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + G.cwiseAbs().maxCoeff()),
          ErrorCode::InvalidInput, "G must be symmetric");
  require((B - B.transpose()).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + B.cwiseAbs().maxCoeff()),
          ErrorCode::InvalidInput, "B must be symmetric");
  require((E.array() > 0.0).all(), ErrorCode::InvalidInput, "internal voltages must be positive");
}

double coupling_gain(double G_ij, double B_ij, double E_i, double E_j, double delta_ij,
                     double delta_ij_star) {
  // cos a - cos b = -2 sin(m) sin(d/2), sin a - sin b = 2 cos(m) sin(d/2) with
  // m the midpoint and d the difference; dividing by d leaves a sinc factor.
  const double mid = 0.5 * (delta_ij + delta_ij_star);
  const double half = 0.5 * (delta_ij - delta_ij_star);
  return E_i * E_j * (B_ij * std::cos(mid) - G_ij * std::sin(mid)) * sinc(half);
}

Mat coupling_gains(const ReducedNetwork& net, const Vec& delta, const Vec& delta_star) {
  const int n = net.size();
  Mat h = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      h(i, j) = coupling_gain(net.G(i, j), net.B(i, j), net.E(i), net.E(j), delta(i) - delta(j),
                              delta_star(i) - delta_star(j));
    }
  }
  return h;
}

PowerInjection electrical_power(const ReducedNetwork& net, const Vec& delta) {
  const int n = net.size();
  if (delta.size() != n) throw Error(ErrorCode::DimensionMismatch, "angle vector size");
  PowerInjection out{Vec::Zero(n), Vec::Zero(n)};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double d = delta(i) - delta(j);
      const double ee = net.E(i) * net.E(j);
      out.p(i) += ee * (net.G(i, j) * std::cos(d) + net.B(i, j) * std::sin(d));
      out.q(i) += ee * (net.G(i, j) * std::sin(d) - net.B(i, j) * std::cos(d));
    }
  }
  return out;
}

Equilibrium solve_equilibrium(const ReducedNetwork& net, const Vec& pg_ref,
                              const EquilibriumOptions& options) {
  const int n = net.size();
  if (pg_ref.size() != n) throw Error(ErrorCode::DimensionMismatch, "pg_ref size");
  Vec share = options.participation.size() == n ? options.participation : Vec::Ones(n);

  // Unknowns: delta_2..delta_n and the common slack s; residual
  // P_i(delta) - (pg_ref_i + share_i * s) for every area.
  Vec delta = Vec::Zero(n);
  double slack = 0.0;
  auto residual = [&](const Vec& d, double s) {
    return Vec(electrical_power(net, d).p - pg_ref - share * s);
  };

  Vec r = residual(delta, slack);
  int iter = 0;
  while (r.cwiseAbs().maxCoeff() > options.tolerance) {
    if (++iter > options.max_iterations) {
      std::ostringstream os;
      os << "equilibrium Newton exceeded " << options.max_iterations
         << " iterations (residual " << r.cwiseAbs().maxCoeff() << ")";
      throw Error(ErrorCode::NoConvergence, os.str());
    }
    Mat J = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      for (int k = 1; k < n; ++k) {
        double dp = 0.0;
        if (k == i) {
          for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            const double d = delta(i) - delta(j);
            dp += net.E(i) * net.E(j) * (-net.G(i, j) * std::sin(d) + net.B(i, j) * std::cos(d));
          }
        } else {
          const double d = delta(i) - delta(k);
          dp = net.E(i) * net.E(k) * (net.G(i, k) * std::sin(d) - net.B(i, k) * std::cos(d));
        }
        J(i, k - 1) = dp;
      }
      J(i, n - 1) = -share(i);
    }
    Eigen::FullPivLU<Mat> lu(J);
    if (!lu.isInvertible() || std::abs(lu.determinant()) < 1e-14) {
      throw Error(ErrorCode::NoConvergence, "singular power-flow Jacobian (infeasible dispatch?)");
    }
    const Vec step = lu.solve(-r);
    delta.tail(n - 1) += step.head(n - 1);
    slack += step(n - 1);
    if (!delta.allFinite() || !std::isfinite(slack)) {
      throw Error(ErrorCode::NoConvergence, "equilibrium Newton diverged");
    }
    r = residual(delta, slack);
  }

  const PowerInjection inj = electrical_power(net, delta);
  return Equilibrium{delta, inj.p, inj.q, inj.p - pg_ref};
}

SystemMatrices system_matrices(const GeneratorParams& p, const RowVec& feedback) {
  const int nx = p.state_dim();
  if (feedback.size() != nx) {
    throw Error(ErrorCode::DimensionMismatch, "feedback gain size does not match state dimension");
  }
  if (p.integral_gain.size() != nx) {
    throw Error(ErrorCode::DimensionMismatch, "integral gain size does not match state dimension");
  }
  SystemMatrices s;
  s.A = Mat::Zero(nx, nx);
  s.B = Mat::Zero(nx, 1);
  s.C = Mat::Zero(2, nx);
  s.C(0, kAngle) = 1.0;
  s.C(1, kSpeed) = 1.0;
  s.A(kAngle, kSpeed) = p.omega_base;
  s.A(kSpeed, kSpeed) = -p.damping / p.inertia;
  if (p.kind == GeneratorKind::Conventional) {
    s.A(kSpeed, kMech) = 1.0 / p.inertia;
    s.A(kMech, kMech) = -1.0 / p.tau1;
    s.A(kMech, kGovernor) = 1.0 / p.tau1;
    s.A(kGovernor, kGovernor) = -1.0 / p.tau2;
    s.A(kGovernor, 4) = 1.0 / p.tau2;
    s.A.row(4) = -p.integral_gain;
    s.B(kGovernor, 0) = 1.0 / p.tau2;
  } else {
    s.A(kSpeed, 2) = 1.0 / p.inertia;
    s.A.row(2) = -p.integral_gain;
    s.B(kSpeed, 0) = 1.0 / p.inertia;
  }
  s.A_bar = s.A - s.B * feedback;
  return s;
}

Mat coupling_matrix(const GeneratorParams& params, double h_ij) {
  Mat H = Mat::Zero(params.state_dim(), 2);
  H(kSpeed, 0) = h_ij / params.inertia;
  return H;
}

StateLayout::StateLayout(std::span<const GeneratorParams> params) {
  for (const auto& p : params) {
    offsets_.push_back(total_);
    dims_.push_back(p.state_dim());
    total_ += p.state_dim();
  }
}

Vec equilibrium_state(std::span<const GeneratorParams> params, const Equilibrium& eq) {
  const StateLayout layout(params);
  Vec z = Vec::Zero(layout.total());
  for (int i = 0; i < layout.areas(); ++i) {
    auto zi = z.segment(layout.offset(i), layout.dim(i));
    zi(kAngle) = eq.delta(i);
    if (params[i].kind == GeneratorKind::Conventional) {
      zi(kMech) = eq.pg(i);
      zi(kGovernor) = eq.pg(i);
    }
    zi(agc_index(params[i].kind)) = eq.alpha(i);
  }
  return z;
}

Vec deviation(std::span<const GeneratorParams> params, const Equilibrium& eq, const Vec& z) {
  return z - equilibrium_state(params, eq);
}

Vec dynamics_rhs(const Vec& z, std::span<const GeneratorParams> params,
                 std::span<const LocalControl> control, const ReducedNetwork& net,
                 const Equilibrium& eq, const Vec& u) {
  const StateLayout layout(params);
  const int n = layout.areas();
  if (z.size() != layout.total() || u.size() != n || net.size() != n ||
      static_cast<int>(control.size()) != n) {
    throw Error(ErrorCode::DimensionMismatch, "dynamics_rhs input sizes");
  }
  const Vec x = deviation(params, eq, z);
  Vec delta(n);
  for (int i = 0; i < n; ++i) delta(i) = z(layout.offset(i) + kAngle);
  const Vec pg = electrical_power(net, delta).p;

  Vec dz(layout.total());
  for (int i = 0; i < n; ++i) {
    const auto& p = params[i];
    const int o = layout.offset(i);
    const int nx = layout.dim(i);
    const auto zi = z.segment(o, nx);
    const auto xi = x.segment(o, nx);
    const int a = agc_index(p.kind);
    // U_i = v_i + alpha_i + Pg_ref with v_i = -K x_i + u_i.
    const double v = -control[i].feedback.dot(xi) + u(i);
    const double command = v + zi(a) + p.pg_ref;
    auto dzi = dz.segment(o, nx);
    dzi(kAngle) = p.omega_base * zi(kSpeed);
    if (p.kind == GeneratorKind::Conventional) {
      dzi(kSpeed) = (zi(kMech) - pg(i) - p.damping * zi(kSpeed)) / p.inertia;
      dzi(kMech) = (zi(kGovernor) - zi(kMech)) / p.tau1;
      dzi(kGovernor) = (command - zi(kGovernor)) / p.tau2;
    } else {
      dzi(kSpeed) = (command - pg(i) - p.damping * zi(kSpeed)) / p.inertia;
    }
    dzi(a) = -control[i].integral.dot(xi);
  }
  return dz;
}

Mat dynamics_jacobian(const Vec& z, std::span<const GeneratorParams> params,
                      std::span<const LocalControl> control, const ReducedNetwork& net,
                      const Equilibrium& eq) {
  const StateLayout layout(params);
  const int n = layout.areas();
  Vec delta(n);
  for (int i = 0; i < n; ++i) delta(i) = z(layout.offset(i) + kAngle);

  Mat J = Mat::Zero(layout.total(), layout.total());
  for (int i = 0; i < n; ++i) {
    const auto& p = params[i];
    const int o = layout.offset(i);
    // The local part is exactly A_i - B_i K_i (the feedback acts on x = z - z*).
    const SystemMatrices sm = closed_loop_matrices(p, control[i]);
    J.block(o, o, layout.dim(i), layout.dim(i)) = sm.A_bar;
    // Electrical power: dPg_i/d delta_j.
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = delta(i) - delta(j);
      const double dpdj =
          net.E(i) * net.E(j) * (net.G(i, j) * std::sin(d) - net.B(i, j) * std::cos(d));
      J(o + kSpeed, layout.offset(j) + kAngle) -= dpdj / p.inertia;
      J(o + kSpeed, o + kAngle) += dpdj / p.inertia;
    }
  }
  (void)eq;
  return J;
}

Mat sdc_matrix(const Vec& z, std::span<const GeneratorParams> params,
               std::span<const LocalControl> control, const ReducedNetwork& net,
               const Equilibrium& eq) {
  const StateLayout layout(params);
  const int n = layout.areas();
  Vec delta(n);
  for (int i = 0; i < n; ++i) delta(i) = z(layout.offset(i) + kAngle);
  const Mat h = coupling_gains(net, delta, eq.delta);

  Mat A = Mat::Zero(layout.total(), layout.total());
  for (int i = 0; i < n; ++i) {
    const auto& p = params[i];
    const int oi = layout.offset(i);
    const int ni = layout.dim(i);
    const SystemMatrices sm = closed_loop_matrices(p, control[i]);
    A.block(oi, oi, ni, ni) = sm.A_bar;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const int oj = layout.offset(j);
      const int nj = layout.dim(j);
      const Mat H = coupling_matrix(p, h(i, j));
      Mat Cj = Mat::Zero(2, nj);
      Cj(0, kAngle) = 1.0;
      Cj(1, kSpeed) = 1.0;
      // H_ij (y_j - y_i)
      A.block(oi, oj, ni, nj) += H * Cj;
      A.block(oi, oi, ni, ni) -= H * sm.C;
    }
  }
  return A;
}

LocalControl droop_agc_control(const GeneratorParams& params, double droop, double integral) {
  const int nx = params.state_dim();
  LocalControl c{RowVec::Zero(nx), RowVec::Zero(nx)};
  c.feedback(kSpeed) = droop;
  c.integral(kSpeed) = integral;
  return c;
}

}  // namespace wadamp
