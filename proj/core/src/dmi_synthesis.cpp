#include "wadamp/dmi_synthesis.hpp"

#include <spdlog/spdlog.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "wadamp/error.hpp"

namespace wadamp {

DmiPlant generator_plant(const GeneratorParams& params, const Eigen::Vector2d& channel) {
  GeneratorParams open = params;
  open.integral_gain = RowVec::Zero(params.state_dim());
  const SystemMatrices sm = system_matrices(open, RowVec::Zero(params.state_dim()));
  DmiPlant plant;
  plant.A = sm.A;
  plant.B = sm.B * channel.transpose();
  plant.C = sm.C;
  plant.B_act = Mat::Zero(params.state_dim(), 2);
  plant.B_act.col(0) = sm.B.col(0);
  plant.B_act(agc_index(params.kind), 1) = 1.0;
  return plant;
}

Mat initial_gain(const DmiPlant& plant, double state_weight, double input_weight) {
  if (!(state_weight > 0.0) || !(input_weight > 0.0)) {
    throw Error(ErrorCode::InvalidInput, "LQR weights must be positive");
  }
  const int n = plant.states();
  const Mat& A = plant.A;
  const Mat& B = plant.B_act;
  const Mat Q = plant.C.transpose() * plant.C + state_weight * Mat::Identity(n, n);
  // Stable invariant subspace of the Hamiltonian gives the Riccati solution.
  Mat Hm(2 * n, 2 * n);
  Hm << A, -B * B.transpose() / input_weight, -Q, -A.transpose();
  Eigen::ComplexEigenSolver<Mat> es(Hm);
  if (es.info() != Eigen::Success) throw Error(ErrorCode::NoConvergence, "Hamiltonian eigensolve");
  Eigen::MatrixXcd V(2 * n, n);
  int k = 0;
  for (int i = 0; i < 2 * n; ++i) {
    if (es.eigenvalues()(i).real() < 0.0) {
      if (k == n) break;
      V.col(k++) = es.eigenvectors().col(i);
    }
  }
  if (k != n) throw Error(ErrorCode::Infeasible, "actuation cannot stabilize the area");
  const Eigen::MatrixXcd X = V.bottomRows(n) * V.topRows(n).inverse();
  const Mat P = 0.5 * (X.real() + X.real().transpose());
  return B.transpose() * P / input_weight;
}

LocalControl to_local_control(const Mat& F) {
  if (F.rows() != 2) throw Error(ErrorCode::DimensionMismatch, "generator gain has two rows");
  return LocalControl{F.row(0), F.row(1)};
}

Mat gain_matrix(const LocalControl& control) {
  Mat F(2, control.feedback.size());
  F.row(0) = control.feedback;
  F.row(1) = control.integral;
  return F;
}

void DmiWeights::validate() const {
  double sum = alpha_ii;
  bool ok = alpha_ii > 0.0 && alpha_ii < 1.0;
  for (double a : alpha_ij) {
    ok = ok && a >= 0.0;
    sum += a;
  }
  if (!ok || !(sum < 1.0)) {
    throw Error(ErrorCode::InvalidInput,
                "weights need 0 < alpha_ii < 1, alpha_ij >= 0 and a total below 1");
  }
}

namespace {

// The coupling term of neighbor j is dropped when H_ij vanishes.
bool active(const Mat& H) { return H.cwiseAbs().maxCoeff() > 0.0; }

Mat sym(const Mat& M) { return 0.5 * (M + M.transpose()); }

// Block matrix without argument checks; entries are affine in (P, rho, eps)
// and in A_bar, which the synthesis relies on.
Mat mbar_unchecked(const Mat& A_bar, const Mat& B, const Mat& C, const Mat& P, double rho,
                   double eps_ii, std::span<const Mat> H, std::span<const double> eps_ij) {
  const int nx = static_cast<int>(A_bar.rows());
  const int nu = static_cast<int>(B.cols());
  int total = nx + nu;
  for (const auto& h : H) total += static_cast<int>(h.cols());
  Mat M = Mat::Zero(total, total);
  Mat top = A_bar.transpose() * P + P * A_bar + rho * C.transpose() * C;
  int o = nx;
  for (std::size_t j = 0; j < H.size(); ++j) {
    const Mat PH = P * H[j];
    top -= PH * C + C.transpose() * PH.transpose();
    const int w = static_cast<int>(H[j].cols());
    M.block(0, o, nx, w) = PH;
    M.block(o, 0, w, nx) = PH.transpose();
    M.block(o, o, w, w) = -eps_ij[j] * Mat::Identity(w, w);
    o += w;
  }
  const Mat PBC = P * B - C.transpose();
  M.block(0, o, nx, nu) = PBC;
  M.block(o, 0, nu, nx) = PBC.transpose();
  M.block(o, o, nu, nu) = -eps_ii * Mat::Identity(nu, nu);
  M.topLeftCorner(nx, nx) = top;
  return sym(M);
}

void check_shapes(const Mat& A_bar, const Mat& B, const Mat& C, const Mat& P) {
  const auto nx = A_bar.rows();
  if (A_bar.cols() != nx || B.rows() != nx || C.cols() != nx || P.rows() != nx ||
      P.cols() != nx || B.cols() != C.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "A, B, C, P shapes are inconsistent");
  }
}

}  // namespace

Mat assemble_Mi(const Mat& A_bar, const Mat& B, const Mat& C, const Mat& P, double rho,
                double eps_ii) {
  check_shapes(A_bar, B, C, P);
  if (!(eps_ii > 0.0)) throw Error(ErrorCode::NonPositiveEpsilon, "eps_ii must be positive");
  const Mat PBC = P * B - C.transpose();
  return sym(A_bar.transpose() * P + P * A_bar + rho * C.transpose() * C +
             (PBC * PBC.transpose()) / eps_ii);
}

Mat assemble_Mbar(const Mat& A_bar, const Mat& B, const Mat& C, const Mat& P, double rho,
                  double eps_ii, std::span<const Mat> H, std::span<const double> eps_ij) {
  check_shapes(A_bar, B, C, P);
  if (H.size() != eps_ij.size()) throw Error(ErrorCode::DimensionMismatch, "one eps per neighbor");
  for (const auto& h : H) {
    if (h.rows() != A_bar.rows() || h.cols() != C.rows()) {
      throw Error(ErrorCode::DimensionMismatch, "H_ij must be nx x ny");
    }
  }
  if (!(eps_ii > 0.0)) throw Error(ErrorCode::NonPositiveEpsilon, "eps_ii must be positive");
  for (double e : eps_ij) {
    if (!(e > 0.0)) throw Error(ErrorCode::NonPositiveEpsilon, "eps_ij must be positive");
  }
  return mbar_unchecked(A_bar, B, C, P, rho, eps_ii, H, eps_ij);
}

Mat assemble_Mprime(const Mat& A_bar, const Mat& B, const Mat& C, const Mat& P, double rho,
                    double eps_ii, std::span<const Mat> H, std::span<const double> eps_ij) {
  if (H.size() != eps_ij.size()) throw Error(ErrorCode::DimensionMismatch, "one eps per neighbor");
  Mat M = assemble_Mi(A_bar, B, C, P, rho, eps_ii);
  for (std::size_t j = 0; j < H.size(); ++j) {
    if (H[j].rows() != A_bar.rows() || H[j].cols() != C.rows()) {
      throw Error(ErrorCode::DimensionMismatch, "H_ij must be nx x ny");
    }
    if (!active(H[j])) continue;
    if (!(eps_ij[j] > 0.0)) throw Error(ErrorCode::NonPositiveEpsilon, "eps_ij must be positive");
    const Mat PH = P * H[j];
    M -= PH * C + C.transpose() * PH.transpose() - (PH * PH.transpose()) / eps_ij[j];
  }
  return sym(M);
}

FeasibilityResult check_feasible(const Mat& M, double tol) {
  Eigen::SelfAdjointEigenSolver<Mat> es(sym(M), Eigen::EigenvaluesOnly);
  const double top = es.eigenvalues()(es.eigenvalues().size() - 1);
  return {top <= tol, top};
}

namespace {

// Full decision vector [vech(P), vec(F), rho, eps_ii, eps_ij(active)]. Each
// half step of the alternating scheme frees either P or F together with the
// scalars, which makes the block inequality affine in the free part.
struct Layout {
  int nx = 0;
  int p = 0;  // gain rows
  int n_active = 0;
  int p_vars() const { return nx * (nx + 1) / 2; }
  int f_begin() const { return p_vars(); }
  int f_vars() const { return p * nx; }
  int rho() const { return p_vars() + f_vars(); }
  int eps_ii() const { return rho() + 1; }
  int eps_ij(int k) const { return rho() + 2 + k; }
  int size() const { return rho() + 2 + n_active; }

  Mat P(const Vec& z) const {
    Mat P(nx, nx);
    int k = 0;
    for (int r = 0; r < nx; ++r) {
      for (int c = r; c < nx; ++c) {
        P(r, c) = P(c, r) = z(k++);
      }
    }
    return P;
  }
  void set_P(Vec& z, const Mat& P) const {
    int k = 0;
    for (int r = 0; r < nx; ++r) {
      for (int c = r; c < nx; ++c) z(k++) = 0.5 * (P(r, c) + P(c, r));
    }
  }
  Mat F(const Vec& z) const { return Eigen::Map<const Mat>(z.data() + f_begin(), p, nx); }
  void set_F(Vec& z, const Mat& F) const {
    Eigen::Map<Mat>(z.data() + f_begin(), p, nx) = F;
  }
};

struct Problem {
  const DmiPlant& plant;
  std::vector<Mat> H;             // active neighbors only
  std::vector<int> active_index;  // position in the caller's list
  std::size_t n_total = 0;
  const SynthesisOptions& opt;
  Vec gain_scale;  // column c of F may reach gain_cap * gain_scale(c)
};

Problem make_problem(const DmiPlant& plant, std::span<const Mat> H, const SynthesisOptions& opt) {
  Problem p{plant, {}, {}, H.size(), opt, Vec::Ones(plant.states())};
  for (std::size_t j = 0; j < H.size(); ++j) {
    if (H[j].rows() != plant.states() || H[j].cols() != plant.C.rows()) {
      throw Error(ErrorCode::DimensionMismatch, "H_ij must be nx x ny");
    }
    if (active(H[j])) {
      p.H.push_back(H[j]);
      p.active_index.push_back(static_cast<int>(j));
    }
  }
  return p;
}

Mat mbar_of(const Problem& pr, const Layout& L, const Vec& z) {
  std::vector<double> e(pr.H.size());
  for (int k = 0; k < L.n_active; ++k) e[k] = z(L.eps_ij(k));
  return mbar_unchecked(pr.plant.closed_loop(L.F(z)), pr.plant.B, pr.plant.C, L.P(z), z(L.rho()),
                        z(L.eps_ii()), pr.H, e);
}

enum class Half { Storage, Gain };

// Free variables of a half step, as indices into the full vector.
std::vector<int> free_vars(const Layout& L, Half half) {
  std::vector<int> idx;
  if (half == Half::Storage) {
    for (int k = 0; k < L.p_vars(); ++k) idx.push_back(k);
  } else {
    for (int k = 0; k < L.f_vars(); ++k) idx.push_back(L.f_begin() + k);
  }
  for (int k = L.rho(); k < L.size(); ++k) idx.push_back(k);
  return idx;
}

Vec embed(const Vec& base, const std::vector<int>& idx, const Vec& v) {
  Vec z = base;
  for (std::size_t k = 0; k < idx.size(); ++k) z(idx[k]) = v(k);
  return z;
}

Vec restrict(const Vec& z, const std::vector<int>& idx) {
  Vec v(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) v(k) = z(idx[k]);
  return v;
}

// Diagonal block collecting scalar constraints a'v - b > 0.
lmi::AffineMatrix scalar_block(const std::vector<std::pair<int, double>>& lower,
                               const std::vector<std::pair<int, double>>& upper, int m) {
  const int r = static_cast<int>(lower.size() + upper.size());
  lmi::AffineMatrix out;
  out.constant = Mat::Zero(r, r);
  out.coefficients.assign(m, Mat::Zero(r, r));
  int row = 0;
  for (auto [v, b] : lower) {  // v_k > b
    out.constant(row, row) = -b;
    out.coefficients[v](row, row) = 1.0;
    ++row;
  }
  for (auto [v, b] : upper) {  // v_k < b
    out.constant(row, row) = b;
    out.coefficients[v](row, row) = -1.0;
    ++row;
  }
  return out;
}

std::vector<lmi::AffineMatrix> half_blocks(const Problem& pr, const Layout& L, const Vec& base,
                                           const std::vector<int>& idx, Half half) {
  const int m = static_cast<int>(idx.size());
  std::vector<lmi::AffineMatrix> blocks;
  blocks.push_back(
      lmi::linearize([&](const Vec& v) {
        const Mat M = mbar_of(pr, L, embed(base, idx, v));
        return Mat(-M - pr.opt.strict_margin * Mat::Identity(M.rows(), M.cols()));
      }, m));
  std::vector<std::pair<int, double>> lo, hi;
  // Positions of the scalars within the free subset are the trailing ones.
  const int s0 = m - (2 + L.n_active);
  lo.emplace_back(s0, 0.0);
  hi.emplace_back(s0, pr.opt.rho_max);
  lo.emplace_back(s0 + 1, pr.opt.eps_min);
  hi.emplace_back(s0 + 1, pr.opt.eps_max);
  for (int k = 0; k < L.n_active; ++k) {
    lo.emplace_back(s0 + 2 + k, 0.0);
    hi.emplace_back(s0 + 2 + k, pr.opt.eps_max);
  }
  if (half == Half::Storage) {
    const double p_lo = pr.opt.p_max / pr.opt.condition_cap;
    blocks.push_back(lmi::linearize(
        [&](const Vec& v) {
          return Mat(L.P(embed(base, idx, v)) - p_lo * Mat::Identity(L.nx, L.nx));
        },
        m));
    blocks.push_back(lmi::linearize(
        [&](const Vec& v) {
          return Mat(pr.opt.p_max * Mat::Identity(L.nx, L.nx) - L.P(embed(base, idx, v)));
        },
        m));
  } else {
    for (int k = 0; k < L.f_vars(); ++k) {
      const double cap = pr.opt.gain_cap * pr.gain_scale(k / L.p);
      lo.emplace_back(k, -cap);
      hi.emplace_back(k, cap);
    }
  }
  blocks.push_back(scalar_block(lo, hi, m));
  return blocks;
}

Vec objective_vector(const Layout& L, const Problem& pr, const DmiWeights& w) {
  Vec c = Vec::Zero(L.size());
  double total = w.alpha_ii;
  c(L.eps_ii()) = w.alpha_ii;
  for (int k = 0; k < L.n_active; ++k) {
    const double a = w.alpha_ij[pr.active_index[k]];
    c(L.eps_ij(k)) = a;
    total += a;
  }
  c(L.rho()) = -(1.0 - total);
  return c;
}

Mat clamp_gain(const Problem& pr, const Mat& F, double factor) {
  Mat out = F;
  for (int c = 0; c < F.cols(); ++c) {
    const double cap = factor * pr.opt.gain_cap * pr.gain_scale(c);
    out.col(c) = F.col(c).cwiseMax(-cap).cwiseMin(cap);
  }
  return out;
}

DmiCertificate solve_scaled(const Problem& pr, const DmiWeights& weights, const Mat& F0,
                            const DmiCertificate* warm) {
  const auto& opt = pr.opt;
  Layout L{pr.plant.states(), static_cast<int>(pr.plant.B_act.cols()),
           static_cast<int>(pr.H.size())};
  if (F0.rows() != L.p || F0.cols() != L.nx) {
    throw Error(ErrorCode::DimensionMismatch, "initial gain shape");
  }

  Vec z = Vec::Zero(L.size());
  L.set_F(z, clamp_gain(pr, F0, 0.99));
  if (warm && warm->P.rows() == L.nx) {
    L.set_P(z, warm->P);
    z(L.rho()) = std::clamp(warm->rho, 1e-9, 0.99 * opt.rho_max);
    z(L.eps_ii()) = std::clamp(warm->eps_ii, 2.0 * opt.eps_min, 0.99 * opt.eps_max);
    for (int k = 0; k < L.n_active; ++k) {
      const std::size_t j = pr.active_index[k];
      const double e = j < warm->eps_ij.size() && warm->eps_ij[j] > 0.0 ? warm->eps_ij[j] : 1.0;
      z(L.eps_ij(k)) = std::min(e, 0.99 * opt.eps_max);
    }
  } else {
    L.set_P(z, 0.5 * opt.p_max * Mat::Identity(L.nx, L.nx));
    z(L.rho()) = 1e-3;
    z(L.eps_ii()) = 1.0;
    for (int k = 0; k < L.n_active; ++k) z(L.eps_ij(k)) = 1.0;
  }

  // Phase I: alternate halves, each minimizing the common shift.
  int iterations = 0;
  bool feasible = false;
  double shift = 0.0;
  for (int round = 0; round < 2 * opt.phase_one_rounds && !feasible; ++round) {
    ++iterations;
    const Half half = round % 2 == 0 ? Half::Storage : Half::Gain;
    const auto idx = free_vars(L, half);
    const auto blocks = half_blocks(pr, L, z, idx, half);
    const lmi::PhaseOneResult ph = lmi::phase_one(blocks, restrict(z, idx), 1e-9, opt.barrier);
    z = embed(z, idx, ph.z);
    shift = ph.shift;
    feasible = ph.feasible;
    if (half == Half::Gain && !feasible) {
      // The shifted problem may leave the gain box; pull back so later
      // barrier steps start inside it.
      L.set_F(z, clamp_gain(pr, L.F(z), 0.99));
    }
    spdlog::debug("dmi phase one round {}: shift {:.3e}", round, ph.shift);
  }
  if (!feasible) {
    throw Error(ErrorCode::Infeasible,
                "no strictly feasible storage found (best shift " + std::to_string(shift) + ")");
  }

  const Vec c = objective_vector(L, pr, weights);
  DmiCertificate cert;
  double best = c.dot(z);
  cert.objective_history.push_back(best);
  for (int round = 0; round < 2 * opt.max_rounds; ++round) {
    ++iterations;
    const Half half = round % 2 == 0 ? Half::Storage : Half::Gain;
    const auto idx = free_vars(L, half);
    const auto blocks = half_blocks(pr, L, z, idx, half);
    const lmi::BarrierResult r = lmi::minimize(restrict(c, idx), blocks, restrict(z, idx), opt.barrier);
    spdlog::debug("dmi round {}: barrier converged {} after {} newton steps", round, r.converged,
                  r.newton_steps);
    const Vec trial = embed(z, idx, r.z);
    const double value = c.dot(trial);
    if (!lmi::strictly_feasible(blocks, r.z) || value > best) continue;
    const double change = best - value;
    z = trial;
    best = value;
    cert.objective_history.push_back(best);
    spdlog::debug("dmi round {}: objective {:.9g}", round, best);
    if (half == Half::Gain && change < opt.objective_tol * (1.0 + std::abs(best))) break;
  }

  cert.P = L.P(z);
  cert.F = L.F(z);
  cert.rho = z(L.rho());
  cert.eps_ii = z(L.eps_ii());
  cert.eps_ij.assign(pr.n_total, 0.0);
  for (int k = 0; k < L.n_active; ++k) cert.eps_ij[pr.active_index[k]] = z(L.eps_ij(k));
  cert.objective = best;
  cert.iterations = iterations;
  return cert;
}

// Diagonal d with diag(d)^-1 A diag(d) having balanced off-diagonal row and
// column norms.
Vec balance(const Mat& A) {
  const int n = static_cast<int>(A.rows());
  Mat M = A.cwiseAbs();
  Vec d = Vec::Ones(n);
  for (int sweep = 0; sweep < 50; ++sweep) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      const double c = M.col(i).sum() - M(i, i);
      const double r = M.row(i).sum() - M(i, i);
      if (c <= 0.0 || r <= 0.0) continue;
      const double f = std::sqrt(r / c);
      if (std::abs(std::log(f)) < 1e-3) continue;
      d(i) *= f;
      M.col(i) *= f;
      M.row(i) /= f;
      changed = true;
    }
    if (!changed) break;
  }
  return d;
}

// The certificate is invariant under x = T xs, so the barrier works in
// balanced coordinates and the result is mapped back.
DmiCertificate synthesize_from(const DmiPlant& plant, std::span<const Mat> H,
                               const SynthesisOptions& opt, const DmiWeights& weights,
                               const Mat& F0, const DmiCertificate* warm) {
  const Vec t = balance(plant.closed_loop(F0));
  const Vec ti = t.cwiseInverse();
  DmiPlant scaled;
  scaled.A = ti.asDiagonal() * plant.A * t.asDiagonal();
  scaled.B = ti.asDiagonal() * plant.B;
  scaled.C = plant.C * t.asDiagonal();
  scaled.B_act = ti.asDiagonal() * plant.B_act;
  std::vector<Mat> Hs;
  for (const auto& h : H) Hs.push_back(ti.asDiagonal() * h);
  Problem pr = make_problem(scaled, Hs, opt);
  pr.gain_scale = t;

  DmiCertificate warm_scaled;
  const DmiCertificate* ws = nullptr;
  if (warm && warm->P.rows() == plant.states()) {
    warm_scaled = *warm;
    warm_scaled.P = t.asDiagonal() * warm->P * t.asDiagonal();
    // Keep the warm storage inside the bounds of the scaled problem.
    Eigen::SelfAdjointEigenSolver<Mat> es(warm_scaled.P);
    const double top = es.eigenvalues().maxCoeff();
    if (top > 0.0 && es.eigenvalues().minCoeff() > 0.0) {
      warm_scaled.P *= 0.5 * opt.p_max / top;
      ws = &warm_scaled;
    }
  }
  DmiCertificate cert = solve_scaled(pr, weights, F0 * t.asDiagonal(), ws);
  cert.P = ti.asDiagonal() * cert.P * ti.asDiagonal();
  cert.F = cert.F * ti.asDiagonal();
  return cert;
}

// A warm start on a marginal point (e.g. zero gain with undamped integrator
// modes) can stall phase I; the LQR gain is the fallback seed.
DmiCertificate run_synthesis(const DmiPlant& plant, std::span<const Mat> H,
                             const SynthesisOptions& opt, const DmiWeights& weights, const Mat& F0,
                             const DmiCertificate* warm) {
  try {
    return synthesize_from(plant, H, opt, weights, F0, warm);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::Infeasible) throw;
    const Mat F_lqr = initial_gain(plant);
    if (F_lqr.rows() != F0.rows() || F_lqr.cols() != F0.cols() || (F_lqr - F0).norm() == 0.0) throw;
    spdlog::debug("dmi: warm start infeasible ({}), retrying from LQR gain", e.what());
    return synthesize_from(plant, H, opt, weights, F_lqr, nullptr);
  }
}

}  // namespace

Mat certificate_Mprime(const DmiPlant& plant, const DmiCertificate& cert, std::span<const Mat> H) {
  std::vector<double> e = cert.eps_ij;
  e.resize(H.size(), 0.0);
  return assemble_Mprime(plant.closed_loop(cert.F), plant.B, plant.C, cert.P, cert.rho,
                         cert.eps_ii, H, e);
}

DmiCertificate optimize_local(const DmiPlant& plant, const DmiWeights& weights, const Mat& F0,
                              const SynthesisOptions& options) {
  DmiWeights w{weights.alpha_ii, {}};
  w.validate();
  DmiCertificate cert = run_synthesis(plant, {}, options, w, F0, nullptr);
  cert.margin = check_feasible(assemble_Mi(plant.closed_loop(cert.F), plant.B, plant.C, cert.P,
                                           cert.rho, cert.eps_ii))
                    .margin;
  if (cert.margin > options.feasibility_tol) {
    throw Error(ErrorCode::Infeasible, "local certificate failed verification");
  }
  return cert;
}

std::vector<double> optimize_interconnection(const DmiPlant& plant, const DmiCertificate& cert,
                                             std::span<const Mat> H, const DmiWeights& weights,
                                             const SynthesisOptions& options) {
  if (weights.alpha_ij.size() != H.size()) {
    throw Error(ErrorCode::DimensionMismatch, "one weight per neighbor");
  }
  weights.validate();
  const Problem pr = make_problem(plant, H, options);
  std::vector<double> out(H.size(), 0.0);
  const int na = static_cast<int>(pr.H.size());
  if (na == 0) return out;

  const Mat A_bar = plant.closed_loop(cert.F);
  std::vector<lmi::AffineMatrix> blocks;
  blocks.push_back(lmi::linearize(
      [&](const Vec& z) {
        std::vector<double> e(z.data(), z.data() + na);
        return Mat(-mbar_unchecked(A_bar, plant.B, plant.C, cert.P, cert.rho, cert.eps_ii, pr.H, e));
      },
      na));
  std::vector<std::pair<int, double>> lo, hi;
  for (int k = 0; k < na; ++k) {
    lo.emplace_back(k, 0.0);
    hi.emplace_back(k, options.eps_max);
  }
  blocks.push_back(scalar_block(lo, hi, na));

  Vec z0 = Vec::Constant(na, 0.5 * options.eps_max);
  const lmi::PhaseOneResult ph = lmi::phase_one(blocks, z0, 1e-12, options.barrier);
  if (!ph.feasible) {
    throw Error(ErrorCode::Infeasible,
                "coupling terms cannot be absorbed with the local storage and gain");
  }
  Vec c(na);
  for (int k = 0; k < na; ++k) c(k) = weights.alpha_ij[pr.active_index[k]];
  const lmi::BarrierResult r = lmi::minimize(c, blocks, ph.z, options.barrier);
  for (int k = 0; k < na; ++k) out[pr.active_index[k]] = r.z(k);
  return out;
}

DmiCertificate optimize_combined(const DmiPlant& plant, std::span<const Mat> H,
                                 const DmiWeights& weights, const Mat& F0,
                                 const SynthesisOptions& options, const DmiCertificate* warm) {
  if (weights.alpha_ij.size() != H.size()) {
    throw Error(ErrorCode::DimensionMismatch, "one weight per neighbor");
  }
  weights.validate();
  DmiCertificate cert = run_synthesis(plant, H, options, weights, F0, warm);
  cert.margin = check_feasible(certificate_Mprime(plant, cert, H)).margin;
  if (cert.margin > options.feasibility_tol) {
    throw Error(ErrorCode::Infeasible, "combined certificate failed verification");
  }
  return cert;
}

double delay_robustness_bound(const DmiCertificate& cert, const Mat& C, const Mat& H_ij,
                              double h_ij, double eps_ij, double margin) {
  if (h_ij == 0.0) throw Error(ErrorCode::ZeroCouplingGain, "coupling gain is zero");
  if (!(eps_ij > 0.0)) throw Error(ErrorCode::NonPositiveEpsilon, "eps_ij must be positive");
  margin = std::max(margin, 0.0);
  // With H = (1 + dh/h) H0 the inequality changes by dh^2 N + dh N'.
  const Mat PH = cert.P * H_ij;
  const Mat PHHP = PH * PH.transpose();
  const Mat N = PHHP / (eps_ij * h_ij * h_ij);
  const Mat Np = (2.0 * PHHP - eps_ij * (PH * C + C.transpose() * PH.transpose())) / (eps_ij * h_ij);
  const double n2 = N.operatorNorm();
  const double n1 = Np.operatorNorm();
  if (n2 == 0.0) return n1 == 0.0 ? std::numeric_limits<double>::infinity() : margin / n1;
  return (-n1 + std::sqrt(n1 * n1 + 4.0 * n2 * margin)) / (2.0 * n2);
}

}  // namespace wadamp
