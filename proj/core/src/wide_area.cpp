#include "wadamp/wide_area.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "wadamp/error.hpp"

namespace wadamp {

namespace {

Mat sym(const Mat& M) { return 0.5 * (M + M.transpose()); }

// Reachability from every node in the directed graph of S (edge i -> j when
// S(i, j) != 0) and in its reverse.
bool strongly_connected(const Mat& S) {
  const int n = static_cast<int>(S.rows());
  auto reaches_all = [&](bool reverse) {
    std::vector<bool> seen(n, false);
    std::vector<int> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
      const int a = stack.back();
      stack.pop_back();
      for (int b = 0; b < n; ++b) {
        const double w = reverse ? S(b, a) : S(a, b);
        if (w != 0.0 && !seen[b]) {
          seen[b] = true;
          stack.push_back(b);
        }
      }
    }
    for (bool s : seen) {
      if (!s) return false;
    }
    return true;
  };
  return n > 0 && reaches_all(false) && reaches_all(true);
}

}  // namespace

Vec left_eigenvector(const Mat& L) {
  const int n = static_cast<int>(L.rows());
  Mat S = -L;
  S.diagonal().setZero();
  if (n < 1 || !strongly_connected(S)) {
    throw Error(ErrorCode::NotStronglyConnected, "communication graph is not strongly connected");
  }
  // gamma spans the null space of L'; pin the scale with sum = 1.
  Mat A(n + 1, n);
  A.topRows(n) = L.transpose();
  A.row(n).setOnes();
  Vec b = Vec::Zero(n + 1);
  b(n) = 1.0;
  const Vec gamma = A.colPivHouseholderQr().solve(b);
  if ((gamma.array() <= 0.0).any() || (L.transpose() * gamma).cwiseAbs().maxCoeff() > 1e-10) {
    throw Error(ErrorCode::NotStronglyConnected, "left null vector is not positive");
  }
  return gamma;
}

CommTopology topology_from_adjacency(const Mat& S) {
  const auto n = S.rows();
  if (n < 2 || S.cols() != n) throw Error(ErrorCode::InvalidInput, "adjacency must be n x n, n >= 2");
  if ((S.array() < 0.0).any()) throw Error(ErrorCode::InvalidInput, "adjacency must be nonnegative");
  CommTopology t;
  t.S = S;
  t.D = S.rowwise().sum().asDiagonal();
  t.L = t.D - S;
  t.gamma = left_eigenvector(t.L);
  return t;
}

CommTopology build_topology(int n, TopologyKind kind, const std::vector<std::vector<int>>& groups) {
  if (n < 2) throw Error(ErrorCode::InvalidInput, "need at least two areas");
  if (kind == TopologyKind::AllToAll) return topology_from_adjacency(Mat::Ones(n, n));

  std::vector<int> owner(n, -1);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) throw Error(ErrorCode::InvalidInput, "empty group");
    for (int a : groups[g]) {
      if (a < 0 || a >= n || owner[a] != -1) {
        throw Error(ErrorCode::InvalidInput, "groups must partition the areas");
      }
      owner[a] = static_cast<int>(g);
    }
  }
  for (int o : owner) {
    if (o == -1) throw Error(ErrorCode::InvalidInput, "groups must partition the areas");
  }
  Mat S = Mat::Zero(n, n);
  for (const auto& g : groups) {
    for (int a : g) {
      for (int b : g) {
        if (a != b) S(a, b) = 1.0;
      }
    }
  }
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t h = g + 1; h < groups.size(); ++h) {
      S(groups[g][0], groups[h][0]) = 1.0;
      S(groups[h][0], groups[g][0]) = 1.0;
    }
  }
  return topology_from_adjacency(S);
}

double smallest_nonzero_eigenvalue(const Mat& M, double tol) {
  Eigen::SelfAdjointEigenSolver<Mat> es(sym(M), Eigen::EigenvaluesOnly);
  for (int k = 0; k < es.eigenvalues().size(); ++k) {
    if (es.eigenvalues()(k) > tol) return es.eigenvalues()(k);
  }
  return 0.0;
}

namespace {

void check(const CommTopology& topo, const AreaDissipativity& d) {
  const int n = topo.size();
  if (d.eps_ii.size() != n || d.rho.size() != n || d.eps.rows() != n || d.eps.cols() != n) {
    throw Error(ErrorCode::DimensionMismatch, "dissipativity data must match the topology size");
  }
}

}  // namespace

Vec compute_phi(const CommTopology& topo, const AreaDissipativity& d) {
  check(topo, d);
  const Vec& g = topo.gamma;
  // sum_j gamma_j eps(j, i) is column i of eps weighted by gamma.
  return g.cwiseProduct(d.rho) - d.eps.transpose() * g;
}

Vec compute_psi(const CommTopology& topo, const AreaDissipativity& d, const Vec& kc) {
  check(topo, d);
  const Vec g_over_k = topo.gamma.cwiseQuotient(kc);
  return g_over_k.cwiseProduct(d.rho) - d.eps.transpose() * g_over_k;
}

Mat assemble_Q(const CommTopology& topo, const AreaDissipativity& d, const Vec& kc) {
  check(topo, d);
  if (kc.size() != topo.size() || (kc.array() <= 0.0).any()) {
    throw Error(ErrorCode::InvalidInput, "gains must be positive, one per area");
  }
  const Mat& L = topo.L;
  const Mat Gamma = topo.gamma.asDiagonal();
  const Mat KW = kc.cwiseProduct(d.eps_ii).asDiagonal();
  return Gamma * L + L.transpose() * Gamma - L.transpose() * KW * L +
         Mat(compute_psi(topo, d, kc).asDiagonal());
}

Mat assemble_Q_uniform(const CommTopology& topo, const AreaDissipativity& d, double kc) {
  check(topo, d);
  if (!(kc > 0.0)) throw Error(ErrorCode::InvalidInput, "gain must be positive");
  const Mat& L = topo.L;
  const Mat Gamma = topo.gamma.asDiagonal();
  const Mat W = d.eps_ii.asDiagonal();
  return -kc * L.transpose() * W * L + Gamma * L + L.transpose() * Gamma +
         Mat(compute_phi(topo, d).asDiagonal()) / kc;
}

const char* to_string(GainCase c) {
  switch (c) {
    case GainCase::PhiNonneg: return "phi_nonneg";
    case GainCase::PhiMixed: return "phi_mixed";
    case GainCase::Infeasible: return "infeasible";
  }
  return "unknown";
}

WideAreaDesign select_kc(const CommTopology& topo, const AreaDissipativity& d, double kc_max) {
  check(topo, d);
  if (!(kc_max > 0.0)) throw Error(ErrorCode::InvalidInput, "kc_max must be positive");
  const Mat& L = topo.L;
  const Mat Gamma = topo.gamma.asDiagonal();
  WideAreaDesign out;
  out.phi = compute_phi(topo, d);
  {
    Eigen::SelfAdjointEigenSolver<Mat> es(sym(L.transpose() * d.eps_ii.asDiagonal() * L),
                                          Eigen::EigenvaluesOnly);
    out.lambda_a = std::max(0.0, es.eigenvalues().maxCoeff());
  }
  out.lambda_b = smallest_nonzero_eigenvalue(Gamma * L + L.transpose() * Gamma);
  const double a = out.lambda_a;
  const double b = out.lambda_b;
  const double inf = std::numeric_limits<double>::infinity();

  if ((out.phi.array() >= 0.0).all()) {
    out.gain_case = GainCase::PhiNonneg;
    out.kc_lower = 0.0;
    out.kc_upper = a > 0.0 ? b / a : inf;
    out.kc = std::min(0.5 * out.kc_upper, kc_max);
    return out;
  }
  const double min_phi = out.phi.minCoeff();
  const double disc = b * b + 4.0 * a * min_phi;
  if (out.phi.sum() > 0.0 && disc >= 0.0) {
    out.gain_case = GainCase::PhiMixed;
    if (a > 0.0) {
      out.kc_lower = (b - std::sqrt(disc)) / (2.0 * a);
      out.kc_upper = (b + std::sqrt(disc)) / (2.0 * a);
    } else {
      out.kc_lower = b > 0.0 ? -min_phi / b : inf;
      out.kc_upper = inf;
    }
    const double hi = std::min(out.kc_upper, kc_max);
    if (out.kc_lower < hi) {
      out.kc = 0.5 * (out.kc_lower + hi);
      return out;
    }
  }
  out.gain_case = GainCase::Infeasible;
  throw Error(ErrorCode::Infeasible, "no admissible cooperative gain (sum phi = " +
                                         std::to_string(out.phi.sum()) +
                                         ", min phi = " + std::to_string(min_phi) + ")");
}

Vec cooperative_control_lifted(const Vec& y, const CommTopology& topo, double kc) {
  const int n = topo.size();
  if (y.size() != 2 * n) throw Error(ErrorCode::DimensionMismatch, "outputs must be 2n");
  const Eigen::Map<const Mat> Y(y.data(), 2, n);  // column i is y_i
  const Mat U = -kc * Y * topo.L.transpose();
  return Eigen::Map<const Vec>(U.data(), 2 * n);
}

Vec cooperative_control(const Vec& y, const CommTopology& topo, double kc,
                        const Eigen::Vector2d& channel) {
  const Vec u = cooperative_control_lifted(y, topo, kc);
  const int n = topo.size();
  Vec out(n);
  for (int i = 0; i < n; ++i) out(i) = channel.dot(u.segment<2>(2 * i));
  return out;
}

}  // namespace wadamp
