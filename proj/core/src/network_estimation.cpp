#include "wadamp/network_estimation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "wadamp/error.hpp"

namespace wadamp {

int FullNetwork::bus_index(int id) const {
  for (std::size_t k = 0; k < buses.size(); ++k) {
    if (buses[k].id == id) return static_cast<int>(k);
  }
  throw Error(ErrorCode::InvalidInput, "unknown bus id " + std::to_string(id));
}

void FullNetwork::validate() const {
  if (buses.empty()) throw Error(ErrorCode::InvalidInput, "network has no buses");
  for (const auto& l : lines) {
    bus_index(l.from);
    bus_index(l.to);
    if (l.r < 0.0 || l.x <= 0.0) {
      throw Error(ErrorCode::InvalidInput, "line " + std::to_string(l.from) + "-" +
                                               std::to_string(l.to) + " needs R >= 0 and X > 0");
    }
  }
  for (const auto& g : generators) {
    bus_index(g.bus);
    if (g.xd_prime <= 0.0) throw Error(ErrorCode::InvalidInput, "xd_prime must be positive");
  }
}

namespace {

// Union-find connectivity over an edge list.
bool connected(int n, const std::vector<std::pair<int, int>>& edges) {
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  int groups = n;
  for (auto [a, b] : edges) {
    const int ra = find(a), rb = find(b);
    if (ra != rb) {
      parent[ra] = rb;
      --groups;
    }
  }
  return groups <= 1;
}

void add_branch(CMat& Y, int a, int b, std::complex<double> y) {
  Y(a, a) += y;
  Y(b, b) += y;
  Y(a, b) -= y;
  Y(b, a) -= y;
}

}  // namespace

CMat admittance_from_lines(const FullNetwork& net, const ShuntOverlay& overlay) {
  net.validate();
  const int n = static_cast<int>(net.buses.size());
  CMat Y = CMat::Zero(n, n);
  std::vector<std::pair<int, int>> edges;
  for (const auto& l : net.lines) {
    const int a = net.bus_index(l.from);
    const int b = net.bus_index(l.to);
    add_branch(Y, a, b, 1.0 / std::complex<double>(l.r, l.x));
    const std::complex<double> half(0.0, 0.5 * l.b_shunt);
    Y(a, a) += half;
    Y(b, b) += half;
    edges.emplace_back(a, b);
  }
  if (!connected(n, edges)) throw Error(ErrorCode::DisconnectedNetwork, "bus graph is not connected");
  for (int k = 0; k < n; ++k) {
    Y(k, k) += std::complex<double>(net.buses[k].p_load, -net.buses[k].q_load);
  }
  for (const auto& [id, y] : overlay.shunts) {
    const int k = net.bus_index(id);
    Y(k, k) += y;
  }
  return Y;
}

CMat augmented_admittance(const FullNetwork& net, const ShuntOverlay& overlay) {
  const CMat Ybus = admittance_from_lines(net, overlay);
  const int nb = static_cast<int>(Ybus.rows());
  const int ng = static_cast<int>(net.generators.size());
  CMat Y = CMat::Zero(nb + ng, nb + ng);
  Y.topLeftCorner(nb, nb) = Ybus;
  for (int g = 0; g < ng; ++g) {
    add_branch(Y, nb + g, net.bus_index(net.generators[g].bus),
               1.0 / std::complex<double>(0.0, net.generators[g].xd_prime));
  }
  return Y;
}

CMat kron_reduce(const CMat& Y, std::span<const int> keep) {
  const int n = static_cast<int>(Y.rows());
  std::vector<bool> kept(n, false);
  for (int k : keep) {
    if (k < 0 || k >= n || kept[k]) throw Error(ErrorCode::InvalidInput, "bad keep index");
    kept[k] = true;
  }
  std::vector<int> elim;
  for (int k = 0; k < n; ++k) {
    if (!kept[k]) elim.push_back(k);
  }
  const int nk = static_cast<int>(keep.size());
  const int ne = static_cast<int>(elim.size());
  CMat Ykk(nk, nk), Yke(nk, ne), Yek(ne, nk), Yee(ne, ne);
  for (int a = 0; a < nk; ++a) {
    for (int b = 0; b < nk; ++b) Ykk(a, b) = Y(keep[a], keep[b]);
    for (int b = 0; b < ne; ++b) Yke(a, b) = Y(keep[a], elim[b]);
  }
  for (int a = 0; a < ne; ++a) {
    for (int b = 0; b < nk; ++b) Yek(a, b) = Y(elim[a], keep[b]);
    for (int b = 0; b < ne; ++b) Yee(a, b) = Y(elim[a], elim[b]);
  }
  if (ne == 0) return Ykk;
  Eigen::FullPivLU<CMat> lu(Yee);
  const double scale = Yee.cwiseAbs().maxCoeff();
  lu.setThreshold(1e-12);
  if (!lu.isInvertible() || scale == 0.0) {
    throw Error(ErrorCode::SingularInteriorBlock, "eliminated block of the admittance is singular");
  }
  return Ykk - Yke * lu.solve(Yek);
}

ReducedNetwork reduce_to_generators(const FullNetwork& net, const Vec& E,
                                    const ShuntOverlay& overlay) {
  const int ng = static_cast<int>(net.generators.size());
  if (E.size() != ng) throw Error(ErrorCode::DimensionMismatch, "one voltage per generator");
  const CMat Y = augmented_admittance(net, overlay);
  const int nb = static_cast<int>(net.buses.size());
  std::vector<int> keep(ng);
  std::iota(keep.begin(), keep.end(), nb);
  const CMat Yr = kron_reduce(Y, keep);
  ReducedNetwork out;
  out.G = 0.5 * (Yr.real() + Yr.real().transpose());
  out.B = 0.5 * (Yr.imag() + Yr.imag().transpose());
  out.E = E;
  return out;
}

MeasurementWindow synthesize_window(const ReducedNetwork& net, const Mat& delta, double dt) {
  MeasurementWindow w;
  const int m = static_cast<int>(delta.rows());
  w.delta = delta;
  w.p.resize(m, net.size());
  w.q.resize(m, net.size());
  w.E = net.E;
  for (int k = 0; k < m; ++k) {
    const PowerInjection inj = electrical_power(net, delta.row(k).transpose());
    w.p.row(k) = inj.p.transpose();
    w.q.row(k) = inj.q.transpose();
    w.time.push_back(k * dt);
  }
  return w;
}

Mat excitation_angles(const Vec& delta_star, int samples, double dt, double amplitude,
                      std::uint64_t seed) {
  if (samples < 1 || !(dt > 0.0)) throw Error(ErrorCode::InvalidInput, "need samples and dt > 0");
  const int n = static_cast<int>(delta_star.size());
  constexpr double kTones[] = {0.4, 1.1, 2.3};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  Mat ph(n, 3);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) ph(i, k) = phase(rng);
  }
  Mat delta(samples, n);
  for (int s = 0; s < samples; ++s) {
    const double t = s * dt;
    for (int i = 0; i < n; ++i) {
      double v = 0.0;
      for (int k = 0; k < 3; ++k) v += std::sin(2.0 * std::numbers::pi * kTones[k] * t + ph(i, k));
      delta(s, i) = delta_star(i) + amplitude * v;
    }
  }
  return delta;
}

void add_measurement_noise(MeasurementWindow& window, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw Error(ErrorCode::InvalidInput, "noise sigma must be nonnegative");
  if (sigma == 0.0) return;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  for (Eigen::Index k = 0; k < window.p.size(); ++k) window.p.data()[k] += noise(rng);
  for (Eigen::Index k = 0; k < window.q.size(); ++k) window.q.data()[k] += noise(rng);
}

double relative_error(const Mat& G_est, const Mat& B_est, const Mat& G, const Mat& B) {
  const double scale = std::sqrt(G.squaredNorm() + B.squaredNorm());
  if (!(scale > 0.0)) throw Error(ErrorCode::InvalidInput, "reference matrices are zero");
  return std::sqrt((G_est - G).squaredNorm() + (B_est - B).squaredNorm()) / scale;
}

ReducedEstimate estimate_reduced_params(const MeasurementWindow& w) {
  const int n = w.areas();
  const int m = w.samples();
  if (n < 1 || w.E.size() != n || w.p.rows() != m || w.q.rows() != m || w.p.cols() != n ||
      w.q.cols() != n || static_cast<int>(w.time.size()) != m) {
    throw Error(ErrorCode::InsufficientData, "measurement window has inconsistent shape");
  }
  for (int k = 1; k < m; ++k) {
    if (!(w.time[k] > w.time[k - 1])) {
      throw Error(ErrorCode::InsufficientData, "timestamps must increase strictly");
    }
  }
  // Unknown layout: G_ii (n), B_ii (n), then G_ij, B_ij for each pair i<j.
  const int pairs = n * (n - 1) / 2;
  const int unknowns = 2 * n + 2 * pairs;
  if (2 * m * n < unknowns) throw Error(ErrorCode::RankDeficient, "window too short");
  Mat pair_index = Mat::Constant(n, n, -1);
  {
    int k = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        pair_index(i, j) = pair_index(j, i) = k++;
      }
    }
  }
  auto g_col = [&](int i, int j) {
    return i == j ? i : 2 * n + 2 * static_cast<int>(pair_index(i, j));
  };
  auto b_col = [&](int i, int j) {
    return i == j ? n + i : 2 * n + 2 * static_cast<int>(pair_index(i, j)) + 1;
  };

  Mat A = Mat::Zero(2 * m * n, unknowns);
  Vec rhs(2 * m * n);
  for (int k = 0; k < m; ++k) {
    for (int i = 0; i < n; ++i) {
      const int rp = 2 * (k * n + i);
      const int rq = rp + 1;
      rhs(rp) = w.p(k, i);
      rhs(rq) = w.q(k, i);
      for (int j = 0; j < n; ++j) {
        const double d = w.delta(k, i) - w.delta(k, j);
        const double ee = w.E(i) * w.E(j);
        A(rp, g_col(i, j)) += ee * std::cos(d);
        A(rq, b_col(i, j)) -= ee * std::cos(d);
        if (i != j) {
          A(rp, b_col(i, j)) += ee * std::sin(d);
          A(rq, g_col(i, j)) += ee * std::sin(d);
        }
      }
    }
  }
  Eigen::ColPivHouseholderQR<Mat> qr(A);
  qr.setThreshold(1e-9);
  if (qr.rank() < unknowns) {
    throw Error(ErrorCode::RankDeficient,
                "regressor rank " + std::to_string(qr.rank()) + " < " + std::to_string(unknowns) +
                    "; widen the window or add excitation");
  }
  const Vec theta = qr.solve(rhs);
  ReducedEstimate out;
  out.G.resize(n, n);
  out.B.resize(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      out.G(i, j) = theta(g_col(i, j));
      out.B(i, j) = theta(b_col(i, j));
    }
  }
  out.residual_norm = (A * theta - rhs).norm();
  return out;
}

std::pair<double, double> h_bounds(double G_ij, double B_ij, double E_i, double E_j,
                                   double delta_ij_star, double lo, double hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) {
    throw Error(ErrorCode::InvalidInput, "deviation window must be finite and ordered");
  }
  auto h = [&](double dev) {
    return coupling_gain(G_ij, B_ij, E_i, E_j, delta_ij_star + dev, delta_ij_star);
  };
  double h_lo = h(lo), h_hi = h_lo;
  const int steps = std::max(1, static_cast<int>(std::ceil((hi - lo) / 1e-3)));
  for (int k = 1; k <= steps; ++k) {
    const double v = h(lo + (hi - lo) * k / steps);
    h_lo = std::min(h_lo, v);
    h_hi = std::max(h_hi, v);
  }
  if (lo <= 0.0 && hi >= 0.0) {
    const double v = h(0.0);
    h_lo = std::min(h_lo, v);
    h_hi = std::max(h_hi, v);
  }
  return {h_lo, h_hi};
}

}  // namespace wadamp
