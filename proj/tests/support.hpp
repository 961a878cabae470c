#pragma once

#include <cmath>
#include <random>
#include <string>

#include "wadamp/system_io.hpp"

namespace wadamp::test {

inline std::string data_path(const std::string& name) {
  return std::string(WADAMP_TEST_DATA) + "/" + name;
}

inline const SystemData& golden_system() {
  static const SystemData sys = io::load_system(data_path("ieee9_3area.json"));
  return sys;
}

inline Mat random_matrix(std::mt19937_64& rng, int rows, int cols, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

inline Mat random_spd(std::mt19937_64& rng, int n, double floor = 0.1) {
  const Mat a = random_matrix(rng, n, n);
  return a * a.transpose() + floor * Mat::Identity(n, n);
}

inline double lambda_max(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

inline double lambda_min(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// Independent Y-bus assembly over buses then generator internal nodes, written
// from scratch with loops rather than through the library.
inline CMat oracle_admittance(const SystemData& sys) {
  const auto& net = sys.network;
  const int nb = static_cast<int>(net.buses.size());
  const int ng = static_cast<int>(net.generators.size());
  CMat Y = CMat::Zero(nb + ng, nb + ng);
  auto idx = [&](int id) {
    for (int k = 0; k < nb; ++k)
      if (net.buses[k].id == id) return k;
    return -1;
  };
  for (const auto& ln : net.lines) {
    const int a = idx(ln.from), b = idx(ln.to);
    const std::complex<double> y = 1.0 / std::complex<double>(ln.r, ln.x);
    const std::complex<double> sh(0.0, ln.b_shunt / 2.0);
    Y(a, a) += y + sh;
    Y(b, b) += y + sh;
    Y(a, b) -= y;
    Y(b, a) -= y;
  }
  for (int k = 0; k < nb; ++k) Y(k, k) += std::complex<double>(net.buses[k].p_load, -net.buses[k].q_load);
  for (int g = 0; g < ng; ++g) {
    const int b = idx(net.generators[g].bus);
    const std::complex<double> y = 1.0 / std::complex<double>(0.0, net.generators[g].xd_prime);
    Y(nb + g, nb + g) += y;
    Y(b, b) += y;
    Y(b, nb + g) -= y;
    Y(nb + g, b) -= y;
  }
  return Y;
}

// Gaussian elimination of interior nodes one at a time (node-by-node Kron),
// as opposed to the block Schur complement in the library.
inline CMat oracle_eliminate(CMat Y, int keep_from) {
  for (int e = keep_from - 1; e >= 0; --e) {
    const int n = static_cast<int>(Y.rows());
    CMat R(n - 1, n - 1);
    for (int i = 0, ri = 0; i < n; ++i) {
      if (i == e) continue;
      for (int j = 0, rj = 0; j < n; ++j) {
        if (j == e) continue;
        R(ri, rj) = Y(i, j) - Y(i, e) * Y(e, j) / Y(e, e);
        ++rj;
      }
      ++ri;
    }
    Y = R;
  }
  return Y;
}

}  // namespace wadamp::test
