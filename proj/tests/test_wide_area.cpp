#include <gtest/gtest.h>

#include <random>

#include "support.hpp"
#include "wadamp/error.hpp"
#include "wadamp/wide_area.hpp"

using namespace wadamp;

namespace {

const Mat kComplete3{{2.0, -1.0, -1.0}, {-1.0, 2.0, -1.0}, {-1.0, -1.0, 2.0}};

// Orthonormal basis of the complement of the ones vector.
Mat consensus_complement(int n) {
  Mat M = Mat::Identity(n, n) - Mat::Constant(n, n, 1.0 / n);
  Eigen::SelfAdjointEigenSolver<Mat> es(M);
  return es.eigenvectors().rightCols(n - 1);
}

AreaDissipativity uniform(int n, double eps_ii, double rho) {
  return {Vec::Constant(n, eps_ii), Vec::Constant(n, rho), Mat::Zero(n, n)};
}

// Random digraph containing a directed Hamiltonian cycle, hence strongly connected.
Mat random_strong_digraph(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Mat S = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) S(i, (i + 1) % n) = 0.5 + u(rng);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && u(rng) < 0.3) S(i, j) = u(rng);
  return S;
}

}  // namespace

TEST(Topology, AllToAllThree) {
  const CommTopology t = build_topology(3, TopologyKind::AllToAll);
  EXPECT_LE((t.L - kComplete3).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_LE((t.gamma - Vec::Constant(3, 1.0 / 3.0)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Topology, TwoAreas) {
  const CommTopology t = build_topology(2, TopologyKind::AllToAll);
  EXPECT_LE((t.L - Mat{{1.0, -1.0}, {-1.0, 1.0}}).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Topology, SingletonGroupsMatchAllToAll) {
  const CommTopology t = build_topology(3, TopologyKind::Sparsest, {{0}, {1}, {2}});
  EXPECT_LE((t.L - kComplete3).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Topology, SparsestHasOneLinkPerGroupPair) {
  const CommTopology t = build_topology(5, TopologyKind::Sparsest, {{0, 1}, {2, 3, 4}});
  // Within groups: 2 + 6 directed links; across: exactly one pair.
  EXPECT_EQ((t.S.array() != 0.0).count(), 2 + 6 + 2);
  int cross = 0;
  for (int a : {0, 1})
    for (int b : {2, 3, 4}) cross += (t.S(a, b) != 0.0) + (t.S(b, a) != 0.0);
  EXPECT_EQ(cross, 2);
}

TEST(Topology, BadGroupsRejected) {
  EXPECT_THROW(build_topology(3, TopologyKind::Sparsest, {{0, 1}}), Error);
  EXPECT_THROW(build_topology(3, TopologyKind::Sparsest, {{0, 1}, {1, 2}}), Error);
  EXPECT_THROW(build_topology(1, TopologyKind::AllToAll), Error);
}

TEST(Topology, DisconnectedGraphRejected) {
  Mat S = Mat::Zero(3, 3);
  S(0, 1) = S(1, 0) = 1.0;
  try {
    topology_from_adjacency(S);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotStronglyConnected);
  }
  // One-way link only: weakly but not strongly connected.
  Mat D = Mat::Zero(2, 2);
  D(0, 1) = 1.0;
  EXPECT_THROW(topology_from_adjacency(D), Error);
}

TEST(LeftEigenvector, DirectedCycleIsUniform) {
  Mat S = Mat::Zero(3, 3);
  S(0, 1) = S(1, 2) = S(2, 0) = 1.0;
  const CommTopology t = topology_from_adjacency(S);
  EXPECT_LE((t.gamma - Vec::Constant(3, 1.0 / 3.0)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(LeftEigenvector, WeightedAsymmetricAgainstNullSpaceOracle) {
  Mat S{{0.0, 2.0, 0.5}, {1.0, 0.0, 0.0}, {0.0, 3.0, 0.0}};
  const CommTopology t = topology_from_adjacency(S);
  // Oracle: kernel of L' from a full SVD.
  Eigen::JacobiSVD<Mat> svd(t.L.transpose(), Eigen::ComputeFullV);
  Vec v = svd.matrixV().col(2);
  v /= v.sum();
  EXPECT_LE((t.gamma - v).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((t.L.transpose() * t.gamma).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_TRUE((t.gamma.array() > 0.0).all());
}

TEST(LeftEigenvector, RandomStrongDigraphs) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + trial % 6;
    const CommTopology t = topology_from_adjacency(random_strong_digraph(rng, n));
    EXPECT_LE((t.L * Vec::Ones(n)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((t.L.transpose() * t.gamma).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_TRUE((t.gamma.array() > 0.0).all());
    EXPECT_NEAR(t.gamma.sum(), 1.0, 1e-12);
  }
}

TEST(LaplacianProperty, GammaWeightedSymmetrisationIsPsdRankDeficientByOne) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + trial % 6;
    const CommTopology t = topology_from_adjacency(random_strong_digraph(rng, n));
    const Mat G = t.gamma.asDiagonal();
    const Mat M = G * t.L + t.L.transpose() * G;
    Eigen::SelfAdjointEigenSolver<Mat> es(M, Eigen::EigenvaluesOnly);
    EXPECT_GE(es.eigenvalues()(0), -1e-12);
    EXPECT_GT(es.eigenvalues()(1), 1e-9);
    EXPECT_LE((M * Vec::Ones(n)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

// For undirected graphs the two symmetrisations coincide; for directed ones
// only Gamma L + L' Gamma annihilates 1.
TEST(LaplacianProperty, SymmetrisationsAgreeOnUndirectedGraphs) {
  for (int n = 2; n <= 7; ++n) {
    const CommTopology t = build_topology(n, TopologyKind::AllToAll);
    const Mat G = t.gamma.asDiagonal();
    EXPECT_LE(((G * t.L + t.L.transpose() * G) - (G * t.L.transpose() + t.L * G)).cwiseAbs().maxCoeff(),
              1e-15);
  }
  Mat S{{0, 1, 0}, {0, 0, 1}, {1, 1, 0}};
  const CommTopology t = topology_from_adjacency(S);
  const Mat G = t.gamma.asDiagonal();
  EXPECT_GT(((G * t.L.transpose() + t.L * G) * Vec::Ones(3)).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(AssembleQ, ZeroDissipationIsLaplacianForm) {
  const CommTopology t = build_topology(3, TopologyKind::AllToAll);
  const AreaDissipativity d = uniform(3, 0.0, 0.0);
  const Mat Q = assemble_Q_uniform(t, d, 0.5);
  const Mat G = t.gamma.asDiagonal();
  EXPECT_LE((Q - (G * t.L + t.L.transpose() * G)).cwiseAbs().maxCoeff(), 1e-15);
  Eigen::SelfAdjointEigenSolver<Mat> es(Q, Eigen::EigenvaluesOnly);
  EXPECT_NEAR(es.eigenvalues()(0), 0.0, 1e-12);
  EXPECT_GT(es.eigenvalues()(1), 0.0);
}

TEST(AssembleQ, CompleteGraphExample) {
  const CommTopology t = build_topology(3, TopologyKind::AllToAll);
  const AreaDissipativity d = uniform(3, 1.0, 0.0);
  const Mat Q = assemble_Q_uniform(t, d, 0.1);
  const Mat expect = (2.0 / 3.0) * kComplete3 - 0.1 * kComplete3 * kComplete3;
  EXPECT_LE((Q - expect).cwiseAbs().maxCoeff(), 1e-14);
  Eigen::SelfAdjointEigenSolver<Mat> es(Q, Eigen::EigenvaluesOnly);
  EXPECT_NEAR(es.eigenvalues()(0), 0.0, 1e-12);
  EXPECT_NEAR(es.eigenvalues()(1), 2.0 - 0.9, 1e-12);
  EXPECT_NEAR(es.eigenvalues()(2), 2.0 - 0.9, 1e-12);
}

TEST(AssembleQ, UniformFormMatchesGeneralForm) {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u(0.1, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 5;
    const CommTopology t = topology_from_adjacency(random_strong_digraph(rng, n));
    AreaDissipativity d{Vec(n), Vec(n), Mat::Zero(n, n)};
    for (int i = 0; i < n; ++i) {
      d.eps_ii(i) = u(rng);
      d.rho(i) = u(rng);
      for (int j = 0; j < n; ++j)
        if (i != j) d.eps(i, j) = 0.2 * u(rng);
    }
    const double k = u(rng);
    const Mat a = assemble_Q(t, d, Vec::Constant(n, k));
    const Mat b = assemble_Q_uniform(t, d, k);
    EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, a.cwiseAbs().maxCoeff()));
  }
}

TEST(SelectKc, CaseOneCompleteGraph) {
  const CommTopology t = build_topology(3, TopologyKind::AllToAll);
  const WideAreaDesign w = select_kc(t, uniform(3, 1.0, 1.0), 10.0);
  EXPECT_EQ(w.gain_case, GainCase::PhiNonneg);
  EXPECT_LE((w.phi - Vec::Constant(3, 1.0 / 3.0)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(w.lambda_b, 2.0, 1e-12);
  EXPECT_NEAR(w.lambda_a, 9.0, 1e-12);
  EXPECT_NEAR(w.kc_upper, 2.0 / 9.0, 1e-12);
  EXPECT_NEAR(w.kc, 1.0 / 9.0, 1e-12);
}

TEST(SelectKc, CaseTwoInterval) {
  const CommTopology t = build_topology(3, TopologyKind::AllToAll);
  AreaDissipativity d = uniform(3, 1.0, 1.0);
  d.rho(0) = -0.03;  // phi_0 = -0.01
  const WideAreaDesign w = select_kc(t, d, 10.0);
  EXPECT_EQ(w.gain_case, GainCase::PhiMixed);
  const double r = std::sqrt(3.64);
  EXPECT_NEAR(w.kc_lower, (2.0 - r) / 18.0, 1e-12);
  EXPECT_NEAR(w.kc_upper, (2.0 + r) / 18.0, 1e-12);
  EXPECT_NEAR(w.kc_lower, 0.0051179, 1e-7);
  EXPECT_NEAR(w.kc_upper, 0.2171043, 1e-7);
  EXPECT_NEAR(w.kc, 0.5 * (w.kc_lower + w.kc_upper), 1e-12);
}

TEST(SelectKc, ZeroWeightsCapAtMaximum) {
  const CommTopology t = build_topology(3, TopologyKind::AllToAll);
  const WideAreaDesign w = select_kc(t, uniform(3, 0.0, 1.0), 2.5);
  EXPECT_EQ(w.gain_case, GainCase::PhiNonneg);
  EXPECT_TRUE(std::isinf(w.kc_upper));
  EXPECT_EQ(w.kc, 2.5);
}

TEST(SelectKc, InfeasibleWhenPhiSumsNegative) {
  const CommTopology t = build_topology(3, TopologyKind::AllToAll);
  try {
    select_kc(t, uniform(3, 1.0, -1.0), 10.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Infeasible);
  }
}

TEST(SelectKc, SelectedGainSatisfiesStabilityConditions) {
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> u(0.1, 3.0);
  const Mat U = consensus_complement(3);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const CommTopology t = topology_from_adjacency(random_strong_digraph(rng, 3));
    AreaDissipativity d{Vec(3), Vec(3), Mat::Zero(3, 3)};
    for (int i = 0; i < 3; ++i) {
      d.eps_ii(i) = u(rng);
      d.rho(i) = u(rng) - 0.5;
      for (int j = 0; j < 3; ++j)
        if (i != j) d.eps(i, j) = 0.1 * u(rng);
    }
    WideAreaDesign w;
    try {
      w = select_kc(t, d, 100.0);
    } catch (const Error&) {
      continue;
    }
    ++checked;
    EXPECT_GT(w.kc, w.kc_lower);
    EXPECT_LT(w.kc, w.kc_upper);
    const Mat Q = assemble_Q_uniform(t, d, w.kc);
    const Vec one = Vec::Ones(3);
    EXPECT_GE(one.dot(Q * one), -1e-12);
    EXPECT_NEAR(one.dot(Q * one), w.phi.sum() / w.kc, 1e-10);
    if (w.gain_case == GainCase::PhiMixed) {
      EXPECT_GT(test::lambda_min(U.transpose() * Q * U), 0.0);
    } else {
      EXPECT_GE(test::lambda_min(U.transpose() * Q * U), -1e-12);
    }
  }
  EXPECT_GT(checked, 50);
}

TEST(SelectKc, TwiceTheBoundBreaksPositivity) {
  const CommTopology t = build_topology(3, TopologyKind::AllToAll);
  AreaDissipativity d{Vec{{83.5, 7.3, 4.7}}, Vec::Zero(3), Mat::Zero(3, 3)};
  const WideAreaDesign w = select_kc(t, d, 1e9);
  ASSERT_EQ(w.gain_case, GainCase::PhiNonneg);
  const Mat U = consensus_complement(3);
  EXPECT_GE(test::lambda_min(U.transpose() * assemble_Q_uniform(t, d, w.kc) * U), -1e-12);
  EXPECT_LT(test::lambda_min(U.transpose() * assemble_Q_uniform(t, d, 2.0 * w.kc_upper) * U), 0.0);
}

TEST(CooperativeControl, VanishesOnConsensus) {
  const CommTopology t = build_topology(4, TopologyKind::AllToAll);
  Vec y(8);
  for (int i = 0; i < 4; ++i) y.segment<2>(2 * i) << 0.3, -0.02;
  EXPECT_LE(cooperative_control(y, t, 2.0).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE(cooperative_control_lifted(y, t, 2.0).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(CooperativeControl, TwoAreasAntisymmetric) {
  const CommTopology t = build_topology(2, TopologyKind::AllToAll);
  Vec y(4);
  y << 0.5, 0.1, 0.2, -0.3;
  const Vec u = cooperative_control(y, t, 0.7);
  EXPECT_NEAR(u(0), -u(1), 1e-15);
  // u_1 = -kc (y_1 - y_2) projected on the (1, 1) channel.
  EXPECT_NEAR(u(0), -0.7 * ((0.5 - 0.2) + (0.1 + 0.3)), 1e-15);
}

TEST(CooperativeControl, MatchesLoopOracle) {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 2 + trial % 4;
    const CommTopology t = topology_from_adjacency(random_strong_digraph(rng, n));
    const Vec y = test::random_matrix(rng, 2 * n, 1);
    const Eigen::Vector2d w(0.7, 1.3);
    const Vec u = cooperative_control(y, t, 0.4, w);
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int j = 0; j < n; ++j) {
        for (int c = 0; c < 2; ++c) acc += t.S(i, j) * w(c) * (y(2 * j + c) - y(2 * i + c));
      }
      EXPECT_NEAR(u(i), 0.4 * acc, 1e-12);
    }
  }
}

TEST(CooperativeControl, WrongSizeThrows) {
  const CommTopology t = build_topology(3, TopologyKind::AllToAll);
  try {
    cooperative_control(Vec::Zero(5), t, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}
