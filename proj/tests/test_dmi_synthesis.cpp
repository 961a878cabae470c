#include <gtest/gtest.h>

#include <random>

#include "support.hpp"
#include "wadamp/dmi_synthesis.hpp"
#include "wadamp/error.hpp"
#include "wadamp/simulator.hpp"

using namespace wadamp;

namespace {

// Schur complement of the block form, eliminating every block except the first.
Mat schur_oracle(const Mat& Mbar, int nx) {
  const int rest = static_cast<int>(Mbar.rows()) - nx;
  const Mat X = Mbar.topRightCorner(nx, rest);
  const Mat D = Mbar.bottomRightCorner(rest, rest);
  return Mbar.topLeftCorner(nx, nx) - X * D.inverse() * X.transpose();
}

struct RandomInstance {
  Mat A, B, C, P;
  double rho, eps_ii;
  std::vector<Mat> H;
  std::vector<double> eps_ij;
};

RandomInstance random_instance(std::mt19937_64& rng, int nx = 5) {
  std::uniform_real_distribution<double> u(0.1, 2.0);
  std::uniform_real_distribution<double> shift(0.0, 20.0);
  RandomInstance r;
  r.A = test::random_matrix(rng, nx, nx) - shift(rng) * Mat::Identity(nx, nx);
  r.B = test::random_matrix(rng, nx, 2);
  r.C = test::random_matrix(rng, 2, nx);
  r.P = test::random_spd(rng, nx);
  r.rho = u(rng);
  r.eps_ii = 5.0 * u(rng);
  for (int j = 0; j < 2; ++j) {
    r.H.push_back(test::random_matrix(rng, nx, 2, 0.3));
    r.eps_ij.push_back(u(rng));
  }
  return r;
}

// Strongly passive toy plant: A_bar = -I, B = C = I. Gain has no effect.
DmiPlant toy_plant() {
  DmiPlant p;
  p.A = -Mat::Identity(2, 2);
  p.B = Mat::Identity(2, 2);
  p.C = Mat::Identity(2, 2);
  p.B_act = Mat::Zero(2, 1);
  return p;
}

DmiCertificate toy_certificate() {
  DmiCertificate c;
  c.P = Mat::Identity(2, 2);
  c.F = Mat::Zero(1, 2);
  c.rho = 1.0;
  c.eps_ii = 1.0;
  return c;
}

Mat toy_coupling(double h) {
  Mat H = Mat::Zero(2, 2);
  H(1, 0) = h;
  return H;
}

struct GoldenDesign {
  SystemData sys;
  Mat h;
  ControllerConfig cfg;
  WideAreaState state;
};

const GoldenDesign& golden_design() {
  static const GoldenDesign g = [] {
    GoldenDesign d;
    d.sys = test::golden_system();
    const ReducedNetwork net = reduce_to_generators(d.sys.network, d.sys.internal_voltages());
    const Equilibrium eq = solve_equilibrium(net, d.sys.dispatch());
    d.h = coupling_gains(net, eq.delta, eq.delta);
    d.cfg.kind = ControllerKind::DmiAdaptive;
    d.state = resynthesize(d.sys, d.h, d.cfg, build_topology(3, TopologyKind::AllToAll), nullptr);
    return d;
  }();
  return g;
}

std::vector<Mat> golden_couplings(const GoldenDesign& g, int i) {
  std::vector<Mat> H;
  for (int j = 0; j < 3; ++j)
    if (j != i) H.push_back(coupling_matrix(g.sys.generators[i], g.h(i, j)));
  return H;
}

}  // namespace

TEST(AssembleMi, NegativeForPassiveExample) {
  Mat B(2, 1);
  B << 0.0, 1.0;
  // Single input: C must then be 1 x 2; pair it with the speed entry.
  Mat C(1, 2);
  C << 0.0, 1.0;
  const Mat M = assemble_Mi(-Mat::Identity(2, 2), B, C, Mat::Identity(2, 2), 0.0, 1.0);
  const Mat oracle = -2.0 * Mat::Identity(2, 2);  // PB - C' vanishes
  EXPECT_LE((M - oracle).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT(test::lambda_max(M), 0.0);
}

TEST(AssembleMi, GeneralOuterProductOracle) {
  Mat B(2, 2);
  B << 0.0, 1.0, 1.0, 0.0;
  const Mat C = Mat::Identity(2, 2);
  const Mat P = Mat::Identity(2, 2);
  const Mat M = assemble_Mi(-Mat::Identity(2, 2), B, C, P, 0.0, 1.0);
  const Mat d = P * B - C.transpose();
  EXPECT_LE((M - (-2.0 * Mat::Identity(2, 2) + d * d.transpose())).cwiseAbs().maxCoeff(), 1e-15);
  // dd' has eigenvalues {0, 4}, so the swap input is not passive.
  EXPECT_NEAR(test::lambda_max(M), 2.0, 1e-12);
  EXPECT_NEAR(test::lambda_min(M), -2.0, 1e-12);
}

TEST(AssembleMi, ExactPassivationDropsQuadraticTerm) {
  std::mt19937_64 rng(2);
  const Mat A = test::random_matrix(rng, 3, 3);
  const Mat B = test::random_matrix(rng, 3, 2);
  const Mat C = B.transpose();
  const Mat M = assemble_Mi(A, B, C, Mat::Identity(3, 3), 0.7, 0.3);
  const Mat expect = A.transpose() + A + 0.7 * C.transpose() * C;
  EXPECT_LE((M - 0.5 * (expect + expect.transpose())).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(AssembleMi, DoublingEpsilonHalvesQuadraticTerm) {
  std::mt19937_64 rng(3);
  const RandomInstance r = random_instance(rng);
  const Mat base = assemble_Mi(r.A, r.B, r.C, r.P, r.rho, 1e12);
  const Mat q1 = assemble_Mi(r.A, r.B, r.C, r.P, r.rho, 0.5) - base;
  const Mat q2 = assemble_Mi(r.A, r.B, r.C, r.P, r.rho, 1.0) - base;
  EXPECT_LE((q1 - 2.0 * q2).cwiseAbs().maxCoeff(), 1e-9 * q1.cwiseAbs().maxCoeff());
}

TEST(AssembleMi, NonPositiveEpsilonThrows) {
  try {
    assemble_Mi(-Mat::Identity(2, 2), Mat::Identity(2, 2), Mat::Identity(2, 2),
                Mat::Identity(2, 2), 0.0, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonPositiveEpsilon);
  }
}

TEST(AssembleMbar, NoNeighborsSchurGivesMi) {
  std::mt19937_64 rng(4);
  const RandomInstance r = random_instance(rng);
  const Mat Mbar = assemble_Mbar(r.A, r.B, r.C, r.P, r.rho, r.eps_ii, {}, {});
  const Mat Mi = assemble_Mi(r.A, r.B, r.C, r.P, r.rho, r.eps_ii);
  EXPECT_EQ(Mbar.rows(), 7);
  EXPECT_LE((schur_oracle(Mbar, 5) - Mi).cwiseAbs().maxCoeff(), 1e-10 * Mi.cwiseAbs().maxCoeff());
}

TEST(AssembleMbar, ZeroCouplingSchurGivesMi) {
  std::mt19937_64 rng(5);
  const RandomInstance r = random_instance(rng);
  const std::vector<Mat> H(2, Mat::Zero(5, 2));
  const Mat Mbar = assemble_Mbar(r.A, r.B, r.C, r.P, r.rho, r.eps_ii, H, r.eps_ij);
  const Mat Mi = assemble_Mi(r.A, r.B, r.C, r.P, r.rho, r.eps_ii);
  EXPECT_LE((schur_oracle(Mbar, 5) - Mi).cwiseAbs().maxCoeff(), 1e-10 * Mi.cwiseAbs().maxCoeff());
}

TEST(AssembleMbar, ShapeMismatchThrows) {
  std::mt19937_64 rng(6);
  const RandomInstance r = random_instance(rng);
  const std::vector<Mat> H{Mat::Zero(4, 2)};
  const std::vector<double> e{1.0};
  try {
    assemble_Mbar(r.A, r.B, r.C, r.P, r.rho, r.eps_ii, H, e);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(AssembleMprime, ZeroCouplingEqualsMi) {
  std::mt19937_64 rng(7);
  const RandomInstance r = random_instance(rng);
  const std::vector<Mat> H(2, Mat::Zero(5, 2));
  const std::vector<double> e(2, 0.0);
  const Mat Mp = assemble_Mprime(r.A, r.B, r.C, r.P, r.rho, r.eps_ii, H, e);
  EXPECT_EQ((Mp - assemble_Mi(r.A, r.B, r.C, r.P, r.rho, r.eps_ii)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(AssembleMprime, LargeEpsilonKillsQuadraticTerm) {
  std::mt19937_64 rng(8);
  const RandomInstance r = random_instance(rng);
  const std::vector<Mat> H{r.H[0]};
  const Mat Mi = assemble_Mi(r.A, r.B, r.C, r.P, r.rho, r.eps_ii);
  const Mat PH = r.P * r.H[0];
  const Mat cross = PH * r.C + r.C.transpose() * PH.transpose();
  const std::vector<double> big{1e15};
  const Mat Mp = assemble_Mprime(r.A, r.B, r.C, r.P, r.rho, r.eps_ii, H, big);
  EXPECT_LE((Mp - (Mi - cross)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(AssembleMprime, MatchesSchurComplementOfMbar) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const RandomInstance r = random_instance(rng);
    const Mat Mbar = assemble_Mbar(r.A, r.B, r.C, r.P, r.rho, r.eps_ii, r.H, r.eps_ij);
    const Mat Mp = assemble_Mprime(r.A, r.B, r.C, r.P, r.rho, r.eps_ii, r.H, r.eps_ij);
    const double scale = std::max(1.0, Mp.cwiseAbs().maxCoeff());
    EXPECT_LE((schur_oracle(Mbar, 5) - Mp).cwiseAbs().maxCoeff(), 1e-10 * scale);
  }
}

TEST(SchurEquivalence, VerdictsAgreeOnHundredInstances) {
  std::mt19937_64 rng(10);
  int feasible = 0, disagreements = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const RandomInstance r = random_instance(rng);
    const Mat Mbar = assemble_Mbar(r.A, r.B, r.C, r.P, r.rho, r.eps_ii, r.H, r.eps_ij);
    const Mat Mp = assemble_Mprime(r.A, r.B, r.C, r.P, r.rho, r.eps_ii, r.H, r.eps_ij);
    const bool a = check_feasible(Mbar, 1e-9).feasible;
    const bool b = check_feasible(Mp, 1e-9).feasible;
    feasible += a;
    disagreements += (a != b);
  }
  EXPECT_EQ(disagreements, 0);
  // Both verdicts must be exercised.
  EXPECT_GT(feasible, 5) << "feasible " << feasible;
  EXPECT_LT(feasible, 95) << "feasible " << feasible;
}

TEST(CheckFeasible, Boundaries) {
  const FeasibilityResult a = check_feasible(-Mat::Identity(3, 3));
  EXPECT_TRUE(a.feasible);
  EXPECT_NEAR(a.margin, -1.0, 1e-15);
  Mat d = Mat::Zero(2, 2);
  d(0, 0) = -1.0;
  d(1, 1) = 1e-6;
  EXPECT_FALSE(check_feasible(d, 1e-8).feasible);
  d(1, 1) = 0.0;
  EXPECT_TRUE(check_feasible(d, 1e-8).feasible);
}

TEST(Weights, Validation) {
  EXPECT_NO_THROW((DmiWeights{0.4, {0.2, 0.2}}.validate()));
  EXPECT_THROW((DmiWeights{0.5, {0.3, 0.2}}.validate()), Error);
  EXPECT_THROW((DmiWeights{0.0, {}}.validate()), Error);
  EXPECT_THROW((DmiWeights{1.0, {}}.validate()), Error);
  EXPECT_THROW((DmiWeights{0.5, {-0.1}}.validate()), Error);
}

TEST(OptimizeLocal, AlreadyPassiveScalarSystem) {
  DmiPlant p;
  p.A = Mat::Constant(1, 1, -1.0);
  p.B = Mat::Constant(1, 1, 1.0);
  p.C = Mat::Constant(1, 1, 1.0);
  p.B_act = Mat::Zero(1, 1);
  const DmiCertificate c = optimize_local(p, DmiWeights{0.5, {}}, Mat::Zero(1, 1));
  EXPECT_GE(c.rho, 1.0);
  EXPECT_GT(c.eps_ii, 0.0);
  EXPECT_GT(c.P(0, 0), 0.0);
  // Scalar closed form: M = -2p + rho + (p - 1)^2 / eps.
  const double p0 = c.P(0, 0);
  const double m = -2.0 * p0 + c.rho + (p0 - 1.0) * (p0 - 1.0) / c.eps_ii;
  EXPECT_LE(m, 1e-8);
  EXPECT_NEAR(c.margin, m, 1e-9 * std::max(1.0, c.rho));
}

TEST(OptimizeLocal, GoldenGeneratorThreeFromZeroGain) {
  const DmiPlant plant = generator_plant(test::golden_system().generators[2]);
  const DmiCertificate c = optimize_local(plant, DmiWeights{0.4, {}}, Mat::Zero(2, 5));
  EXPECT_LE(c.margin, -1e-8);
  EXPECT_GT(test::lambda_min(c.P), 0.0);
  EXPECT_GT(c.eps_ii, 0.0);
}

TEST(OptimizeLocal, EpsilonShrinksAsItsWeightGrows) {
  const DmiPlant plant = generator_plant(test::golden_system().generators[2]);
  const Mat F0 = initial_gain(plant);
  double previous = std::numeric_limits<double>::infinity();
  for (double a : {0.3, 0.6, 0.9}) {
    const DmiCertificate c = optimize_local(plant, DmiWeights{a, {}}, F0);
    EXPECT_LE(c.eps_ii, previous * (1.0 + 1e-6)) << "alpha_ii " << a;
    previous = c.eps_ii;
  }
}

TEST(OptimizeLocal, ObjectiveHistoryNonincreasing) {
  const DmiPlant plant = generator_plant(test::golden_system().generators[1]);
  const DmiCertificate c = optimize_local(plant, DmiWeights{0.4, {}}, initial_gain(plant));
  ASSERT_FALSE(c.objective_history.empty());
  for (std::size_t k = 1; k < c.objective_history.size(); ++k) {
    EXPECT_LE(c.objective_history[k],
              c.objective_history[k - 1] + 1e-9 * std::abs(c.objective_history[k - 1]));
  }
}

TEST(OptimizeInterconnection, ZeroCouplingGivesZeroEpsilon) {
  const std::vector<Mat> H(2, Mat::Zero(2, 2));
  const auto e = optimize_interconnection(toy_plant(), toy_certificate(), H, DmiWeights{0.4, {0.2, 0.2}});
  EXPECT_EQ(e, (std::vector<double>{0.0, 0.0}));
}

TEST(OptimizeInterconnection, MatchesClosedFormAndBisection) {
  for (double h : {0.05, 0.2, 0.5}) {
    const std::vector<Mat> H{toy_coupling(h)};
    const auto e = optimize_interconnection(toy_plant(), toy_certificate(), H, DmiWeights{0.4, {0.2}});
    // Feasible iff eps >= h^2 / (1 - h^2) for this plant.
    const double closed = h * h / (1.0 - h * h);
    // Bisection on the eigenvalue of the assembled inequality.
    double lo = 1e-12, hi = 1e3;
    for (int it = 0; it < 200; ++it) {
      const double mid = std::sqrt(lo * hi);
      const std::vector<double> em{mid};
      const Mat M = assemble_Mprime(-Mat::Identity(2, 2), Mat::Identity(2, 2), Mat::Identity(2, 2),
                                    Mat::Identity(2, 2), 1.0, 1.0, H, em);
      (test::lambda_max(M) <= 0.0 ? hi : lo) = mid;
    }
    EXPECT_NEAR(hi, closed, 1e-9 * closed);
    EXPECT_NEAR(e[0], closed, 1e-4 * closed) << "h " << h;
    EXPECT_GE(e[0], closed * (1.0 - 1e-9));
  }
}

TEST(OptimizeInterconnection, MinimalEpsilonNondecreasingInCoupling) {
  double previous = 0.0;
  for (double h : {0.01, 0.1, 0.3, 0.6, 0.9}) {
    const std::vector<Mat> H{toy_coupling(h)};
    const auto e = optimize_interconnection(toy_plant(), toy_certificate(), H, DmiWeights{0.4, {0.2}});
    EXPECT_GE(e[0], previous);
    previous = e[0];
  }
}

TEST(OptimizeInterconnection, TooStrongCouplingIsInfeasible) {
  const std::vector<Mat> H{toy_coupling(1.5)};
  try {
    optimize_interconnection(toy_plant(), toy_certificate(), H, DmiWeights{0.4, {0.2}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Infeasible);
  }
}

TEST(OptimizeCombined, ZeroCouplingReducesToLocal) {
  const DmiPlant plant = generator_plant(test::golden_system().generators[2]);
  const Mat F0 = initial_gain(plant);
  const DmiCertificate local = optimize_local(plant, DmiWeights{0.4, {}}, F0);
  const std::vector<Mat> H(2, Mat::Zero(5, 2));
  const DmiCertificate comb = optimize_combined(plant, H, DmiWeights{0.4, {0.2, 0.2}}, F0);
  EXPECT_NEAR(comb.objective, local.objective, 1e-6 * std::max(1.0, std::abs(local.objective)));
  for (double e : comb.eps_ij) EXPECT_EQ(e, 0.0);
}

TEST(OptimizeCombined, GoldenCertificatesHoldInBothForms) {
  const GoldenDesign& g = golden_design();
  for (int i = 0; i < 3; ++i) {
    const DmiCertificate& c = g.state.certificates[i];
    const DmiPlant plant = generator_plant(g.sys.generators[i], g.cfg.channel);
    const std::vector<Mat> H = golden_couplings(g, i);
    const Mat Mp = certificate_Mprime(plant, c, H);
    EXPECT_LE(test::lambda_max(Mp), 1e-8) << "area " << i;
    EXPECT_GT(test::lambda_min(c.P), 0.0);
    EXPECT_GT(c.eps_ii, 0.0);
    EXPECT_GE(c.rho, 0.0);
    const Mat Mbar = assemble_Mbar(plant.closed_loop(c.F), plant.B, plant.C, c.P, c.rho, c.eps_ii, H,
                                   c.eps_ij);
    EXPECT_LE(test::lambda_max(Mbar), 1e-8) << "area " << i;
    for (std::size_t k = 1; k < c.objective_history.size(); ++k) {
      EXPECT_LE(c.objective_history[k],
                c.objective_history[k - 1] + 1e-9 * std::abs(c.objective_history[k - 1]));
    }
  }
}

TEST(Dissipation, NominalBoundOnRandomSamples) {
  const SystemData& sys = test::golden_system();
  std::mt19937_64 rng(31);
  for (int i = 0; i < 3; ++i) {
    const DmiPlant plant = generator_plant(sys.generators[i]);
    const DmiCertificate c = optimize_local(plant, DmiWeights{0.4, {}}, initial_gain(plant));
    const Mat A = plant.closed_loop(c.F);
    for (int s = 0; s < 50; ++s) {
      const Vec x = test::random_matrix(rng, 5, 1);
      const Vec u = test::random_matrix(rng, 2, 1);
      const Vec y = plant.C * x;
      const double vdot = x.dot(c.P * (A * x + plant.B * u));
      const double bound = u.dot(y) + 0.5 * c.eps_ii * u.squaredNorm() - 0.5 * c.rho * y.squaredNorm();
      EXPECT_LE(vdot - bound, 1e-9 * std::max(1.0, std::abs(bound))) << "area " << i;
    }
  }
}

TEST(Dissipation, InterconnectedBoundOnRandomSamples) {
  const GoldenDesign& g = golden_design();
  std::mt19937_64 rng(32);
  for (int i = 0; i < 3; ++i) {
    const DmiCertificate& c = g.state.certificates[i];
    const DmiPlant plant = generator_plant(g.sys.generators[i], g.cfg.channel);
    const Mat A = plant.closed_loop(c.F);
    const std::vector<Mat> H = golden_couplings(g, i);
    for (int s = 0; s < 50; ++s) {
      const Vec x = test::random_matrix(rng, 5, 1);
      const Vec u = test::random_matrix(rng, 2, 1);
      const Vec y = plant.C * x;
      Vec xdot = A * x + plant.B * u;
      double bound = u.dot(y) + 0.5 * c.eps_ii * u.squaredNorm() - 0.5 * c.rho * y.squaredNorm();
      for (std::size_t j = 0; j < H.size(); ++j) {
        const Vec yj = test::random_matrix(rng, 2, 1);
        xdot += H[j] * (yj - y);
        bound += 0.5 * c.eps_ij[j] * yj.squaredNorm();
      }
      const double vdot = x.dot(c.P * xdot);
      EXPECT_LE(vdot - bound, 1e-9 * std::max(1.0, std::abs(bound)))
          << "area " << i << " sample " << s;
    }
  }
}

TEST(DelayBound, DegenerateCases) {
  const DmiCertificate c = toy_certificate();
  const Mat H = toy_coupling(0.3);
  EXPECT_EQ(delay_robustness_bound(c, Mat::Identity(2, 2), H, 0.3, 1.0, 0.0), 0.0);
  // N' = (2 PHH'P - eps (PHC + C'H'P)) / (eps h) vanishes for P = I, C = H' / eps.
  const double eps = 2.0;
  const Mat C = H.transpose() / eps;
  const double n2 = (H * H.transpose()).operatorNorm() / (eps * 0.09);
  EXPECT_NEAR(delay_robustness_bound(c, C, H, 0.3, eps, 0.5), std::sqrt(0.5 / n2), 1e-12);
  try {
    delay_robustness_bound(c, Mat::Identity(2, 2), H, 0.0, 1.0, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroCouplingGain);
  }
}

TEST(DelayBound, ConservativeUnderPerturbation) {
  const GoldenDesign& g = golden_design();
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> f(-0.9, 0.9);
  for (int i = 0; i < 3; ++i) {
    const DmiCertificate& c = g.state.certificates[i];
    const DmiPlant plant = generator_plant(g.sys.generators[i], g.cfg.channel);
    const std::vector<Mat> H = golden_couplings(g, i);
    const double margin = -test::lambda_max(certificate_Mprime(plant, c, H));
    std::vector<int> nbr;
    for (int j = 0; j < 3; ++j)
      if (j != i) nbr.push_back(j);
    for (std::size_t k = 0; k < H.size(); ++k) {
      const double h = g.h(i, nbr[k]);
      const double bound = delay_robustness_bound(c, plant.C, H[k], h, c.eps_ij[k], margin);
      EXPECT_GE(bound, 0.0);
      for (int trial = 0; trial < 50; ++trial) {
        const double dh = (trial == 0 ? 0.9 : trial == 1 ? -0.9 : f(rng)) * bound;
        std::vector<Mat> Hp = H;
        Hp[k] = coupling_matrix(g.sys.generators[i], h + dh);
        EXPECT_LE(test::lambda_max(certificate_Mprime(plant, c, Hp)), 1e-8)
            << "area " << i << " neighbor " << k;
      }
    }
  }
}
