#include "vsi/liouville.hpp"

#include <gtest/gtest.h>

using namespace vsi;

namespace {

const ModelParams kModel = ModelParams::table_defaults();

Mat6 mixed_gs() {
  Vec6d p = Vec6d::Zero();
  p[gs_half] = p[gs_three_half] = 0.5;
  return diag_state(p);
}

double max_abs_diff(const Mat6& a, const Mat6& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST(Hamiltonian, DrivenBlockSpectrum) {
  DriveParams d;
  d.target = DriveTarget::o1;
  d.omega_laser = 0.5;
  Mat6 H = build_hamiltonian(kModel, d);
  Eigen::Matrix2cd block;
  block << H(gs_half, gs_half), H(gs_half, es_half), H(es_half, gs_half), H(es_half, es_half);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> es(block);
  EXPECT_NEAR(es.eigenvalues()[0], -0.5, 1e-12);
  EXPECT_NEAR(es.eigenvalues()[1], 0.5, 1e-12);
  // the undriven line sits a full line separation away: 2*pi * 1 GHz
  EXPECT_NEAR(H(es_three_half, es_three_half).real(), 2.0 * pi, 1e-12);

  d.target = DriveTarget::o2;
  H = build_hamiltonian(kModel, d);
  EXPECT_NEAR(H(es_half, es_half).real(), -2.0 * pi, 1e-12);
  EXPECT_NEAR(H(gs_three_half, es_three_half).real(), 0.5, 1e-12);
}

TEST(Hamiltonian, DetuningSignConvention) {
  DriveParams d;
  d.target = DriveTarget::o1;
  d.omega_laser = 0.1;
  d.delta_laser = 0.3;
  d.omega_mw = 0.05;
  d.delta_mw = 0.02;
  Mat6 H = build_hamiltonian(kModel, d);
  EXPECT_NEAR(H(es_half, es_half).real(), -0.3, 1e-12);
  EXPECT_NEAR(H(es_three_half, es_three_half).real(), -0.3 + 2.0 * pi, 1e-12);
  EXPECT_NEAR(H(gs_three_half, gs_three_half).real(), -0.02, 1e-12);
  EXPECT_NEAR(H(gs_half, gs_three_half).real(), 0.05, 1e-12);
  EXPECT_NEAR(hermiticity_error(H), 0.0, 1e-15);
}

TEST(Liouvillian, PreservesTraceForAllDriveFlavors) {
  std::vector<DriveParams> drives = {dark_drive(), offres_drive(30e3),
                                     resonant_drive(Transition::o1, 6.0),
                                     resonant_drive(Transition::o2, 20.0, 0.1)};
  DriveParams mw;
  mw.omega_mw = 0.0157;
  drives.push_back(mw);
  for (const auto& d : drives) {
    Eigen::MatrixXcd L = build_liouvillian(kModel, d);
    // trace(L rho) = 0 for every rho means vec(I)^dagger L vanishes
    Eigen::RowVectorXcd tr_row = vec6(Mat6::Identity()).adjoint() * L;
    EXPECT_LT(tr_row.cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Liouvillian, RejectsConflictingDrives) {
  DriveParams d;
  d.target = DriveTarget::o1;
  d.omega_laser = 0.01;
  d.w_offres = 1e-4;
  EXPECT_THROW(build_liouvillian(kModel, d), ConflictingDrives);
  // the rule is about the target, not the laser amplitude
  d.omega_laser = 0.0;
  EXPECT_THROW(build_liouvillian(kModel, d), ConflictingDrives);
  d.target = DriveTarget::none;
  EXPECT_NO_THROW(build_liouvillian(kModel, d));
  DriveParams bad;
  bad.omega_laser = 0.1;  // laser with no line selected
  EXPECT_THROW(build_liouvillian(kModel, bad), ConfigError);
}

TEST(Evolve, ResonantRabiMatchesTwoLevelAnalytic) {
  // push all decay rates towards zero so the driven pair is effectively
  // a closed two-level system: excited population must follow
  // sin^2(omega t), which also fixes the pi time at pi/(2 omega)
  ModelParams slow = kModel;
  slow.rates = {1e-9, 1e-9, 1e-9, 1e-9, 1e-9, 1e-9, 1e-9, 1e-9, 1e-9};
  slow.ms2_power_overrides.clear();
  slow.kappa_deshelve = 0.0;
  DriveParams d;
  d.target = DriveTarget::o1;
  d.omega_laser = 0.2;
  Eigen::MatrixXcd L = build_liouvillian(slow, d);
  Mat6 rho = pure_state(gs_half);
  for (double t : {1.0, 3.0, 7.853981633974483, 15.0}) {  // includes the pi time
    Mat6 out = evolve(rho, L, t);
    double expected = std::pow(std::sin(0.2 * t), 2);
    EXPECT_NEAR(populations(out)[es_half], expected, 1e-6) << "t=" << t;
  }
}

TEST(Evolve, DampedRabiPeakNearQuarterPeriod) {
  DriveParams d;
  d.target = DriveTarget::o2;
  d.omega_laser = 10.0;  // far above every decay rate
  d.power_nW = 20.0;
  Eigen::MatrixXcd L = build_liouvillian(kModel, d);
  Mat6 rho = mixed_gs();
  double best_t = 0, best_p = -1;
  for (double t = 0.10; t <= 0.22; t += 0.002) {
    double p = populations(evolve(rho, L, t))[es_three_half];
    if (p > best_p) {
      best_p = p;
      best_t = t;
    }
  }
  EXPECT_NEAR(best_t, pi / (2.0 * 10.0), 0.05 * pi / 20.0);
}

TEST(Evolve, DarkExcitedDecayIsExponential) {
  Eigen::MatrixXcd L = build_liouvillian(kModel, dark_drive());
  double tau1 = es_lifetime(kModel.rates, Transition::o1);
  double tau2 = es_lifetime(kModel.rates, Transition::o2);
  for (double t : {2.0, tau1, 30.0}) {
    Mat6 out = evolve(pure_state(es_half), L, t);
    EXPECT_NEAR(populations(out)[es_half], std::exp(-t / tau1), 1e-9) << "t=" << t;
  }
  Mat6 out = evolve(pure_state(es_three_half), L, tau2);
  EXPECT_NEAR(populations(out)[es_three_half], std::exp(-1.0), 1e-9);
}

TEST(Evolve, RoutesAgree) {
  Eigen::MatrixXcd L = build_liouvillian(kModel, resonant_drive(Transition::o2, 20.0));
  Mat6 rho = mixed_gs();
  for (double t : {5.0, 500.0}) {
    EvolveOptions expm_opt, eigen_opt, rk_opt;
    expm_opt.method = EvolveMethod::expm;
    eigen_opt.method = EvolveMethod::eigen;
    rk_opt.method = EvolveMethod::rk45;
    Mat6 a = evolve(rho, L, t, expm_opt);
    Mat6 b = evolve(rho, L, t, eigen_opt);
    Mat6 c = evolve(rho, L, t, rk_opt);
    EXPECT_LT(max_abs_diff(a, b), 1e-9) << "t=" << t;
    EXPECT_LT(max_abs_diff(a, c), 1e-7) << "t=" << t;
  }
  // the automatic route switches to the spectral path for long horizons
  // and must land on the same state the exponential gives
  EvolveOptions forced;
  forced.method = EvolveMethod::expm;
  Mat6 auto_long = evolve(rho, L, 5e4);
  Mat6 expm_long = evolve(rho, L, 5e4, forced);
  EXPECT_LT(max_abs_diff(auto_long, expm_long), 1e-9);
}

TEST(Evolve, SemigroupProperty) {
  Eigen::MatrixXcd L = build_liouvillian(kModel, resonant_drive(Transition::o1, 10.0));
  Mat6 rho = mixed_gs();
  Mat6 direct = evolve(rho, L, 700.0);
  Mat6 split = evolve(evolve(rho, L, 300.0), L, 400.0);
  EXPECT_LT(max_abs_diff(direct, split), 1e-10);
}

TEST(Evolve, LongHorizonStaysPhysicalAndReachesSteadyState) {
  Eigen::MatrixXcd L = build_liouvillian(kModel, offres_drive(30e3));
  Mat6 out = evolve(mixed_gs(), L, 1e6);
  EXPECT_NO_THROW(check_density(out));
  Mat6 ss = steady_state(L);
  EXPECT_LT(max_abs_diff(out, ss), 1e-6);
}

TEST(Evolve, RejectsBadDurations) {
  Eigen::MatrixXcd L = build_liouvillian(kModel, dark_drive());
  EXPECT_THROW(evolve(mixed_gs(), L, -1.0), ConfigError);
  EXPECT_THROW(evolve(mixed_gs(), L, std::nan("")), NonFinite);
}

TEST(SteadyState, OffResonantPumpingRatio) {
  // under off-resonant cycling the ground-state weight ratio settles at
  // a value fixed by the shelving branches, independent of pump power
  for (double p_nW : {3e3, 30e3, 300e3}) {
    Eigen::MatrixXcd L = build_liouvillian(kModel, offres_drive(p_nW));
    Mat6 ss = steady_state(L);
    EXPECT_LT((L * vec6(ss)).cwiseAbs().maxCoeff(), 1e-10);
    Vec6d p = populations(ss);
    double ratio = p[gs_half] / (p[gs_half] + p[gs_three_half]);
    EXPECT_NEAR(ratio, 0.5639, 1e-3) << "P=" << p_nW;
  }
}

TEST(SteadyState, DarkKernelIsDegenerate) {
  Eigen::MatrixXcd L = build_liouvillian(kModel, dark_drive());
  EXPECT_THROW(steady_state(L), DegenerateKernel);
}

TEST(Reduced, MatchesFullPropagation) {
  std::vector<DriveParams> drives = {dark_drive(), offres_drive(30e3),
                                     resonant_drive(Transition::o1, 6.0),
                                     resonant_drive(Transition::o2, 20.0, 0.1)};
  for (const auto& d : drives) {
    ReducedGenerator g = ReducedGenerator::build(kModel, d);
    Eigen::MatrixXcd L = build_liouvillian(kModel, d);
    // start from a state inside the reduced subspace: a population mix
    // plus some amplitude on the active coherence slot
    ReducedGenerator::Vec8 x0;
    x0 << 0.30, 0.25, 0.10, 0.05, 0.20, 0.10, 0.02, -0.01;
    if (d.target == DriveTarget::none) x0[6] = x0[7] = 0.0;
    Mat6 rho0 = g.embed(x0);
    for (double t : {1.0, 100.0, 5000.0}) {
      EvolveOptions opt;
      opt.method = EvolveMethod::expm;
      Mat6 full = unvec6((detail::propagate_expm(L, t, vec6(rho0))).eval());
      ReducedGenerator::Vec8 xt = g.propagator(t) * x0;
      EXPECT_LT((g.project(full) - xt).cwiseAbs().maxCoeff(), 1e-10)
          << "t=" << t << " target=" << int(d.target);
      // and nothing leaked outside the subspace
      EXPECT_LT(max_abs_diff(full, g.embed(g.project(full))), 1e-12);
    }
  }
}

TEST(Reduced, RejectsMicrowaveDrive) {
  DriveParams d;
  d.omega_mw = 0.0157;
  EXPECT_THROW(ReducedGenerator::build(kModel, d), ConfigError);
}

TEST(Reduced, PlMatchesFullSignal) {
  DriveParams d = resonant_drive(Transition::o2, 20.0);
  ReducedGenerator g = ReducedGenerator::build(kModel, d);
  ReducedGenerator::Vec8 x;
  x << 0.4, 0.2, 0.15, 0.1, 0.1, 0.05, 0.01, 0.0;
  RateSet r = kModel.rates_for_power(20.0);
  EXPECT_NEAR(g.pl(x), pl_signal(g.embed(x), r), 1e-15);
}
