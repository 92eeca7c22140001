#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "vsi/protocol.hpp"

using namespace vsi;

namespace {

const RateSet kTable = ModelParams::table_defaults().rates;

double grid_scan_max(const ProtocolConfig& c, int points) {
  double best = -1.0;
  for (int i = 0; i < points; ++i) {
    ProtocolConfig probe = c;
    probe.purcell = purcell_domain_lo *
                    std::pow(purcell_domain_hi / purcell_domain_lo,
                             double(i) / double(points - 1));
    best = std::max(best, fidelity_budget(probe).total);
  }
  return best;
}

// collapse the occupation-space protocol state onto qubits: bit 0 keeps the
// spin, photon qubit k reads 0 for an early-bin photon and 1 for a late one
Eigen::VectorXcd to_photon_qubits(const Eigen::VectorXcd& v, int photons) {
  Eigen::VectorXcd q = Eigen::VectorXcd::Zero(Eigen::Index(1) << (photons + 1));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v[i] == cd(0.0)) continue;
    Eigen::Index idx = i & 1;
    for (int k = 0; k < photons; ++k) {
      bool early = i >> (1 + 2 * k) & 1;
      bool late = i >> (2 + 2 * k) & 1;
      EXPECT_NE(early, late) << "bin pair " << k << " is not single-occupancy";
      if (late) idx |= Eigen::Index(1) << (1 + k);
    }
    q[idx] += v[i];
  }
  return q;
}

}  // namespace

TEST(EffectiveRate, EnhancesOnlyTheSharpLineFraction) {
  double gr = kTable.gamma_r;
  EXPECT_DOUBLE_EQ(purcell_rate(gr, 0.09, 1.0), gr);
  EXPECT_NEAR(purcell_rate(gr, 0.09, 0.0), 0.91 * gr, 1e-15);
  EXPECT_NEAR(purcell_rate(gr, 0.09, 100.0), 0.5554932735, 1e-9);
  EXPECT_THROW(purcell_rate(0.0, 0.09, 1.0), NonPositiveRate);
  EXPECT_THROW(purcell_rate(gr, 0.0, 1.0), ConfigError);
  EXPECT_THROW(purcell_rate(gr, 1.2, 1.0), ConfigError);
  EXPECT_THROW(purcell_rate(gr, 0.09, -1.0), ConfigError);
}

TEST(PhononFidelity, DephasingFreeEmissionIsPerfect) {
  double ge = kTable.gamma_r;
  for (int n : {1, 5, 50}) EXPECT_DOUBLE_EQ(fidelity_phonon(n, 0.0, ge), 1.0);
  EXPECT_NEAR(fidelity_phonon(1, ge, ge), 2.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(fidelity_phonon(100000, 0.1 * ge, ge), 0.0);  // clamped
  EXPECT_THROW(fidelity_phonon(1, -0.1, ge), ConfigError);
  EXPECT_THROW(fidelity_phonon(1, 0.0, 0.0), NonPositiveRate);
}

TEST(ExcitationFidelity, PenalizesFastEmittersAndNarrowSplittings) {
  EXPECT_DOUBLE_EQ(fidelity_excitation(0, kTable.gamma_r, 2.0 * pi), 1.0);
  EXPECT_NEAR(fidelity_excitation(3, kTable.gamma_r, 2.0 * pi), 0.9817959907, 1e-9);
  EXPECT_LT(fidelity_excitation(3, purcell_rate(kTable.gamma_r, 0.09, 10.0), 2.0 * pi),
            fidelity_excitation(3, kTable.gamma_r, 2.0 * pi));
  EXPECT_DOUBLE_EQ(fidelity_excitation(1000000, kTable.gamma_r, 2.0 * pi), 0.0);
  EXPECT_THROW(fidelity_excitation(1, kTable.gamma_r, 0.0), ConfigError);
}

TEST(LineEmission, ProbabilityFollowsTheCompetingRates) {
  EXPECT_NEAR(zpl_emission_prob(kTable, 0.09, 1.0), 0.0572693746, 1e-9);
  EXPECT_GT(zpl_emission_prob(kTable, 0.09, 1e9), 0.999999);
  RateSet lossless = kTable;
  lossless.gamma_2 = lossless.gamma_2p = 1e-300;
  EXPECT_NEAR(zpl_emission_prob(lossless, 1.0, 1.0), 1.0, 1e-10);
  EXPECT_DOUBLE_EQ(zpl_emission_prob(kTable, 0.09, 0.0), 0.0);
  EXPECT_THROW(zpl_emission_prob(kTable, 0.0, 1.0), ConfigError);
}

TEST(BranchingFidelity, CompoundsPerPhoton) {
  double p1 = zpl_emission_prob(kTable, 0.09, 1.0);
  EXPECT_NEAR(fidelity_branching(1, p1), 0.0572693746, 1e-9);
  EXPECT_NEAR(fidelity_branching(3, p1) / 1.8783102186e-4, 1.0, 1e-9);
  for (int n : {1, 2, 5}) EXPECT_DOUBLE_EQ(fidelity_branching(n, 1.0), 1.0);
  EXPECT_THROW(fidelity_branching(0, 0.5), ConfigError);
  EXPECT_THROW(fidelity_branching(2, 1.5), ConfigError);
}

TEST(PiPulse, DetunedLineCompletesAFullRotation) {
  EXPECT_NEAR(pi_pulse_duration(2.0 * pi), 0.8660254038, 1e-9);
  EXPECT_NEAR(pi_pulse_duration(4.0 * pi) * 2.0, pi_pulse_duration(2.0 * pi), 1e-15);
  EXPECT_NEAR(pi_pulse_duration(std::sqrt(3.0) * pi), 1.0, 1e-12);
  for (double delta : {1.0, 2.0 * pi, 17.3}) {
    double t = pi_pulse_duration(delta);
    double omega = pi / t;  // resonant line turns by half a rotation
    EXPECT_NEAR(std::sqrt(omega * omega + delta * delta) * t, 2.0 * pi, 1e-12);
  }
  EXPECT_THROW(pi_pulse_duration(0.0), ConfigError);
}

TEST(Budget, FactorizesAndStaysInRange) {
  for (int n : {1, 3, 6}) {
    for (double p : {0.0, 1.0, 147.0, 1e5}) {
      for (double gd : {0.0, 0.01}) {
        ProtocolConfig c;
        c.photons = n;
        c.purcell = p;
        c.dephasing_rate = gd;
        FidelityBudget b = fidelity_budget(c);
        for (double f : {b.phonon, b.excitation, b.branching, b.total}) {
          EXPECT_GE(f, 0.0);
          EXPECT_LE(f, 1.0);
        }
        EXPECT_NEAR(b.total, b.phonon * b.excitation * b.branching, 1e-12);
        EXPECT_DOUBLE_EQ(b.gamma_eff, purcell_rate(c.rates.gamma_r, c.debye_waller, p));
        EXPECT_DOUBLE_EQ(b.pi_pulse_ns, pi_pulse_duration(c.splitting_rad_ns));
      }
    }
  }
}

TEST(OptimizeEnhancement, BeatsAFineGridScan) {
  ProtocolConfig c;
  c.photons = 3;
  PurcellOptimum opt = optimize_purcell(c);
  EXPECT_GE(opt.purcell, purcell_domain_lo);
  EXPECT_LE(opt.purcell, purcell_domain_hi);
  EXPECT_TRUE(opt.interior);
  EXPECT_GE(opt.budget.total, grid_scan_max(c, 10000) - 1e-9);
  ProtocolConfig at = c;
  at.purcell = opt.purcell;
  EXPECT_DOUBLE_EQ(opt.budget.total, fidelity_budget(at).total);
  // the known three-photon operating point: the excitation factor lands
  // near 0.743 only when evaluated at the optimized enhancement (the top is
  // flat, so small rate rounding shifts the argmax more than the value),
  // while the unenhanced value sits at 0.982
  EXPECT_NEAR(opt.budget.excitation, 0.743, 0.01);
  ProtocolConfig bare = c;
  bare.purcell = 1.0;
  EXPECT_NEAR(fidelity_budget(bare).excitation, 0.982, 1e-3);
}

TEST(OptimizeEnhancement, ShelvingFreeCaseStillHasAnInteriorPeak) {
  // with no shelving loss the branching factor saturates toward 1 while the
  // excitation factor falls only linearly, so the product still peaks inside
  // the domain rather than at its lower edge
  ProtocolConfig c;
  c.photons = 3;
  c.dephasing_rate = 0.0;
  c.rates.gamma_2 = c.rates.gamma_2p = 1e-12;
  PurcellOptimum opt = optimize_purcell(c);
  EXPECT_TRUE(opt.interior);
  EXPECT_GE(opt.budget.total, grid_scan_max(c, 10000) - 1e-9);

  // monotone pieces behind the trade-off
  auto piece = [&c](double p) {
    ProtocolConfig probe = c;
    probe.purcell = p;
    FidelityBudget b = fidelity_budget(probe);
    return std::pair<double, double>(b.branching, b.excitation);
  };
  auto [br1, ex1] = piece(2.0);
  auto [br2, ex2] = piece(20.0);
  auto [br3, ex3] = piece(200.0);
  EXPECT_LT(br1, br2);
  EXPECT_LT(br2, br3);
  EXPECT_GT(ex1, ex2);
  EXPECT_GT(ex2, ex3);
}

TEST(OptimizeEnhancement, BestFidelityShrinksWithStateSize) {
  double prev = 1.1;
  for (int n = 1; n <= 10; ++n) {
    ProtocolConfig c;
    c.photons = n;
    double best = optimize_purcell(c).budget.total;
    EXPECT_LE(best, prev + 1e-12) << "n=" << n;
    prev = best;
  }
}

TEST(MinimumEnhancement, HalfFidelityIsReachableUpToThreePhotons) {
  for (int n : {1, 2, 3}) {
    ProtocolConfig c;
    c.photons = n;
    PurcellRequirement req = min_purcell(c, 0.5);
    ASSERT_TRUE(req.feasible) << "n=" << n;
    EXPECT_GE(req.budget.total, 0.5 - 1e-9);
    ProtocolConfig below = c;
    below.purcell = 0.99 * req.purcell;
    EXPECT_LT(fidelity_budget(below).total, 0.5);
  }
  ProtocolConfig c4;
  c4.photons = 4;
  PurcellRequirement req4 = min_purcell(c4, 0.5);
  EXPECT_FALSE(req4.feasible);
  EXPECT_TRUE(std::isnan(req4.purcell));
  EXPECT_LT(req4.budget.total, 0.5);  // reports the best achievable
  EXPECT_GT(req4.budget.total, 0.0);
}

TEST(MinimumEnhancement, HandlesTrivialAndImpossibleTargets) {
  ProtocolConfig c;
  c.photons = 3;
  PurcellRequirement easy = min_purcell(c, 1e-6);
  EXPECT_TRUE(easy.feasible);
  EXPECT_DOUBLE_EQ(easy.purcell, purcell_domain_lo);
  EXPECT_FALSE(min_purcell(c, 0.9).feasible);
  EXPECT_THROW(min_purcell(c, 0.0), ConfigError);
  EXPECT_THROW(min_purcell(c, 1.0), ConfigError);
  EXPECT_THROW(min_purcell(c, -0.5), ConfigError);
}

TEST(IdealProtocol, SinglePeriodMakesABellPair) {
  Eigen::VectorXcd v = simulate_ideal_protocol(1, FinalGate::x);
  // bystander spin with a late photon, driven spin with an early photon
  const double rs = std::sqrt(0.5);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    double want = (i == 4 || i == 3) ? rs : 0.0;
    EXPECT_NEAR(std::abs(v[i] - cd(want)), 0.0, 1e-12) << "index " << i;
  }
}

TEST(IdealProtocol, TwoPeriodsChainIntoATwoPhotonState) {
  Eigen::VectorXcd v = simulate_ideal_protocol(2, FinalGate::x);
  Eigen::VectorXcd want = Eigen::VectorXcd::Zero(v.size());
  want[4 + 16] = std::sqrt(0.5);     // bystander spin, both late bins
  want[1 + 2 + 8] = std::sqrt(0.5);  // driven spin, both early bins
  EXPECT_NEAR(std::abs(cd(want.adjoint() * v)), 1.0, 1e-10);
}

TEST(IdealProtocol, BinAndSpinFlipLeavesTheChainStateFixed) {
  Eigen::VectorXcd v = simulate_ideal_protocol(3, FinalGate::x);
  Eigen::VectorXcd flipped = Eigen::VectorXcd::Zero(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v[i] == cd(0.0)) continue;
    Eigen::Index j = i ^ 1;  // spin flip
    for (int k = 0; k < 3; ++k) {
      Eigen::Index pair = (i >> (1 + 2 * k)) & 3;
      j &= ~(Eigen::Index(3) << (1 + 2 * k));
      j |= ((pair >> 1) | ((pair & 1) << 1)) << (1 + 2 * k);  // early <-> late
    }
    flipped[j] = v[i];
  }
  EXPECT_NEAR(std::abs(cd(flipped.adjoint() * v)), 1.0, 1e-12);
}

TEST(IdealProtocol, EveryRunIsNormalizedWithOnePhotonPerPeriod) {
  for (int n = 1; n <= 6; ++n) {
    for (FinalGate g : {FinalGate::x, FinalGate::hadamard}) {
      Eigen::VectorXcd v = simulate_ideal_protocol(n, g);
      EXPECT_NEAR(v.norm(), 1.0, 1e-12);
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::abs(v[i]) < 1e-14) continue;
        int photons = 0;
        for (int k = 0; k < n; ++k) {
          int pair = int(i >> (1 + 2 * k) & 3);
          EXPECT_TRUE(pair == 1 || pair == 2)
              << "period " << k << " occupancy " << pair << " at index " << i;
          ++photons;
        }
        EXPECT_EQ(photons, n);
      }
    }
  }
}

TEST(IdealProtocol, HadamardPeriodsMatchTheGeneratorRecursion) {
  // the published per-period generator maps the driven spin to an early
  // photon with the spin rotated to |+>, and the bystander to a late photon
  // with the spin rotated to |->; chaining it is an independent reference
  for (int n = 1; n <= 4; ++n) {
    Eigen::VectorXcd ref = Eigen::VectorXcd::Zero(Eigen::Index(1) << (n + 1));
    const double rs = std::sqrt(0.5);
    ref[0] = ref[1] = rs;
    for (int k = 0; k < n; ++k) {
      Eigen::VectorXcd next = Eigen::VectorXcd::Zero(ref.size());
      for (Eigen::Index i = 0; i < ref.size(); ++i) {
        if (ref[i] == cd(0.0)) continue;
        Eigen::Index photon_bit = Eigen::Index(1) << (1 + k);
        if (i & 1) {  // driven: early photon (qubit 0), spin -> |+>
          next[(i & ~Eigen::Index(1))] += rs * ref[i];
          next[(i & ~Eigen::Index(1)) | 1] += rs * ref[i];
        } else {  // bystander: late photon (qubit 1), spin -> |->
          next[i | photon_bit] += rs * ref[i];
          next[(i | photon_bit) | 1] -= rs * ref[i];
        }
      }
      ref = next;
    }
    Eigen::VectorXcd got = to_photon_qubits(simulate_ideal_protocol(n, FinalGate::hadamard), n);
    EXPECT_NEAR(std::abs(cd(ref.adjoint() * got)), 1.0, 1e-10) << "n=" << n;
  }
}

TEST(IdealProtocol, HadamardOutputPassesClusterStabilizerChecks) {
  // convention: measure the spin in its own basis and keep the bystander
  // outcome, then flip the late-bin phase reference of every period except
  // the last; the photons then satisfy the standard chain stabilizers
  // Z(k-1) X(k) Z(k+1) exactly
  for (int n = 1; n <= 6; ++n) {
    Eigen::VectorXcd q = to_photon_qubits(simulate_ideal_protocol(n, FinalGate::hadamard), n);
    Eigen::VectorXcd ph = Eigen::VectorXcd::Zero(Eigen::Index(1) << n);
    for (Eigen::Index i = 0; i < ph.size(); ++i) ph[i] = q[2 * i];
    ph.normalize();
    for (Eigen::Index i = 0; i < ph.size(); ++i) {
      int parity = 0;
      for (int k = 0; k < n - 1; ++k) parity ^= int(i >> k & 1);
      if (parity) ph[i] = -ph[i];
    }
    for (int k = 0; k < n; ++k) {
      cd expectation = 0.0;
      for (Eigen::Index i = 0; i < ph.size(); ++i) {
        if (ph[i] == cd(0.0)) continue;
        Eigen::Index j = i ^ (Eigen::Index(1) << k);
        double sign = 1.0;
        if (k > 0 && (i >> (k - 1) & 1)) sign = -sign;
        if (k + 1 < n && (i >> (k + 1) & 1)) sign = -sign;
        expectation += std::conj(ph[j]) * sign * ph[i];
      }
      EXPECT_NEAR(expectation.real(), 1.0, 1e-10) << "n=" << n << " k=" << k;
      EXPECT_NEAR(expectation.imag(), 0.0, 1e-10);
    }
  }
}

TEST(IdealProtocol, RejectsUnsupportedSizes) {
  EXPECT_THROW(simulate_ideal_protocol(0, FinalGate::x), ConfigError);
  EXPECT_THROW(simulate_ideal_protocol(7, FinalGate::hadamard), ConfigError);
}

TEST(ProtocolConfigChecks, CatchInvalidParameters) {
  ProtocolConfig good;
  EXPECT_NO_THROW(validate_protocol(good));
  ProtocolConfig c = good;
  c.photons = 0;
  EXPECT_THROW(validate_protocol(c), ConfigError);
  c = good;
  c.debye_waller = 0.0;
  EXPECT_THROW(validate_protocol(c), ConfigError);
  c = good;
  c.debye_waller = 1.0;
  EXPECT_NO_THROW(validate_protocol(c));
  c = good;
  c.splitting_rad_ns = -2.0;
  EXPECT_THROW(validate_protocol(c), ConfigError);
  c = good;
  c.dephasing_rate = -1e-3;
  EXPECT_THROW(validate_protocol(c), ConfigError);
  c = good;
  c.purcell = -0.5;
  EXPECT_THROW(validate_protocol(c), ConfigError);
  c = good;
  c.rates.gamma_2 = 0.0;
  EXPECT_THROW(validate_protocol(c), NonPositiveRate);

  EXPECT_EQ(gate_from_name("ghz"), FinalGate::x);
  EXPECT_EQ(gate_from_name("cluster"), FinalGate::hadamard);
  EXPECT_EQ(gate_from_name(gate_name(FinalGate::x)), FinalGate::x);
  EXPECT_EQ(gate_from_name(gate_name(FinalGate::hadamard)), FinalGate::hadamard);
  EXPECT_THROW(gate_from_name("Y"), ConfigError);
}
