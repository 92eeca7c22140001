// Acceptance harness: runs the nine observable checks the toolkit must
// satisfy and prints one [PASS]/[FAIL] line each. The exit code is the
// number of failed checks. Tolerances are pinned here on purpose.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vsi/fit.hpp"
#include "vsi/protocol.hpp"

using namespace vsi;

namespace {

namespace fs = std::filesystem;

struct Outcome {
  bool pass = true;
  std::string detail;
};

void expect(Outcome& o, bool ok, const std::string& why) {
  if (ok) return;
  o.pass = false;
  if (!o.detail.empty()) o.detail += "; ";
  o.detail += why;
}

std::string g6(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

const ModelParams kTruth = ModelParams::table_defaults();

Mat6 mixed_gs() {
  Vec6d p = Vec6d::Zero();
  p[gs_half] = p[gs_three_half] = 0.5;
  return diag_state(p);
}

// ---- 1: excited-state lifetimes ----------------------------------------

Outcome check_es_lifetimes() {
  Outcome o;
  double tau1 = es_lifetime(kTruth.rates, Transition::o1);
  double tau2 = es_lifetime(kTruth.rates, Transition::o2);
  expect(o, std::abs(tau1 / 6.1 - 1.0) < 0.01, "tau_O1 " + g6(tau1) + " not within 1% of 6.1");
  expect(o, std::abs(tau2 / 11.3 - 1.0) < 0.01, "tau_O2 " + g6(tau2) + " not within 1% of 11.3");

  double refit[2];
  for (Transition t : {Transition::o1, Transition::o2}) {
    SequenceResult res = run_sequence(kTruth, es_lifetime_sequence(t), mixed_gs());
    double tau = fit_single_exponential(res.trace.time_ns, res.trace.signal).tau_ns;
    refit[t == Transition::o2] = tau;
    double want = t == Transition::o1 ? tau1 : tau2;
    expect(o, std::abs(tau / want - 1.0) < 0.01,
           "sequence refit " + g6(tau) + " deviates >1% from " + g6(want));
    double printed = t == Transition::o1 ? 6.1 : 11.3;
    expect(o, std::abs(tau / printed - 1.0) < 0.01,
           "sequence refit " + g6(tau) + " deviates >1% from " + g6(printed));
  }
  if (o.pass)
    o.detail = "table " + g6(tau1) + "/" + g6(tau2) + " ns, pulsed refits " + g6(refit[0]) +
               "/" + g6(refit[1]) + " ns, all within 1% of 6.1/11.3";
  return o;
}

// ---- 2: metastable lifetimes -------------------------------------------

Outcome check_ms_lifetimes() {
  Outcome o;
  // the published table carries two decimals, so the printed values are
  // checked at that resolution while the algebra is checked exactly
  double ms1 = ms_lifetime(kTruth.rates, MsLevel::ms1);
  double ms1_exact = 1.0 / (1.0 / 250.72 + 1.0 / 1035.35);
  expect(o, std::abs(ms1 / ms1_exact - 1.0) < 1e-12, "ms1 algebra off: " + g6(ms1));
  expect(o, std::abs(ms1 - 201.84) < 5.001e-3, "ms1 " + g6(ms1) + " vs printed 201.84");

  const struct {
    double power, printed;
  } rows[] = {{6.0, 2964.37}, {10.0, 2188.93}, {15.0, 1085.40}, {20.0, 740.85}};
  for (const auto& row : rows) {
    double got = ms_lifetime(kTruth.rates_for_power(row.power), MsLevel::ms2);
    double exact = 0.0;  // half the single-outlet lifetime: both outlets drain in parallel
    for (const auto& ov : kTruth.ms2_power_overrides)
      if (ov.power_nW == row.power) exact = ov.lifetime_ns / 2.0;
    expect(o, std::abs(got / exact - 1.0) < 1e-12,
           "ms2 algebra off at " + g6(row.power) + " nW: " + g6(got));
    expect(o, std::abs(got - row.printed) < 5.001e-3,
           "ms2 at " + g6(row.power) + " nW: " + g6(got) + " vs printed " + g6(row.printed));
  }
  if (o.pass)
    o.detail = "ms1 " + g6(ms1) + " ns and the four ms2 rows match the printed table at its "
               "two-decimal resolution, algebra exact to 1e-12";
  return o;
}

// ---- 3: propagator invariants ------------------------------------------

Outcome check_propagator_invariants() {
  Outcome o;
  Rng rng(987654321);
  auto lifetime = [&] { return std::exp(rng.uniform(std::log(5.0), std::log(20000.0))); };
  double worst_trace = 0, worst_herm = 0, best_eig = 0, worst_rk = 0;

  for (int c = 0; c < 1000; ++c) {
    ModelParams m;
    m.rates.gamma_r = 1.0 / lifetime();
    m.rates.gamma_1 = 1.0 / lifetime();
    m.rates.gamma_1p = 1.0 / lifetime();
    m.rates.gamma_2 = 1.0 / lifetime();
    m.rates.gamma_2p = 1.0 / lifetime();
    m.rates.gamma_3 = 1.0 / lifetime();
    m.rates.gamma_4 = 1.0 / lifetime();
    m.rates.gamma_3p = m.rates.gamma_4p = 1.0 / lifetime();
    m.kappa_deshelve = rng.uniform(0.0, 2e-4);
    validate_rates(m.rates);

    DriveParams d;
    switch (rng.below(4)) {
      case 0:
        d = dark_drive();
        break;
      case 1:
      case 2:
        d = resonant_drive(rng.below(2) ? Transition::o2 : Transition::o1,
                           std::exp(rng.uniform(std::log(0.1), std::log(1e4))),
                           rng.uniform(-5.0, 5.0));
        d.omega_laser = std::exp(rng.uniform(std::log(1e-3), std::log(1.0)));
        break;
      default:
        d = offres_drive(std::exp(rng.uniform(std::log(1.0), std::log(1e5))));
        break;
    }
    if (rng.below(2)) {
      d.omega_mw = rng.uniform(1e-3, 0.3);
      d.delta_mw = rng.uniform(-0.2, 0.2);
    }
    validate_drive(d);

    Mat6 a;
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) a(i, j) = cd(rng.uniform(-1, 1), rng.uniform(-1, 1));
    Mat6 rho0 = a * a.adjoint();
    rho0 /= rho0.trace();

    double t = std::exp(rng.uniform(std::log(0.1), std::log(1e6)));
    Eigen::MatrixXcd L = build_liouvillian(m, d);
    Eigen::VectorXcd v0 = vec6(rho0);

    // raw propagation, without the physicality repair the library applies
    Mat6 rho_t = unvec6(detail::propagate_expm(L, t, v0));
    worst_trace = std::max(worst_trace, std::abs(rho_t.trace() - cd(1.0, 0.0)));
    worst_herm = std::max(worst_herm, hermiticity_error(rho_t));
    Eigen::SelfAdjointEigenSolver<Mat6> es(0.5 * (rho_t + rho_t.adjoint()));
    best_eig = std::min(best_eig, es.eigenvalues().minCoeff());

    // the independent integrator is compared over up to 100 characteristic
    // times of the generator; the semigroup property covers longer spans
    double lnorm = std::max(L.cwiseAbs().rowwise().sum().maxCoeff(), 1e-12);
    double t_rk = std::min(t, 100.0 / lnorm);
    Eigen::VectorXcd ve = detail::propagate_expm(L, t_rk, v0);
    Eigen::VectorXcd vr = detail::propagate_rk45(L, t_rk, v0, 1e-9, 1e-12);
    worst_rk = std::max(worst_rk, (ve - vr).cwiseAbs().maxCoeff());
  }

  expect(o, worst_trace < 1e-9, "trace error " + g6(worst_trace));
  expect(o, worst_herm < 1e-10, "hermiticity error " + g6(worst_herm));
  expect(o, best_eig >= -1e-9, "negative eigenvalue " + g6(best_eig));
  expect(o, worst_rk < 1e-7, "expm-vs-rk45 deviation " + g6(worst_rk));
  if (o.pass)
    o.detail = "1000 random cases: trace<=" + g6(worst_trace) + ", herm<=" + g6(worst_herm) +
               ", min eig>=" + g6(best_eig) + ", expm-vs-rk45<=" + g6(worst_rk);
  return o;
}

// ---- 4: synthetic recovery ---------------------------------------------

// each power contributes the decay pair, one trace per driven line, since
// the split between the two shelving channels of a line is pinned by the
// other line's decay shape
FitProblem noisy_problem(const ModelParams& truth, double peak, std::uint64_t seed) {
  const std::vector<double> delays = {0, 150, 400, 800, 1500, 2500, 4000, 6000, 8000, 10000};
  FitProblem p;
  std::uint64_t stream = 0;
  for (double pw : {6.0, 10.0, 15.0, 20.0}) {
    for (Transition tr : {Transition::o1, Transition::o2}) {
      FitDataset d;
      d.id = "decay_" + fmt_g9(pw) + (tr == Transition::o1 ? "nW_o1" : "nW_o2");
      d.experiment = "resonant-decay";
      d.power_nW = pw;
      d.transition = tr == Transition::o1 ? FitChannel::o1 : FitChannel::o2;
      d.trace = add_shot_noise(simulate_resonant_decay(truth, pw, tr, 30e3, 20.0), peak,
                               seed + stream++);
      p.datasets.push_back(std::move(d));
    }
  }
  FitDataset dd;
  dd.id = "delayed_pulse";
  dd.experiment = "delayed-pulse";
  dd.power_nW = delayed_readout_power_nW;
  dd.transition = FitChannel::both;
  dd.delayed = add_shot_noise(simulate_delayed_pulse(truth, delays), peak, seed + stream++);
  p.datasets.push_back(std::move(dd));
  p.constraints.tau_o1_ns = es_lifetime(truth.rates, Transition::o1);
  p.constraints.tau_o2_ns = es_lifetime(truth.rates, Transition::o2);
  p.seed = seed + 101;  // optimizer stream separate from the noise streams
  p.restarts = 2;
  return p;
}

Outcome check_fit_recovery() {
  Outcome o;
  double worst_shelf = 0, worst_ms1 = 0, worst_ms2 = 0;
  for (std::uint64_t seed : {11u, 12u, 13u, 14u, 15u}) {
    FitProblem p = noisy_problem(kTruth, 1e4, seed);
    JointFitOptions jo;
    jo.de.max_generations = 250;
    jo.de.stall_generations = 40;
    FitOutcome fo = joint_fit(p, jo);
    const RateSet& r = fo.model.rates;
    const RateSet& tr = kTruth.rates;

    auto err = [](double got, double want) { return std::abs(got / want - 1.0); };
    const struct {
      const char* name;
      double got, want, tol;
    } rows[] = {
        {"gamma_1", r.gamma_1, tr.gamma_1, 0.10},   {"gamma_1p", r.gamma_1p, tr.gamma_1p, 0.10},
        {"gamma_2", r.gamma_2, tr.gamma_2, 0.10},   {"gamma_2p", r.gamma_2p, tr.gamma_2p, 0.10},
        {"gamma_3", r.gamma_3, tr.gamma_3, 0.15},   {"gamma_4", r.gamma_4, tr.gamma_4, 0.15},
    };
    for (const auto& row : rows) {
      double e = err(row.got, row.want);
      (row.tol < 0.12 ? worst_shelf : worst_ms1) = std::max(row.tol < 0.12 ? worst_shelf
                                                                           : worst_ms1, e);
      expect(o, e <= row.tol, "seed " + std::to_string(seed) + ": " + row.name + " off by " +
                                  g6(100 * e) + "%");
    }
    for (const auto& want : kTruth.ms2_power_overrides) {
      bool found = false;
      for (const auto& got : fo.model.ms2_power_overrides) {
        if (std::abs(got.power_nW - want.power_nW) > 1e-9) continue;
        found = true;
        double e = err(1.0 / got.lifetime_ns, 1.0 / want.lifetime_ns);
        worst_ms2 = std::max(worst_ms2, e);
        expect(o, e <= 0.20, "seed " + std::to_string(seed) + ": ms2 rate at " +
                                 g6(want.power_nW) + " nW off by " + g6(100 * e) + "%");
      }
      expect(o, found, "seed " + std::to_string(seed) + ": no fitted ms2 rate at " +
                           g6(want.power_nW) + " nW");
    }
    expect(o, fo.constraints_satisfied,
           "seed " + std::to_string(seed) + ": lifetime constraints violated");
  }
  if (o.pass)
    o.detail = "5 seeds, per-power decay pairs plus delayed pulse at 1e4 peak counts; worst "
               "errors: shelving " + g6(100 * worst_shelf) + "% (limit 10%), ms1 exits " +
               g6(100 * worst_ms1) + "% (15%), ms2 exits " + g6(100 * worst_ms2) + "% (20%)";
  return o;
}

// ---- 5: spin dynamics phenomenology ------------------------------------

Outcome check_spin_phenomenology(std::string& report) {
  Outcome o;
  auto [ph_o2, pt_o2] = simulate_spin_pumping(kTruth, 20e3, 6.0, Transition::o2);
  auto [ph_o1, pt_o1] = simulate_spin_pumping(kTruth, 20e3, 6.0, Transition::o1);
  expect(o, ph_o2 >= 0.90, "O2 pumping reaches only p_half = " + g6(ph_o2));
  expect(o, pt_o1 >= 0.90, "O1 pumping reaches only p_three_half = " + g6(pt_o1));

  bool preference = true;
  for (int k = 0; k <= 16; ++k) {
    double w = std::pow(10.0, -2.0 + 0.5 * k);  // 1e-2 .. 1e6 nW
    Eigen::MatrixXcd L = build_liouvillian(kTruth, offres_drive(w));
    Mat6 ss;
    try {
      ss = steady_state(L);
    } catch (const DegenerateKernel&) {
      // at very weak pumping the decay gap hides inside the kernel
      // tolerance; settle over 50 pumping times instead
      ss = evolve(mixed_gs(), L, 50.0 / (c_w_offres * w));
    }
    if (!(ss(gs_half, gs_half).real() > ss(gs_three_half, gs_three_half).real()))
      preference = false;
  }
  expect(o, preference, "off-resonant steady state lost the p_half > p_three_half preference");

  std::vector<double> times;
  for (int k = 0; k <= 30; ++k) times.push_back(2000.0 * k);
  std::vector<double> contrast = simulate_repump_contrast(kTruth, times, Transition::o1);
  bool crossed = false;
  for (std::size_t i = 1; i < contrast.size(); ++i)
    if (contrast[i - 1] < 0 && contrast[i] >= 0) crossed = true;
  expect(o, contrast.front() < 0, "O1-initialized contrast does not start negative");
  expect(o, contrast.back() > 0, "contrast does not recover to the idle preference");
  expect(o, crossed, "contrast never crosses zero");

  // the quantitative split is reported, not asserted
  Mat6 pumped = steady_state(build_liouvillian(kTruth, offres_drive(prep_power_nW)));
  Mat6 settled = evolve(pumped, build_liouvillian(kTruth, dark_drive()), relax_duration_ns);
  double ph = settled(gs_half, gs_half).real();
  double pt = settled(gs_three_half, gs_three_half).real();
  report = "post-repump ground split " + g6(ph / (ph + pt)) + "/" + g6(pt / (ph + pt)) +
           " (reference reading 0.57/0.43)";

  if (o.pass)
    o.detail = "pumping at 6 nW for 20 us gives p_half " + g6(ph_o2) + " (O2) and p_three_half " +
               g6(pt_o1) + " (O1); idle preference holds over 1e-2..1e6 nW; contrast " +
               g6(contrast.front()) + " -> 0 crossing -> " + g6(contrast.back());
  return o;
}

// ---- 6 and 8: planner numbers and budget shape -------------------------

double grid_scan_max(const ProtocolConfig& c, int points) {
  double best = 0;
  for (int i = 0; i < points; ++i) {
    ProtocolConfig probe = c;
    probe.purcell = purcell_domain_lo * std::pow(purcell_domain_hi / purcell_domain_lo,
                                                 double(i) / double(points - 1));
    best = std::max(best, fidelity_budget(probe).total);
  }
  return best;
}

Outcome check_planner_numbers() {
  Outcome o;
  double pi_ns = pi_pulse_duration(2.0 * pi);
  expect(o, std::abs(pi_ns - 0.9) <= 0.05, "pi pulse " + g6(pi_ns) + " vs 0.9 +- 0.05");
  double zpl = zpl_emission_prob(kTruth.rates, 0.09, 1.0);
  expect(o, std::abs(zpl - 0.06) <= 0.005, "sharp-line emission " + g6(zpl) + " vs 0.06 +- 0.005");

  ProtocolConfig c;
  for (int n = 1; n <= 4; ++n) {
    c.photons = n;
    PurcellRequirement req = min_purcell(c, 0.5);
    expect(o, req.feasible == (n <= 3),
           "half-fidelity feasibility boundary wrong at N=" + std::to_string(n));
  }

  // the optimizer may legitimately sit above the grid maximum by the grid's
  // own discretization error, so only a shortfall counts against it
  double excess = 0;
  for (int n : {1, 3, 6}) {
    c.photons = n;
    double diff = optimize_purcell(c).budget.total - grid_scan_max(c, 10000);
    excess = std::max(excess, diff);
    expect(o, diff >= -1e-9, "optimizer misses the grid scan by " + g6(-diff) + " at N=" +
                                 std::to_string(n));
  }
  if (o.pass)
    o.detail = "pi pulse " + g6(pi_ns) + " ns, sharp-line emission " + g6(zpl) +
               ", half-fidelity boundary at N=3, optimizer never below a 1e4-point grid and "
               "above it by at most " + g6(excess) + " (grid discretization)";
  return o;
}

Outcome check_budget_shape() {
  Outcome o;
  ProtocolConfig c;
  double prev_total = 1.0;
  for (int n = 1; n <= 10; ++n) {
    c.photons = n;
    double total = optimize_purcell(c).budget.total;
    expect(o, total < prev_total && total > 0,
           "optimized total fidelity not decreasing at N=" + std::to_string(n));
    prev_total = total;
  }
  double prev_req = 0.0;
  for (int n = 1; n <= 3; ++n) {
    c.photons = n;
    PurcellRequirement req = min_purcell(c, 0.5);
    expect(o, req.feasible && req.purcell > prev_req,
           "required enhancement not increasing at N=" + std::to_string(n));
    if (req.feasible) prev_req = req.purcell;
  }
  if (o.pass)
    o.detail = "optimized totals strictly decrease over N=1..10 and the half-fidelity "
               "enhancement strictly grows over N=1..3";
  return o;
}

// ---- 7: ideal protocol states ------------------------------------------

Eigen::VectorXcd ghz_reference(int photons) {
  Eigen::VectorXcd ref = Eigen::VectorXcd::Zero(1L << (2 * photons + 1));
  long all_early = 1, all_late = 0;  // driven branch keeps the spin bit set
  for (int k = 0; k < photons; ++k) {
    all_early |= 1L << (1 + 2 * k);
    all_late |= 1L << (2 + 2 * k);
  }
  ref[all_early] = ref[all_late] = std::sqrt(0.5);
  return ref;
}

Eigen::VectorXcd cluster_reference(int photons) {
  // independent construction: per period the driven branch emits early
  // and lands in (g1+g2)/sqrt2, the bystander emits late into (g1-g2)/sqrt2
  long dim = 1L << (2 * photons + 1);
  Eigen::VectorXcd v = Eigen::VectorXcd::Zero(dim);
  v[0] = v[1] = std::sqrt(0.5);
  const double rs = std::sqrt(0.5);
  for (int k = 0; k < photons; ++k) {
    long e_mask = 1L << (1 + 2 * k), l_mask = 1L << (2 + 2 * k);
    Eigen::VectorXcd next = Eigen::VectorXcd::Zero(dim);
    for (long i = 0; i < dim; ++i) {
      if (v[i] == cd(0, 0)) continue;
      long base = i & ~1L;
      if (i & 1) {
        next[base | e_mask] += rs * v[i];
        next[base | e_mask | 1] += rs * v[i];
      } else {
        next[base | l_mask] += rs * v[i];
        next[base | l_mask | 1] -= rs * v[i];
      }
    }
    v.swap(next);
  }
  return v;
}

Outcome check_ideal_protocol() {
  Outcome o;
  double worst = 0;
  for (int n = 1; n <= 3; ++n) {
    Eigen::VectorXcd ghz = simulate_ideal_protocol(n, FinalGate::x);
    double f_ghz = std::norm(ghz_reference(n).dot(ghz));
    Eigen::VectorXcd cluster = simulate_ideal_protocol(n, FinalGate::hadamard);
    double f_cluster = std::norm(cluster_reference(n).dot(cluster));
    worst = std::max(worst, std::max(1.0 - f_ghz, 1.0 - f_cluster));
    expect(o, f_ghz >= 1.0 - 1e-10, "GHZ fidelity " + g6(f_ghz) + " at N=" + std::to_string(n));
    expect(o, f_cluster >= 1.0 - 1e-10,
           "cluster fidelity " + g6(f_cluster) + " at N=" + std::to_string(n));
  }
  if (o.pass)
    o.detail = "GHZ and cluster outputs match independent references for N=1..3, worst "
               "infidelity " + g6(worst);
  return o;
}

// ---- 9: command-line determinism ---------------------------------------

int run_cli(const std::string& args, const std::string& env_prefix) {
  std::string cmd = env_prefix + " '" + VSI_CLI_BIN + "' " + args + " >/dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::map<std::string, std::string> dir_contents(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file()) {
      std::ifstream in(entry.path(), std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      out[fs::relative(entry.path(), dir).string()] = ss.str();
    }
  return out;
}

Outcome check_cli_determinism() {
  Outcome o;
  fs::path base = fs::temp_directory_path() / "vsi_acceptance_cli";
  fs::remove_all(base);
  fs::create_directories(base);
  auto dir = [&](const char* name) { return (base / name).string(); };

  expect(o, run_cli("synth --out-dir '" + dir("s1") + "' --seed 33", "VSI_THREADS=1") == 0,
         "synth run failed");
  expect(o, run_cli("synth --out-dir '" + dir("s2") + "' --seed 33", "VSI_THREADS=4") == 0,
         "synth rerun failed");
  expect(o, dir_contents(dir("s1")) == dir_contents(dir("s2")),
         "synth outputs differ across thread counts");

  std::string fit_args = "fit --manifest '" + dir("s1") + "/manifest.json' --generations 12 "
                         "--stall 6 --out-dir '";
  expect(o, run_cli(fit_args + dir("f1") + "'", "VSI_THREADS=1") == 0, "fit run failed");
  expect(o, run_cli(fit_args + dir("f2") + "'", "VSI_THREADS=4") == 0, "fit rerun failed");
  expect(o, dir_contents(dir("f1")) == dir_contents(dir("f2")),
         "fit outputs differ across thread counts");

  fs::remove_all(base);
  if (o.pass)
    o.detail = "synth and fit outputs are byte-identical for a fixed seed under VSI_THREADS=1 "
               "and 4";
  return o;
}

// ---- informational notes ------------------------------------------------

// the slow resonant-decay tail reflects repeated recapture into the
// power-broadened shelf, so it is slower than the bare shelf lifetime
std::string tail_note() {
  ExperimentTrace tr = simulate_resonant_decay(kTruth, 20.0, Transition::o1, 30e3, 20.0);
  std::vector<double> t, y;
  for (std::size_t i = 0; i < tr.time_ns.size(); ++i)
    if (tr.time_ns[i] >= 4000.0) {
      t.push_back(tr.time_ns[i]);
      y.push_back(tr.signal[i]);
    }
  double tau = fit_single_exponential(t, y).tau_ns;
  return "resonant-decay slow tail at 20 nW fits " + g6(tau) +
         " ns vs the 740.85 ns ms2 state lifetime (recapture compounds the shelf dwell; see "
         "the single-outlet 1481.69 ns scale)";
}

}  // namespace

int main() {
  std::string spin_report;
  struct Row {
    int id;
    const char* title;
    Outcome out;
    double seconds;
  };
  std::vector<Row> rows;
  auto timed = [&](int id, const char* title, auto&& fn) {
    auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = fn();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = std::string("exception: ") + e.what();
    }
    double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rows.push_back({id, title, out, sec});
  };

  timed(1, "excited-state lifetimes", check_es_lifetimes);
  timed(2, "metastable lifetimes", check_ms_lifetimes);
  timed(3, "propagator invariants", check_propagator_invariants);
  timed(4, "synthetic recovery", check_fit_recovery);
  timed(5, "spin phenomenology", [&] { return check_spin_phenomenology(spin_report); });
  timed(6, "planner point values", check_planner_numbers);
  timed(7, "ideal protocol states", check_ideal_protocol);
  timed(8, "budget shape", check_budget_shape);
  timed(9, "command-line determinism", check_cli_determinism);

  int failures = 0;
  for (const auto& r : rows) {
    failures += r.out.pass ? 0 : 1;
    std::printf("[%s] criterion %d, %s: %s [%.1f s]\n", r.out.pass ? "PASS" : "FAIL", r.id,
                r.title, r.out.detail.c_str(), r.seconds);
  }
  if (!spin_report.empty()) std::printf("note: %s\n", spin_report.c_str());
  try {
    std::printf("note: %s\n", tail_note().c_str());
  } catch (const std::exception& e) {
    std::printf("note: tail report unavailable (%s)\n", e.what());
  }
  return failures;
}
