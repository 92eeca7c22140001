#pragma once

// Planner for time-bin entangled multi-photon state generation: the
// per-photon fidelity budget (phonon dephasing, excitation error,
// branching loss), optimization of the cavity enhancement factor, the
// minimum enhancement needed for a target fidelity, and an ideal
// state-vector model of the emission protocol for algebra checks.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"
#include "model.hpp"

namespace vsi {

// Gate applied to the spin at the end of every emission period. X chains
// the periods into a GHZ state; Hadamard produces a 1D cluster state.
enum class FinalGate { x, hadamard };

inline const char* gate_name(FinalGate g) { return g == FinalGate::x ? "X" : "H"; }

inline FinalGate gate_from_name(const std::string& s) {
  if (s == "X" || s == "x" || s == "ghz") return FinalGate::x;
  if (s == "H" || s == "h" || s == "cluster") return FinalGate::hadamard;
  throw ConfigError("unknown final gate '" + s + "' (use X/ghz or H/cluster)");
}

struct ProtocolConfig {
  int photons = 3;
  double splitting_rad_ns = 2.0 * pi;  // angular splitting between the two optical lines
  double debye_waller = 0.09;          // fraction of radiative emission in the sharp line
  double dephasing_rate = 0.0;         // excited-state pure dephasing, 1/ns
  RateSet rates = ModelParams::table_defaults().rates;
  double purcell = 1.0;                // cavity enhancement of the sharp-line rate
  FinalGate final_gate = FinalGate::x;
};

inline void validate_protocol(const ProtocolConfig& c) {
  if (c.photons < 1) throw ConfigError("photon count must be at least 1");
  require_finite(c.splitting_rad_ns, "line splitting");
  if (c.splitting_rad_ns <= 0) throw ConfigError("line splitting must be positive");
  require_finite(c.debye_waller, "Debye-Waller factor");
  if (c.debye_waller <= 0 || c.debye_waller > 1)
    throw ConfigError("Debye-Waller factor must lie in (0, 1]");
  require_finite(c.dephasing_rate, "dephasing rate");
  if (c.dephasing_rate < 0) throw ConfigError("dephasing rate must be non-negative");
  require_finite(c.purcell, "enhancement factor");
  if (c.purcell < 0) throw ConfigError("enhancement factor must be non-negative");
  validate_rates(c.rates);
}

namespace detail {

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

inline constexpr double sqrt3 = 1.7320508075688772;

}  // namespace detail

// Radiative rate with the sharp-line fraction enhanced by the cavity.
inline double purcell_rate(double gamma_r, double debye_waller, double purcell) {
  require_finite(gamma_r, "radiative rate");
  require_finite(debye_waller, "Debye-Waller factor");
  require_finite(purcell, "enhancement factor");
  if (gamma_r <= 0) throw NonPositiveRate("radiative rate must be positive");
  if (debye_waller <= 0 || debye_waller > 1)
    throw ConfigError("Debye-Waller factor must lie in (0, 1]");
  if (purcell < 0) throw ConfigError("enhancement factor must be non-negative");
  return (1.0 - debye_waller) * gamma_r + purcell * debye_waller * gamma_r;
}

// Fidelity left after excited-state dephasing across all emission periods.
inline double fidelity_phonon(int photons, double dephasing_rate, double gamma_eff) {
  if (photons < 0) throw ConfigError("photon count must be non-negative");
  require_finite(dephasing_rate, "dephasing rate");
  require_finite(gamma_eff, "effective radiative rate");
  if (dephasing_rate < 0) throw ConfigError("dephasing rate must be non-negative");
  if (gamma_eff <= 0) throw NonPositiveRate("effective radiative rate must be positive");
  return detail::clamp01(1.0 - photons * dephasing_rate / (gamma_eff + 2.0 * dephasing_rate));
}

// Fidelity left after square-pulse excitation errors: stimulated emission
// on the driven line and leakage into the detuned line, per photon.
inline double fidelity_excitation(int photons, double gamma_eff, double splitting_rad_ns) {
  if (photons < 0) throw ConfigError("photon count must be non-negative");
  require_finite(gamma_eff, "effective radiative rate");
  require_finite(splitting_rad_ns, "line splitting");
  if (gamma_eff <= 0) throw NonPositiveRate("effective radiative rate must be positive");
  if (splitting_rad_ns <= 0) throw ConfigError("line splitting must be positive");
  return detail::clamp01(1.0 -
                         photons * (detail::sqrt3 * pi / 8.0) * gamma_eff / splitting_rad_ns);
}

// Probability that one round of excitation of the driven line ends with a
// sharp-line photon rather than sideband emission or a shelving decay.
inline double zpl_emission_prob(const RateSet& r, double debye_waller, double purcell) {
  validate_rates(r);
  require_finite(debye_waller, "Debye-Waller factor");
  require_finite(purcell, "enhancement factor");
  if (debye_waller <= 0 || debye_waller > 1)
    throw ConfigError("Debye-Waller factor must lie in (0, 1]");
  if (purcell < 0) throw ConfigError("enhancement factor must be non-negative");
  double sharp = purcell * debye_waller * r.gamma_r;
  return sharp / ((1.0 - debye_waller) * r.gamma_r + sharp + r.gamma_2 + r.gamma_2p);
}

// Success probability of keeping every photon in the sharp line.
inline double fidelity_branching(int photons, double p_line) {
  if (photons < 1) throw ConfigError("photon count must be at least 1");
  require_finite(p_line, "line emission probability");
  if (p_line < 0 || p_line > 1)
    throw ConfigError("line emission probability must lie in [0, 1]");
  return std::pow(p_line, photons);
}

// Square pulse that drives the resonant line through half a rotation while
// the detuned line completes a full one.
inline double pi_pulse_duration(double splitting_rad_ns) {
  require_finite(splitting_rad_ns, "line splitting");
  if (splitting_rad_ns <= 0) throw ConfigError("line splitting must be positive");
  return detail::sqrt3 * pi / splitting_rad_ns;
}

struct FidelityBudget {
  double phonon = 1.0;
  double excitation = 1.0;
  double branching = 1.0;
  double total = 1.0;
  double gamma_eff = 0.0;   // 1/ns
  double pi_pulse_ns = 0.0;
};

inline FidelityBudget fidelity_budget(const ProtocolConfig& c) {
  validate_protocol(c);
  FidelityBudget b;
  b.gamma_eff = purcell_rate(c.rates.gamma_r, c.debye_waller, c.purcell);
  b.pi_pulse_ns = pi_pulse_duration(c.splitting_rad_ns);
  b.phonon = fidelity_phonon(c.photons, c.dephasing_rate, b.gamma_eff);
  b.excitation = fidelity_excitation(c.photons, b.gamma_eff, c.splitting_rad_ns);
  b.branching =
      fidelity_branching(c.photons, zpl_emission_prob(c.rates, c.debye_waller, c.purcell));
  b.total = b.phonon * b.excitation * b.branching;
  return b;
}

// Search domain for the cavity enhancement factor.
inline constexpr double purcell_domain_lo = 1.0;
inline constexpr double purcell_domain_hi = 1e5;

struct PurcellOptimum {
  double purcell = purcell_domain_lo;
  FidelityBudget budget;
  bool interior = false;  // false flags a maximum sitting on the domain edge
};

// Best total fidelity over the enhancement domain: coarse log-spaced scan
// to bracket the peak, then golden-section refinement to 1e-6 relative.
inline PurcellOptimum optimize_purcell(const ProtocolConfig& c) {
  validate_protocol(c);
  auto total_at = [&c](double p) {
    ProtocolConfig probe = c;
    probe.purcell = p;
    return fidelity_budget(probe).total;
  };

  const int n = 241;
  const double ulo = std::log(purcell_domain_lo), uhi = std::log(purcell_domain_hi);
  auto grid_u = [&](int i) { return ulo + (uhi - ulo) * double(i) / double(n - 1); };
  int best = 0;
  double best_f = -1.0;
  for (int i = 0; i < n; ++i) {
    double f = total_at(std::exp(grid_u(i)));
    if (f > best_f) {
      best_f = f;
      best = i;
    }
  }

  double a = grid_u(best > 0 ? best - 1 : 0);
  double b = grid_u(best < n - 1 ? best + 1 : n - 1);
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  double f1 = total_at(std::exp(x1)), f2 = total_at(std::exp(x2));
  while (b - a > 1e-7) {  // log spacing, so this is relative in the factor itself
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = total_at(std::exp(x2));
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = total_at(std::exp(x1));
    }
  }

  PurcellOptimum out;
  out.purcell = std::exp(f1 > f2 ? x1 : x2);
  // the domain edges compete as candidates of their own
  for (double edge : {purcell_domain_lo, purcell_domain_hi})
    if (total_at(edge) > total_at(out.purcell)) out.purcell = edge;
  ProtocolConfig at = c;
  at.purcell = out.purcell;
  out.budget = fidelity_budget(at);
  out.interior = out.purcell > purcell_domain_lo * (1.0 + 1e-5) &&
                 out.purcell < purcell_domain_hi * (1.0 - 1e-5);
  return out;
}

struct PurcellRequirement {
  bool feasible = false;
  double purcell = std::numeric_limits<double>::quiet_NaN();
  FidelityBudget budget;  // at the returned factor; at the optimum when infeasible
};

// Smallest enhancement factor reaching the target total fidelity, found by
// bisection on the rising flank below the optimum.
inline PurcellRequirement min_purcell(const ProtocolConfig& c, double target) {
  validate_protocol(c);
  require_finite(target, "target fidelity");
  if (target <= 0 || target >= 1) throw ConfigError("target fidelity must lie in (0, 1)");

  PurcellOptimum opt = optimize_purcell(c);
  PurcellRequirement out;
  if (opt.budget.total < target) {
    out.budget = opt.budget;  // report the best achievable instead
    return out;
  }
  auto total_at = [&c](double p) {
    ProtocolConfig probe = c;
    probe.purcell = p;
    return fidelity_budget(probe).total;
  };
  out.feasible = true;
  if (total_at(purcell_domain_lo) >= target) {
    out.purcell = purcell_domain_lo;
  } else {
    double lo = purcell_domain_lo, hi = opt.purcell;
    while (hi - lo > 1e-9 * hi) {
      double mid = std::sqrt(lo * hi);
      (total_at(mid) >= target ? hi : lo) = mid;
    }
    out.purcell = hi;
  }
  ProtocolConfig at = c;
  at.purcell = out.purcell;
  out.budget = fidelity_budget(at);
  return out;
}

// Ideal (error-free) run of the emission protocol, tracked as a state
// vector over the spin and one occupation mode per time bin. Basis index:
// bit 0 is the spin (0 = the bystander state, 1 = the driven state), bit
// 1+j is bin j, with bins ordered early(0), late(0), early(1), late(1), ...
// Each period emits into its early bin from the driven state, swaps the
// spin with a microwave pi pulse, emits into its late bin, then applies
// the configured final gate.
inline Eigen::VectorXcd simulate_ideal_protocol(int photons, FinalGate gate) {
  if (photons < 1 || photons > 6)
    throw ConfigError("photon count must lie between 1 and 6 for the state-vector model");
  const int bins = 2 * photons;
  const Eigen::Index dim = Eigen::Index(1) << (bins + 1);
  const double rs = std::sqrt(0.5);
  Eigen::VectorXcd v = Eigen::VectorXcd::Zero(dim);
  v[0] = v[1] = rs;  // equal superposition of the two spin states, all bins empty

  auto emit = [&](int bin) {
    Eigen::VectorXcd w = Eigen::VectorXcd::Zero(dim);
    const Eigen::Index mask = Eigen::Index(1) << (1 + bin);
    for (Eigen::Index i = 0; i < dim; ++i) {
      if (v[i] == cd(0.0)) continue;
      w[(i & 1) ? (i | mask) : i] += v[i];
    }
    v = std::move(w);
  };
  auto swap_spin = [&] {
    for (Eigen::Index i = 0; i < dim; i += 2) std::swap(v[i], v[i + 1]);
  };
  auto hadamard_spin = [&] {
    for (Eigen::Index i = 0; i < dim; i += 2) {
      cd on_bystander = v[i], on_driven = v[i + 1];
      v[i] = (on_bystander + on_driven) * rs;
      v[i + 1] = (on_bystander - on_driven) * rs;
    }
  };

  for (int k = 0; k < photons; ++k) {
    emit(2 * k);
    swap_spin();
    emit(2 * k + 1);
    if (gate == FinalGate::x)
      swap_spin();
    else
      hadamard_spin();
  }
  return v;
}

}  // namespace vsi
