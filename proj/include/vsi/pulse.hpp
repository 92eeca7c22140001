#pragma once

// Pulse sequences and the canned experiments built from them: resonant
// decay traces, delayed-pulse shelving readout, repump contrast, spin
// pumping, plus the elementary fit routines (single exponential, Rabi
// fringe), shot noise, and the CSV / JSON trace formats.
//
// The generic sequence runner propagates the full 36-dimensional
// Liouvillian so it supports every drive, including microwaves. The
// experiment simulators only ever need populations and one optical
// coherence, so they run on the exact reduced generator instead; both
// use the same recording discretization (left-edge bins, trapezoid
// windows with window/50 substeps).

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "common.hpp"
#include "liouville.hpp"
#include "model.hpp"

namespace vsi {

// Canonical experiment timings. Initialization uses a moderate
// off-resonant pump long enough to reach its steady mixture, followed
// by a dark interval that lets the short-lived shelf drain into the
// ground manifolds.
inline constexpr double prep_power_nW = 30e3;          // 30 uW repump
inline constexpr double prep_duration_ns = 40e3;       // 40 us
inline constexpr double relax_duration_ns = 2e3;       // 2 us dark settle
inline constexpr double strong_prep_power_nW = 4e6;    // 4 mW shelving prep
inline constexpr double strong_prep_duration_ns = 4e3; // 4 us
inline constexpr double delayed_window_ns = 100.0;     // integrated readout window
inline constexpr double delayed_readout_power_nW = 20.0;
inline constexpr int window_substeps = 50;

struct Recording {
  enum Kind { none, time_resolved, integrated };
  Kind kind = none;
  double bin_ns = 0.0;     // time_resolved: sample spacing, must divide the duration
  double window_ns = 0.0;  // integrated: window from segment start, at most the duration
};

struct PulseSegment {
  std::string label;
  DriveParams drive;
  double duration_ns = 0.0;
  Recording record;
};

struct PulseSequence {
  std::vector<PulseSegment> segments;
};

struct ExperimentTrace {
  std::vector<double> time_ns;
  std::vector<double> signal;
};

inline void validate_trace(const ExperimentTrace& tr) {
  if (tr.time_ns.size() != tr.signal.size())
    throw ConfigError("trace time and signal lengths differ");
  for (std::size_t i = 0; i < tr.time_ns.size(); ++i) {
    require_finite(tr.time_ns[i], "trace time");
    require_finite(tr.signal[i], "trace signal");
    if (i > 0 && tr.time_ns[i] <= tr.time_ns[i - 1])
      throw ConfigError("trace timestamps must be strictly increasing");
  }
}

inline void validate_segment(const PulseSegment& s) {
  validate_drive(s.drive);
  require_finite(s.duration_ns, "segment duration");
  if (s.duration_ns < 0) throw ConfigError("segment duration must be non-negative");
  if (s.record.kind == Recording::time_resolved) {
    if (!(s.record.bin_ns > 0)) throw ConfigError("time-resolved recording needs bin_ns > 0");
    double n = s.duration_ns / s.record.bin_ns;
    if (std::abs(n - std::round(n)) > 1e-6 * std::max(1.0, n))
      throw ConfigError("bin_ns must divide the segment duration");
  } else if (s.record.kind == Recording::integrated) {
    if (!(s.record.window_ns > 0)) throw ConfigError("integrated recording needs window_ns > 0");
    if (s.record.window_ns > s.duration_ns * (1 + 1e-9))
      throw ConfigError("integration window exceeds the segment duration");
  }
}

// ---- segment builders --------------------------------------------------

inline PulseSegment dark_segment(double duration_ns, std::string label = "dark") {
  PulseSegment s;
  s.label = std::move(label);
  s.duration_ns = duration_ns;
  return s;
}

inline PulseSegment offres_segment(double power_nW, double duration_ns,
                                   std::string label = "repump") {
  PulseSegment s;
  s.label = std::move(label);
  s.drive = offres_drive(power_nW);
  s.duration_ns = duration_ns;
  return s;
}

inline PulseSegment resonant_segment(Transition t, double power_nW, double duration_ns,
                                     std::string label = "resonant") {
  PulseSegment s;
  s.label = std::move(label);
  s.drive = resonant_drive(t, power_nW);
  s.duration_ns = duration_ns;
  return s;
}

// Microwave pi rotation between the ground manifolds: the coupling is
// chosen so the population transfer completes in exactly duration_ns.
inline PulseSegment mw_pi_segment(double duration_ns = 100.0, std::string label = "mw-pi") {
  PulseSegment s;
  s.label = std::move(label);
  s.drive.omega_mw = pi / (2.0 * duration_ns);
  s.duration_ns = duration_ns;
  return s;
}

// Short saturating excitation pulse followed by a recorded dark decay,
// for measuring the excited-state lifetime directly.
inline PulseSequence es_lifetime_sequence(Transition t, double pulse_ns = 1.5,
                                          double record_ns = 60.0, double bin_ns = 0.5) {
  PulseSegment pulse;
  pulse.label = "excite";
  pulse.drive.target = t == Transition::o1 ? DriveTarget::o1 : DriveTarget::o2;
  pulse.drive.omega_laser = pi / (2.0 * pulse_ns);  // one pi rotation over the pulse
  pulse.drive.power_nW = 20.0;
  pulse.duration_ns = pulse_ns;
  PulseSegment decay = dark_segment(record_ns, "decay");
  decay.record.kind = Recording::time_resolved;
  decay.record.bin_ns = bin_ns;
  return {{pulse, decay}};
}

// ---- generic runner (full Liouvillian) ---------------------------------

struct SequenceResult {
  ExperimentTrace trace;  // absolute time since sequence start
  Mat6 final_state;
};

inline SequenceResult run_sequence(const ModelParams& m, const PulseSequence& seq,
                                   const Mat6& rho0) {
  check_density(rho0);
  SequenceResult out;
  Mat6 rho = rho0;
  double t_abs = 0.0;
  for (const auto& seg : seq.segments) {
    validate_segment(seg);
    if (seg.duration_ns == 0) continue;
    Eigen::MatrixXcd L = build_liouvillian(m, seg.drive);
    RateSet r = m.rates_for_power(seg.drive.power_nW);
    if (seg.record.kind == Recording::time_resolved) {
      auto nbins = static_cast<long>(std::round(seg.duration_ns / seg.record.bin_ns));
      Eigen::MatrixXcd E = (L * seg.record.bin_ns).exp();
      Eigen::VectorXcd v = vec6(rho);
      for (long k = 0; k < nbins; ++k) {
        out.trace.time_ns.push_back(t_abs + double(k) * seg.record.bin_ns);
        out.trace.signal.push_back(pl_signal(unvec6(v), r));
        v = E * v;
      }
      rho = detail::enforce_physical(unvec6(v), 1e-9);
    } else if (seg.record.kind == Recording::integrated) {
      double dt = seg.record.window_ns / window_substeps;
      Eigen::MatrixXcd E = (L * dt).exp();
      Eigen::VectorXcd v = vec6(rho);
      double integral = 0.0;
      for (int k = 0; k <= window_substeps; ++k) {
        double w = (k == 0 || k == window_substeps) ? 0.5 : 1.0;
        integral += w * pl_signal(unvec6(v), r) * dt;
        if (k < window_substeps) v = E * v;
      }
      out.trace.time_ns.push_back(t_abs);
      out.trace.signal.push_back(integral);
      rho = evolve(unvec6(v), L, seg.duration_ns - seg.record.window_ns);
    } else {
      rho = evolve(rho, L, seg.duration_ns);
    }
    t_abs += seg.duration_ns;
  }
  validate_trace(out.trace);
  out.final_state = rho;
  return out;
}

// ---- reduced-path experiment engine ------------------------------------

namespace detail {

using Vec8 = ReducedGenerator::Vec8;
using Mat8 = Eigen::Matrix<double, 8, 8>;

inline Vec8 thermal_gs8() {
  Vec8 x = Vec8::Zero();
  x[gs_half] = x[gs_three_half] = 0.5;
  return x;
}

// Switching drives drops any coherence left in the old slot; see the
// reduced-generator notes for why that is exact for populations.
inline Vec8 rebase(const ReducedGenerator& from, const ReducedGenerator& to, const Vec8& x) {
  return to.project(from.embed(x));
}

// Canonical initialization: repump to the off-resonant steady mixture,
// then let the shelves drain in the dark.
inline std::pair<Vec8, ReducedGenerator> prepped_state(const ModelParams& m) {
  ReducedGenerator pump = ReducedGenerator::build(m, offres_drive(prep_power_nW));
  ReducedGenerator dark = ReducedGenerator::build(m, dark_drive());
  Vec8 x = pump.propagator(prep_duration_ns) * thermal_gs8();
  x = dark.propagator(relax_duration_ns) * rebase(pump, dark, x);
  return {x, dark};
}

inline ExperimentTrace binned_readout(const ReducedGenerator& g, Vec8 x, double duration_ns,
                                      double bin_ns) {
  auto nbins = static_cast<long>(std::round(duration_ns / bin_ns));
  if (nbins < 1) throw ConfigError("readout needs at least one bin");
  Mat8 E = g.propagator(bin_ns);
  ExperimentTrace tr;
  tr.time_ns.reserve(nbins);
  tr.signal.reserve(nbins);
  for (long k = 0; k < nbins; ++k) {
    tr.time_ns.push_back(double(k) * bin_ns);
    tr.signal.push_back(g.pl(x));
    x = E * x;
  }
  return tr;
}

inline double integrated_readout(const ReducedGenerator& g, Vec8 x, double window_ns) {
  double dt = window_ns / window_substeps;
  Mat8 E = g.propagator(dt);
  double integral = 0.0;
  for (int k = 0; k <= window_substeps; ++k) {
    double w = (k == 0 || k == window_substeps) ? 0.5 : 1.0;
    integral += w * g.pl(x) * dt;
    if (k < window_substeps) x = E * x;
  }
  return integral;
}

}  // namespace detail

// Resonant decay: initialize to the pumped ground mixture, then drive
// one line and record the photoluminescence in time bins (times are
// relative to the readout start).
inline ExperimentTrace simulate_resonant_decay(const ModelParams& m, double power_nW,
                                               Transition t, double duration_ns = 30e3,
                                               double bin_ns = 20.0) {
  auto [x, dark] = detail::prepped_state(m);
  ReducedGenerator readout = ReducedGenerator::build(m, resonant_drive(t, power_nW));
  return detail::binned_readout(readout, detail::rebase(dark, readout, x), duration_ns, bin_ns);
}

struct DelayedPulseData {
  std::vector<double> delay_ns;
  std::vector<double> counts_o1;
  std::vector<double> counts_o2;
};

inline void validate_delayed(const DelayedPulseData& d) {
  if (d.delay_ns.size() != d.counts_o1.size() || d.delay_ns.size() != d.counts_o2.size())
    throw ConfigError("delayed-pulse columns have different lengths");
  for (std::size_t i = 0; i < d.delay_ns.size(); ++i) {
    require_finite(d.delay_ns[i], "delay");
    require_finite(d.counts_o1[i], "counts");
    require_finite(d.counts_o2[i], "counts");
    if (d.delay_ns[i] < 0) throw ConfigError("delays must be non-negative");
    if (i > 0 && d.delay_ns[i] <= d.delay_ns[i - 1])
      throw ConfigError("delays must be strictly increasing");
  }
}

// Delayed-pulse shelving readout: a hard off-resonant pulse loads the
// shelves, then after a variable dark delay each line is probed and the
// first 100 ns of photoluminescence integrated. Both lines are read
// from the same prepared state, so the two columns share one physical
// amplitude.
inline DelayedPulseData simulate_delayed_pulse(const ModelParams& m,
                                               const std::vector<double>& delays_ns) {
  DelayedPulseData out;
  out.delay_ns = delays_ns;
  out.counts_o1.resize(delays_ns.size());
  out.counts_o2.resize(delays_ns.size());
  validate_delayed(out);
  ReducedGenerator pump = ReducedGenerator::build(m, offres_drive(strong_prep_power_nW));
  ReducedGenerator dark = ReducedGenerator::build(m, dark_drive());
  ReducedGenerator read1 = ReducedGenerator::build(
      m, resonant_drive(Transition::o1, delayed_readout_power_nW));
  ReducedGenerator read2 = ReducedGenerator::build(
      m, resonant_drive(Transition::o2, delayed_readout_power_nW));
  detail::Vec8 x = pump.propagator(strong_prep_duration_ns) * detail::thermal_gs8();
  x = detail::rebase(pump, dark, x);
  double t_dark = 0.0;
  for (std::size_t i = 0; i < delays_ns.size(); ++i) {
    x = dark.propagator(delays_ns[i] - t_dark) * x;
    t_dark = delays_ns[i];
    out.counts_o1[i] = detail::integrated_readout(read1, detail::rebase(dark, read1, x),
                                                  delayed_window_ns);
    out.counts_o2[i] = detail::integrated_readout(read2, detail::rebase(dark, read2, x),
                                                  delayed_window_ns);
  }
  return out;
}

// Repump contrast: polarize by briefly pumping one line, then repump
// off-resonantly for a variable time and report the normalized
// ground-state imbalance (p_half - p_three_half)/(p_half + p_three_half)
// after a dark settle.
inline std::vector<double> simulate_repump_contrast(const ModelParams& m,
                                                    const std::vector<double>& repump_ns,
                                                    Transition init_line,
                                                    double repump_power_nW = prep_power_nW) {
  for (std::size_t i = 0; i < repump_ns.size(); ++i) {
    require_finite(repump_ns[i], "repump time");
    if (repump_ns[i] < 0) throw ConfigError("repump times must be non-negative");
    if (i > 0 && repump_ns[i] <= repump_ns[i - 1])
      throw ConfigError("repump times must be strictly increasing");
  }
  ReducedGenerator init = ReducedGenerator::build(
      m, resonant_drive(init_line, delayed_readout_power_nW));
  ReducedGenerator pump = ReducedGenerator::build(m, offres_drive(repump_power_nW));
  ReducedGenerator dark = ReducedGenerator::build(m, dark_drive());
  detail::Vec8 x = init.propagator(500.0) * detail::thermal_gs8();  // 0.5 us polarizing pulse
  x = dark.propagator(relax_duration_ns) * detail::rebase(init, dark, x);
  x = detail::rebase(dark, pump, x);
  detail::Mat8 settle = dark.propagator(relax_duration_ns);
  std::vector<double> contrast;
  contrast.reserve(repump_ns.size());
  double t_pump = 0.0;
  for (double T : repump_ns) {
    x = pump.propagator(T - t_pump) * x;
    t_pump = T;
    detail::Vec8 settled = settle * detail::rebase(pump, dark, x);
    double ph = settled[gs_half], pt = settled[gs_three_half];
    contrast.push_back((ph - pt) / (ph + pt));
  }
  return contrast;
}

// Spin pumping: from the canonical prepared mixture, drive one line for
// a time T and return the ground-state weights (p_half, p_three_half)
// normalized over the ground manifolds.
inline std::pair<double, double> simulate_spin_pumping(const ModelParams& m, double T_ns,
                                                       double power_nW, Transition t) {
  require_finite(T_ns, "pumping time");
  if (T_ns < 0) throw ConfigError("pumping time must be non-negative");
  auto [x, dark] = detail::prepped_state(m);
  ReducedGenerator drive = ReducedGenerator::build(m, resonant_drive(t, power_nW));
  detail::Vec8 out = drive.propagator(T_ns) * detail::rebase(dark, drive, x);
  double ph = out[gs_half], pt = out[gs_three_half];
  return {ph / (ph + pt), pt / (ph + pt)};
}

// ---- elementary fits ---------------------------------------------------

struct ExponentialFit {
  double amplitude;  // A in A exp(-t/tau) + B
  double tau_ns;
  double offset;
  double rms;
};

namespace detail {

// least-squares A, B for fixed tau; returns the summed squared error
inline double exp_lsq(const std::vector<double>& t, const std::vector<double>& y, double tau,
                      double* A, double* B) {
  double se = 0, s1 = 0, see = 0, sy = 0, sye = 0;
  const auto n = double(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    double e = std::exp(-t[i] / tau);
    se += e;
    see += e * e;
    sy += y[i];
    sye += y[i] * e;
  }
  s1 = n;
  double det = see * s1 - se * se;
  if (std::abs(det) < 1e-300) {
    *A = 0;
    *B = sy / s1;
  } else {
    *A = (sye * s1 - sy * se) / det;
    *B = (see * sy - se * sye) / det;
  }
  double sse = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    double r = y[i] - (*A * std::exp(-t[i] / tau) + *B);
    sse += r * r;
  }
  return sse;
}

template <class F>
double golden_min(F&& f, double lo, double hi, double rel_tol) {
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double c = b - phi * (b - a), d = a + phi * (b - a);
  double fc = f(c), fd = f(d);
  while ((b - a) > rel_tol * (std::abs(a) + std::abs(b))) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace detail

// Fits y = A exp(-t/tau) + B by profiling out the linear pair and
// searching tau on a log grid with golden-section refinement. Constant
// or non-decaying data raises FitDiverged.
inline ExponentialFit fit_single_exponential(const std::vector<double>& t,
                                             const std::vector<double>& y) {
  if (t.size() != y.size() || t.size() < 4) throw ConfigError("exponential fit needs >= 4 points");
  ExperimentTrace probe{t, y};
  validate_trace(probe);
  double span = t.back() - t.front();
  double mean = 0;
  for (double v : y) mean += v;
  mean /= double(y.size());
  double var = 0;
  for (double v : y) var += (v - mean) * (v - mean);
  if (var <= 1e-24 * std::max(1.0, mean * mean) * double(y.size()))
    throw FitDiverged("signal is constant");

  double lo = std::log(span * 1e-3), hi = std::log(span * 20.0);
  double best_log_tau = lo, best_sse = std::numeric_limits<double>::infinity();
  double A, B;
  for (int i = 0; i < 120; ++i) {
    double lt = lo + (hi - lo) * double(i) / 119.0;
    double sse = detail::exp_lsq(t, y, std::exp(lt), &A, &B);
    if (sse < best_sse) {
      best_sse = sse;
      best_log_tau = lt;
    }
  }
  double w = (hi - lo) / 119.0;
  double log_tau = detail::golden_min(
      [&](double lt) { return detail::exp_lsq(t, y, std::exp(lt), &A, &B); },
      best_log_tau - 2 * w, best_log_tau + 2 * w, 1e-10);
  ExponentialFit fit;
  fit.tau_ns = std::exp(log_tau);
  fit.rms = std::sqrt(detail::exp_lsq(t, y, fit.tau_ns, &fit.amplitude, &fit.offset) /
                      double(t.size()));
  if (fit.amplitude <= 0)
    throw FitDiverged("signal does not decay (fitted amplitude " + fmt_g9(fit.amplitude) + ")");
  if (best_sse > (1.0 - 1e-9) * var) throw FitDiverged("no exponential component found");
  return fit;
}

struct RabiFringeFit {
  double omega;     // rad/ns
  double contrast;  // peak-to-mean modulation depth, in [0, 1] for physical data
  double mean;
  double phase;     // radians at t = 0
};

// Fits y = mean + a cos(omega t) + b sin(omega t) by profiling the
// linear triple over a frequency grid. Throws InsufficientSpan when the
// data cover less than 1.5 fringe periods at the fitted frequency.
inline RabiFringeFit fit_rabi_fringe(const std::vector<double>& t, const std::vector<double>& y) {
  if (t.size() != y.size() || t.size() < 6) throw ConfigError("fringe fit needs >= 6 points");
  ExperimentTrace probe{t, y};
  validate_trace(probe);
  double span = t.back() - t.front();
  double dt_min = span;
  for (std::size_t i = 1; i < t.size(); ++i) dt_min = std::min(dt_min, t[i] - t[i - 1]);

  auto lsq = [&](double omega, double* mean, double* a, double* b) {
    Eigen::Matrix3d M = Eigen::Matrix3d::Zero();
    Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < t.size(); ++i) {
      Eigen::Vector3d g(1.0, std::cos(omega * t[i]), std::sin(omega * t[i]));
      M += g * g.transpose();
      rhs += g * y[i];
    }
    Eigen::Vector3d sol = M.ldlt().solve(rhs);
    *mean = sol[0];
    *a = sol[1];
    *b = sol[2];
    double sse = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      double r = y[i] - (sol[0] + sol[1] * std::cos(omega * t[i]) + sol[2] * std::sin(omega * t[i]));
      sse += r * r;
    }
    return sse;
  };

  double mean = 0, a, b;
  for (double v : y) mean += v;
  mean /= double(y.size());
  double var = 0;  // SSE of the constant fit, the no-fringe baseline
  for (double v : y) var += (v - mean) * (v - mean);
  if (var <= 1e-24 * std::max(1.0, mean * mean) * double(y.size()))
    throw FitDiverged("signal is constant");
  double w_lo = 2.0 * pi / (20.0 * span), w_hi = pi / dt_min;
  double best_w = w_lo, best_sse = std::numeric_limits<double>::infinity();
  const int grid = 4000;
  for (int i = 0; i <= grid; ++i) {
    double w = w_lo * std::pow(w_hi / w_lo, double(i) / grid);
    double sse = lsq(w, &mean, &a, &b);
    if (sse < best_sse) {
      best_sse = sse;
      best_w = w;
    }
  }
  double step = std::pow(w_hi / w_lo, 1.0 / grid);
  double w_fit = detail::golden_min([&](double w) { return lsq(w, &mean, &a, &b); },
                                    best_w / (step * step), best_w * step * step, 1e-12);
  RabiFringeFit fit;
  fit.omega = w_fit;
  lsq(w_fit, &fit.mean, &a, &b);
  if (best_sse > (1.0 - 1e-6) * var) throw FitDiverged("no fringe component found");
  fit.contrast = std::sqrt(a * a + b * b) / std::abs(fit.mean);
  fit.phase = std::atan2(-b, a);
  if (span * fit.omega < 1.5 * 2.0 * pi)
    throw InsufficientSpan("data cover " + fmt_g9(span * fit.omega / (2.0 * pi)) +
                           " fringe periods, need 1.5");
  return fit;
}

// ---- shot noise --------------------------------------------------------

// Scales the trace so its maximum equals peak_counts expected photons
// and Poisson-samples every bin deterministically from the seed.
inline ExperimentTrace add_shot_noise(const ExperimentTrace& tr, double peak_counts,
                                      std::uint64_t seed) {
  validate_trace(tr);
  if (!(peak_counts > 0)) throw ConfigError("peak_counts must be positive");
  double peak = 0.0;
  for (double v : tr.signal) peak = std::max(peak, v);
  if (!(peak > 0)) throw ConfigError("cannot scale a non-positive trace to counts");
  Rng rng(seed);
  ExperimentTrace out;
  out.time_ns = tr.time_ns;
  out.signal.reserve(tr.signal.size());
  for (double v : tr.signal)
    out.signal.push_back(double(rng.poisson(std::max(0.0, v) / peak * peak_counts)));
  return out;
}

inline DelayedPulseData add_shot_noise(const DelayedPulseData& d, double peak_counts,
                                       std::uint64_t seed) {
  validate_delayed(d);
  if (!(peak_counts > 0)) throw ConfigError("peak_counts must be positive");
  double peak = 0.0;
  for (double v : d.counts_o1) peak = std::max(peak, v);
  for (double v : d.counts_o2) peak = std::max(peak, v);
  if (!(peak > 0)) throw ConfigError("cannot scale non-positive counts");
  Rng rng(seed);
  DelayedPulseData out;
  out.delay_ns = d.delay_ns;
  for (double v : d.counts_o1)
    out.counts_o1.push_back(double(rng.poisson(std::max(0.0, v) / peak * peak_counts)));
  for (double v : d.counts_o2)
    out.counts_o2.push_back(double(rng.poisson(std::max(0.0, v) / peak * peak_counts)));
  return out;
}

// ---- trace files -------------------------------------------------------

struct TraceMeta {
  std::string experiment;
  double power_nW = 0.0;
  std::string transition;  // "O1", "O2" or "both"
  std::uint64_t seed = 0;
  double peak_counts = 0.0;  // 0 means noiseless
};

namespace detail {

inline std::string sidecar_path(const std::string& csv_path) {
  if (csv_path.size() > 4 && csv_path.substr(csv_path.size() - 4) == ".csv")
    return csv_path.substr(0, csv_path.size() - 4) + ".meta.json";
  return csv_path + ".meta.json";
}

inline std::vector<std::vector<double>> read_csv_columns(const std::string& path,
                                                         const std::string& header) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("'" + path + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header)
    throw ConfigError("'" + path + "' has header '" + line + "', expected '" + header + "'");
  auto ncols = std::size_t(std::count(header.begin(), header.end(), ',')) + 1;
  std::vector<std::vector<double>> cols(ncols);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t c = 0;
    while (std::getline(ss, cell, ',')) {
      if (c >= ncols) break;
      char* end = nullptr;
      double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0')
        throw ConfigError("'" + path + "' line " + std::to_string(lineno) + ": bad number '" +
                          cell + "'");
      cols[c++].push_back(v);
    }
    if (c != ncols)
      throw ConfigError("'" + path + "' line " + std::to_string(lineno) + ": expected " +
                        std::to_string(ncols) + " columns");
  }
  return cols;
}

}  // namespace detail

inline void write_trace_csv(const std::string& path, const ExperimentTrace& tr) {
  validate_trace(tr);
  std::ofstream out(path, std::ios::binary);  // binary keeps line endings LF everywhere
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << "time_ns,signal\n";
  for (std::size_t i = 0; i < tr.time_ns.size(); ++i)
    out << fmt_g9(tr.time_ns[i]) << "," << fmt_g9(tr.signal[i]) << "\n";
}

inline ExperimentTrace read_trace_csv(const std::string& path) {
  auto cols = detail::read_csv_columns(path, "time_ns,signal");
  ExperimentTrace tr{std::move(cols[0]), std::move(cols[1])};
  validate_trace(tr);
  return tr;
}

inline void write_delayed_csv(const std::string& path, const DelayedPulseData& d) {
  validate_delayed(d);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << "delay_ns,counts_o1,counts_o2\n";
  for (std::size_t i = 0; i < d.delay_ns.size(); ++i)
    out << fmt_g9(d.delay_ns[i]) << "," << fmt_g9(d.counts_o1[i]) << ","
        << fmt_g9(d.counts_o2[i]) << "\n";
}

inline DelayedPulseData read_delayed_csv(const std::string& path) {
  auto cols = detail::read_csv_columns(path, "delay_ns,counts_o1,counts_o2");
  DelayedPulseData d{std::move(cols[0]), std::move(cols[1]), std::move(cols[2])};
  validate_delayed(d);
  return d;
}

inline void write_trace_meta(const std::string& csv_path, const TraceMeta& meta) {
  detail::njson j;
  j["experiment"] = meta.experiment;
  j["power_nW"] = meta.power_nW;
  j["transition"] = meta.transition;
  j["seed"] = meta.seed;
  j["peak_counts"] = meta.peak_counts;
  std::ofstream out(detail::sidecar_path(csv_path), std::ios::binary);
  if (!out) throw ConfigError("cannot write sidecar for '" + csv_path + "'");
  out << j.dump(2) << "\n";
}

inline TraceMeta read_trace_meta(const std::string& csv_path) {
  std::string path = detail::sidecar_path(csv_path);
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  detail::njson j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("sidecar '" + path + "': " + e.what());
  }
  detail::check_keys(j, {"experiment", "power_nW", "transition", "seed", "peak_counts"},
                     "trace sidecar");
  TraceMeta meta;
  try {
    meta.experiment = j.at("experiment").get<std::string>();
    meta.power_nW = detail::as_number(j.at("power_nW"), "power_nW", "trace sidecar");
    meta.transition = j.at("transition").get<std::string>();
    meta.seed = j.at("seed").get<std::uint64_t>();
    meta.peak_counts = detail::as_number(j.at("peak_counts"), "peak_counts", "trace sidecar");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("sidecar '") + path + "': " + e.what());
  }
  return meta;
}

// ---- sequence files ----------------------------------------------------

namespace detail {

inline std::string target_name(DriveTarget t) {
  switch (t) {
    case DriveTarget::o1: return "O1";
    case DriveTarget::o2: return "O2";
    default: return "none";
  }
}

inline DriveTarget target_from_name(const std::string& s) {
  if (s == "O1") return DriveTarget::o1;
  if (s == "O2") return DriveTarget::o2;
  if (s == "none") return DriveTarget::none;
  throw ConfigError("unknown drive target '" + s + "'");
}

inline double opt_number(const njson& obj, const char* key, double fallback) {
  if (!obj.contains(key)) return fallback;
  return as_number(obj.at(key), key, "sequence");
}

}  // namespace detail

inline detail::njson sequence_to_json(const PulseSequence& seq) {
  detail::njson j;
  j["segments"] = detail::njson::array();
  for (const auto& s : seq.segments) {
    validate_segment(s);
    detail::njson seg;
    seg["label"] = s.label;
    seg["duration_ns"] = s.duration_ns;
    detail::njson drv;
    drv["target"] = detail::target_name(s.drive.target);
    drv["omega_laser"] = s.drive.omega_laser;
    drv["delta_laser"] = s.drive.delta_laser;
    drv["w_offres"] = s.drive.w_offres;
    drv["omega_mw"] = s.drive.omega_mw;
    drv["delta_mw"] = s.drive.delta_mw;
    drv["power_nW"] = s.drive.power_nW;
    seg["drive"] = drv;
    detail::njson rec;
    rec["kind"] = s.record.kind == Recording::none
                      ? "none"
                      : (s.record.kind == Recording::time_resolved ? "time_resolved"
                                                                   : "integrated");
    if (s.record.kind == Recording::time_resolved) rec["bin_ns"] = s.record.bin_ns;
    if (s.record.kind == Recording::integrated) rec["window_ns"] = s.record.window_ns;
    seg["record"] = rec;
    j["segments"].push_back(seg);
  }
  return j;
}

// Unknown keys are rejected everywhere; numeric drive fields may be
// omitted and default to zero.
inline PulseSequence sequence_from_json(const detail::njson& j) try {
  if (!j.is_object() || !j.contains("segments"))
    throw ConfigError("sequence file needs a 'segments' array");
  for (const auto& item : j.items())
    if (item.key() != "segments") throw ConfigError("unknown key '" + item.key() + "' in sequence");
  PulseSequence seq;
  for (const auto& sj : j.at("segments")) {
    for (const auto& item : sj.items())
      if (item.key() != "label" && item.key() != "duration_ns" && item.key() != "drive" &&
          item.key() != "record")
        throw ConfigError("unknown key '" + item.key() + "' in sequence segment");
    PulseSegment s;
    if (sj.contains("label")) s.label = sj.at("label").get<std::string>();
    if (!sj.contains("duration_ns")) throw ConfigError("segment needs duration_ns");
    s.duration_ns = detail::as_number(sj.at("duration_ns"), "duration_ns", "sequence");
    if (sj.contains("drive")) {
      const auto& dj = sj.at("drive");
      for (const auto& item : dj.items())
        if (item.key() != "target" && item.key() != "omega_laser" && item.key() != "delta_laser" &&
            item.key() != "w_offres" && item.key() != "omega_mw" && item.key() != "delta_mw" &&
            item.key() != "power_nW")
          throw ConfigError("unknown key '" + item.key() + "' in segment drive");
      if (dj.contains("target"))
        s.drive.target = detail::target_from_name(dj.at("target").get<std::string>());
      s.drive.omega_laser = detail::opt_number(dj, "omega_laser", 0.0);
      s.drive.delta_laser = detail::opt_number(dj, "delta_laser", 0.0);
      s.drive.w_offres = detail::opt_number(dj, "w_offres", 0.0);
      s.drive.omega_mw = detail::opt_number(dj, "omega_mw", 0.0);
      s.drive.delta_mw = detail::opt_number(dj, "delta_mw", 0.0);
      s.drive.power_nW = detail::opt_number(dj, "power_nW", 0.0);
    }
    if (sj.contains("record")) {
      const auto& rj = sj.at("record");
      for (const auto& item : rj.items())
        if (item.key() != "kind" && item.key() != "bin_ns" && item.key() != "window_ns")
          throw ConfigError("unknown key '" + item.key() + "' in segment record");
      std::string kind = rj.contains("kind") ? rj.at("kind").get<std::string>() : "none";
      if (kind == "none")
        s.record.kind = Recording::none;
      else if (kind == "time_resolved")
        s.record.kind = Recording::time_resolved;
      else if (kind == "integrated")
        s.record.kind = Recording::integrated;
      else
        throw ConfigError("unknown recording kind '" + kind + "'");
      s.record.bin_ns = detail::opt_number(rj, "bin_ns", 0.0);
      s.record.window_ns = detail::opt_number(rj, "window_ns", 0.0);
    }
    validate_segment(s);
    seq.segments.push_back(std::move(s));
  }
  return seq;
} catch (const nlohmann::json::exception& e) {
  throw ConfigError(std::string("sequence: ") + e.what());
}

inline PulseSequence load_sequence(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open sequence file '" + path + "'");
  detail::njson j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("sequence file '" + path + "': " + e.what());
  }
  return sequence_from_json(j);
}

inline void save_sequence(const std::string& path, const PulseSequence& seq) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write sequence file '" + path + "'");
  out << sequence_to_json(seq).dump(2) << "\n";
}

}  // namespace vsi
