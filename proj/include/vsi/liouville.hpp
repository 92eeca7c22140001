#pragma once

// Lindblad engine for the six-level center: rotating-frame Hamiltonian,
// column-stacked Liouvillian, three propagation routes (matrix
// exponential, eigendecomposition, adaptive RK45), steady states, and
// an exact reduced generator for drive configurations that close on
// populations plus a single optical coherence.

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include <array>
#include <cmath>
#include <vector>

#include "common.hpp"
#include "model.hpp"

namespace vsi {

// Laser coupling strength per sqrt(nW) of resonant power, and
// off-resonant pump rate per nW. Both are effective sample-dependent
// constants; these defaults reproduce the reference saturation and
// repump behavior (spin pumping complete within tens of us at a few nW
// resonant, ground-state reshuffling within tens of us at tens of uW
// off-resonant).
inline constexpr double c_omega_rabi = 4.0e-3;  // rad/ns per sqrt(nW)
inline constexpr double c_w_offres = 1.0e-8;    // 1/ns per nW

enum class DriveTarget { none, o1, o2 };

// One drive configuration. Power is what hits the emitter and controls
// MS2 deshelving regardless of the drive flavor; the coherent laser and
// the incoherent off-resonant pump are mutually exclusive.
struct DriveParams {
  DriveTarget target = DriveTarget::none;
  double omega_laser = 0.0;  // resonant Rabi coupling (rad/ns)
  double delta_laser = 0.0;  // laser detuning from the addressed line (rad/ns)
  double w_offres = 0.0;     // incoherent pump rate on both lines (1/ns)
  double omega_mw = 0.0;     // microwave coupling between ground manifolds (rad/ns)
  double delta_mw = 0.0;     // microwave detuning (rad/ns)
  double power_nW = 0.0;     // optical power at the emitter (nW), drives deshelving
};

inline void validate_drive(const DriveParams& d) {
  require_finite(d.omega_laser, "omega_laser");
  require_finite(d.delta_laser, "delta_laser");
  require_finite(d.w_offres, "w_offres");
  require_finite(d.omega_mw, "omega_mw");
  require_finite(d.delta_mw, "delta_mw");
  require_finite(d.power_nW, "power_nW");
  if (d.omega_laser < 0 || d.w_offres < 0 || d.power_nW < 0)
    throw ConfigError("drive strengths must be non-negative");
  if (d.omega_laser > 0 && d.target == DriveTarget::none)
    throw ConfigError("laser drive needs a target line");
  if (d.target != DriveTarget::none && d.w_offres > 0)
    throw ConflictingDrives("resonant drive and off-resonant pump cannot be active together");
}

inline DriveParams dark_drive() { return {}; }

inline DriveParams resonant_drive(Transition t, double power_nW, double delta = 0.0) {
  DriveParams d;
  d.target = t == Transition::o1 ? DriveTarget::o1 : DriveTarget::o2;
  d.omega_laser = c_omega_rabi * std::sqrt(power_nW);
  d.delta_laser = delta;
  d.power_nW = power_nW;
  validate_drive(d);
  return d;
}

inline DriveParams offres_drive(double power_nW) {
  DriveParams d;
  d.w_offres = c_w_offres * power_nW;
  d.power_nW = power_nW;
  validate_drive(d);
  return d;
}

// Rotating-frame Hamiltonian. Each excited level carries minus the
// laser detuning from its own line, so delta_laser = 0 puts the
// addressed line exactly on resonance and shifts the other one by the
// full line separation D_e - D_g. The GS(3/2) level carries minus the
// microwave detuning in the same way.
inline Mat6 build_hamiltonian(const ModelParams& m, const DriveParams& d) {
  validate_drive(d);
  Mat6 H = Mat6::Zero();
  const double line_sep = 2.0 * pi * 1e-3 * (m.zfs_es_MHz - m.zfs_gs_MHz);  // rad/ns
  if (d.target == DriveTarget::o1) {
    H(es_half, es_half) = -d.delta_laser;
    H(es_three_half, es_three_half) = -d.delta_laser + line_sep;
    H(gs_half, es_half) = H(es_half, gs_half) = d.omega_laser;
  } else if (d.target == DriveTarget::o2) {
    H(es_three_half, es_three_half) = -d.delta_laser;
    H(es_half, es_half) = -d.delta_laser - line_sep;
    H(gs_three_half, es_three_half) = H(es_three_half, gs_three_half) = d.omega_laser;
  }
  H(gs_three_half, gs_three_half) += -d.delta_mw;
  if (d.omega_mw != 0.0)
    H(gs_half, gs_three_half) = H(gs_three_half, gs_half) = d.omega_mw;
  return H;
}

struct Jump {
  Level to, from;
  double rate;
};

// Decay channels at the effective rates for this drive's power, plus
// the incoherent pump channels when the off-resonant drive is on.
inline std::vector<Jump> jump_list(const ModelParams& m, const DriveParams& d) {
  RateSet r = m.rates_for_power(d.power_nW);
  std::vector<Jump> jumps = {
      {gs_half, es_half, r.gamma_r},          {gs_three_half, es_three_half, r.gamma_r},
      {ms1, es_half, r.gamma_1},              {ms1, es_three_half, r.gamma_2},
      {ms2, es_half, r.gamma_1p},             {ms2, es_three_half, r.gamma_2p},
      {gs_half, ms1, r.gamma_3},              {gs_three_half, ms1, r.gamma_4},
      {gs_half, ms2, r.gamma_3p},             {gs_three_half, ms2, r.gamma_4p},
  };
  if (d.w_offres > 0) {
    jumps.push_back({es_half, gs_half, d.w_offres});
    jumps.push_back({es_three_half, gs_three_half, d.w_offres});
  }
  return jumps;
}

inline Eigen::VectorXcd vec6(const Mat6& rho) {
  return Eigen::Map<const Eigen::VectorXcd>(rho.data(), n_levels * n_levels);
}

inline Mat6 unvec6(const Eigen::VectorXcd& v) {
  return Eigen::Map<const Mat6>(v.data());
}

// Column-stacking Liouvillian: vec(rho') = L vec(rho) with
// L = -i (I x H - H^T x I) + sum_k rate_k (conj(J) x J
//     - 1/2 I x J'J - 1/2 (J'J)^T x I).
inline Eigen::MatrixXcd build_liouvillian(const ModelParams& m, const DriveParams& d) {
  const Mat6 H = build_hamiltonian(m, d);
  const Mat6 I = Mat6::Identity();
  const cd im(0.0, 1.0);
  Eigen::MatrixXcd L =
      -im * (Eigen::kroneckerProduct(I, H) - Eigen::kroneckerProduct(H.transpose(), I));
  for (const Jump& jump : jump_list(m, d)) {
    Mat6 J = Mat6::Zero();
    J(jump.to, jump.from) = 1.0;
    Mat6 JdJ = Mat6::Zero();
    JdJ(jump.from, jump.from) = 1.0;
    L += jump.rate * (Eigen::kroneckerProduct(J.conjugate(), J).eval() -
                      0.5 * Eigen::kroneckerProduct(I, JdJ).eval() -
                      0.5 * Eigen::kroneckerProduct(JdJ.transpose(), I).eval());
  }
  return L;
}

inline double pl_signal(const Mat6& rho, const RateSet& r) {
  return r.gamma_r * (rho(es_half, es_half).real() + rho(es_three_half, es_three_half).real());
}

enum class EvolveMethod { automatic, expm, eigen, rk45 };

struct EvolveOptions {
  EvolveMethod method = EvolveMethod::automatic;
  double clamp_tol = 1e-9;  // eigenvalues above -clamp_tol are rounded up to zero
  double rtol = 1e-9;       // rk45 only
  double atol = 1e-12;      // rk45 only
};

namespace detail {

// Repairs harmless numerical negativity and rejects anything worse.
inline Mat6 enforce_physical(Mat6 rho, double clamp_tol) {
  if (!rho.allFinite()) throw IntegrationFailure("propagated state has non-finite entries");
  rho = 0.5 * (rho + rho.adjoint()).eval();
  double tr = rho.trace().real();
  if (std::abs(tr - 1.0) > 1e-6)
    throw IntegrationFailure("propagated state lost trace: " + fmt_g9(tr));
  Eigen::SelfAdjointEigenSolver<Mat6> es(rho);
  Eigen::Matrix<double, 6, 1> ev = es.eigenvalues();
  if (ev.minCoeff() < -clamp_tol)
    throw IntegrationFailure("propagated state has eigenvalue " + fmt_g9(ev.minCoeff()));
  if (ev.minCoeff() < 0.0) {
    for (int i = 0; i < n_levels; ++i) ev[i] = std::max(ev[i], 0.0);
    rho = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
    tr = rho.trace().real();
  }
  return rho / tr;
}

inline Eigen::VectorXcd propagate_expm(const Eigen::MatrixXcd& L, double t,
                                       const Eigen::VectorXcd& v) {
  return (L * t).exp() * v;
}

// Spectral propagation, for durations where scaling-and-squaring gets
// expensive. Falls back to expm when L is too close to defective for
// the eigendecomposition to reconstruct it.
inline Eigen::VectorXcd propagate_eigen(const Eigen::MatrixXcd& L, double t,
                                        const Eigen::VectorXcd& v) {
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(L);
  if (es.info() == Eigen::Success) {
    const auto& V = es.eigenvectors();
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(V);
    Eigen::MatrixXcd recon = V * es.eigenvalues().asDiagonal() * lu.inverse();
    double scale = std::max(1.0, L.cwiseAbs().maxCoeff());
    if ((recon - L).cwiseAbs().maxCoeff() < 1e-8 * scale) {
      Eigen::VectorXcd c = lu.solve(v);
      for (int i = 0; i < c.size(); ++i) c[i] *= std::exp(es.eigenvalues()[i] * t);
      return V * c;
    }
  }
  return propagate_expm(L, t, v);
}

// Dormand-Prince 5(4) with standard step control. Only used as the
// independent cross-check route; the step guard trips long before the
// run time becomes a problem.
inline Eigen::VectorXcd propagate_rk45(const Eigen::MatrixXcd& L, double t_final,
                                       Eigen::VectorXcd y, double rtol, double atol) {
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = b1 - 5179.0 / 57600, e3 = b3 - 7571.0 / 16695,
                          e4 = b4 - 393.0 / 640, e5 = b5 + 92097.0 / 339200,
                          e6 = b6 - 187.0 / 2100, e7 = -1.0 / 40;
  double t = 0.0;
  double lnorm = std::max(L.cwiseAbs().rowwise().sum().maxCoeff(), 1e-12);
  double h = std::min(t_final, 0.1 / lnorm);
  Eigen::VectorXcd k1 = L * y;
  for (long steps = 0; t < t_final; ++steps) {
    if (steps > 4'000'000) throw IntegrationFailure("rk45 exceeded the step budget");
    h = std::min(h, t_final - t);
    Eigen::VectorXcd k2 = L * (y + h * a21 * k1);
    Eigen::VectorXcd k3 = L * (y + h * (a31 * k1 + a32 * k2));
    Eigen::VectorXcd k4 = L * (y + h * (a41 * k1 + a42 * k2 + a43 * k3));
    Eigen::VectorXcd k5 = L * (y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    Eigen::VectorXcd k6 = L * (y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    Eigen::VectorXcd y5 = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    Eigen::VectorXcd k7 = L * y5;
    Eigen::VectorXcd err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    double norm = 0.0;
    for (int i = 0; i < y.size(); ++i) {
      double scale = atol + rtol * std::max(std::abs(y[i]), std::abs(y5[i]));
      double q = std::abs(err[i]) / scale;
      norm += q * q;
    }
    norm = std::sqrt(norm / double(y.size()));
    if (norm <= 1.0) {
      t += h;
      y = y5;
      k1 = k7;  // first-same-as-last
    }
    double factor = norm > 0 ? 0.9 * std::pow(norm, -0.2) : 5.0;
    h *= std::min(5.0, std::max(0.2, factor));
    if (!(h > 0) || !std::isfinite(h)) throw IntegrationFailure("rk45 step size collapsed");
  }
  return y;
}

}  // namespace detail

// Propagates rho for t nanoseconds under L. The automatic route uses
// the matrix exponential for short horizons and switches to spectral
// propagation once t times the dominant damping rate gets large.
inline Mat6 evolve(const Mat6& rho, const Eigen::MatrixXcd& L, double t,
                   const EvolveOptions& opts = {}) {
  require_finite(t, "evolve duration");
  if (t < 0) throw ConfigError("evolve duration must be non-negative");
  if (t == 0.0) return rho;
  Eigen::VectorXcd v = vec6(rho);
  EvolveMethod method = opts.method;
  if (method == EvolveMethod::automatic) {
    double dominant = L.diagonal().cwiseAbs().maxCoeff();
    method = t * dominant < 1e3 ? EvolveMethod::expm : EvolveMethod::eigen;
  }
  Eigen::VectorXcd out;
  switch (method) {
    case EvolveMethod::expm:
      out = detail::propagate_expm(L, t, v);
      break;
    case EvolveMethod::eigen:
      out = detail::propagate_eigen(L, t, v);
      break;
    case EvolveMethod::rk45:
      out = detail::propagate_rk45(L, t, v, opts.rtol, opts.atol);
      break;
    default:
      throw Error("unreachable evolve method");
  }
  return detail::enforce_physical(unvec6(out), opts.clamp_tol);
}

// Unique stationary state of L. Throws DegenerateKernel when the null
// space has more than one dimension (for example in the dark, where
// both ground manifolds are stationary).
inline Mat6 steady_state(const Eigen::MatrixXcd& L) {
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(L);
  if (es.info() != Eigen::Success) throw Error("eigensolver failed on the Liouvillian");
  double scale = std::max(1.0, L.cwiseAbs().maxCoeff());
  const double zero_tol = 1e-9 * scale;
  int kernel_dim = 0, idx = -1;
  for (int i = 0; i < es.eigenvalues().size(); ++i) {
    if (std::abs(es.eigenvalues()[i]) < zero_tol) {
      ++kernel_dim;
      idx = i;
    }
  }
  if (kernel_dim == 0) throw Error("no stationary state found (eigenvalue gap too small)");
  if (kernel_dim > 1) throw DegenerateKernel("stationary state is not unique");
  Mat6 rho = unvec6(es.eigenvectors().col(idx));
  cd tr = rho.trace();
  if (std::abs(tr) < 1e-9) throw DegenerateKernel("stationary eigenvector is traceless");
  rho /= tr;
  return detail::enforce_physical(rho, 1e-8);
}

// ---- reduced generator -------------------------------------------------

// With no microwave drive and at most one line driven coherently, the
// Lindblad flow closes on an eight-dimensional real subspace: the six
// populations plus the real and imaginary parts of the one driven
// optical coherence. The generator is extracted numerically from the
// full Liouvillian, so it is exact by construction rather than by a
// separate derivation.
//
// Optical coherences outside this subspace never feed back into any
// population once their drive is gone (nothing couples to them; they
// only decay), so projecting them away at a segment boundary leaves
// every later population and photoluminescence value exact.
struct ReducedGenerator {
  Eigen::Matrix<double, 8, 8> R;
  DriveTarget target = DriveTarget::none;
  double gamma_r = 0.0;

  using Vec8 = Eigen::Matrix<double, 8, 1>;

  static ReducedGenerator build(const ModelParams& m, const DriveParams& d) {
    validate_drive(d);
    if (d.omega_mw != 0.0)
      throw ConfigError("reduced generator does not support a microwave drive");
    ReducedGenerator g;
    g.target = d.target;
    g.gamma_r = m.rates_for_power(d.power_nW).gamma_r;
    // apply the generator directly in the 6x6 density-matrix picture;
    // this matches the vectorized Liouvillian to round-off at a fraction
    // of its construction cost
    const Mat6 H = build_hamiltonian(m, d);
    const std::vector<Jump> jumps = jump_list(m, d);
    const auto [row, col] = g.coherence_slot();
    for (int j = 0; j < 8; ++j) {
      Mat6 basis = Mat6::Zero();
      if (j < n_levels) {
        basis(j, j) = 1.0;
      } else if (j == 6) {
        basis(row, col) = basis(col, row) = 1.0;
      } else {
        basis(row, col) = cd(0.0, 1.0);
        basis(col, row) = cd(0.0, -1.0);
      }
      Mat6 image = cd(0.0, -1.0) * (H * basis - basis * H);
      for (const Jump& jp : jumps) {
        image(jp.to, jp.to) += jp.rate * basis(jp.from, jp.from);
        for (int k = 0; k < n_levels; ++k) {
          image(jp.from, k) -= 0.5 * jp.rate * basis(jp.from, k);
          image(k, jp.from) -= 0.5 * jp.rate * basis(k, jp.from);
        }
      }
      for (int i = 0; i < n_levels; ++i) g.R(i, j) = image(i, i).real();
      g.R(6, j) = image(row, col).real();
      g.R(7, j) = image(row, col).imag();
    }
    return g;
  }

  std::pair<int, int> coherence_slot() const {
    // an undriven generator still needs a slot for the basis build; the
    // corresponding blocks are zero and the slot never holds amplitude
    return target == DriveTarget::o2 ? std::pair<int, int>{gs_three_half, es_three_half}
                                     : std::pair<int, int>{gs_half, es_half};
  }

  Vec8 project(const Mat6& rho) const {
    Vec8 x;
    for (int i = 0; i < n_levels; ++i) x[i] = rho(i, i).real();
    const auto [row, col] = coherence_slot();
    x[6] = rho(row, col).real();
    x[7] = rho(row, col).imag();
    return x;
  }

  Mat6 embed(const Vec8& x) const {
    Mat6 rho = Mat6::Zero();
    for (int i = 0; i < n_levels; ++i) rho(i, i) = x[i];
    const auto [row, col] = coherence_slot();
    rho(row, col) = cd(x[6], x[7]);
    rho(col, row) = cd(x[6], -x[7]);
    return rho;
  }

  Eigen::Matrix<double, 8, 8> propagator(double t) const {
    require_finite(t, "propagator duration");
    if (t < 0) throw ConfigError("propagator duration must be non-negative");
    return (R * t).exp();
  }

  double pl(const Vec8& x) const { return gamma_r * (x[es_half] + x[es_three_half]); }
};

}  // namespace vsi
