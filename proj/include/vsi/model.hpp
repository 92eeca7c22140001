#pragma once

// Rate model for the six-level center: the decay-rate table, derived
// lifetime/efficiency algebra, power-dependent deshelving of the long
// shelf, density-matrix helpers, and strict JSON (de)serialization.

#include <Eigen/Dense>

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"
#include "json.hpp"

namespace vsi {

using Mat6 = Eigen::Matrix<cd, 6, 6>;
using Vec6d = Eigen::Matrix<double, 6, 1>;

// All rates in 1/ns. The primed MS2 rates must stay equal: the long
// shelf empties into both ground manifolds at the same rate, and the
// deshelving enhancement is shared the same way.
struct RateSet {
  double gamma_r;    // radiative, both optical lines
  double gamma_1;    // ES(1/2)  -> MS1
  double gamma_1p;   // ES(1/2)  -> MS2
  double gamma_2;    // ES(3/2)  -> MS1
  double gamma_2p;   // ES(3/2)  -> MS2
  double gamma_3;    // MS1 -> GS(1/2)
  double gamma_4;    // MS1 -> GS(3/2)
  double gamma_3p;   // MS2 -> GS(1/2)
  double gamma_4p;   // MS2 -> GS(3/2)
};

inline void validate_rates(const RateSet& r) {
  const struct {
    const char* name;
    double value;
  } entries[] = {
      {"gamma_r", r.gamma_r},   {"gamma_1", r.gamma_1},   {"gamma_1p", r.gamma_1p},
      {"gamma_2", r.gamma_2},   {"gamma_2p", r.gamma_2p}, {"gamma_3", r.gamma_3},
      {"gamma_4", r.gamma_4},   {"gamma_3p", r.gamma_3p}, {"gamma_4p", r.gamma_4p},
  };
  for (const auto& e : entries) {
    if (!std::isfinite(e.value)) throw NonFinite(std::string(e.name) + " is not finite");
    if (e.value <= 0.0) throw NonPositiveRate(std::string(e.name) + " must be positive");
  }
  if (std::abs(r.gamma_3p - r.gamma_4p) > 1e-12 * std::max(r.gamma_3p, r.gamma_4p))
    throw AsymmetricMs2Rates("gamma_3p and gamma_4p must be equal");
}

inline double es_lifetime(const RateSet& r, Transition t) {
  validate_rates(r);
  double total = t == Transition::o1 ? r.gamma_r + r.gamma_1 + r.gamma_1p
                                     : r.gamma_r + r.gamma_2 + r.gamma_2p;
  return 1.0 / total;
}

inline double ms_lifetime(const RateSet& r, MsLevel m) {
  validate_rates(r);
  return m == MsLevel::ms1 ? 1.0 / (r.gamma_3 + r.gamma_4) : 1.0 / (r.gamma_3p + r.gamma_4p);
}

// Fraction of excited-state decays that emit a photon.
inline double quantum_efficiency(const RateSet& r, Transition t) {
  return r.gamma_r * es_lifetime(r, t);
}

// Where MS1 population ends up: (to GS(1/2), to GS(3/2)). This bias is
// what makes optical spin pumping work.
inline std::pair<double, double> branching_preference(const RateSet& r) {
  validate_rates(r);
  double total = r.gamma_3 + r.gamma_4;
  return {r.gamma_3 / total, r.gamma_4 / total};
}

// Emitter cooperativity of a cavity-enhanced line: Purcell factor times
// quantum efficiency times collection efficiency into the useful mode.
inline double cooperativity(double purcell, double qe, double collection) {
  require_finite(purcell, "purcell");
  require_finite(qe, "quantum efficiency");
  require_finite(collection, "collection efficiency");
  if (purcell <= 0 || qe <= 0 || qe > 1 || collection <= 0 || collection > 1)
    throw ConfigError("cooperativity arguments out of range");
  return purcell * qe * collection;
}

struct Ms2Override {
  double power_nW;
  double lifetime_ns;  // MS2 state lifetime is half this value (two equal outlets)
};

// Full model: intrinsic rates plus everything needed to resolve the
// power-dependent MS2 escape and the optical line positions.
struct ModelParams {
  RateSet rates;                // gamma_3p/gamma_4p here are the intrinsic (dark) values
  double kappa_deshelve;        // added total MS2 escape rate per nW of repump power
  double zfs_gs_MHz = 70.0;     // ground-state spin splitting
  double zfs_es_MHz = 1070.0;   // excited-state spin splitting
  std::vector<Ms2Override> ms2_power_overrides;

  // Resolves the MS2 escape at a given repump power. An override row at
  // (essentially) this power wins; otherwise the linear deshelving law
  // gamma_3p(P) = gamma_3p_intrinsic + kappa * P / 2 applies per outlet.
  RateSet rates_for_power(double power_nW) const {
    require_finite(power_nW, "power");
    if (power_nW < 0) throw ConfigError("negative repump power");
    RateSet r = rates;
    for (const auto& row : ms2_power_overrides) {
      if (std::abs(row.power_nW - power_nW) <= 1e-9 * std::max(1.0, power_nW)) {
        r.gamma_3p = r.gamma_4p = 1.0 / row.lifetime_ns;
        validate_rates(r);
        return r;
      }
    }
    r.gamma_3p = r.gamma_4p = rates.gamma_3p + 0.5 * kappa_deshelve * power_nW;
    validate_rates(r);
    return r;
  }

  static ModelParams table_defaults();
};

inline ModelParams ModelParams::table_defaults() {
  ModelParams m;
  m.rates.gamma_r = 1.0 / 17.84;
  m.rates.gamma_1 = 1.0 / 11.05;
  m.rates.gamma_1p = 1.0 / 56.75;
  m.rates.gamma_2 = 1.0 / 130.59;
  m.rates.gamma_2p = 1.0 / 41.02;
  m.rates.gamma_3 = 1.0 / 250.72;
  m.rates.gamma_4 = 1.0 / 1035.35;
  m.rates.gamma_3p = 1.0 / 5928.73;  // near-dark row doubles as the intrinsic value
  m.rates.gamma_4p = m.rates.gamma_3p;
  // anchor the linear deshelving law on the strongest tabulated power
  m.kappa_deshelve = (2.0 / 1481.69 - 2.0 / 5928.73) / 20.0;
  m.ms2_power_overrides = {
      {6.0, 5928.73}, {10.0, 4377.85}, {15.0, 2170.80}, {20.0, 1481.69}};
  return m;
}

// ---- density-matrix helpers -------------------------------------------

inline Mat6 pure_state(Level l) {
  Mat6 rho = Mat6::Zero();
  rho(l, l) = 1.0;
  return rho;
}

inline Mat6 diag_state(const Vec6d& pops) {
  double total = 0.0;
  for (int i = 0; i < n_levels; ++i) {
    require_finite(pops[i], "population");
    if (pops[i] < 0) throw ConfigError("negative population");
    total += pops[i];
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("populations must sum to 1");
  Mat6 rho = Mat6::Zero();
  for (int i = 0; i < n_levels; ++i) rho(i, i) = pops[i];
  return rho;
}

inline Vec6d populations(const Mat6& rho) {
  Vec6d p;
  for (int i = 0; i < n_levels; ++i) p[i] = rho(i, i).real();
  return p;
}

inline double hermiticity_error(const Mat6& rho) {
  return (rho - rho.adjoint()).cwiseAbs().maxCoeff();
}

// Physicality check: finite, unit trace, Hermitian, no eigenvalue below
// -tol. Used after propagation and on every external state input.
inline void check_density(const Mat6& rho, double tol = 1e-8) {
  if (!rho.allFinite()) throw NonFinite("density matrix has non-finite entries");
  double tr_err = std::abs(rho.trace() - cd(1.0, 0.0));
  if (tr_err > tol) throw Error("density matrix trace deviates from 1 by " + fmt_g9(tr_err));
  if (hermiticity_error(rho) > tol) throw Error("density matrix is not Hermitian");
  Eigen::SelfAdjointEigenSolver<Mat6> es(0.5 * (rho + rho.adjoint()));
  if (es.eigenvalues().minCoeff() < -tol)
    throw Error("density matrix has negative eigenvalue " + fmt_g9(es.eigenvalues().minCoeff()));
}

// ---- strict JSON ------------------------------------------------------

namespace detail {

using njson = nlohmann::ordered_json;

inline void check_keys(const njson& obj, std::vector<std::string> allowed, const char* where) {
  if (!obj.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const auto& k : allowed)
      if (item.key() == k) known = true;
    if (!known) throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
  for (const auto& k : allowed)
    if (!obj.contains(k)) throw ConfigError("missing key '" + k + "' in " + where);
}

inline double as_number(const njson& v, const std::string& key, const char* where) {
  if (!v.is_number()) throw ConfigError("key '" + key + "' in " + std::string(where) + " must be a number");
  double x = v.get<double>();
  if (!std::isfinite(x)) throw NonFinite("key '" + key + "' in " + std::string(where));
  return x;
}

}  // namespace detail

inline detail::njson model_to_json(const ModelParams& m) {
  validate_rates(m.rates);
  detail::njson j;
  detail::njson& lt = j["lifetimes_ns"];
  lt["gamma_r"] = 1.0 / m.rates.gamma_r;
  lt["gamma_1"] = 1.0 / m.rates.gamma_1;
  lt["gamma_1p"] = 1.0 / m.rates.gamma_1p;
  lt["gamma_2"] = 1.0 / m.rates.gamma_2;
  lt["gamma_2p"] = 1.0 / m.rates.gamma_2p;
  lt["gamma_3"] = 1.0 / m.rates.gamma_3;
  lt["gamma_4"] = 1.0 / m.rates.gamma_4;
  lt["gamma_3p_intrinsic"] = 1.0 / m.rates.gamma_3p;
  lt["gamma_4p_intrinsic"] = 1.0 / m.rates.gamma_4p;
  j["kappa_deshelve_per_ns_per_nW"] = m.kappa_deshelve;
  j["zfs_gs_MHz"] = m.zfs_gs_MHz;
  j["zfs_es_MHz"] = m.zfs_es_MHz;
  j["ms2_power_overrides"] = detail::njson::array();
  for (const auto& row : m.ms2_power_overrides)
    j["ms2_power_overrides"].push_back(
        {{"power_nW", row.power_nW}, {"lifetime_ns_gamma3p", row.lifetime_ns}});
  return j;
}

inline ModelParams model_from_json(const detail::njson& j) {
  using detail::as_number;
  detail::check_keys(j,
                     {"lifetimes_ns", "kappa_deshelve_per_ns_per_nW", "zfs_gs_MHz", "zfs_es_MHz",
                      "ms2_power_overrides"},
                     "model");
  const auto& lt = j.at("lifetimes_ns");
  detail::check_keys(lt,
                     {"gamma_r", "gamma_1", "gamma_1p", "gamma_2", "gamma_2p", "gamma_3",
                      "gamma_4", "gamma_3p_intrinsic", "gamma_4p_intrinsic"},
                     "lifetimes_ns");
  auto rate = [&](const char* key) {
    double life = as_number(lt.at(key), key, "lifetimes_ns");
    if (life <= 0) throw NonPositiveRate(std::string("lifetime ") + key + " must be positive");
    return 1.0 / life;
  };
  ModelParams m;
  m.rates.gamma_r = rate("gamma_r");
  m.rates.gamma_1 = rate("gamma_1");
  m.rates.gamma_1p = rate("gamma_1p");
  m.rates.gamma_2 = rate("gamma_2");
  m.rates.gamma_2p = rate("gamma_2p");
  m.rates.gamma_3 = rate("gamma_3");
  m.rates.gamma_4 = rate("gamma_4");
  m.rates.gamma_3p = rate("gamma_3p_intrinsic");
  m.rates.gamma_4p = rate("gamma_4p_intrinsic");
  m.kappa_deshelve =
      as_number(j.at("kappa_deshelve_per_ns_per_nW"), "kappa_deshelve_per_ns_per_nW", "model");
  if (m.kappa_deshelve < 0) throw ConfigError("kappa_deshelve_per_ns_per_nW must be >= 0");
  m.zfs_gs_MHz = as_number(j.at("zfs_gs_MHz"), "zfs_gs_MHz", "model");
  m.zfs_es_MHz = as_number(j.at("zfs_es_MHz"), "zfs_es_MHz", "model");
  const auto& rows = j.at("ms2_power_overrides");
  if (!rows.is_array()) throw ConfigError("ms2_power_overrides must be an array");
  double last_power = -1.0;
  for (const auto& row : rows) {
    detail::check_keys(row, {"power_nW", "lifetime_ns_gamma3p"}, "ms2_power_overrides entry");
    Ms2Override o;
    o.power_nW = as_number(row.at("power_nW"), "power_nW", "ms2_power_overrides");
    o.lifetime_ns =
        as_number(row.at("lifetime_ns_gamma3p"), "lifetime_ns_gamma3p", "ms2_power_overrides");
    if (o.power_nW <= last_power)
      throw ConfigError("ms2_power_overrides must be sorted by strictly increasing power");
    if (o.lifetime_ns <= 0) throw NonPositiveRate("override lifetime must be positive");
    last_power = o.power_nW;
    m.ms2_power_overrides.push_back(o);
  }
  validate_rates(m.rates);
  return m;
}

inline ModelParams load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model file '" + path + "'");
  detail::njson j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("model file '" + path + "': " + e.what());
  }
  return model_from_json(j);
}

inline void save_model(const std::string& path, const ModelParams& m) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write model file '" + path + "'");
  out << model_to_json(m).dump(2) << "\n";
}

}  // namespace vsi
