#pragma once

// Shared plumbing: level indexing, error taxonomy, deterministic RNG
// (including a Poisson sampler), VSI_THREADS-aware parallel loops, and
// the duration / number-format helpers used by the CLI and file writers.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace vsi {

using cd = std::complex<double>;

inline constexpr double pi = 3.14159265358979323846;

// Basis ordering for the six-level model. Kramers doublets are lumped,
// so each entry is one twofold-degenerate manifold. The two optical
// lines connect the matching ground/excited spin manifolds; the two
// metastable levels differ only in their decay pathways.
enum Level : int {
  gs_half = 0,        // ground, m_s = +-1/2
  gs_three_half = 1,  // ground, m_s = +-3/2
  es_half = 2,        // excited, +-1/2 (upper end of the O1 line)
  es_three_half = 3,  // excited, +-3/2 (upper end of the O2 line)
  ms1 = 4,            // short-lived intersystem shelf
  ms2 = 5,            // long-lived shelf, deshelved by off-resonant light
};
inline constexpr int n_levels = 6;

enum class Transition { o1, o2 };
enum class MsLevel { ms1, ms2 };

inline const char* name(Transition t) { return t == Transition::o1 ? "O1" : "O2"; }

struct Error : std::runtime_error {
  explicit Error(const std::string& w) : std::runtime_error(w) {}
};

#define VSI_ERROR(name)                                        \
  struct name : Error {                                        \
    explicit name(const std::string& w) : Error(w) {}          \
  }

VSI_ERROR(ConfigError);        // bad files, bad CLI values, unknown keys
VSI_ERROR(NonPositiveRate);
VSI_ERROR(AsymmetricMs2Rates);
VSI_ERROR(NonFinite);
VSI_ERROR(ConflictingDrives);  // resonant drive and off-resonant pump at once
VSI_ERROR(IntegrationFailure);
VSI_ERROR(DegenerateKernel);   // steady state not unique
VSI_ERROR(FitDiverged);
VSI_ERROR(InsufficientSpan);   // fringe data covers too little phase
VSI_ERROR(NonMonotonicRates);

#undef VSI_ERROR

inline void require_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw NonFinite(std::string(what) + " is not finite");
}

// Deterministic RNG. All draws go through explicit 53-bit conversions so
// results are identical across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() { return (gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // unbiased integer in [0, n)
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t lim = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= lim);
    return x % n;
  }

  // Poisson draw: Knuth's product method for small means, transformed
  // rejection (PTRS) above. std::poisson_distribution is avoided because
  // its output is implementation-defined.
  std::int64_t poisson(double mean) {
    if (!(mean > 0.0)) return 0;
    if (mean < 30.0) {
      const double limit = std::exp(-mean);
      std::int64_t k = 0;
      double p = 1.0;
      do {
        ++k;
        p *= uniform();
      } while (p > limit);
      return k - 1;
    }
    const double b = 0.931 + 2.53 * std::sqrt(mean);
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double v_r = 0.9277 - 3.6224 / (b - 2.0);
    const double log_mean = std::log(mean);
    for (;;) {
      double u = uniform() - 0.5;
      double v = uniform();
      double us = 0.5 - std::abs(u);
      auto k = static_cast<std::int64_t>(std::floor((2.0 * a / us + b) * u + mean + 0.43));
      if (us >= 0.07 && v <= v_r) return k;
      if (k < 0 || (us < 0.013 && v > us)) continue;
      if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
          k * log_mean - mean - std::lgamma(double(k) + 1.0))
        return k;
    }
  }

 private:
  std::mt19937_64 gen_;
};

// Worker cap: VSI_THREADS if set to a positive integer, else the
// hardware count. Results never depend on the cap; only wall time does.
inline unsigned worker_cap() {
  if (const char* env = std::getenv("VSI_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

// Runs body(i) for i in [0, n). Work items must be independent; callers
// that aggregate must do so afterwards in index order so that the thread
// count cannot change the result.
template <class F>
void parallel_for(std::size_t n, F&& body) {
  const unsigned workers = std::min<std::size_t>(worker_cap(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto run = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// Parses "250", "250ns", "2.5us", "1ms" into nanoseconds.
inline double parse_duration_ns(const std::string& text) {
  if (text.empty()) throw ConfigError("empty duration");
  const char* s = text.c_str();
  char* end = nullptr;
  double value = std::strtod(s, &end);
  if (end == s) throw ConfigError("bad duration '" + text + "'");
  std::string unit(end);
  double scale;
  if (unit.empty() || unit == "ns")
    scale = 1.0;
  else if (unit == "us")
    scale = 1e3;
  else if (unit == "ms")
    scale = 1e6;
  else
    throw ConfigError("bad duration unit '" + unit + "' (use ns, us or ms)");
  double ns = value * scale;
  require_finite(ns, "duration");
  if (ns < 0) throw ConfigError("negative duration '" + text + "'");
  return ns;
}

// %.9g keeps at least nine significant digits, enough for traces to
// round-trip through CSV far below any fit tolerance.
inline std::string fmt_g9(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

}  // namespace vsi
