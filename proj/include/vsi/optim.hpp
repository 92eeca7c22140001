#pragma once

// Derivative-free optimizers for the rate fits: Nelder-Mead simplex for
// local polish and a rand/1/bin differential evolution for the global
// search. Population evaluations run through parallel_for with a fixed
// selection order, so results are identical for any VSI_THREADS.

#include <Eigen/Dense>

#include <algorithm>
#include <functional>
#include <limits>
#include <vector>

#include "common.hpp"

namespace vsi {

using Objective = std::function<double(const Eigen::VectorXd&)>;

struct OptimResult {
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::infinity();
  long evaluations = 0;
  long iterations = 0;            // simplex iterations or DE generations
  double population_diversity = 0;  // mean per-dimension spread of the final DE population
  bool max_iter_reached = false;  // budget ran out before the tolerances were met
};

namespace detail {

// Domain failures (unsimulatable parameter sets) count as infinitely
// bad instead of aborting the whole search.
inline double guarded_eval(const Objective& f, const Eigen::VectorXd& x) {
  try {
    double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  } catch (const Error&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace detail

struct NelderMeadOptions {
  double initial_step = 0.1;
  long max_iter = 4000;
  double f_tol = 1e-12;
  double x_tol = 1e-10;
  // optional box; empty vectors mean unconstrained
  Eigen::VectorXd lower, upper;
};

inline OptimResult nelder_mead(const Objective& f, const Eigen::VectorXd& x0,
                               const NelderMeadOptions& opts = {}) {
  const int n = int(x0.size());
  if (n < 1) throw ConfigError("nelder_mead needs at least one dimension");
  const bool boxed = opts.lower.size() == n && opts.upper.size() == n;
  auto clip = [&](Eigen::VectorXd x) {
    if (boxed)
      for (int i = 0; i < n; ++i) x[i] = std::clamp(x[i], opts.lower[i], opts.upper[i]);
    return x;
  };

  OptimResult res;
  std::vector<Eigen::VectorXd> xs(n + 1);
  std::vector<double> fs(n + 1);
  xs[0] = clip(x0);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd v = xs[0];
    double step = opts.initial_step * std::max(1.0, std::abs(v[i]));
    v[i] += step;
    if (boxed && v[i] > opts.upper[i]) v[i] = xs[0][i] - step;  // flip into the box
    xs[i + 1] = clip(v);
  }
  for (int i = 0; i <= n; ++i) fs[i] = detail::guarded_eval(f, xs[i]);
  res.evaluations = n + 1;

  auto order = [&] {
    std::vector<int> idx(n + 1);
    for (int i = 0; i <= n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fs[a] < fs[b]; });
    std::vector<Eigen::VectorXd> x2(n + 1);
    std::vector<double> f2(n + 1);
    for (int i = 0; i <= n; ++i) {
      x2[i] = xs[idx[i]];
      f2[i] = fs[idx[i]];
    }
    xs.swap(x2);
    fs.swap(f2);
  };

  for (long iter = 0;; ++iter) {
    order();
    res.iterations = iter;
    double spread = fs[n] - fs[0];
    double size = 0;
    for (int i = 1; i <= n; ++i) size = std::max(size, (xs[i] - xs[0]).cwiseAbs().maxCoeff());
    if (spread < opts.f_tol * (1.0 + std::abs(fs[0])) ||
        size < opts.x_tol * (1.0 + xs[0].cwiseAbs().maxCoeff()))
      break;
    if (iter >= opts.max_iter) {
      res.max_iter_reached = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) centroid += xs[i];
    centroid /= double(n);

    auto eval = [&](const Eigen::VectorXd& x) {
      ++res.evaluations;
      return detail::guarded_eval(f, x);
    };
    Eigen::VectorXd xr = clip(centroid + (centroid - xs[n]));
    double fr = eval(xr);
    if (fr < fs[0]) {
      Eigen::VectorXd xe = clip(centroid + 2.0 * (centroid - xs[n]));
      double fe = eval(xe);
      if (fe < fr) {
        xs[n] = xe;
        fs[n] = fe;
      } else {
        xs[n] = xr;
        fs[n] = fr;
      }
    } else if (fr < fs[n - 1]) {
      xs[n] = xr;
      fs[n] = fr;
    } else {
      bool outside = fr < fs[n];
      Eigen::VectorXd xc =
          clip(outside ? centroid + 0.5 * (xr - centroid) : centroid + 0.5 * (xs[n] - centroid));
      double fc = eval(xc);
      if (fc < std::min(fr, fs[n])) {
        xs[n] = xc;
        fs[n] = fc;
      } else {
        for (int i = 1; i <= n; ++i) {
          xs[i] = clip(xs[0] + 0.5 * (xs[i] - xs[0]));
          fs[i] = eval(xs[i]);
        }
      }
    }
  }
  order();
  res.x = xs[0];
  res.value = fs[0];
  return res;
}

struct DeOptions {
  int pop_factor = 15;  // population size = pop_factor * dimension
  int max_generations = 400;
  double weight = 0.7;     // differential weight F
  double crossover = 0.9;  // crossover rate CR
  std::uint64_t seed = 1;
  int stall_generations = 60;  // stop after this many generations without improvement
  double tol = 1e-14;          // relative improvement that counts as progress
  bool polish = true;          // Nelder-Mead refinement of the winner
  long polish_max_iter = 4000;
};

inline OptimResult differential_evolution(const Objective& f, const Eigen::VectorXd& lo,
                                          const Eigen::VectorXd& hi,
                                          const DeOptions& opts = {}) {
  const int n = int(lo.size());
  if (n < 1 || hi.size() != n) throw ConfigError("differential_evolution needs matching bounds");
  for (int i = 0; i < n; ++i) {
    require_finite(lo[i], "lower bound");
    require_finite(hi[i], "upper bound");
    // lo == hi pins the coordinate; the search then runs over the rest
    if (lo[i] > hi[i]) throw ConfigError("differential_evolution bounds must satisfy lo <= hi");
  }
  const int pop = std::max(8, opts.pop_factor * n);
  Rng rng(opts.seed);

  std::vector<Eigen::VectorXd> xs(pop, Eigen::VectorXd(n));
  std::vector<double> fs(pop);
  for (int i = 0; i < pop; ++i)
    for (int j = 0; j < n; ++j) xs[i][j] = rng.uniform(lo[j], hi[j]);

  OptimResult res;
  parallel_for(pop, [&](std::size_t i) { fs[i] = detail::guarded_eval(f, xs[i]); });
  res.evaluations = pop;

  int best = int(std::min_element(fs.begin(), fs.end()) - fs.begin());
  double best_f = fs[best];
  int stall = 0;
  bool budget_hit = true;
  std::vector<Eigen::VectorXd> trials(pop, Eigen::VectorXd(n));
  std::vector<double> trial_f(pop);

  for (int gen = 0; gen < opts.max_generations; ++gen) {
    res.iterations = gen + 1;
    // all random draws happen up front in population order, then the
    // evaluations fan out; selection is again in index order
    for (int i = 0; i < pop; ++i) {
      int a, b, c;
      do a = int(rng.below(pop)); while (a == i);
      do b = int(rng.below(pop)); while (b == i || b == a);
      do c = int(rng.below(pop)); while (c == i || c == a || c == b);
      int j_forced = int(rng.below(std::uint64_t(n)));
      for (int j = 0; j < n; ++j) {
        bool cross = j == j_forced || rng.uniform() < opts.crossover;
        double v = cross ? xs[a][j] + opts.weight * (xs[b][j] - xs[c][j]) : xs[i][j];
        trials[i][j] = std::clamp(v, lo[j], hi[j]);
      }
    }
    parallel_for(pop, [&](std::size_t i) { trial_f[i] = detail::guarded_eval(f, trials[i]); });
    res.evaluations += pop;
    for (int i = 0; i < pop; ++i) {
      if (trial_f[i] <= fs[i]) {
        fs[i] = trial_f[i];
        xs[i] = trials[i];
      }
    }
    best = int(std::min_element(fs.begin(), fs.end()) - fs.begin());
    if (fs[best] < best_f - opts.tol * (1.0 + std::abs(best_f))) {
      best_f = fs[best];
      stall = 0;
    } else if (++stall >= opts.stall_generations) {
      budget_hit = false;
      break;
    }
  }
  res.max_iter_reached = budget_hit;
  res.x = xs[best];
  res.value = fs[best];
  for (int j = 0; j < n; ++j) {
    if (hi[j] <= lo[j]) continue;
    double mean = 0;
    for (int i = 0; i < pop; ++i) mean += xs[i][j];
    mean /= double(pop);
    double var = 0;
    for (int i = 0; i < pop; ++i) var += (xs[i][j] - mean) * (xs[i][j] - mean);
    res.population_diversity += std::sqrt(var / double(pop)) / (hi[j] - lo[j]);
  }
  res.population_diversity /= double(n);

  if (opts.polish) {
    NelderMeadOptions nm;
    nm.initial_step = 0.02;
    nm.max_iter = opts.polish_max_iter;
    nm.lower = lo;
    nm.upper = hi;
    OptimResult polished = nelder_mead(f, res.x, nm);
    res.evaluations += polished.evaluations;
    if (polished.value <= res.value) {
      res.x = polished.x;
      res.value = polished.value;
      res.max_iter_reached = res.max_iter_reached || polished.max_iter_reached;
    }
  }
  return res;
}

}  // namespace vsi
