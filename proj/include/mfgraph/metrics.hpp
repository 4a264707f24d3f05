#pragma once

// Exact one-dimensional Wasserstein-1 distances and the particle / McKean /
// PDE gap diagnostics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mfgraph/common.hpp"
#include "mfgraph/graph.hpp"
#include "mfgraph/kernel.hpp"
#include "mfgraph/laws.hpp"
#include "mfgraph/parallel.hpp"
#include "mfgraph/particles.hpp"
#include "mfgraph/pde.hpp"
#include "mfgraph/rng.hpp"

namespace mfgraph {

// ---------------------------------------------------------------------------
// Laws and W1

/// A probability law on the line or on a circle [origin, origin + period):
/// either weighted atoms or a piecewise-constant density on cells.
struct Law1D {
  enum class Kind { atoms, grid };

  Kind kind = Kind::atoms;
  /// atoms: sorted positions; grid: the G+1 cell edges.
  std::vector<double> support;
  /// atoms: mass per atom; grid: mass per cell.
  std::vector<double> weights;
  double period = 0.0;
  double origin = 0.0;

  static constexpr double mass_tolerance = 1e-9;

  /// Atoms with the given weights (uniform when empty). On a circle the
  /// positions are reduced into [origin, origin + period).
  static Law1D from_atoms(std::vector<double> x, std::vector<double> w = {}, double period = 0.0,
                          double origin = 0.0) {
    require(!x.empty(), "Law1D: no atoms");
    require(period >= 0.0, "Law1D: period must be non-negative");
    if (w.empty()) w.assign(x.size(), 1.0 / static_cast<double>(x.size()));
    require(w.size() == x.size(), "Law1D: atom/weight count mismatch");
    for (double& v : x) {
      require(std::isfinite(v), "Law1D: atoms must be finite");
      if (period > 0.0) {
        v = std::fmod(v - origin, period);
        if (v < 0.0) v += period;
        v += origin;
        if (v >= origin + period) v = origin;
      }
    }
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    Law1D l;
    l.kind = Kind::atoms;
    l.period = period;
    l.origin = origin;
    l.support.reserve(x.size());
    l.weights.reserve(x.size());
    for (std::size_t i : idx) {
      l.support.push_back(x[i]);
      l.weights.push_back(w[i]);
    }
    l.validate();
    return l;
  }

  /// Density values per cell (integrating to 1 against dx).
  static Law1D from_grid(const Grid1D& g, std::span<const double> density) {
    require(density.size() == g.n_cells, "Law1D: density length != grid cells");
    Law1D l;
    l.kind = Kind::grid;
    l.period = g.periodic() ? g.x_max - g.x_min : 0.0;
    l.origin = g.x_min;
    l.support.resize(g.n_cells + 1);
    for (std::size_t c = 0; c <= g.n_cells; ++c)
      l.support[c] = g.x_min + static_cast<double>(c) * g.dx();
    l.support.back() = g.x_max;
    l.weights.resize(g.n_cells);
    for (std::size_t c = 0; c < g.n_cells; ++c) l.weights[c] = density[c] * g.dx();
    l.validate();
    return l;
  }

  static Law1D from_fiber(const FiberedDensity& f, std::size_t fiber) {
    return from_grid(f.grid, f.fiber(fiber));
  }

  /// Grid law of a density rescaled to unit mass; for fibers that lost mass
  /// through a line boundary (the loss is tracked by the transport ledger).
  static Law1D from_grid_renormalized(const Grid1D& g, std::span<const double> density) {
    double m = 0.0;
    for (double v : density) m += v * g.dx();
    require(m > 0.0 && std::isfinite(m), "Law1D: density has no mass");
    std::vector<double> scaled(density.begin(), density.end());
    for (double& v : scaled) v /= m;
    return from_grid(g, scaled);
  }

  double total_mass() const {
    CompensatedSum s;
    for (double w : weights) s.add(w);
    return s.value();
  }

  void validate() const {
    for (double w : weights)
      if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgument("Law1D: weights must be >= 0");
    for (std::size_t i = 1; i < support.size(); ++i)
      require(support[i - 1] <= support[i], "Law1D: support must be sorted");
    const double m = total_mass();
    if (std::abs(m - 1.0) > mass_tolerance)
      throw InvalidArgument("Law1D: unnormalized input, total mass " + format_double(m));
  }
};

namespace detail {

/// CDF as knots (x, F(x-), F(x+)); linear between consecutive knots.
struct CdfKnot {
  double x, left, right;
};

inline std::vector<CdfKnot> cdf_knots(const Law1D& l) {
  std::vector<CdfKnot> k;
  double cum = 0.0;
  if (l.kind == Law1D::Kind::atoms) {
    for (std::size_t i = 0; i < l.support.size(); ++i) {
      const double before = cum;
      cum += l.weights[i];
      if (!k.empty() && k.back().x == l.support[i])
        k.back().right = cum;
      else
        k.push_back({l.support[i], before, cum});
    }
  } else {
    k.push_back({l.support[0], 0.0, 0.0});
    for (std::size_t c = 0; c < l.weights.size(); ++c) {
      cum += l.weights[c];
      k.push_back({l.support[c + 1], cum, cum});
    }
  }
  // Pin the total to exactly 1 so the tails cancel.
  const double total = cum;
  for (auto& q : k) {
    q.left /= total;
    q.right /= total;
  }
  return k;
}

/// F(y+) and F(y-) for a knot list.
inline double cdf_after(const std::vector<CdfKnot>& k, double y) {
  auto it = std::upper_bound(k.begin(), k.end(), y, [](double v, const CdfKnot& q) { return v < q.x; });
  if (it == k.begin()) return 0.0;
  const auto& a = *(it - 1);
  if (it == k.end()) return a.right;
  return a.right + (it->left - a.right) * (y - a.x) / (it->x - a.x);
}

inline double cdf_before(const std::vector<CdfKnot>& k, double y) {
  auto it = std::lower_bound(k.begin(), k.end(), y, [](const CdfKnot& q, double v) { return q.x < v; });
  if (it == k.begin()) return 0.0;
  const auto& a = *(it - 1);
  if (it == k.end()) return a.right;
  return a.right + (it->left - a.right) * (y - a.x) / (it->x - a.x);
}

/// int over a segment of length len of |d(s)| with d linear from d0 to d1.
inline double abs_linear_integral(double d0, double d1, double len) {
  if ((d0 >= 0.0 && d1 >= 0.0) || (d0 <= 0.0 && d1 <= 0.0)) return 0.5 * (std::abs(d0) + std::abs(d1)) * len;
  return 0.5 * (d0 * d0 + d1 * d1) / (std::abs(d0) + std::abs(d1)) * len;
}

/// Length of {s : d(s) < c} minus length of {s : d(s) > c} on one segment.
inline double below_minus_above(double d0, double d1, double len, double c) {
  double below;
  if (d0 == d1) {
    below = d0 < c ? len : 0.0;
  } else {
    const double s = std::clamp((c - d0) / (d1 - d0), 0.0, 1.0);
    below = d1 > d0 ? s * len : (1.0 - s) * len;
  }
  return 2.0 * below - len;
}

struct CdfDifference {
  std::vector<double> d0, d1, len;
};

}  // namespace detail

/// Exact W1 = int |F_a - F_b| dx (on a circle, min over c of int |F_a - F_b - c|).
inline double w1(const Law1D& a, const Law1D& b) {
  a.validate();
  b.validate();
  if (a.period != b.period || (a.period > 0.0 && a.origin != b.origin))
    throw InvalidArgument("w1: laws live on different domains");
  const auto ka = detail::cdf_knots(a), kb = detail::cdf_knots(b);
  std::vector<double> pts;
  pts.reserve(ka.size() + kb.size() + 2);
  for (const auto& q : ka) pts.push_back(q.x);
  for (const auto& q : kb) pts.push_back(q.x);
  if (a.period > 0.0) {
    pts.push_back(a.origin);
    pts.push_back(a.origin + a.period);
  }
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());

  detail::CdfDifference diff;
  for (std::size_t s = 0; s + 1 < pts.size(); ++s) {
    const double y0 = pts[s], y1 = pts[s + 1];
    diff.d0.push_back(detail::cdf_after(ka, y0) - detail::cdf_after(kb, y0));
    diff.d1.push_back(detail::cdf_before(ka, y1) - detail::cdf_before(kb, y1));
    diff.len.push_back(y1 - y0);
  }
  auto cost = [&](double c) {
    CompensatedSum sum;
    for (std::size_t s = 0; s < diff.len.size(); ++s)
      sum.add(detail::abs_linear_integral(diff.d0[s] - c, diff.d1[s] - c, diff.len[s]));
    return sum.value();
  };
  if (a.period == 0.0) return cost(0.0);

  // Convex in c; bisect on the sign of the derivative.
  double lo = 0.0, hi = 0.0;
  for (std::size_t s = 0; s < diff.len.size(); ++s) {
    lo = std::min({lo, diff.d0[s], diff.d1[s]});
    hi = std::max({hi, diff.d0[s], diff.d1[s]});
  }
  for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
    const double mid = 0.5 * (lo + hi);
    double slope = 0.0;
    for (std::size_t s = 0; s < diff.len.size(); ++s)
      slope += detail::below_minus_above(diff.d0[s], diff.d1[s], diff.len[s], mid);
    (slope < 0.0 ? lo : hi) = mid;
  }
  return std::min(cost(lo), cost(hi));
}

// ---------------------------------------------------------------------------
// Explicit constants

/// C1(t) = sqrt(2/C) (exp(2 C t |K|_{W^{1,inf}}) - 1); 0 when C = 0.
inline double c1(double t, double c, double k_w1inf) {
  require(t >= 0.0 && c >= 0.0 && k_w1inf >= 0.0, "c1: arguments must be non-negative");
  if (c == 0.0) return 0.0;
  return std::sqrt(2.0 / c) * std::expm1(2.0 * c * t * k_w1inf);
}

/// C2(t) = (2 M^2 + 2 C^2 |K|_inf^2 t^2)^{1/2}.
inline double c2(double t, double m, double c, double k_sup) {
  require(t >= 0.0 && m >= 0.0 && c >= 0.0 && k_sup >= 0.0, "c2: arguments must be non-negative");
  return std::sqrt(2.0 * m * m + 2.0 * c * c * k_sup * k_sup * t * t);
}

// ---------------------------------------------------------------------------
// Gap experiments

struct GapReport {
  double t = 0.0;
  /// Estimated gap in W1 units.
  double gap = 0.0;
  /// Explicit right-hand side C1(t) sup|w_ij|^{1/2}.
  double bound = 0.0;
  double stderr_ = 0.0;
  std::size_t seeds = 0;
  /// Estimator tolerance: 3 stderr + dx.
  double tolerance = 0.0;
  /// Diagnostic: max_i W1(cross-replica empirical law of X_i, PDE fiber i).
  double law_gap = 0.0;
};

/// Shared setup of the independence and mean-field experiments (d = 1).
struct GapExperiment {
  SparseWeights weights;
  Kernel kernel;
  /// One law for every agent, or one per agent.
  std::vector<GaussianMixture> initial;
  Grid1D grid;
  double sigma = 0.0;
  /// Particle step; the PDE sub-steps inside it when its CFL limit is smaller.
  double dt = 0.01;
  /// Report times, ascending, >= 0.
  std::vector<double> times;
  std::uint64_t seed = 0;
  McKeanEval mckean = McKeanEval::interpolated;
  ConvolutionMethod convolution = ConvolutionMethod::fft;
  std::size_t bootstrap_samples = 200;

  std::size_t n_agents() const { return weights.n_agents(); }
  /// PDE viscosity matching the noise: nu = sigma^2 / 2.
  double nu() const { return 0.5 * sigma * sigma; }

  void validate() const {
    require(kernel.dim == 1, "gap experiment: d must be 1");
    require(n_agents() >= 1, "gap experiment: no agents");
    require(initial.size() == 1 || initial.size() == n_agents(),
            "gap experiment: need 1 or N initial laws");
    for (const auto& l : initial) l.validate();
    grid.validate();
    require(sigma >= 0.0 && std::isfinite(sigma), "gap experiment: sigma must be >= 0");
    require(dt > 0.0 && std::isfinite(dt), "gap experiment: dt must be positive");
    require(!times.empty(), "gap experiment: no report times");
    require(std::is_sorted(times.begin(), times.end()) && times.front() >= 0.0,
            "gap experiment: times must be ascending and >= 0");
    require(bootstrap_samples >= 10, "gap experiment: need >= 10 bootstrap samples");
    if (kernel.on_torus())
      require(grid.periodic() && std::abs((grid.x_max - grid.x_min) - kernel.period) < 1e-12,
              "gap experiment: torus kernel needs a periodic grid of the same length");
  }

  /// Explicit C1(t) sup|w_ij|^{1/2}, with C the larger of the row and column sum bounds.
  double independence_bound(double t) const {
    const auto s = check_scaling(weights);
    const double c = std::max(s.max_row_abs_sum, s.max_col_abs_sum);
    return c1(t, c, kernel.w1inf_norm()) * std::sqrt(s.max_entry_abs);
  }

  FiberedDensity initial_density() const {
    std::vector<GaussianMixture> laws = initial;
    if (laws.size() == 1) laws.assign(n_agents(), initial.front());
    return density_from_mixtures(grid, laws);
  }

  double period() const { return kernel.on_torus() ? kernel.period : 0.0; }
};

namespace detail {

/// Step sizes of at most dt that land exactly on every report time.
inline std::vector<std::pair<double, bool>> step_schedule(const std::vector<double>& times, double dt) {
  std::vector<std::pair<double, bool>> steps;  // (step, ends on a report time)
  double t = 0.0;
  for (double target : times) {
    while (target - t > 1e-12 * std::max(1.0, target)) {
      const double remaining = target - t;
      const auto n = static_cast<std::size_t>(std::ceil(remaining / dt - 1e-9));
      const double h = remaining / static_cast<double>(n);
      for (std::size_t s = 0; s < n; ++s) steps.push_back({h, false});
      t = target;
    }
    steps.push_back({0.0, true});
  }
  return steps;
}

inline void euler_update(ParticleState& x, const std::vector<double>& v, double h, double sigma,
                         NoiseSource* noise) {
  for (std::size_t i = 0; i < x.n_agents; ++i) x.positions[i] += h * v[i];
  if (noise) add_noise(x, h, sigma, *noise);
  x.time += h;
  x.wrap();
}

inline FiberedDensity advance_pde(const FiberedDensity& f, const GapExperiment& e, double h,
                                  TransportLedger* ledger) {
  SolveOptions opts;
  opts.max_dt = h;
  opts.convolution = e.convolution;
  auto res = solve(f, e.weights, e.kernel, e.nu(), h, {f.time + h}, opts);
  if (ledger) {
    ledger->steps += res.ledger.steps;
    for (std::size_t i = 0; i < ledger->leakage.size(); ++i) ledger->leakage[i] += res.ledger.leakage[i];
    ledger->max_mass_drift_per_step =
        std::max(ledger->max_mass_drift_per_step, res.ledger.max_mass_drift_per_step);
    ledger->clamp_total += res.ledger.clamp_total;
    ledger->min_value_before_clamp = std::min(ledger->min_value_before_clamp, res.ledger.min_value_before_clamp);
  }
  FiberedDensity out = std::move(res.snapshots.back());
  return out;
}

inline double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double v = 0.0;
  for (double x : xs) v += (x - mean) * (x - mean);
  return std::sqrt(v / static_cast<double>(xs.size() - 1));
}

}  // namespace detail

/// Minimum replica count accepted by independence_gap.
inline constexpr std::size_t kMinReplicas = 100;

/// Propagation-of-independence gap sup_i E|X_i(t) - Xbar_i(t)|.
///
/// Each replica runs the particle system and the McKean particles from the
/// same initial draws and the same Brownian increments; Xbar is driven by the
/// PDE fibers, advanced in lockstep. The coupled mean bounds
/// W1(Law X_i, fbar_i) from above; the direct law distance is reported as
/// law_gap. stderr comes from a bootstrap over replicas.
inline std::vector<GapReport> independence_gap(const GapExperiment& e, std::size_t n_replicas,
                                               TransportLedger* ledger = nullptr) {
  e.validate();
  if (n_replicas < kMinReplicas)
    throw InvalidArgument("independence_gap: n_replicas=" + std::to_string(n_replicas) +
                          " < " + std::to_string(kMinReplicas) + " (estimator too noisy)");
  const std::size_t n = e.n_agents();
  const double period = e.period();
  detail::check_step(e.weights, e.kernel, e.dt, "independence_gap");

  FiberedDensity f = e.initial_density();
  if (ledger) {
    *ledger = TransportLedger{};
    ledger->leakage.assign(n, 0.0);
  }
  std::vector<ParticleState> x(n_replicas), xb;
  std::vector<NoiseSource> noise_x, noise_xb;
  for (std::size_t r = 0; r < n_replicas; ++r) x[r] = sample_initial(e.initial, n, e.seed, r, period);
  xb = x;
  if (e.sigma > 0.0)
    for (std::size_t r = 0; r < n_replicas; ++r) {
      noise_x.emplace_back(e.seed, r, n);
      noise_xb.emplace_back(e.seed, r, n);
    }

  std::vector<GapReport> out;
  std::vector<double> dist(n_replicas * n);
  for (const auto& [h, report] : detail::step_schedule(e.times, e.dt)) {
    if (report) {
      const double t = e.times[out.size()];
      parallel_for(n_replicas, [&](std::size_t r) {
        for (std::size_t i = 0; i < n; ++i)
          dist[r * n + i] = std::abs(e.kernel.wrap_difference(x[r].positions[i] - xb[r].positions[i]));
      });
      auto sup_mean = [&](const std::vector<std::size_t>& pick) {
        double best = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          CompensatedSum s;
          for (std::size_t r : pick) s.add(dist[r * n + i]);
          best = std::max(best, s.value() / static_cast<double>(pick.size()));
        }
        return best;
      };
      std::vector<std::size_t> all(n_replicas);
      std::iota(all.begin(), all.end(), 0);
      GapReport rep;
      rep.t = t;
      rep.seeds = n_replicas;
      rep.gap = sup_mean(all);
      std::vector<double> boot(e.bootstrap_samples);
      parallel_for(e.bootstrap_samples, [&](std::size_t b) {
        auto rng = make_engine(e.seed, StreamPurpose::bootstrap, b, out.size());
        std::uniform_int_distribution<std::size_t> pick(0, n_replicas - 1);
        std::vector<std::size_t> sel(n_replicas);
        for (auto& s : sel) s = pick(rng);
        boot[b] = sup_mean(sel);
      });
      rep.stderr_ = detail::sample_std(boot);
      rep.bound = e.independence_bound(t);
      rep.tolerance = 3.0 * rep.stderr_ + e.grid.dx();
      std::vector<double> law(n);
      parallel_for(n, [&](std::size_t i) {
        std::vector<double> atoms(n_replicas);
        for (std::size_t r = 0; r < n_replicas; ++r) atoms[r] = x[r].positions[i];
        law[i] = w1(Law1D::from_atoms(std::move(atoms), {}, f.grid.periodic() ? period : 0.0, f.grid.x_min),
                    Law1D::from_grid_renormalized(f.grid, f.fiber(i)));
      });
      rep.law_gap = *std::max_element(law.begin(), law.end());
      out.push_back(rep);
      continue;
    }
    const McKeanField field(e.weights, e.kernel, f, e.convolution);
    parallel_for(n_replicas, [&](std::size_t r) {
      const auto v = drift(e.weights, e.kernel, x[r]);
      const auto vb = mckean_drift(field, e.kernel, xb[r], e.mckean);
      detail::euler_update(x[r], v, h, e.sigma, e.sigma > 0.0 ? &noise_x[r] : nullptr);
      detail::euler_update(xb[r], vb, h, e.sigma, e.sigma > 0.0 ? &noise_xb[r] : nullptr);
    });
    f = detail::advance_pde(f, e, h, ledger);
  }
  return out;
}

/// Seed-averaged W1 between each run's empirical measure and the PDE marginal
/// (1/N) sum_i fbar_i; runs[s][q] and pde[q] belong to the same time.
inline std::vector<GapReport> meanfield_gap(const std::vector<std::vector<ParticleState>>& runs,
                                            const std::vector<FiberedDensity>& pde,
                                            const GapExperiment* setup = nullptr) {
  require(!runs.empty(), "meanfield_gap: no runs");
  for (const auto& r : runs)
    require(r.size() == pde.size(), "meanfield_gap: run and PDE snapshot counts differ");
  std::vector<GapReport> out;
  for (std::size_t q = 0; q < pde.size(); ++q) {
    const auto& f = pde[q];
    const double period = f.grid.periodic() ? f.grid.x_max - f.grid.x_min : 0.0;
    const auto marg = marginal(f);
    const Law1D target = Law1D::from_grid_renormalized(f.grid, marg);
    std::vector<double> vals(runs.size());
    parallel_for(runs.size(), [&](std::size_t s) {
      const auto& x = runs[s][q];
      require(x.dim == 1, "meanfield_gap: d must be 1");
      require(std::abs(x.time - f.time) <= 1e-9 * std::max(1.0, f.time),
              "meanfield_gap: particle and PDE times differ (" + format_double(x.time) + " vs " + format_double(f.time) + ")");
      vals[s] = w1(Law1D::from_atoms(x.positions, {}, period, f.grid.x_min), target);
    });
    GapReport rep;
    rep.t = f.time;
    rep.seeds = runs.size();
    CompensatedSum s;
    for (double v : vals) s.add(v);
    rep.gap = s.value() / static_cast<double>(vals.size());
    rep.stderr_ = detail::sample_std(vals) / std::sqrt(static_cast<double>(vals.size()));
    rep.tolerance = 3.0 * rep.stderr_ + f.grid.dx();
    rep.bound = setup ? setup->independence_bound(f.time) : 0.0;
    out.push_back(rep);
  }
  return out;
}

/// Particle runs (one per seed) and the PDE, both at every report time.
struct MeanFieldRuns {
  std::vector<std::vector<ParticleState>> runs;
  std::vector<FiberedDensity> pde;
};

/// Runs the PDE once and n_seeds particle systems (Euler-Maruyama).
inline MeanFieldRuns simulate_meanfield(const GapExperiment& e, std::size_t n_seeds,
                                        TransportLedger* ledger = nullptr) {
  e.validate();
  require(n_seeds >= 1, "meanfield_gap: need at least one seed");
  const std::size_t n = e.n_agents();
  detail::check_step(e.weights, e.kernel, e.dt, "meanfield_gap");
  FiberedDensity f = e.initial_density();
  if (ledger) {
    *ledger = TransportLedger{};
    ledger->leakage.assign(n, 0.0);
  }
  std::vector<ParticleState> x(n_seeds);
  std::vector<NoiseSource> noise;
  for (std::size_t s = 0; s < n_seeds; ++s) {
    x[s] = sample_initial(e.initial, n, e.seed, s, e.period());
    if (e.sigma > 0.0) noise.emplace_back(e.seed, s, n);
  }
  std::vector<std::vector<ParticleState>> runs(n_seeds);
  std::vector<FiberedDensity> pde;
  for (const auto& [h, report] : detail::step_schedule(e.times, e.dt)) {
    if (report) {
      const double t = e.times[pde.size()];
      for (std::size_t s = 0; s < n_seeds; ++s) {
        x[s].time = t;
        runs[s].push_back(x[s]);
      }
      f.time = t;
      pde.push_back(f);
      continue;
    }
    parallel_for(n_seeds, [&](std::size_t s) {
      const auto v = drift(e.weights, e.kernel, x[s]);
      detail::euler_update(x[s], v, h, e.sigma, e.sigma > 0.0 ? &noise[s] : nullptr);
    });
    f = detail::advance_pde(f, e, h, ledger);
  }
  return {std::move(runs), std::move(pde)};
}

/// Mean-field gap at every report time, averaged over seeds.
inline std::vector<GapReport> meanfield_gap(const GapExperiment& e, std::size_t n_seeds,
                                            TransportLedger* ledger = nullptr) {
  const auto r = simulate_meanfield(e, n_seeds, ledger);
  return meanfield_gap(r.runs, r.pde, &e);
}

/// Seed average of sup_t W1(mu_N, marginal), with its standard error.
inline std::pair<double, double> seed_averaged_sup_gap(const MeanFieldRuns& r) {
  std::vector<double> sups(r.runs.size(), 0.0);
  for (std::size_t s = 0; s < r.runs.size(); ++s)
    for (const auto& rep : meanfield_gap({r.runs[s]}, r.pde)) sups[s] = std::max(sups[s], rep.gap);
  CompensatedSum acc;
  for (double v : sups) acc.add(v);
  const double n = static_cast<double>(sups.size());
  return {acc.value() / n, detail::sample_std(sups) / std::sqrt(n)};
}

inline void write_gap_csv(std::ostream& os, const std::vector<GapReport>& reports, bool header = true) {
  if (header) os << "t,gap,bound,stderr,seeds\n";
  for (const auto& r : reports)
    os << format_double(r.t) << ',' << format_double(r.gap) << ',' << format_double(r.bound) << ','
       << format_double(r.stderr_) << ',' << r.seeds << '\n';
}

}  // namespace mfgraph
