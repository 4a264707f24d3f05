#pragma once

// Finite-N agent dynamics
//
//   dX_i = sum_j w_ij K(X_i - X_j) dt (+ self drift) (+ sigma dW_i),
//
// and the McKean particles driven by the PDE fibers.

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "mfgraph/common.hpp"
#include "mfgraph/graph.hpp"
#include "mfgraph/kernel.hpp"
#include "mfgraph/laws.hpp"
#include "mfgraph/parallel.hpp"
#include "mfgraph/pde.hpp"
#include "mfgraph/rng.hpp"

namespace mfgraph {

/// Positions of N agents in R^d (row-major N x d).
struct ParticleState {
  std::size_t n_agents = 0;
  std::size_t dim = 1;
  std::vector<double> positions;
  double time = 0.0;
  /// 0 on the line; otherwise coordinates are kept in [0, period).
  double period = 0.0;

  ParticleState() = default;
  ParticleState(std::size_t n, std::size_t d, double per = 0.0)
      : n_agents(n), dim(d), positions(n * d, 0.0), period(per) {}

  double& at(std::size_t i, std::size_t k) { return positions[i * dim + k]; }
  double at(std::size_t i, std::size_t k) const { return positions[i * dim + k]; }
  std::span<const double> agent(std::size_t i) const {
    return std::span<const double>(positions).subspan(i * dim, dim);
  }

  void wrap() {
    if (period <= 0.0) return;
    for (double& v : positions) {
      v = std::fmod(v, period);
      if (v < 0.0) v += period;
    }
  }

  friend bool operator==(const ParticleState&, const ParticleState&) = default;
};

/// Independent per-agent draws X_i ~ laws[i] (or laws[0] for all agents when a
/// single law is given), from the initial_positions stream of (seed, replica).
inline ParticleState sample_initial(const std::vector<GaussianMixture>& laws, std::size_t n,
                                    std::uint64_t seed, std::uint64_t replica = 0,
                                    double period = 0.0) {
  require(laws.size() == 1 || laws.size() == n, "sample_initial: need 1 or n laws");
  ParticleState x(n, 1, period);
  for (std::size_t i = 0; i < n; ++i) {
    auto rng = make_engine(seed, StreamPurpose::initial_positions, replica, i);
    x.at(i, 0) = laws[laws.size() == 1 ? 0 : i].sample(rng);
  }
  x.wrap();
  return x;
}

// ---------------------------------------------------------------------------
// Drift

/// drift_i = sum over stored (i,j) of w_ij K(x_i - x_j), plus the self drift.
inline std::vector<double> drift(const SparseWeights& w, const Dynamics& dyn,
                                 const ParticleState& x) {
  const Kernel& k = dyn.kernel;
  if (w.n_agents() != x.n_agents)
    throw InvalidArgument("drift: weights have " + std::to_string(w.n_agents()) +
                          " agents, state has " + std::to_string(x.n_agents));
  if (k.dim != x.dim)
    throw InvalidArgument("drift: kernel dimension " + std::to_string(k.dim) +
                          " != state dimension " + std::to_string(x.dim));
  const std::size_t d = x.dim;
  std::vector<double> out(x.n_agents * d, 0.0);
  if (d == 1) {
    const auto& pos = x.positions;
    parallel_for(x.n_agents, [&](std::size_t i) {
      const double xi = pos[i];
      double s = 0.0;
      for (const auto& e : w.row(i)) s += e.weight * k(xi - pos[e.col]);
      out[i] = s;
      if (dyn.self_drift) dyn.self_drift(i, x.agent(i), std::span<double>(out).subspan(i, 1));
    });
    return out;
  }
  parallel_for(x.n_agents, [&](std::size_t i) {
    std::vector<double> z(d), kz(d);
    double* o = out.data() + i * d;
    for (const auto& e : w.row(i)) {
      for (std::size_t c = 0; c < d; ++c) z[c] = k.wrap_difference(x.at(i, c) - x.at(e.col, c));
      k.eval(z, kz);
      for (std::size_t c = 0; c < d; ++c) o[c] += e.weight * kz[c];
    }
    if (dyn.self_drift) dyn.self_drift(i, x.agent(i), std::span<double>(o, d));
  });
  return out;
}

inline std::vector<double> drift(const SparseWeights& w, const Kernel& k, const ParticleState& x) {
  return drift(w, Dynamics{k, {}}, x);
}

// ---------------------------------------------------------------------------
// Integrators

enum class Integrator { euler, rk4 };

namespace detail {

inline double max_row_abs_sum(const SparseWeights& w) {
  double m = 0.0;
  for (std::size_t i = 0; i < w.n_agents(); ++i) {
    double s = 0.0;
    for (const auto& e : w.row(i)) s += std::abs(e.weight);
    m = std::max(m, s);
  }
  return m;
}

inline void check_step(const SparseWeights& w, const Kernel& k, double dt, const char* who) {
  if (!(dt > 0.0) || !std::isfinite(dt))
    throw InvalidArgument(std::string(who) + ": dt must be positive and finite");
  const double scale = max_row_abs_sum(w) * k.lipschitz;
  if (dt * scale > 0.5)
    throw NumericGuardError(std::string(who) + ": stability guard dt*row_sum*lipschitz = " +
                            format_double(dt * scale) + " > 0.5; use dt <= " +
                            format_double(0.5 / scale));
}

inline ParticleState axpy(const ParticleState& x, double a, const std::vector<double>& v) {
  ParticleState y = x;
  for (std::size_t q = 0; q < y.positions.size(); ++q) y.positions[q] += a * v[q];
  return y;
}

}  // namespace detail

/// One explicit step of the deterministic system (RK4 by default).
inline ParticleState step_deterministic(const SparseWeights& w, const Dynamics& dyn,
                                        const ParticleState& x, double dt,
                                        Integrator method = Integrator::rk4) {
  detail::check_step(w, dyn.kernel, dt, "step_deterministic");
  ParticleState out;
  if (method == Integrator::euler) {
    out = detail::axpy(x, dt, drift(w, dyn, x));
  } else {
    const auto k1 = drift(w, dyn, x);
    const auto k2 = drift(w, dyn, detail::axpy(x, 0.5 * dt, k1));
    const auto k3 = drift(w, dyn, detail::axpy(x, 0.5 * dt, k2));
    const auto k4 = drift(w, dyn, detail::axpy(x, dt, k3));
    out = x;
    for (std::size_t q = 0; q < out.positions.size(); ++q)
      out.positions[q] += dt / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]);
  }
  out.time = x.time + dt;
  out.wrap();
  return out;
}

inline ParticleState step_deterministic(const SparseWeights& w, const Kernel& k,
                                        const ParticleState& x, double dt,
                                        Integrator method = Integrator::rk4) {
  return step_deterministic(w, Dynamics{k, {}}, x, dt, method);
}

/// Independent Brownian increments, one engine per agent seeded from
/// (seed, path_noise, replica, agent).
class NoiseSource {
 public:
  NoiseSource(std::uint64_t seed, std::uint64_t replica, std::size_t n_agents) {
    engines_.reserve(n_agents);
    for (std::size_t i = 0; i < n_agents; ++i)
      engines_.push_back(make_engine(seed, StreamPurpose::path_noise, replica, i));
  }

  std::size_t n_agents() const noexcept { return engines_.size(); }

  /// Standard normal draw for agent i.
  double normal(std::size_t i) { return gauss_(engines_.at(i)); }

 private:
  std::vector<Engine> engines_;
  std::normal_distribution<double> gauss_{0.0, 1.0};
};

namespace detail {

inline void add_noise(ParticleState& y, double dt, double sigma, NoiseSource& noise) {
  if (sigma == 0.0) return;
  if (noise.n_agents() != y.n_agents) throw InvalidArgument("noise source agent count mismatch");
  const double amp = sigma * std::sqrt(dt);
  for (std::size_t i = 0; i < y.n_agents; ++i)
    for (std::size_t c = 0; c < y.dim; ++c) y.at(i, c) += amp * noise.normal(i);
}

}  // namespace detail

/// Euler-Maruyama step with additive noise sigma dW_i.
inline ParticleState step_stochastic(const SparseWeights& w, const Dynamics& dyn,
                                     const ParticleState& x, double dt, double sigma,
                                     NoiseSource& noise) {
  require(sigma >= 0.0, "step_stochastic: sigma must be non-negative");
  detail::check_step(w, dyn.kernel, dt, "step_stochastic");
  ParticleState y = detail::axpy(x, dt, drift(w, dyn, x));
  detail::add_noise(y, dt, sigma, noise);
  y.time = x.time + dt;
  y.wrap();
  return y;
}

inline ParticleState step_stochastic(const SparseWeights& w, const Kernel& k,
                                     const ParticleState& x, double dt, double sigma,
                                     NoiseSource& noise) {
  return step_stochastic(w, Dynamics{k, {}}, x, dt, sigma, noise);
}

// ---------------------------------------------------------------------------
// McKean particles

enum class McKeanEval {
  /// sum_c K(x - x_c) psi_i[c] dx at the particle position.
  quadrature,
  /// The same quadrature tabulated at cell centers and linearly interpolated;
  /// falls back to quadrature outside the span of centers on a line grid.
  interpolated,
};

/// Drift field of the McKean system for a fixed snapshot of the fibers:
/// psi_i = sum_j w_ij fbar_j, V_i(x) = int K(x - y) psi_i(y) dy.
struct McKeanField {
  Grid1D grid;
  std::size_t n_agents = 0;
  std::vector<double> psi;      ///< N x G
  std::vector<double> centers;  ///< V_i at cell centers, N x G

  McKeanField(const SparseWeights& w, const Kernel& k, const FiberedDensity& laws,
              ConvolutionMethod method = ConvolutionMethod::direct)
      : grid(laws.grid) {
    require(k.dim == 1, "McKeanField: grid machinery is one-dimensional (d must be 1)");
    if (w.n_agents() != laws.n_fibers)
      throw InvalidArgument("McKeanField: weights/fiber count mismatch");
    n_agents = w.n_agents();
    psi = kernel_apply_block(w, laws.values, laws.n_cells());
    FiberedDensity mix(laws.grid, n_agents);
    mix.values = psi;
    centers = convolve_fibers(mix, k, method);
  }

  double quadrature(const Kernel& k, std::size_t i, double x) const {
    const std::size_t g = grid.n_cells;
    const double* p = psi.data() + i * g;
    double s = 0.0;
    for (std::size_t c = 0; c < g; ++c) s += k(x - grid.center(c)) * p[c];
    return s * grid.dx();
  }

  double interpolated(const Kernel& k, std::size_t i, double x) const {
    const std::size_t g = grid.n_cells;
    const double* v = centers.data() + i * g;
    const double dx = grid.dx();
    double u = (x - grid.x_min) / dx - 0.5;
    if (grid.periodic()) {
      u = std::fmod(u, static_cast<double>(g));
      if (u < 0.0) u += static_cast<double>(g);
      const std::size_t c0 = std::min(g - 1, static_cast<std::size_t>(u));
      const std::size_t c1 = (c0 + 1) % g;
      const double a = u - static_cast<double>(c0);
      return (1.0 - a) * v[c0] + a * v[c1];
    }
    if (u < 0.0 || u > static_cast<double>(g - 1)) return quadrature(k, i, x);
    const std::size_t c0 = std::min(g - 2, static_cast<std::size_t>(u));
    const double a = u - static_cast<double>(c0);
    return (1.0 - a) * v[c0] + a * v[c0 + 1];
  }

  double operator()(const Kernel& k, std::size_t i, double x, McKeanEval mode) const {
    return mode == McKeanEval::quadrature ? quadrature(k, i, x) : interpolated(k, i, x);
  }
};

inline std::vector<double> mckean_drift(const McKeanField& field, const Kernel& k,
                                        const ParticleState& x,
                                        McKeanEval mode = McKeanEval::quadrature) {
  require(x.dim == 1, "mckean_drift: d must be 1");
  if (x.n_agents != field.n_agents) throw InvalidArgument("mckean_drift: agent count mismatch");
  std::vector<double> out(x.n_agents);
  parallel_for(x.n_agents, [&](std::size_t i) { out[i] = field(k, i, x.positions[i], mode); });
  return out;
}

/// Euler-Maruyama step of dXbar_i = sum_j w_ij int K(Xbar_i - y) fbar_j(t, dy) dt + sigma dW_i
/// with fbar supplied by the PDE solver at the current time.
inline ParticleState step_mckean(const SparseWeights& w, const Kernel& k, const ParticleState& x,
                                 const FiberedDensity& laws, double dt, double sigma,
                                 NoiseSource* noise = nullptr,
                                 McKeanEval mode = McKeanEval::quadrature) {
  if (x.dim != 1 || k.dim != 1)
    throw InvalidArgument("step_mckean: grid machinery is one-dimensional (d must be 1)");
  require(sigma >= 0.0, "step_mckean: sigma must be non-negative");
  require(sigma == 0.0 || noise != nullptr, "step_mckean: sigma > 0 needs a noise source");
  detail::check_step(w, k, dt, "step_mckean");
  const McKeanField field(w, k, laws);
  ParticleState y = detail::axpy(x, dt, mckean_drift(field, k, x, mode));
  if (noise) detail::add_noise(y, dt, sigma, *noise);
  y.time = x.time + dt;
  y.wrap();
  return y;
}

// ---------------------------------------------------------------------------
// Empirical measure and output

/// mu^N = (1/N) sum_i delta_{X_i}.
struct EmpiricalMeasure {
  std::size_t dim = 1;
  std::vector<double> atoms;  ///< N x dim
  double weight = 0.0;        ///< 1/N per atom

  std::size_t size() const noexcept { return dim == 0 ? 0 : atoms.size() / dim; }
  double total_mass() const noexcept { return weight * static_cast<double>(size()); }
};

inline EmpiricalMeasure empirical(const ParticleState& x) {
  require(x.n_agents > 0, "empirical: no agents");
  return EmpiricalMeasure{x.dim, x.positions, 1.0 / static_cast<double>(x.n_agents)};
}

inline void write_trajectory_csv(std::ostream& os, const std::vector<ParticleState>& snaps,
                                 bool header = true) {
  if (header && !snaps.empty()) {
    os << "t,agent";
    for (std::size_t c = 0; c < snaps.front().dim; ++c) os << ",coord" << c;
    os << '\n';
  }
  for (const auto& s : snaps)
    for (std::size_t i = 0; i < s.n_agents; ++i) {
      os << format_double(s.time) << ',' << i;
      for (std::size_t c = 0; c < s.dim; ++c) os << ',' << format_double(s.at(i, c));
      os << '\n';
    }
}

}  // namespace mfgraph
