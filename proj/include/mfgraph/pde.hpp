#pragma once

// Finite-volume solver for the fibered transport system
//
//   d_t f(x, xi) + d_x( f(x, xi) V_f(x, xi) ) = nu d_xx f(x, xi),
//   V_f(x, xi) = sum_zeta w_{xi zeta} int K(x - y) f(y, zeta) dy,
//
// on a 1-D grid, one fiber per agent (or per xi-cell).

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "mfgraph/common.hpp"
#include "mfgraph/graph.hpp"
#include "mfgraph/kernel.hpp"
#include "mfgraph/laws.hpp"
#include "mfgraph/parallel.hpp"

namespace mfgraph {

enum class Topology { line, torus };

struct Grid1D {
  double x_min = 0.0;
  double x_max = 1.0;
  std::size_t n_cells = 8;
  Topology topology = Topology::line;

  Grid1D() = default;
  Grid1D(double lo, double hi, std::size_t cells, Topology topo = Topology::line)
      : x_min(lo), x_max(hi), n_cells(cells), topology(topo) {
    validate();
  }

  void validate() const {
    require(n_cells >= 8, "Grid1D: n_cells must be >= 8");
    require(std::isfinite(x_min) && std::isfinite(x_max) && x_max > x_min,
            "Grid1D: need finite x_min < x_max");
  }

  double length() const noexcept { return x_max - x_min; }
  double dx() const noexcept { return length() / static_cast<double>(n_cells); }
  double center(std::size_t c) const noexcept {
    return x_min + (static_cast<double>(c) + 0.5) * dx();
  }
  bool periodic() const noexcept { return topology == Topology::torus; }

  /// Cell containing x (torus: after wrapping). Returns n_cells if outside a line grid.
  std::size_t locate(double x) const noexcept {
    if (periodic()) {
      double u = std::fmod(x - x_min, length());
      if (u < 0) u += length();
      return std::min(n_cells - 1, static_cast<std::size_t>(u / dx()));
    }
    if (x < x_min || x >= x_max) return n_cells;
    return std::min(n_cells - 1, static_cast<std::size_t>((x - x_min) / dx()));
  }

  friend bool operator==(const Grid1D&, const Grid1D&) = default;
};

/// f(x, xi): one non-negative 1-D density per fiber, cell averages, row-major
/// (fiber, cell).
struct FiberedDensity {
  Grid1D grid;
  std::size_t n_fibers = 0;
  std::vector<double> values;
  double time = 0.0;

  FiberedDensity() = default;
  FiberedDensity(const Grid1D& g, std::size_t fibers)
      : grid(g), n_fibers(fibers), values(fibers * g.n_cells, 0.0) {}

  std::size_t n_cells() const noexcept { return grid.n_cells; }
  double& at(std::size_t f, std::size_t c) { return values[f * grid.n_cells + c]; }
  double at(std::size_t f, std::size_t c) const { return values[f * grid.n_cells + c]; }
  std::span<double> fiber(std::size_t f) {
    return std::span<double>(values).subspan(f * grid.n_cells, grid.n_cells);
  }
  std::span<const double> fiber(std::size_t f) const {
    return std::span<const double>(values).subspan(f * grid.n_cells, grid.n_cells);
  }

  double fiber_mass(std::size_t f) const { return compensated_sum(fiber(f)) * grid.dx(); }

  std::vector<double> masses() const {
    std::vector<double> m(n_fibers);
    for (std::size_t f = 0; f < n_fibers; ++f) m[f] = fiber_mass(f);
    return m;
  }

  double max_value() const { return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end()); }
};

/// Fiber f gets the cell averages of laws[f], renormalized to unit mass on the grid.
/// On a torus, the mixture is wrapped around the circle.
inline FiberedDensity density_from_mixtures(const Grid1D& grid,
                                            const std::vector<GaussianMixture>& laws) {
  FiberedDensity f(grid, laws.size());
  const double dx = grid.dx();
  for (std::size_t k = 0; k < laws.size(); ++k) {
    laws[k].validate();
    for (std::size_t c = 0; c < grid.n_cells; ++c) {
      const double a = grid.x_min + static_cast<double>(c) * dx;
      double m = 0.0;
      if (grid.periodic()) {
        for (int img = -4; img <= 4; ++img)
          m += laws[k].mass(a + img * grid.length(), a + dx + img * grid.length());
      } else {
        m = laws[k].mass(a, a + dx);
      }
      f.at(k, c) = m / dx;
    }
    const double total = f.fiber_mass(k);
    require(total > 0.0, "density_from_mixtures: law has no mass on the grid");
    for (double& v : f.fiber(k)) v /= total;
  }
  return f;
}

/// Fiber average: int_0^1 f(x, xi) dxi.
inline std::vector<double> marginal(const FiberedDensity& f) {
  const std::size_t g = f.n_cells();
  std::vector<double> out(g, 0.0);
  if (f.n_fibers == 0) return out;
  for (std::size_t c = 0; c < g; ++c) {
    CompensatedSum s;
    for (std::size_t k = 0; k < f.n_fibers; ++k) s.add(f.at(k, c));
    out[c] = s.value() / static_cast<double>(f.n_fibers);
  }
  return out;
}

/// Discrete W^{1,inf} seminorm: max over fibers and cells of |f_{c+1} - f_c| / dx.
inline double gradient_seminorm(const FiberedDensity& f) {
  double m = 0.0;
  const std::size_t g = f.n_cells();
  for (std::size_t k = 0; k < f.n_fibers; ++k)
    for (std::size_t c = 0; c + 1 < g; ++c)
      m = std::max(m, std::abs(f.at(k, c + 1) - f.at(k, c)));
  return m / f.grid.dx();
}

/// Growth rate C of the gradient energy estimate
/// d/dt |grad f|^2 <= C |grad f|^2 with
/// C = |w| (|div K|_inf mass + (|div K|_1 + |grad K|_1) sup f).
/// In one dimension div K = grad K = K'.
inline double regularity_gronwall_rate(double row_sum, const Kernel& k, double mass, double sup_f) {
  return row_sum * (k.div_sup * mass + 2.0 * k.div_l1 * sup_f);
}

// ---------------------------------------------------------------------------
// Convolution phi_zeta(x_c) = sum_e K(x_c - x_e) f_zeta[e] dx

enum class ConvolutionMethod { direct, fft };

namespace detail {

inline void check_kernel_grid(const Kernel& k, const Grid1D& g) {
  require(k.dim == 1 && static_cast<bool>(k.eval1), "pde: kernel must be one-dimensional");
  if (k.on_torus()) {
    require(g.periodic() && std::abs(k.period - g.length()) <= 1e-12 * g.length(),
            "pde: periodic kernel requires a torus grid of the same period");
  }
}

/// K at offsets d*dx for d = -(G-1)..(G-1), stored at index d + G - 1.
inline std::vector<double> kernel_table(const Kernel& k, const Grid1D& g) {
  const std::size_t n = g.n_cells;
  std::vector<double> t(2 * n - 1);
  const double dx = g.dx();
  for (std::size_t idx = 0; idx < t.size(); ++idx) {
    double d = (static_cast<double>(idx) - static_cast<double>(n - 1)) * dx;
    if (g.periodic()) {
      const double L = g.length();
      d = std::fmod(d, L);
      if (d >= 0.5 * L)
        d -= L;
      else if (d < -0.5 * L)
        d += L;
    }
    t[idx] = k.eval1(d);
  }
  return t;
}

inline void convolve_direct(std::span<const double> table, std::span<const double> src,
                            std::span<double> dst, double dx) {
  const std::size_t n = src.size();
  for (std::size_t c = 0; c < n; ++c) {
    const double* row = table.data() + (n - 1) + c;  // row[-e] = K((c - e) dx)
    double s = 0.0;
    for (std::size_t e = 0; e < n; ++e) s += row[-static_cast<std::ptrdiff_t>(e)] * src[e];
    dst[c] = s * dx;
  }
}

/// Linear convolution via zero-padded real FFTs of length 2G.
class FftConvolver {
 public:
  FftConvolver(std::span<const double> table, std::size_t n) : n_(n), len_(2 * n) {
    in_ = fftw_alloc_real(len_);
    out_ = fftw_alloc_complex(len_ / 2 + 1);
    kernel_hat_.resize(len_ / 2 + 1);
    fwd_ = fftw_plan_dft_r2c_1d(static_cast<int>(len_), in_, out_, FFTW_ESTIMATE);
    bwd_ = fftw_plan_dft_c2r_1d(static_cast<int>(len_), out_, in_, FFTW_ESTIMATE);
    // Circular layout of K(d dx): d >= 0 at index d, d < 0 at index len + d.
    std::fill(in_, in_ + len_, 0.0);
    for (std::size_t d = 0; d < n; ++d) in_[d] = table[n - 1 + d];
    for (std::size_t d = 1; d < n; ++d) in_[len_ - d] = table[n - 1 - d];
    fftw_execute(fwd_);
    for (std::size_t q = 0; q < kernel_hat_.size(); ++q)
      kernel_hat_[q] = std::complex<double>(out_[q][0], out_[q][1]);
  }
  FftConvolver(const FftConvolver&) = delete;
  FftConvolver& operator=(const FftConvolver&) = delete;
  ~FftConvolver() {
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
    fftw_free(in_);
    fftw_free(out_);
  }

  void apply(std::span<const double> src, std::span<double> dst, double dx) {
    std::fill(in_, in_ + len_, 0.0);
    std::copy(src.begin(), src.end(), in_);
    fftw_execute(fwd_);
    for (std::size_t q = 0; q < kernel_hat_.size(); ++q) {
      const std::complex<double> v = std::complex<double>(out_[q][0], out_[q][1]) * kernel_hat_[q];
      out_[q][0] = v.real();
      out_[q][1] = v.imag();
    }
    fftw_execute(bwd_);
    const double scale = dx / static_cast<double>(len_);
    for (std::size_t c = 0; c < n_; ++c) dst[c] = in_[c] * scale;
  }

 private:
  std::size_t n_, len_;
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan fwd_ = nullptr, bwd_ = nullptr;
  std::vector<std::complex<double>> kernel_hat_;
};

}  // namespace detail

/// phi_zeta(x) = int K(x - y) f(y, zeta) dy per fiber, by midpoint quadrature.
inline std::vector<double> convolve_fibers(const FiberedDensity& f, const Kernel& k,
                                           ConvolutionMethod method = ConvolutionMethod::direct) {
  detail::check_kernel_grid(k, f.grid);
  const std::size_t g = f.n_cells();
  const auto table = detail::kernel_table(k, f.grid);
  std::vector<double> phi(f.values.size());
  const double dx = f.grid.dx();
  if (method == ConvolutionMethod::direct) {
    parallel_for(f.n_fibers, [&](std::size_t z) {
      detail::convolve_direct(table, f.fiber(z), std::span<double>(phi).subspan(z * g, g), dx);
    });
  } else {
    detail::FftConvolver conv(table, g);
    for (std::size_t z = 0; z < f.n_fibers; ++z)
      conv.apply(f.fiber(z), std::span<double>(phi).subspan(z * g, g), dx);
  }
  return phi;
}

/// Velocity field V_f(x_c, xi) on cell centers, row-major (fiber, cell).
struct VelocityFieldGrid {
  std::size_t n_fibers = 0;
  std::size_t n_cells = 0;
  std::vector<double> values;

  double at(std::size_t f, std::size_t c) const { return values[f * n_cells + c]; }
  double max_abs() const { return mfgraph::max_abs(values); }
};

inline VelocityFieldGrid velocity(const FiberedDensity& f, const SparseWeights& w, const Kernel& k,
                                  ConvolutionMethod method = ConvolutionMethod::direct) {
  if (w.n_agents() != f.n_fibers)
    throw InvalidArgument("velocity: weights have " + std::to_string(w.n_agents()) +
                          " agents but density has " + std::to_string(f.n_fibers) + " fibers");
  const auto phi = convolve_fibers(f, k, method);
  VelocityFieldGrid v;
  v.n_fibers = f.n_fibers;
  v.n_cells = f.n_cells();
  v.values = kernel_apply_block(w, phi, f.n_cells());
  return v;
}

// ---------------------------------------------------------------------------
// Time stepping

/// Running diagnostics of a transport run.
struct TransportLedger {
  std::size_t steps = 0;
  /// Mass that left a line grid through its boundary, per fiber.
  std::vector<double> leakage;
  /// Largest per-step, per-fiber |mass_after + leaked - mass_before|.
  double max_mass_drift_per_step = 0.0;
  /// Total negative mass removed by the positivity clamp.
  double clamp_total = 0.0;
  /// Most negative value seen before clamping.
  double min_value_before_clamp = 0.0;

  double total_leakage() const {
    double s = 0.0;
    for (double x : leakage) s += x;
    return s;
  }
};

struct CflLimits {
  double advective = std::numeric_limits<double>::infinity();  ///< 0.4 dx / max|V|
  double diffusive = std::numeric_limits<double>::infinity();  ///< 0.25 dx^2 / nu
  double positivity = std::numeric_limits<double>::infinity(); ///< 1 / (2 max|V|/dx + 2 nu/dx^2)

  double admissible() const { return std::min(advective, diffusive); }
};

inline CflLimits cfl_limits(const Grid1D& grid, double max_speed, double nu) {
  CflLimits l;
  const double dx = grid.dx();
  if (max_speed > 0.0) l.advective = 0.4 * dx / max_speed;
  if (nu > 0.0) l.diffusive = 0.25 * dx * dx / nu;
  const double rate = 2.0 * max_speed / dx + 2.0 * nu / (dx * dx);
  if (rate > 0.0) l.positivity = 1.0 / rate;
  return l;
}

namespace detail {

inline double max_face_speed(const VelocityFieldGrid& v, bool periodic) {
  double m = 0.0;
  const std::size_t g = v.n_cells;
  for (std::size_t f = 0; f < v.n_fibers; ++f) {
    for (std::size_t c = 0; c < g; ++c) {
      double face;
      if (c + 1 < g)
        face = 0.5 * (v.at(f, c) + v.at(f, c + 1));
      else
        face = periodic ? 0.5 * (v.at(f, c) + v.at(f, 0)) : v.at(f, c);
      m = std::max(m, std::abs(face));
    }
    if (!periodic) m = std::max(m, std::abs(v.at(f, 0)));
  }
  return m;
}

/// One conservative upwind + centered-diffusion update of every fiber.
inline FiberedDensity advance(const FiberedDensity& f, const VelocityFieldGrid& v, double dt,
                              double nu, TransportLedger* ledger) {
  const std::size_t g = f.n_cells();
  const bool periodic = f.grid.periodic();
  const double dx = f.grid.dx();
  const double lam = dt / dx;
  FiberedDensity out = f;
  out.time = f.time + dt;
  std::vector<double> leaked(f.n_fibers, 0.0), drift(f.n_fibers, 0.0), clamp(f.n_fibers, 0.0),
      most_negative(f.n_fibers, 0.0);

  parallel_for(f.n_fibers, [&](std::size_t k) {
    const auto src = f.fiber(k);
    auto dst = out.fiber(k);
    // flux[c] is the total flux (advective + diffusive) through the left face of cell c;
    // flux[g] is the right face of the last cell.
    std::vector<double> flux(g + 1, 0.0);
    for (std::size_t face = 0; face <= g; ++face) {
      double fl = 0.0, fr = 0.0, vf = 0.0;
      bool left_outside = false, right_outside = false;
      if (face == 0 || face == g) {
        if (periodic) {
          fl = src[g - 1];
          fr = src[0];
          vf = 0.5 * (v.at(k, g - 1) + v.at(k, 0));
        } else if (face == 0) {
          left_outside = true;
          fr = src[0];
          vf = v.at(k, 0);
        } else {
          right_outside = true;
          fl = src[g - 1];
          vf = v.at(k, g - 1);
        }
      } else {
        fl = src[face - 1];
        fr = src[face];
        vf = 0.5 * (v.at(k, face - 1) + v.at(k, face));
      }
      // Zero inflow from outside a line grid; ghost density 0 for diffusion.
      double adv = vf > 0.0 ? vf * fl : vf * fr;
      if (left_outside && vf > 0.0) adv = 0.0;
      if (right_outside && vf < 0.0) adv = 0.0;
      const double diff = -nu * (fr - fl) / dx;
      flux[face] = adv + diff;
    }
    if (periodic) flux[g] = flux[0];
    CompensatedSum before, after;
    for (std::size_t c = 0; c < g; ++c) {
      before.add(src[c]);
      dst[c] = src[c] - lam * (flux[c + 1] - flux[c]);
    }
    if (!periodic) leaked[k] = dt * (flux[g] - flux[0]);  // outward through both ends
    for (std::size_t c = 0; c < g; ++c) {
      if (dst[c] < 0.0) {
        most_negative[k] = std::min(most_negative[k], dst[c]);
        clamp[k] += -dst[c] * dx;
        dst[c] = 0.0;
      }
      after.add(dst[c]);
    }
    drift[k] = std::abs((after.value() - before.value()) * dx + leaked[k] - clamp[k]);
  });

  if (ledger) {
    if (ledger->leakage.size() != f.n_fibers) ledger->leakage.assign(f.n_fibers, 0.0);
    ++ledger->steps;
    for (std::size_t k = 0; k < f.n_fibers; ++k) {
      ledger->leakage[k] += leaked[k];
      ledger->max_mass_drift_per_step = std::max(ledger->max_mass_drift_per_step, drift[k]);
      ledger->clamp_total += clamp[k];
      ledger->min_value_before_clamp = std::min(ledger->min_value_before_clamp, most_negative[k]);
    }
  }
  return out;
}

}  // namespace detail

/// One explicit step of the fibered transport (nu = 0) or transport-diffusion
/// (nu > 0) system. Rejects dt beyond the advective or diffusive CFL bound.
inline FiberedDensity step_transport(const FiberedDensity& f, const SparseWeights& w,
                                     const Kernel& k, double dt, double nu,
                                     TransportLedger* ledger = nullptr,
                                     ConvolutionMethod method = ConvolutionMethod::direct) {
  require(dt > 0.0, "step_transport: dt must be positive");
  require(nu >= 0.0, "step_transport: nu must be non-negative");
  const auto v = velocity(f, w, k, method);
  const auto lim = cfl_limits(f.grid, detail::max_face_speed(v, f.grid.periodic()), nu);
  if (dt > lim.admissible() * (1.0 + 1e-12))
    throw NumericGuardError("step_transport: CFL violated, dt=" + format_double(dt) +
                            " exceeds admissible dt=" + format_double(lim.admissible()));
  return detail::advance(f, v, dt, nu, ledger);
}

struct SolveOptions {
  /// Fixed step; 0 selects dt automatically every step.
  double dt = 0.0;
  /// Upper bound on automatically selected steps.
  double max_dt = std::numeric_limits<double>::infinity();
  double safety = 0.9;
  ConvolutionMethod convolution = ConvolutionMethod::direct;
};

struct SolveResult {
  std::vector<FiberedDensity> snapshots;
  TransportLedger ledger;
};

/// Integrates from f0.time over a duration t_end and returns snapshots at the
/// absolute output_times (steps are shortened to land on each requested time).
/// Empty output_times means the final time only.
inline SolveResult solve(const FiberedDensity& f0, const SparseWeights& w, const Kernel& k,
                         double nu, double t_end, std::vector<double> output_times = {},
                         const SolveOptions& opts = {}) {
  require(t_end >= 0.0 && std::isfinite(t_end), "solve: t_end must be finite and >= 0");
  require(nu >= 0.0, "solve: nu must be non-negative");
  SolveResult res;
  res.ledger.leakage.assign(f0.n_fibers, 0.0);
  if (output_times.empty()) output_times.push_back(f0.time + t_end);
  std::sort(output_times.begin(), output_times.end());
  for (double t : output_times)
    require(t >= f0.time - 1e-15 && t <= f0.time + t_end + 1e-12,
            "solve: output time outside [t0, t0 + t_end]");
  if (t_end == 0.0) {
    res.snapshots.push_back(f0);
    return res;
  }
  FiberedDensity cur = f0;
  const double t_stop = f0.time + t_end;
  std::size_t next_out = 0;
  auto emit_due = [&] {
    while (next_out < output_times.size() && output_times[next_out] <= cur.time + 1e-12) {
      res.snapshots.push_back(cur);
      ++next_out;
    }
  };
  emit_due();
  while (cur.time < t_stop - 1e-12) {
    const auto v = velocity(cur, w, k, opts.convolution);
    const auto lim = cfl_limits(cur.grid, detail::max_face_speed(v, cur.grid.periodic()), nu);
    double dt;
    if (opts.dt > 0.0) {
      dt = opts.dt;
      if (dt > lim.admissible() * (1.0 + 1e-12))
        throw NumericGuardError("solve: fixed dt=" + format_double(dt) +
                                " violates CFL; admissible dt=" + format_double(lim.admissible()));
    } else {
      dt = opts.safety * std::min({lim.advective, lim.diffusive, lim.positivity});
      dt = std::min(dt, opts.max_dt);
      if (!std::isfinite(dt)) dt = std::min(t_end, opts.max_dt);
    }
    const double target = next_out < output_times.size() ? output_times[next_out] : t_stop;
    if (cur.time + dt > target - 1e-12 * std::max(1.0, target)) dt = target - cur.time;
    if (dt <= 0.0) break;
    cur = detail::advance(cur, v, dt, nu, &res.ledger);
    if (std::abs(cur.time - target) <= 1e-12 * std::max(1.0, std::abs(target))) cur.time = target;
    emit_due();
  }
  while (next_out < output_times.size()) {
    res.snapshots.push_back(cur);
    ++next_out;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Snapshot I/O

inline void write_density_csv(std::ostream& os, const std::vector<FiberedDensity>& snaps,
                              bool header = true) {
  if (header) os << "t,fiber,cell,x_center,value\n";
  for (const auto& s : snaps)
    for (std::size_t k = 0; k < s.n_fibers; ++k)
      for (std::size_t c = 0; c < s.n_cells(); ++c)
        os << format_double(s.time) << ',' << k << ',' << c << ','
           << format_double(s.grid.center(c)) << ',' << format_double(s.at(k, c)) << '\n';
}

inline constexpr char kDensityMagic[4] = {'M', 'F', 'G', 'D'};
inline constexpr std::uint32_t kDensityFormatVersion = 1;

/// 16-byte header (magic, version, n_fibers, G) followed by column-major doubles
/// (fiber index fastest).
inline void write_density_binary(std::ostream& os, const FiberedDensity& f) {
  const std::uint32_t hdr[3] = {kDensityFormatVersion, static_cast<std::uint32_t>(f.n_fibers),
                                static_cast<std::uint32_t>(f.n_cells())};
  os.write(kDensityMagic, 4);
  os.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
  for (std::size_t c = 0; c < f.n_cells(); ++c)
    for (std::size_t k = 0; k < f.n_fibers; ++k) {
      const double v = f.at(k, c);
      os.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
}

/// Reads a binary dump back onto the given grid.
inline FiberedDensity read_density_binary(std::istream& is, const Grid1D& grid) {
  char magic[4];
  std::uint32_t hdr[3];
  is.read(magic, 4);
  is.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
  if (!is || std::memcmp(magic, kDensityMagic, 4) != 0)
    throw InvalidArgument("density dump: bad magic");
  if (hdr[0] != kDensityFormatVersion) throw InvalidArgument("density dump: unsupported version");
  if (hdr[2] != grid.n_cells) throw InvalidArgument("density dump: grid size mismatch");
  FiberedDensity f(grid, hdr[1]);
  for (std::size_t c = 0; c < f.n_cells(); ++c)
    for (std::size_t k = 0; k < f.n_fibers; ++k) is.read(reinterpret_cast<char*>(&f.at(k, c)), sizeof(double));
  if (!is) throw InvalidArgument("density dump: truncated");
  return f;
}

}  // namespace mfgraph
