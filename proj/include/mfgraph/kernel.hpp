#pragma once

// Interaction kernels K and the dynamics presets built on them.

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "mfgraph/common.hpp"

namespace mfgraph {

/// Interaction kernel K : R^d -> R^d with the norms the stability guards and
/// the analytic bounds consume.
struct Kernel {
  std::string name;
  std::size_t dim = 1;
  /// out = K(z); z and out have length dim.
  std::function<void(std::span<const double> z, std::span<double> out)> eval;
  /// Scalar fast path, set iff dim == 1.
  std::function<double(double)> eval1;
  double lipschitz = 0.0;
  double sup_norm = 0.0;
  double l1_norm = std::numeric_limits<double>::infinity();
  double div_sup = 0.0;
  double div_l1 = std::numeric_limits<double>::infinity();
  bool zero_at_origin = true;
  /// 0 for the real line; otherwise every coordinate lives on a circle of this length.
  double period = 0.0;

  bool on_torus() const noexcept { return period > 0.0; }

  /// ||K||_{W^{1,inf}} = ||K||_inf + ||grad K||_inf.
  double w1inf_norm() const noexcept { return sup_norm + lipschitz; }

  /// Minimal-image reduction of a coordinate difference on the torus.
  double wrap_difference(double d) const noexcept {
    if (!on_torus()) return d;
    d = std::fmod(d, period);
    if (d >= 0.5 * period)
      d -= period;
    else if (d < -0.5 * period)
      d += period;
    return d;
  }

  double operator()(double z) const { return eval1(wrap_difference(z)); }
};

/// Scalar kernel from a 1-D function.
inline Kernel make_scalar_kernel(std::string name, std::function<double(double)> f) {
  Kernel k;
  k.name = std::move(name);
  k.dim = 1;
  k.eval1 = f;
  k.eval = [f](std::span<const double> z, std::span<double> out) { out[0] = f(z[0]); };
  return k;
}

/// K(x) = -a x exp(-x^2) on the line.
inline Kernel linear_attraction(double strength = 1.0) {
  Kernel k = make_scalar_kernel("linear_attraction",
                                [a = strength](double x) { return -a * x * std::exp(-x * x); });
  const double a = std::abs(strength);
  k.sup_norm = a * std::exp(-0.5) / std::sqrt(2.0);
  k.lipschitz = a;  // |K'| peaks at the origin
  k.l1_norm = a;    // 2 * int_0^inf x e^{-x^2} dx
  k.div_sup = a;
  // K' = -(1 - 2x^2) e^{-x^2} has antiderivative -x e^{-x^2}; it changes sign at
  // |x| = 1/sqrt2, giving int |K'| = 4 e^{-1/2} / sqrt2.
  k.div_l1 = a * 4.0 * std::exp(-0.5) / std::sqrt(2.0);
  k.zero_at_origin = true;
  return k;
}

/// K(x) = -a x. Unbounded; used for closed-form reference problems.
inline Kernel linear_kernel(double strength = 1.0) {
  Kernel k = make_scalar_kernel("linear", [a = strength](double x) { return -a * x; });
  k.lipschitz = std::abs(strength);
  k.sup_norm = std::numeric_limits<double>::infinity();
  k.div_sup = std::abs(strength);
  return k;
}

/// Self-dynamics term added to the pairwise drift, per agent.
using SelfDrift =
    std::function<void(std::size_t agent, std::span<const double> x, std::span<double> out)>;

struct Dynamics {
  Kernel kernel;
  /// Optional; when set its output is added to sum_j w_ij K(x_i - x_j).
  SelfDrift self_drift;
};

/// Kuramoto oscillators on the circle of length 2*pi:
/// dtheta_i/dt = Omega_i + sum_j w_ij sin(theta_j - theta_i), i.e. K(x) = -c sin(x).
inline Dynamics kuramoto(double coupling = 1.0, std::vector<double> omega = {}) {
  Dynamics d;
  d.kernel = make_scalar_kernel("kuramoto", [c = coupling](double x) { return -c * std::sin(x); });
  const double c = std::abs(coupling);
  d.kernel.sup_norm = c;
  d.kernel.lipschitz = c;
  d.kernel.div_sup = c;
  d.kernel.l1_norm = 4.0 * c;
  d.kernel.div_l1 = 4.0 * c;
  d.kernel.period = 2.0 * std::numbers::pi;
  if (!omega.empty()) {
    d.self_drift = [om = std::move(omega)](std::size_t i, std::span<const double>,
                                           std::span<double> out) {
      if (i >= om.size()) throw InvalidArgument("kuramoto: no natural frequency for agent");
      out[0] += om[i];
    };
  }
  return d;
}

/// One gating rate a(V) of the Hodgkin-Huxley family.
struct RateFunction {
  enum class Form { exponential, linoid, sigmoid };
  Form form = Form::exponential;
  double scale = 0.0;   ///< a
  double v_half = 0.0;  ///< v0
  double slope = 1.0;   ///< s

  /// exponential: a exp(-(V-v0)/s); linoid: a (V-v0) / (1 - exp(-(V-v0)/s));
  /// sigmoid: a / (1 + exp(-(V-v0)/s)).
  double operator()(double v) const {
    const double u = (v - v_half) / slope;
    switch (form) {
      case Form::exponential:
        return scale * std::exp(-u);
      case Form::linoid:
        if (std::abs(u) < 1e-7) return scale * slope * (1.0 + 0.5 * u);
        return scale * (v - v_half) / (1.0 - std::exp(-u));
      case Form::sigmoid:
        return scale / (1.0 + std::exp(-u));
    }
    return 0.0;
  }

  friend bool operator==(const RateFunction&, const RateFunction&) = default;
};

/// Hodgkin-Huxley constants. All supplied by configuration.
struct HodgkinHuxleyParams {
  double c_m = 0.0;
  double g_k = 0.0, g_na = 0.0, g_l = 0.0;
  double v_k = 0.0, v_na = 0.0, v_l = 0.0;
  double i_ext = 0.0;
  RateFunction alpha_n, beta_n, alpha_m, beta_m, alpha_h, beta_h;

  friend bool operator==(const HodgkinHuxleyParams&, const HodgkinHuxleyParams&) = default;
};

/// State (V, n, m, h). Gating variables follow their own ODEs; neurons couple
/// through V only: C_m dV/dt = -ionic - sum_j w_ij (V_i - V_j) + I_ext.
inline Dynamics hodgkin_huxley(const HodgkinHuxleyParams& p) {
  require(p.c_m > 0.0, "hodgkin_huxley: c_m must be positive");
  Dynamics d;
  Kernel& k = d.kernel;
  k.name = "hodgkin_huxley";
  k.dim = 4;
  const double inv_cm = 1.0 / p.c_m;
  k.eval = [inv_cm](std::span<const double> z, std::span<double> out) {
    out[0] = -z[0] * inv_cm;
    out[1] = out[2] = out[3] = 0.0;
  };
  k.lipschitz = inv_cm;
  k.div_sup = inv_cm;
  k.sup_norm = std::numeric_limits<double>::infinity();
  d.self_drift = [p, inv_cm](std::size_t, std::span<const double> x, std::span<double> out) {
    const double v = x[0], n = x[1], m = x[2], h = x[3];
    const double ionic = p.g_k * n * n * n * n * (v - p.v_k) +
                         p.g_na * m * m * m * h * (v - p.v_na) + p.g_l * (v - p.v_l);
    out[0] += (p.i_ext - ionic) * inv_cm;
    out[1] += p.alpha_n(v) * (1.0 - n) - p.beta_n(v) * n;
    out[2] += p.alpha_m(v) * (1.0 - m) - p.beta_m(v) * m;
    out[3] += p.alpha_h(v) * (1.0 - h) - p.beta_h(v) * h;
  };
  return d;
}

}  // namespace mfgraph
