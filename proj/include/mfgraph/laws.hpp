#pragma once

// Gaussian-mixture initial laws shared by the particle and PDE paths.

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "mfgraph/common.hpp"

namespace mfgraph {

struct GaussianComponent {
  double mean = 0.0;
  double std = 1.0;
  double weight = 1.0;

  friend bool operator==(const GaussianComponent&, const GaussianComponent&) = default;
};

struct GaussianMixture {
  std::vector<GaussianComponent> components;

  friend bool operator==(const GaussianMixture&, const GaussianMixture&) = default;

  void validate() const {
    require(!components.empty(), "GaussianMixture: no components");
    double total = 0.0;
    for (const auto& c : components) {
      require(c.std > 0.0 && std::isfinite(c.std), "GaussianMixture: std must be positive");
      require(c.weight >= 0.0 && std::isfinite(c.weight),
              "GaussianMixture: weights must be non-negative");
      require(std::isfinite(c.mean), "GaussianMixture: mean must be finite");
      total += c.weight;
    }
    require(total > 0.0, "GaussianMixture: total weight must be positive");
  }

  double total_weight() const {
    double t = 0.0;
    for (const auto& c : components) t += c.weight;
    return t;
  }

  /// Probability mass of [a, b) (unwrapped).
  double mass(double a, double b) const {
    double m = 0.0;
    for (const auto& c : components) {
      const double s = c.std * std::numbers::sqrt2;
      m += c.weight * 0.5 * (std::erf((b - c.mean) / s) - std::erf((a - c.mean) / s));
    }
    return m / total_weight();
  }

  template <class Rng>
  double sample(Rng& rng) const {
    std::uniform_real_distribution<double> u(0.0, total_weight());
    double pick = u(rng);
    std::size_t k = 0;
    for (; k + 1 < components.size(); ++k) {
      if (pick < components[k].weight) break;
      pick -= components[k].weight;
    }
    std::normal_distribution<double> g(components[k].mean, components[k].std);
    return g(rng);
  }
};

}  // namespace mfgraph
