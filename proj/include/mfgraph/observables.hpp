#pragma once

// Tree-indexed observables tau(T, w, f), homomorphism densities tau(T, w), the
// transform algebra, hierarchy norms and hierarchy-equation residuals.
//
// Discrete xi-integration uses the cell measure 1/N. The N of the empirical
// graphon w_N = N w_ij cancels it, so Star is a raw sparse matvec over the
// stored weights and the final integral over the root fiber is a plain average.
// Do not rescale w before calling into this module.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "mfgraph/common.hpp"
#include "mfgraph/graph.hpp"
#include "mfgraph/kernel.hpp"
#include "mfgraph/parallel.hpp"
#include "mfgraph/pde.hpp"
#include "mfgraph/trees.hpp"

namespace mfgraph {

inline constexpr std::size_t kMaxObservableOrder = 4;

// ---------------------------------------------------------------------------
// Transform algebra

class TransformExpr {
 public:
  enum class Kind { leaf, tensor, star };

  static TransformExpr leaf() { return TransformExpr(Kind::leaf, nullptr, nullptr); }
  static TransformExpr tensor(TransformExpr a, TransformExpr b) {
    return TransformExpr(Kind::tensor, std::make_shared<const TransformExpr>(std::move(a)),
                         std::make_shared<const TransformExpr>(std::move(b)));
  }
  static TransformExpr star(TransformExpr a) {
    return TransformExpr(Kind::star, std::make_shared<const TransformExpr>(std::move(a)), nullptr);
  }

  Kind kind() const noexcept { return kind_; }
  const TransformExpr& left() const { return *left_; }
  const TransformExpr& right() const { return *right_; }
  const TransformExpr& inner() const { return *left_; }

  /// Leaf = 1, Tensor adds, Star preserves.
  std::size_t rank() const noexcept { return rank_; }

  std::size_t star_count() const {
    switch (kind_) {
      case Kind::leaf:
        return 0;
      case Kind::tensor:
        return left_->star_count() + right_->star_count();
      case Kind::star:
        return 1 + left_->star_count();
    }
    return 0;
  }

  /// e.g. "(L (x) *(L))".
  std::string to_string() const {
    switch (kind_) {
      case Kind::leaf:
        return "L";
      case Kind::tensor:
        return "(" + left_->to_string() + " (x) " + right_->to_string() + ")";
      case Kind::star:
        return "*(" + left_->to_string() + ")";
    }
    return {};
  }

  friend bool operator==(const TransformExpr& a, const TransformExpr& b) {
    if (a.kind_ != b.kind_) return false;
    switch (a.kind_) {
      case Kind::leaf:
        return true;
      case Kind::tensor:
        return *a.left_ == *b.left_ && *a.right_ == *b.right_;
      case Kind::star:
        return *a.left_ == *b.left_;
    }
    return false;
  }

 private:
  TransformExpr(Kind k, std::shared_ptr<const TransformExpr> l, std::shared_ptr<const TransformExpr> r)
      : kind_(k), left_(std::move(l)), right_(std::move(r)) {
    rank_ = k == Kind::leaf ? 1 : k == Kind::star ? left_->rank() : left_->rank() + right_->rank();
  }

  Kind kind_;
  std::shared_ptr<const TransformExpr> left_, right_;
  std::size_t rank_ = 1;
};

/// Transform built from a tree, with the tree vertex carried by each x-slot
/// (slots are numbered by left-to-right leaf order in the expression).
struct TreeTransform {
  TransformExpr expr;
  std::vector<std::size_t> slot_vertex;
};

/// Alternative association choices for building tree-equivalent expressions.
struct TransformLayout {
  bool descending_children = false;
  bool right_associated = false;
  bool leaf_last = false;
};

/// F(v) = Leaf (x) *(F(c_1)) (x) ... (x) *(F(c_k)) over the children of v in
/// ascending order, left-associated; F(leaf) = Leaf.
inline TreeTransform tree_to_transform(const LabeledTree& t, const TransformLayout& layout = {}) {
  if (t.order() > kMaxObservableOrder)
    throw InvalidArgument("tree_to_transform: order " + std::to_string(t.order()) + " exceeds " +
                          std::to_string(kMaxObservableOrder));
  struct Built {
    TransformExpr expr;
    std::vector<std::size_t> slots;
  };
  auto build = [&](auto&& self, std::size_t v) -> Built {
    std::vector<Built> factors;
    factors.push_back({TransformExpr::leaf(), {v}});
    auto kids = t.children(v);
    if (layout.descending_children) std::reverse(kids.begin(), kids.end());
    for (std::size_t c : kids) {
      Built b = self(self, c);
      factors.push_back({TransformExpr::star(std::move(b.expr)), std::move(b.slots)});
    }
    if (layout.leaf_last) std::rotate(factors.begin(), factors.begin() + 1, factors.end());
    auto join = [](Built a, Built b) {
      a.slots.insert(a.slots.end(), b.slots.begin(), b.slots.end());
      return Built{TransformExpr::tensor(std::move(a.expr), std::move(b.expr)), std::move(a.slots)};
    };
    if (!layout.right_associated) {
      Built acc = std::move(factors.front());
      for (std::size_t q = 1; q < factors.size(); ++q) acc = join(std::move(acc), std::move(factors[q]));
      return acc;
    }
    Built acc = std::move(factors.back());
    for (std::size_t q = factors.size() - 1; q-- > 0;) acc = join(std::move(factors[q]), std::move(acc));
    return acc;
  };
  Built root = build(build, 1);
  return {std::move(root.expr), std::move(root.slots)};
}

/// Evaluates F(w, f)(xi; x_1..x_r) for every fiber xi, with x-slot s at cell
/// cells[s]. Leaf reads f(x, .), Tensor multiplies, Star applies the kernel
/// over the fiber index.
inline std::vector<double> eval_transform(const TransformExpr& expr, const SparseWeights& w,
                                          const FiberedDensity& f,
                                          std::span<const std::size_t> cells) {
  if (cells.size() != expr.rank())
    throw InvalidArgument("eval_transform: got " + std::to_string(cells.size()) +
                          " x-cells for a rank-" + std::to_string(expr.rank()) + " transform");
  if (w.n_agents() != f.n_fibers) throw InvalidArgument("eval_transform: weights/fibers mismatch");
  for (std::size_t c : cells)
    if (c >= f.n_cells()) throw InvalidArgument("eval_transform: cell index out of range");
  switch (expr.kind()) {
    case TransformExpr::Kind::leaf: {
      std::vector<double> out(f.n_fibers);
      for (std::size_t k = 0; k < f.n_fibers; ++k) out[k] = f.at(k, cells[0]);
      return out;
    }
    case TransformExpr::Kind::tensor: {
      const std::size_t r = expr.left().rank();
      auto a = eval_transform(expr.left(), w, f, cells.subspan(0, r));
      const auto b = eval_transform(expr.right(), w, f, cells.subspan(r));
      for (std::size_t k = 0; k < a.size(); ++k) a[k] *= b[k];
      return a;
    }
    case TransformExpr::Kind::star:
      return kernel_apply(w, eval_transform(expr.inner(), w, f, cells), Side::row);
  }
  return {};
}

// ---------------------------------------------------------------------------
// Observables on the lattice

/// tau(T, w, f) on grid^m, x_1 slowest: index = ((c_1 G + c_2) G + ...) + c_m.
struct Observable {
  LabeledTree tree;
  Grid1D grid;
  std::vector<double> values;

  std::size_t order() const noexcept { return tree.order(); }

  double at(std::span<const std::size_t> cells) const {
    std::size_t idx = 0;
    for (std::size_t c : cells) idx = idx * grid.n_cells + c;
    return values[idx];
  }

  /// Discrete integral over all variables with cell measure dx^m.
  double integral() const {
    return compensated_sum(values) * std::pow(grid.dx(), static_cast<double>(order()));
  }
  double l1_norm() const {
    CompensatedSum s;
    for (double v : values) s.add(std::abs(v));
    return s.value() * std::pow(grid.dx(), static_cast<double>(order()));
  }
  double l2_norm() const {
    CompensatedSum s;
    for (double v : values) s.add(v * v);
    return std::sqrt(s.value() * std::pow(grid.dx(), static_cast<double>(order())));
  }
  double sup_norm() const { return max_abs(values); }
};

struct TauOptions {
  /// Upper bound on the largest intermediate message, in bytes.
  std::size_t memory_budget_bytes = std::size_t{1} << 30;
};

namespace detail {

/// Per-fiber message over the variables of a subtree, in preorder vertex order.
struct Message {
  std::vector<std::size_t> vertices;
  std::size_t width = 1;       ///< G^{|vertices|}
  std::vector<double> data;    ///< n_fibers x width
};

/// Rooted message passing for one subtree. `node_factor` supplies the n_fibers x G
/// factor attached to vertex v (f itself, or f V for the fused transport term).
template <class NodeFactor>
Message pass_messages(const LabeledTree& t, std::size_t v, const SparseWeights& w, std::size_t n_fibers,
                      std::size_t g, const NodeFactor& node_factor) {
  Message m;
  m.vertices = {v};
  m.width = g;
  const std::vector<double>& fv = node_factor(v);
  m.data.assign(fv.begin(), fv.end());
  for (std::size_t c : t.children(v)) {
    Message child = pass_messages(t, c, w, n_fibers, g, node_factor);
    const auto starred = kernel_apply_block(w, child.data, child.width);
    Message next;
    next.vertices = m.vertices;
    next.vertices.insert(next.vertices.end(), child.vertices.begin(), child.vertices.end());
    next.width = m.width * child.width;
    next.data.resize(n_fibers * next.width);
    parallel_for(n_fibers, [&](std::size_t k) {
      const double* a = m.data.data() + k * m.width;
      const double* b = starred.data() + k * child.width;
      double* o = next.data.data() + k * next.width;
      for (std::size_t p = 0; p < m.width; ++p)
        for (std::size_t q = 0; q < child.width; ++q) o[p * child.width + q] = a[p] * b[q];
    });
    m = std::move(next);
  }
  return m;
}

/// Fiber average of the root message, axes reordered to vertices 1..m.
inline std::vector<double> average_to_lattice(const Message& m, std::size_t n_fibers, std::size_t g) {
  const std::size_t order = m.vertices.size();
  std::vector<double> avg(m.width, 0.0);
  for (std::size_t q = 0; q < m.width; ++q) {
    CompensatedSum s;
    for (std::size_t k = 0; k < n_fibers; ++k) s.add(m.data[k * m.width + q]);
    avg[q] = s.value() / static_cast<double>(n_fibers);
  }
  // Position of vertex v within the message's axis list.
  std::vector<std::size_t> axis_of(order + 1);
  for (std::size_t a = 0; a < order; ++a) axis_of[m.vertices[a]] = a;
  std::vector<double> out(m.width);
  std::vector<std::size_t> digits(order, 0);  // digits[v-1] = cell of x_v
  for (std::size_t idx = 0; idx < m.width; ++idx) {
    std::size_t rem = idx;
    for (std::size_t v = order; v-- > 0;) {
      digits[v] = rem % g;
      rem /= g;
    }
    std::size_t src = 0;
    for (std::size_t a = 0; a < order; ++a) src = src * g + digits[m.vertices[a] - 1];
    out[idx] = avg[src];
  }
  return out;
}

inline void check_tau_inputs(const LabeledTree& t, const SparseWeights& w, const FiberedDensity& f,
                             std::size_t max_order, const TauOptions& opts) {
  if (t.order() > max_order)
    throw InvalidArgument("tau: tree order " + std::to_string(t.order()) + " exceeds " +
                          std::to_string(max_order));
  if (w.n_agents() != f.n_fibers)
    throw InvalidArgument("tau: weights have " + std::to_string(w.n_agents()) +
                          " agents but density has " + std::to_string(f.n_fibers) + " fibers");
  const double bytes = static_cast<double>(f.n_fibers) *
                       std::pow(static_cast<double>(f.n_cells()), static_cast<double>(t.order())) *
                       sizeof(double);
  if (bytes > static_cast<double>(opts.memory_budget_bytes))
    throw NumericGuardError("tau: lattice evaluation needs " + format_double(bytes) +
                            " bytes (budget " + std::to_string(opts.memory_budget_bytes) +
                            "); use tau_at_points to evaluate at selected x-tuples");
}

}  // namespace detail

/// tau(T, w, f) on the full grid^|T| lattice by rooted message passing:
/// m_v = f(x_v, .) prod_c Star(m_c), tau = (1/N) sum_xi m_root.
inline Observable tau(const LabeledTree& t, const SparseWeights& w, const FiberedDensity& f,
                      const TauOptions& opts = {}) {
  detail::check_tau_inputs(t, w, f, kMaxObservableOrder, opts);
  const auto& vals = f.values;
  auto factor = [&](std::size_t) -> const std::vector<double>& { return vals; };
  const auto m = detail::pass_messages(t, 1, w, f.n_fibers, f.n_cells(), factor);
  return Observable{t, f.grid, detail::average_to_lattice(m, f.n_fibers, f.n_cells())};
}

/// tau(T, w, f) at selected x-tuples (cell indices of x_1..x_m per point).
inline std::vector<double> tau_at_points(const LabeledTree& t, const SparseWeights& w,
                                         const FiberedDensity& f,
                                         const std::vector<std::vector<std::size_t>>& points) {
  if (w.n_agents() != f.n_fibers) throw InvalidArgument("tau_at_points: weights/fibers mismatch");
  const auto tt = tree_to_transform(t);
  std::vector<double> out(points.size());
  for (std::size_t p = 0; p < points.size(); ++p) {
    if (points[p].size() != t.order())
      throw InvalidArgument("tau_at_points: point has wrong arity");
    std::vector<std::size_t> slot_cells(t.order());
    for (std::size_t s = 0; s < t.order(); ++s) slot_cells[s] = points[p][tt.slot_vertex[s] - 1];
    const auto per_fiber = eval_transform(tt.expr, w, f, slot_cells);
    out[p] = compensated_sum(per_fiber) / static_cast<double>(f.n_fibers);
  }
  return out;
}

/// Homomorphism density tau(T, w): the same recursion with f = 1.
inline double tau_density(const LabeledTree& t, const SparseWeights& w) {
  require(t.order() <= LabeledTree::max_enumeration_order, "tau_density: order exceeds 8");
  const std::size_t n = w.n_agents();
  auto message = [&](auto&& self, std::size_t v) -> std::vector<double> {
    std::vector<double> m(n, 1.0);
    for (std::size_t c : t.children(v)) {
      const auto s = kernel_apply(w, self(self, c), Side::row);
      for (std::size_t k = 0; k < n; ++k) m[k] *= s[k];
    }
    return m;
  };
  return compensated_sum(message(message, 1)) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Hierarchy

struct HierarchyState {
  std::size_t n_max = 1;
  double lambda = 1.0;
  std::map<LabeledTree, Observable> observables;
};

/// All (n-1)! labeled trees of each order n <= n_max.
inline HierarchyState hierarchy(const SparseWeights& w, const FiberedDensity& f, std::size_t n_max,
                                double lambda, const TauOptions& opts = {}) {
  require(n_max >= 1 && n_max <= kMaxObservableOrder, "hierarchy: n_max must be in 1..4");
  require(lambda > 0.0, "hierarchy: lambda must be positive");
  std::vector<LabeledTree> trees;
  for (std::size_t n = 1; n <= n_max; ++n)
    for (auto& t : enumerate_trees(n)) trees.push_back(std::move(t));
  HierarchyState h{n_max, lambda, {}};
  for (const auto& t : trees) h.observables.emplace(t, tau(t, w, f, opts));
  return h;
}

struct HierarchyNorm {
  double value = 0.0;
  /// The sup runs over trees of order <= truncation_order only, so value is a lower bound.
  std::size_t truncation_order = 0;
  std::string argmax_tree;
};

/// ||h||_lambda = sup_T lambda^{|T|/2} ||h_T||_{L^2}, truncated to the stored trees.
inline HierarchyNorm hierarchy_norm(const HierarchyState& h) {
  HierarchyNorm r;
  r.truncation_order = h.n_max;
  for (const auto& [t, obs] : h.observables) {
    const double v = std::pow(h.lambda, 0.5 * static_cast<double>(t.order())) * obs.l2_norm();
    if (v > r.value || r.argmax_tree.empty()) {
      r.value = std::max(r.value, v);
      r.argmax_tree = t.to_string();
    }
  }
  return r;
}

/// Inputs of the lambda admissibility inequality for comparing two solutions
/// (w, f) and (w~, f~) on [0, t_*]:
///   sqrt(lambda) < min{2 / w_max, w_min / w_max}
///                  exp(-t_*/4 w_max |div K|_inf |f0|_{L^inf L^1}) / (|f0|_{L^inf L^2} + |f~0|_{L^inf L^2}).
struct AdmissibilityInputs {
  double w_norm = 1.0;        ///< |w|, max row abs sum
  double w_tilde_norm = 1.0;  ///< |w~|
  double t_star = 1.0;
  double div_k_sup = 0.0;
  double f0_l1 = 1.0;         ///< sup over fibers of the mass
  double f0_l2 = 1.0;         ///< sup over fibers of the L^2 norm
  double f0_tilde_l2 = 1.0;
};

struct Admissibility {
  double sqrt_lambda_threshold = 0.0;
  bool admissible = false;
};

inline Admissibility lambda_admissibility(double lambda, const AdmissibilityInputs& in) {
  const double w_max = std::max(in.w_norm, in.w_tilde_norm);
  const double w_min = std::min(in.w_norm, in.w_tilde_norm);
  Admissibility a;
  if (w_max <= 0.0) {
    a.sqrt_lambda_threshold = std::numeric_limits<double>::infinity();
  } else {
    a.sqrt_lambda_threshold = std::min(2.0 / w_max, w_min / w_max) *
                              std::exp(-in.t_star / 4.0 * w_max * in.div_k_sup * in.f0_l1) /
                              (in.f0_l2 + in.f0_tilde_l2);
  }
  a.admissible = std::sqrt(lambda) < a.sqrt_lambda_threshold;
  return a;
}

/// sup over fibers of the discrete L^2 norm.
inline double fiber_l2_sup(const FiberedDensity& f) {
  double m = 0.0;
  for (std::size_t k = 0; k < f.n_fibers; ++k) {
    double s = 0.0;
    for (double v : f.fiber(k)) s += v * v;
    m = std::max(m, std::sqrt(s * f.grid.dx()));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Hierarchy residual

enum class TransportRoute {
  /// int K(x_i - z) tau(T+i)(.., z) dz as tau(T) with vertex i's factor
  /// replaced by f V_f.
  fused,
  /// Full tau(T+i) lattice followed by midpoint quadrature in z.
  lattice,
};

struct ResidualReport {
  double value = 0.0;  ///< discrete L^1 norm of r at the middle snapshot
  double dt = 0.0;     ///< snapshot spacing used by the time difference
  double dx = 0.0;
  double time = 0.0;
};

namespace detail {

/// Shifted read of a lattice along one axis with zero extension (line) or wrap (torus).
inline double lattice_neighbor(const std::vector<double>& v, std::size_t g, std::size_t order,
                               std::size_t idx, std::size_t axis, int shift, bool periodic) {
  std::size_t stride = 1;
  for (std::size_t a = order; a-- > axis + 1;) stride *= g;
  const std::size_t c = (idx / stride) % g;
  const long nc = static_cast<long>(c) + shift;
  if (nc < 0 || nc >= static_cast<long>(g)) {
    if (!periodic) return 0.0;
    const std::size_t wrapped = static_cast<std::size_t>((nc + static_cast<long>(g)) % static_cast<long>(g));
    return v[idx - c * stride + wrapped * stride];
  }
  return v[idx - c * stride + static_cast<std::size_t>(nc) * stride];
}

/// J_i(x) = int K(x_i - z) tau(T+i)(x, z) dz on the lattice of T.
inline std::vector<double> transport_flux(const LabeledTree& t, std::size_t i, const SparseWeights& w,
                                          const FiberedDensity& f, const Kernel& k,
                                          TransportRoute route, const TauOptions& opts) {
  const std::size_t g = f.n_cells();
  if (route == TransportRoute::fused) {
    const auto v = velocity(f, w, k);
    std::vector<double> fv(f.values.size());
    for (std::size_t q = 0; q < fv.size(); ++q) fv[q] = f.values[q] * v.values[q];
    auto factor = [&](std::size_t vertex) -> const std::vector<double>& {
      return vertex == i ? fv : f.values;
    };
    const auto m = pass_messages(t, 1, w, f.n_fibers, g, factor);
    return average_to_lattice(m, f.n_fibers, g);
  }
  const LabeledTree ti = t.add_leaf(i);
  TauOptions big = opts;
  detail::check_tau_inputs(ti, w, f, kMaxObservableOrder, big);
  const auto full = tau(ti, w, f, big);
  const std::size_t m = t.order();
  const std::size_t width = ipow(g, m);
  std::vector<double> out(width, 0.0);
  std::vector<double> ktab(g * g);
  for (std::size_t a = 0; a < g; ++a)
    for (std::size_t b = 0; b < g; ++b) ktab[a * g + b] = k(f.grid.center(a) - f.grid.center(b));
  std::size_t stride = 1;
  for (std::size_t a = m; a-- > i;) stride *= g;
  for (std::size_t idx = 0; idx < width; ++idx) {
    const std::size_t ci = (idx / stride) % g;
    double s = 0.0;
    for (std::size_t z = 0; z < g; ++z) s += ktab[ci * g + z] * full.values[idx * g + z];
    out[idx] = s * f.grid.dx();
  }
  return out;
}

/// Three-point first derivative at the middle of (t0, t1, t2).
inline std::array<double, 3> time_derivative_weights(double t0, double t1, double t2) {
  const double h0 = t1 - t0, h1 = t2 - t1;
  return {-h1 / (h0 * (h0 + h1)), (h1 - h0) / (h0 * h1), h0 / (h1 * (h0 + h1))};
}

}  // namespace detail

/// r = d_t tau(T) + sum_i div_{x_i} J_i - nu sum_i Lap_{x_i} tau(T), evaluated at
/// the middle snapshot of f_series with centered differences in t and x.
inline ResidualReport hierarchy_residual(const LabeledTree& t, const SparseWeights& w,
                                         const std::vector<FiberedDensity>& f_series,
                                         const Kernel& k, double nu,
                                         TransportRoute route = TransportRoute::fused,
                                         const TauOptions& opts = {}) {
  if (f_series.size() < 3)
    throw InvalidArgument("hierarchy_residual: need at least 3 snapshots, got " +
                          std::to_string(f_series.size()));
  if (t.order() + 1 > kMaxObservableOrder)
    throw InvalidArgument("hierarchy_residual: tree order must be <= 3");
  require(nu >= 0.0, "hierarchy_residual: nu must be non-negative");
  const std::size_t mid = f_series.size() / 2;
  const auto& f0 = f_series[mid - 1];
  const auto& f1 = f_series[mid];
  const auto& f2 = f_series[mid + 1];
  require(f0.time < f1.time && f1.time < f2.time, "hierarchy_residual: snapshot times must increase");
  require(f0.grid == f1.grid && f1.grid == f2.grid, "hierarchy_residual: snapshots on different grids");
  const auto tw = detail::time_derivative_weights(f0.time, f1.time, f2.time);
  const auto a = tau(t, w, f0, opts), b = tau(t, w, f1, opts), c = tau(t, w, f2, opts);
  const std::size_t g = f1.n_cells(), m = t.order();
  const double dx = f1.grid.dx();
  const bool periodic = f1.grid.periodic();
  std::vector<double> r(b.values.size());
  for (std::size_t q = 0; q < r.size(); ++q)
    r[q] = tw[0] * a.values[q] + tw[1] * b.values[q] + tw[2] * c.values[q];
  for (std::size_t i = 1; i <= m; ++i) {
    const auto flux = detail::transport_flux(t, i, w, f1, k, route, opts);
    for (std::size_t q = 0; q < r.size(); ++q) {
      const double up = detail::lattice_neighbor(flux, g, m, q, i - 1, +1, periodic);
      const double dn = detail::lattice_neighbor(flux, g, m, q, i - 1, -1, periodic);
      r[q] += (up - dn) / (2.0 * dx);
      if (nu > 0.0) {
        const double tu = detail::lattice_neighbor(b.values, g, m, q, i - 1, +1, periodic);
        const double td = detail::lattice_neighbor(b.values, g, m, q, i - 1, -1, periodic);
        r[q] -= nu * (tu - 2.0 * b.values[q] + td) / (dx * dx);
      }
    }
  }
  CompensatedSum s;
  for (double v : r) s.add(std::abs(v));
  ResidualReport rep;
  rep.value = s.value() * std::pow(dx, static_cast<double>(m));
  rep.dt = 0.5 * (f2.time - f0.time);
  rep.dx = dx;
  rep.time = f1.time;
  return rep;
}

// ---------------------------------------------------------------------------
// Output

/// CSV for order <= 2: "x1[,x2],value" at cell centers.
inline void write_observable_csv(std::ostream& os, const Observable& o) {
  require(o.order() <= 2, "write_observable_csv: order must be <= 2 (use the binary dump)");
  const std::size_t g = o.grid.n_cells;
  if (o.order() == 1) {
    os << "x1,value\n";
    for (std::size_t c = 0; c < g; ++c)
      os << format_double(o.grid.center(c)) << ',' << format_double(o.values[c]) << '\n';
    return;
  }
  os << "x1,x2,value\n";
  for (std::size_t a = 0; a < g; ++a)
    for (std::size_t b = 0; b < g; ++b)
      os << format_double(o.grid.center(a)) << ',' << format_double(o.grid.center(b)) << ','
         << format_double(o.values[a * g + b]) << '\n';
}

inline constexpr char kObservableMagic[4] = {'M', 'F', 'G', 'O'};
inline constexpr std::uint32_t kObservableFormatVersion = 1;

/// 16-byte header (magic, version, order, G) then the lattice, x_1 slowest.
inline void write_observable_binary(std::ostream& os, const Observable& o) {
  const std::uint32_t hdr[3] = {kObservableFormatVersion, static_cast<std::uint32_t>(o.order()),
                                static_cast<std::uint32_t>(o.grid.n_cells)};
  os.write(kObservableMagic, 4);
  os.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
  os.write(reinterpret_cast<const char*>(o.values.data()),
           static_cast<std::streamsize>(o.values.size() * sizeof(double)));
}

inline Observable read_observable_binary(std::istream& is, const LabeledTree& t, const Grid1D& grid) {
  char magic[4];
  std::uint32_t hdr[3];
  is.read(magic, 4);
  is.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
  if (!is || std::memcmp(magic, kObservableMagic, 4) != 0)
    throw InvalidArgument("observable dump: bad magic");
  if (hdr[0] != kObservableFormatVersion) throw InvalidArgument("observable dump: unsupported version");
  if (hdr[1] != t.order() || hdr[2] != grid.n_cells)
    throw InvalidArgument("observable dump: order or grid mismatch");
  Observable o{t, grid, std::vector<double>(ipow(grid.n_cells, t.order()))};
  is.read(reinterpret_cast<char*>(o.values.data()),
          static_cast<std::streamsize>(o.values.size() * sizeof(double)));
  if (!is) throw InvalidArgument("observable dump: truncated");
  return o;
}

}  // namespace mfgraph
