#pragma once

// Sparse weighted digraphs, mean-field scaling diagnostics and the kernel action.
//
// Indices are 0-based in the C++ API. The text edge-list format is 1-based.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mfgraph/common.hpp"
#include "mfgraph/parallel.hpp"
#include "mfgraph/rng.hpp"

namespace mfgraph {

/// Connection matrix (w_ij) of an N-agent system, stored row-major with a
/// column index built alongside.
class SparseWeights {
 public:
  struct Entry {
    std::uint32_t row = 0;
    std::uint32_t col = 0;
    double weight = 0.0;
  };

  SparseWeights() = default;

  /// Builds from an unordered triplet list. Duplicate (i,j) keys and
  /// out-of-range indices are rejected.
  static SparseWeights from_triplets(std::size_t n_agents, std::vector<Entry> entries) {
    require(n_agents > 0, "SparseWeights: n_agents must be positive");
    for (const auto& e : entries) {
      if (e.row >= n_agents || e.col >= n_agents)
        throw InvalidArgument("SparseWeights: entry (" + std::to_string(e.row + 1) + "," +
                              std::to_string(e.col + 1) + ") outside 1.." +
                              std::to_string(n_agents));
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    for (std::size_t k = 1; k < entries.size(); ++k) {
      if (entries[k].row == entries[k - 1].row && entries[k].col == entries[k - 1].col)
        throw InvalidArgument("SparseWeights: duplicate entry (" +
                              std::to_string(entries[k].row + 1) + "," +
                              std::to_string(entries[k].col + 1) + ")");
    }
    SparseWeights w;
    w.n_ = n_agents;
    w.entries_ = std::move(entries);
    w.build_indices();
    return w;
  }

  std::size_t n_agents() const noexcept { return n_; }
  std::size_t nnz() const noexcept { return entries_.size(); }
  std::span<const Entry> entries() const noexcept { return entries_; }

  /// Stored entries of row i, ordered by column.
  std::span<const Entry> row(std::size_t i) const {
    return std::span<const Entry>(entries_).subspan(row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]);
  }

  /// Positions (into entries()) of the stored entries of column j, ordered by row.
  std::span<const std::size_t> col(std::size_t j) const {
    return std::span<const std::size_t>(col_entries_)
        .subspan(col_ptr_[j], col_ptr_[j + 1] - col_ptr_[j]);
  }

  /// Stored weight at (i,j), or 0 if absent.
  double at(std::size_t i, std::size_t j) const {
    const auto r = row(i);
    auto it = std::lower_bound(r.begin(), r.end(), j,
                               [](const Entry& e, std::size_t c) { return e.col < c; });
    return (it != r.end() && it->col == j) ? it->weight : 0.0;
  }

  bool contains(std::size_t i, std::size_t j) const {
    const auto r = row(i);
    auto it = std::lower_bound(r.begin(), r.end(), j,
                               [](const Entry& e, std::size_t c) { return e.col < c; });
    return it != r.end() && it->col == j;
  }

  friend bool operator==(const SparseWeights& a, const SparseWeights& b) {
    if (a.n_ != b.n_ || a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t k = 0; k < a.entries_.size(); ++k) {
      const auto &x = a.entries_[k], &y = b.entries_[k];
      if (x.row != y.row || x.col != y.col || x.weight != y.weight) return false;
    }
    return true;
  }

 private:
  void build_indices() {
    row_ptr_.assign(n_ + 1, 0);
    col_ptr_.assign(n_ + 1, 0);
    for (const auto& e : entries_) {
      ++row_ptr_[e.row + 1];
      ++col_ptr_[e.col + 1];
    }
    std::partial_sum(row_ptr_.begin(), row_ptr_.end(), row_ptr_.begin());
    std::partial_sum(col_ptr_.begin(), col_ptr_.end(), col_ptr_.begin());
    col_entries_.assign(entries_.size(), 0);
    std::vector<std::size_t> fill(col_ptr_.begin(), col_ptr_.end() - 1);
    // entries_ is row-sorted, so each column list comes out ordered by row.
    for (std::size_t k = 0; k < entries_.size(); ++k) col_entries_[fill[entries_[k].col]++] = k;
  }

  std::size_t n_ = 0;
  std::vector<Entry> entries_;
  std::vector<std::size_t> row_ptr_;
  std::vector<std::size_t> col_ptr_;
  std::vector<std::size_t> col_entries_;
};

struct ScalingReport {
  double max_row_abs_sum = 0.0;
  double max_col_abs_sum = 0.0;
  double max_entry_abs = 0.0;
  double density = 0.0;  ///< stored entries / N^2

  friend bool operator==(const ScalingReport&, const ScalingReport&) = default;
};

/// Mean-field scaling quantities over the stored entries, with compensated sums.
inline ScalingReport check_scaling(const SparseWeights& w) {
  ScalingReport r;
  const std::size_t n = w.n_agents();
  if (n == 0) return r;
  for (std::size_t i = 0; i < n; ++i) {
    CompensatedSum s;
    for (const auto& e : w.row(i)) s.add(std::abs(e.weight));
    r.max_row_abs_sum = std::max(r.max_row_abs_sum, s.value());
  }
  const auto entries = w.entries();
  for (std::size_t j = 0; j < n; ++j) {
    CompensatedSum s;
    for (std::size_t k : w.col(j)) s.add(std::abs(entries[k].weight));
    r.max_col_abs_sum = std::max(r.max_col_abs_sum, s.value());
  }
  for (const auto& e : entries) r.max_entry_abs = std::max(r.max_entry_abs, std::abs(e.weight));
  r.density = static_cast<double>(w.nnz()) / (static_cast<double>(n) * static_cast<double>(n));
  return r;
}

/// Piecewise-constant kernel w_N(xi, zeta) = N * w_ij on cell (i, j).
class EmpiricalGraphon {
 public:
  explicit EmpiricalGraphon(const SparseWeights& w) : w_(&w) {}

  std::size_t n_cells() const noexcept { return w_->n_agents(); }

  double operator()(double xi, double zeta) const {
    const std::size_t n = n_cells();
    return static_cast<double>(n) * w_->at(cell_of(xi, n), cell_of(zeta, n));
  }

 private:
  static std::size_t cell_of(double s, std::size_t n) {
    require(s >= 0.0 && s <= 1.0, "EmpiricalGraphon: coordinate outside [0,1]");
    return std::min(n - 1, static_cast<std::size_t>(s * static_cast<double>(n)));
  }
  const SparseWeights* w_;
};

// ---------------------------------------------------------------------------
// Generators

/// w_ij = w_bar / n for all pairs; the diagonal is stored only on request.
inline SparseWeights gen_uniform(std::size_t n, double w_bar, bool include_diagonal = false) {
  require(n >= 1, "gen_uniform: n must be >= 1");
  std::vector<SparseWeights::Entry> e;
  e.reserve(n * n);
  const double v = w_bar / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (include_diagonal || i != j)
        e.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), v});
  return SparseWeights::from_triplets(n, std::move(e));
}

inline bool is_permutation_of_range(std::span<const std::size_t> p) {
  std::vector<char> seen(p.size(), 0);
  for (std::size_t v : p) {
    if (v >= p.size() || seen[v]) return false;
    seen[v] = 1;
  }
  return true;
}

/// Class-permutation graph: agents split into n/m consecutive blocks
/// E_k = {k*m, ..., (k+1)*m - 1}; agent i in E_k links with weight 1/m to
/// every agent of E_{perm[k]}.
inline SparseWeights gen_class_permutation(std::size_t n, std::size_t m,
                                           std::span<const std::size_t> perm) {
  require(m >= 1 && n >= 1, "gen_class_permutation: n and m must be positive");
  if (n % m != 0)
    throw InvalidArgument("gen_class_permutation: m=" + std::to_string(m) +
                          " does not divide n=" + std::to_string(n));
  const std::size_t classes = n / m;
  if (perm.size() != classes || !is_permutation_of_range(perm))
    throw InvalidArgument("gen_class_permutation: perm must be a bijection on " +
                          std::to_string(classes) + " classes");
  std::vector<SparseWeights::Entry> e;
  e.reserve(n * m);
  const double v = 1.0 / static_cast<double>(m);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t target = perm[i / m];
    for (std::size_t j = target * m; j < (target + 1) * m; ++j)
      e.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), v});
  }
  return SparseWeights::from_triplets(n, std::move(e));
}

inline SparseWeights gen_class_permutation(std::size_t n, std::size_t m,
                                           const std::vector<std::size_t>& perm) {
  return gen_class_permutation(n, m, std::span<const std::size_t>(perm));
}

/// Uniform random permutation of 0..n-1 from the permutation stream of `seed`.
inline std::vector<std::size_t> random_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  auto rng = make_engine(seed, StreamPurpose::permutation);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(p[i - 1], p[pick(rng)]);
  }
  return p;
}

/// Class-permutation graph whose class map is random_permutation(n / m, seed).
inline SparseWeights gen_class_permutation_seeded(std::size_t n, std::size_t m, std::uint64_t seed) {
  require(m >= 1 && n >= 1 && n % m == 0, "gen_class_permutation: m must divide n");
  return gen_class_permutation(n, m, random_permutation(n / m, seed));
}

enum class GraphonSampling { midpoint, bernoulli };

/// Discretizes a bounded graphon g on [0,1]^2.
///
/// midpoint:  w_ij = g((i+1/2)/n, (j+1/2)/n) / n, dense.
/// bernoulli: edge (i,j) present with probability g(...) (clamped to [0,1]),
///            weight 1/n, drawn from the graph_sampling stream of `seed`.
inline SparseWeights gen_from_graphon(std::size_t n, const std::function<double(double, double)>& g,
                                      GraphonSampling mode = GraphonSampling::midpoint,
                                      std::uint64_t seed = 0) {
  require(n >= 1, "gen_from_graphon: n must be >= 1");
  const double nd = static_cast<double>(n);
  std::vector<SparseWeights::Entry> e;
  e.reserve(mode == GraphonSampling::midpoint ? n * n : 0);
  auto rng = make_engine(seed, StreamPurpose::graph_sampling);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = (static_cast<double>(i) + 0.5) / nd;
    for (std::size_t j = 0; j < n; ++j) {
      const double zeta = (static_cast<double>(j) + 0.5) / nd;
      const double gv = g(xi, zeta);
      if (mode == GraphonSampling::midpoint) {
        e.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), gv / nd});
      } else if (unif(rng) < std::clamp(gv, 0.0, 1.0)) {
        e.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), 1.0 / nd});
      }
    }
  }
  return SparseWeights::from_triplets(n, std::move(e));
}

// ---------------------------------------------------------------------------
// Kernel action

enum class Side { row, col };

/// Discrete form of phi -> int phi(zeta) w(xi, dzeta).
///
/// The 1/N cell measure cancels the N of the empirical graphon, so raw weights
/// apply: out_i = sum_j w_ij phi_j (row) or out_j = sum_i w_ij phi_i (col).
inline std::vector<double> kernel_apply(const SparseWeights& w, std::span<const double> phi,
                                        Side side = Side::row) {
  const std::size_t n = w.n_agents();
  if (phi.size() != n)
    throw InvalidArgument("kernel_apply: phi has length " + std::to_string(phi.size()) +
                          ", expected " + std::to_string(n));
  std::vector<double> out(n, 0.0);
  if (side == Side::row) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (const auto& e : w.row(i)) s += e.weight * phi[e.col];
      out[i] = s;
    }
  } else {
    const auto entries = w.entries();
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k : w.col(j)) s += entries[k].weight * phi[entries[k].row];
      out[j] = s;
    }
  }
  return out;
}

/// Row-side kernel action on a block of vectors: data is n_agents x block,
/// row-major; out[i, :] = sum_j w_ij data[j, :].
inline std::vector<double> kernel_apply_block(const SparseWeights& w, std::span<const double> data,
                                              std::size_t block) {
  const std::size_t n = w.n_agents();
  if (data.size() != n * block)
    throw InvalidArgument("kernel_apply_block: data size mismatch");
  std::vector<double> out(n * block, 0.0);
  parallel_for(n, [&](std::size_t i) {
    double* o = out.data() + i * block;
    for (const auto& e : w.row(i)) {
      const double* src = data.data() + static_cast<std::size_t>(e.col) * block;
      const double wt = e.weight;
      for (std::size_t b = 0; b < block; ++b) o[b] += wt * src[b];
    }
  });
  return out;
}

/// Simultaneous relabeling: result_ij = w_{perm[i], perm[j]}.
inline SparseWeights permute(const SparseWeights& w, std::span<const std::size_t> perm) {
  const std::size_t n = w.n_agents();
  if (perm.size() != n || !is_permutation_of_range(perm))
    throw InvalidArgument("permute: perm must be a bijection on 0..n-1");
  std::vector<std::size_t> inv(n);
  for (std::size_t i = 0; i < n; ++i) inv[perm[i]] = i;
  std::vector<SparseWeights::Entry> e;
  e.reserve(w.nnz());
  for (const auto& x : w.entries())
    e.push_back({static_cast<std::uint32_t>(inv[x.row]), static_cast<std::uint32_t>(inv[x.col]),
                 x.weight});
  return SparseWeights::from_triplets(n, std::move(e));
}

// ---------------------------------------------------------------------------
// Text edge list: "N <n>" then "i j w" lines, 1-based, shortest round-trip decimals.

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw InvalidArgument("invalid number '" + s + "'");
  return v;
}

inline void write_edge_list(std::ostream& os, const SparseWeights& w) {
  os << "N " << w.n_agents() << '\n';
  for (const auto& e : w.entries())
    os << (e.row + 1) << ' ' << (e.col + 1) << ' ' << format_double(e.weight) << '\n';
}

inline SparseWeights read_edge_list(std::istream& is) {
  std::string line;
  std::size_t lineno = 0;
  std::size_t n = 0;
  bool have_header = false;
  std::vector<SparseWeights::Entry> e;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    if (!have_header) {
      std::string tag;
      if (!(ls >> tag >> n) || tag != "N" || n == 0)
        throw InvalidArgument("edge list line " + std::to_string(lineno) +
                              ": expected header 'N <n_agents>'");
      have_header = true;
      continue;
    }
    std::size_t i = 0, j = 0;
    std::string wtxt;
    if (!(ls >> i >> j >> wtxt) || i == 0 || j == 0 || i > n || j > n)
      throw InvalidArgument("edge list line " + std::to_string(lineno) +
                            ": expected 'i j w' with 1 <= i,j <= " + std::to_string(n));
    e.push_back({static_cast<std::uint32_t>(i - 1), static_cast<std::uint32_t>(j - 1),
                 parse_double(wtxt)});
  }
  if (!have_header) throw InvalidArgument("edge list: missing header");
  return SparseWeights::from_triplets(n, std::move(e));
}

}  // namespace mfgraph
