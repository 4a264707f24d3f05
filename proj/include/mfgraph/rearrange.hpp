#pragma once

// Hierarchical measure-preserving rearrangement of P uniform cells of [0,1]
// and its L^1 shift modulus.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mfgraph/common.hpp"
#include "mfgraph/graph.hpp"
#include "mfgraph/parallel.hpp"
#include "mfgraph/pde.hpp"

namespace mfgraph {

/// n_k = 2^{k(k+1)/2}: number of pieces at level k.
inline std::size_t pieces_at_level(std::size_t k) {
  require(k <= 10, "pieces_at_level: level too deep");
  return std::size_t{1} << (k * (k + 1) / 2);
}

enum class NormalizationMode {
  /// Values must satisfy 0 < g_m <= 2^{-m+1} (m = 1..K).
  strict,
  /// Any bounded values; g~_m = (g_m + |g_m|_inf) / (2^m |g_m|_inf) is used for the construction.
  general,
};

/// K functions sampled on P cells, row-major K x P.
struct CellFunctions {
  std::size_t n_funcs = 0;
  std::size_t n_cells = 0;
  std::vector<double> values;
  NormalizationMode mode = NormalizationMode::strict;

  CellFunctions() = default;
  CellFunctions(std::size_t k, std::size_t p, NormalizationMode m = NormalizationMode::strict)
      : n_funcs(k), n_cells(p), values(k * p, 0.0), mode(m) {}

  /// g_m at cell c, m = 1..K.
  double& at(std::size_t m, std::size_t c) { return values[(m - 1) * n_cells + c]; }
  double at(std::size_t m, std::size_t c) const { return values[(m - 1) * n_cells + c]; }

  /// Upper bound 2^{-m+1} of g_m in strict mode.
  static double cap(std::size_t m) { return std::ldexp(1.0, 1 - static_cast<int>(m)); }

  /// The functions the construction works with: unchanged in strict mode
  /// (after validation), rescaled in general mode.
  CellFunctions normalized() const {
    require(values.size() == n_funcs * n_cells, "CellFunctions: values size mismatch");
    CellFunctions out = *this;
    if (mode == NormalizationMode::strict) {
      for (std::size_t m = 1; m <= n_funcs; ++m)
        for (std::size_t c = 0; c < n_cells; ++c) {
          const double v = at(m, c);
          if (!(v > 0.0 && v <= cap(m)))
            throw InvalidArgument("CellFunctions: strict mode needs 0 < g_" + std::to_string(m) +
                                  " <= " + format_double(cap(m)) + ", got " + format_double(v) +
                                  " at cell " + std::to_string(c));
        }
      return out;
    }
    for (std::size_t m = 1; m <= n_funcs; ++m) {
      double sup = 0.0;
      for (std::size_t c = 0; c < n_cells; ++c) {
        require(std::isfinite(at(m, c)), "CellFunctions: values must be finite");
        sup = std::max(sup, std::abs(at(m, c)));
      }
      for (std::size_t c = 0; c < n_cells; ++c)
        out.at(m, c) = sup > 0.0 ? (at(m, c) + sup) / (std::ldexp(1.0, static_cast<int>(m)) * sup) : 0.0;
    }
    return out;
  }
};

/// Declared value range [s, t] of one function on one piece.
struct ValueInterval {
  double s = 0.0;
  double t = 0.0;
};

struct RearrangementMap {
  std::size_t levels = 0;
  /// perm[position] = original cell; positions are in dyadic (lexicographic) order.
  std::vector<std::size_t> perm;
  /// piece_of[k][cell]: index (lexicographic) of the level-k piece containing the cell.
  std::vector<std::vector<std::uint32_t>> piece_of;
  /// intervals[k][piece * K + (m-1)]: declared range of g_m on that piece.
  std::vector<std::vector<ValueInterval>> intervals;
};

/// Smallest multiple of n_K nearest to p.
inline std::size_t nearest_admissible_cells(std::size_t p, std::size_t k) {
  const std::size_t nk = pieces_at_level(k);
  const std::size_t lo = std::max(nk, p / nk * nk);
  const std::size_t hi = lo + nk;
  return (p < lo || p - lo <= hi - p) ? lo : hi;
}

/// Builds Phi: every level-k piece is refined into 2^{k+1} equal-cardinality
/// children by successive median splits on g_1, ..., g_{k+1} (ranks, ties by
/// cell index), low halves first.
inline RearrangementMap build_phi(const CellFunctions& g_in) {
  require(g_in.n_funcs >= 1, "build_phi: need at least one function");
  const std::size_t K = g_in.n_funcs, P = g_in.n_cells;
  const std::size_t nK = pieces_at_level(K);
  if (P == 0 || P % nK != 0)
    throw InvalidArgument("build_phi: P=" + std::to_string(P) + " is not a multiple of n_K=" +
                          std::to_string(nK) + "; nearest admissible P is " +
                          std::to_string(nearest_admissible_cells(P, K)));
  const CellFunctions g = g_in.normalized();

  struct Piece {
    std::vector<std::uint32_t> cells;
    std::vector<ValueInterval> iv;  // K entries
  };
  std::vector<Piece> level(1);
  level[0].cells.resize(P);
  std::iota(level[0].cells.begin(), level[0].cells.end(), 0u);
  level[0].iv.resize(K);
  for (std::size_t m = 1; m <= K; ++m) level[0].iv[m - 1] = {0.0, CellFunctions::cap(m)};

  RearrangementMap out;
  out.levels = K;
  auto record = [&](const std::vector<Piece>& pieces) {
    std::vector<std::uint32_t> owner(P);
    std::vector<ValueInterval> iv;
    iv.reserve(pieces.size() * K);
    for (std::size_t p = 0; p < pieces.size(); ++p) {
      for (auto c : pieces[p].cells) owner[c] = static_cast<std::uint32_t>(p);
      iv.insert(iv.end(), pieces[p].iv.begin(), pieces[p].iv.end());
    }
    out.piece_of.push_back(std::move(owner));
    out.intervals.push_back(std::move(iv));
  };
  record(level);

  for (std::size_t k = 0; k < K; ++k) {
    const std::size_t fanout = std::size_t{1} << (k + 1);
    std::vector<Piece> next(level.size() * fanout);
    parallel_for(level.size(), [&](std::size_t p) {
      const Piece& parent = level[p];
      std::vector<Piece> work{parent};
      for (std::size_t m = 1; m <= k + 1; ++m) {
        std::vector<Piece> split;
        split.reserve(work.size() * 2);
        for (Piece& piece : work) {
          auto& cells = piece.cells;
          std::sort(cells.begin(), cells.end(), [&](std::uint32_t a, std::uint32_t b) {
            const double ga = g.at(m, a), gb = g.at(m, b);
            return ga != gb ? ga < gb : a < b;
          });
          const std::size_t half = cells.size() / 2;
          const double threshold = g.at(m, cells[half - 1]);
          const ValueInterval base = parent.iv[m - 1];
          Piece low, high;
          low.cells.assign(cells.begin(), cells.begin() + static_cast<std::ptrdiff_t>(half));
          high.cells.assign(cells.begin() + static_cast<std::ptrdiff_t>(half), cells.end());
          low.iv = high.iv = piece.iv;
          low.iv[m - 1] = {base.s, threshold};
          high.iv[m - 1] = {threshold, base.t};
          split.push_back(std::move(low));
          split.push_back(std::move(high));
        }
        work = std::move(split);
      }
      for (std::size_t q = 0; q < fanout; ++q) {
        std::sort(work[q].cells.begin(), work[q].cells.end());
        next[p * fanout + q] = std::move(work[q]);
      }
    });
    level = std::move(next);
    record(level);
  }

  out.perm.reserve(P);
  for (const auto& piece : level)
    for (auto c : piece.cells) out.perm.push_back(c);
  return out;
}

struct ModulusRow {
  std::size_t shift = 0;  ///< in cells
  double tau = 0.0;       ///< shift / P
  /// max_m (1/P) sum_xi |g_m(perm(xi)) - g_m(perm(xi + shift))|, zero-extended,
  /// on the functions used by the construction.
  double value = 0.0;
  /// The same on the supplied (unnormalized) functions.
  double raw_value = 0.0;
  /// Deepest level k <= K with tau <= 1/n_k^2.
  std::size_t level = 0;
  double bound_fine = 0.0;   ///< 2^{-k} + 2 tau n_k
  double bound = 0.0;        ///< 3 * 2^{-k}
};

struct ModulusTable {
  std::vector<ModulusRow> rows;
  /// min over rows with 0 < M < 1 of -log2(M) / sqrt(ln(1/tau)); informational only.
  double fitted_c = 0.0;
};

namespace detail {

inline double shift_modulus(const CellFunctions& g, std::span<const std::size_t> perm, std::size_t shift) {
  const std::size_t P = g.n_cells;
  double worst = 0.0;
  for (std::size_t m = 1; m <= g.n_funcs; ++m) {
    CompensatedSum s;
    for (std::size_t x = 0; x < P; ++x) {
      const double a = g.at(m, perm[x]);
      const double b = x + shift < P ? g.at(m, perm[x + shift]) : 0.0;
      s.add(std::abs(a - b));
    }
    worst = std::max(worst, s.value() / static_cast<double>(P));
  }
  return worst;
}

}  // namespace detail

/// M(h) for each shift, with the explicit bound at the deepest admissible level.
inline ModulusTable modulus(const CellFunctions& g, const RearrangementMap& phi,
                            const std::vector<std::size_t>& shifts) {
  require(phi.perm.size() == g.n_cells, "modulus: permutation size mismatch");
  const CellFunctions gn = g.normalized();
  const double P = static_cast<double>(g.n_cells);
  ModulusTable table;
  table.fitted_c = std::numeric_limits<double>::infinity();
  for (std::size_t h : shifts) {
    require(h < g.n_cells, "modulus: shifts must lie in [0, P)");
    ModulusRow r;
    r.shift = h;
    r.tau = static_cast<double>(h) / P;
    r.value = h == 0 ? 0.0 : detail::shift_modulus(gn, phi.perm, h);
    r.raw_value = h == 0 ? 0.0 : detail::shift_modulus(g, phi.perm, h);
    for (std::size_t k = 0; k <= phi.levels; ++k) {
      const double nk = static_cast<double>(pieces_at_level(k));
      if (r.tau <= 1.0 / (nk * nk)) r.level = k;
    }
    const double nk = static_cast<double>(pieces_at_level(r.level));
    r.bound_fine = std::ldexp(1.0, -static_cast<int>(r.level)) + 2.0 * r.tau * nk;
    r.bound = 3.0 * std::ldexp(1.0, -static_cast<int>(r.level));
    if (r.value > 0.0 && r.value < 1.0 && r.tau > 0.0 && r.tau < 1.0)
      table.fitted_c = std::min(table.fitted_c, -std::log2(r.value) / std::sqrt(std::log(1.0 / r.tau)));
    table.rows.push_back(r);
  }
  if (!std::isfinite(table.fitted_c)) table.fitted_c = 0.0;
  return table;
}

/// Relabels agents by phi: w~_ij = w_{perm(i) perm(j)}, f~_i = f_{perm(i)}.
inline std::pair<SparseWeights, FiberedDensity> rearrange_pair(const SparseWeights& w,
                                                               const FiberedDensity& f,
                                                               const RearrangementMap& phi) {
  if (phi.perm.size() != w.n_agents() || w.n_agents() != f.n_fibers)
    throw InvalidArgument("rearrange_pair: need P = N = n_fibers (got P=" +
                          std::to_string(phi.perm.size()) + ", N=" + std::to_string(w.n_agents()) +
                          ", fibers=" + std::to_string(f.n_fibers) + ")");
  FiberedDensity out(f.grid, f.n_fibers);
  out.time = f.time;
  for (std::size_t i = 0; i < f.n_fibers; ++i) {
    const auto src = f.fiber(phi.perm[i]);
    std::copy(src.begin(), src.end(), out.fiber(i).begin());
  }
  return {permute(w, phi.perm), std::move(out)};
}

inline void write_permutation(std::ostream& os, std::span<const std::size_t> perm) {
  for (std::size_t v : perm) os << v << '\n';
}

inline std::vector<std::size_t> read_permutation(std::istream& is) {
  std::vector<std::size_t> p;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::size_t v = 0;
    auto res = std::from_chars(line.data(), line.data() + line.size(), v);
    if (res.ec != std::errc() || res.ptr != line.data() + line.size())
      throw InvalidArgument("permutation line " + std::to_string(lineno) + ": expected an index");
    p.push_back(v);
  }
  if (!is_permutation_of_range(p)) throw InvalidArgument("permutation: not a bijection on 0..P-1");
  return p;
}

}  // namespace mfgraph
