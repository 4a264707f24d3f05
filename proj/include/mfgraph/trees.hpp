#pragma once

// Labeled rooted trees built by successive leaf addition.
//
// Vertices are 1-based as in the usual T_n notation. parent(1) is the root marker
// (0); parent(v) < v for v >= 2, so edges always point from root to leaves.

#include <algorithm>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mfgraph/common.hpp"

namespace mfgraph {

class LabeledTree {
 public:
  static constexpr std::size_t max_enumeration_order = 8;

  /// T_1: a single root, no edges.
  LabeledTree() : parent_{0} {}

  /// From a parent list for vertices 2..n (each entry in 1..v-1).
  static LabeledTree from_parents(const std::vector<std::size_t>& parents_of_2_to_n) {
    LabeledTree t;
    for (std::size_t p : parents_of_2_to_n) t = t.add_leaf(p);
    return t;
  }

  std::size_t order() const noexcept { return parent_.size(); }

  /// Parent of vertex v (1-based); 0 for the root.
  std::size_t parent(std::size_t v) const {
    require(v >= 1 && v <= order(), "LabeledTree::parent: vertex out of range");
    return parent_[v - 1];
  }

  /// T + i: attach the new leaf n+1 under vertex i.
  LabeledTree add_leaf(std::size_t i) const {
    if (i < 1 || i > order())
      throw InvalidArgument("add_leaf: vertex " + std::to_string(i) + " not in 1.." +
                            std::to_string(order()));
    LabeledTree t = *this;
    t.parent_.push_back(i);
    return t;
  }

  /// Oriented edges (parent, child), ordered by child.
  std::vector<std::pair<std::size_t, std::size_t>> edges() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t v = 2; v <= order(); ++v) out.emplace_back(parent_[v - 1], v);
    return out;
  }

  /// Ascending child list of v.
  std::vector<std::size_t> children(std::size_t v) const {
    if (v < 1 || v > order())
      throw InvalidArgument("children: vertex " + std::to_string(v) + " not in 1.." +
                            std::to_string(order()));
    std::vector<std::size_t> out;
    for (std::size_t c = v + 1; c <= order(); ++c)
      if (parent_[c - 1] == v) out.push_back(c);
    return out;
  }

  /// Canonical text form, e.g. "-,1,2".
  std::string to_string() const {
    std::ostringstream os;
    os << '-';
    for (std::size_t v = 2; v <= order(); ++v) os << ',' << parent_[v - 1];
    return os.str();
  }

  static LabeledTree parse(const std::string& text) {
    std::istringstream is(text);
    std::string tok;
    std::vector<std::string> toks;
    while (std::getline(is, tok, ',')) toks.push_back(tok);
    if (toks.empty() || toks[0] != "-")
      throw InvalidArgument("LabeledTree::parse: expected leading '-' in '" + text + "'");
    LabeledTree t;
    for (std::size_t k = 1; k < toks.size(); ++k) {
      std::size_t p = 0;
      try {
        std::size_t used = 0;
        p = std::stoul(toks[k], &used);
        if (used != toks[k].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw InvalidArgument("LabeledTree::parse: bad parent '" + toks[k] + "'");
      }
      t = t.add_leaf(p);
    }
    return t;
  }

  friend auto operator<=>(const LabeledTree&, const LabeledTree&) = default;
  friend bool operator==(const LabeledTree&, const LabeledTree&) = default;

 private:
  std::vector<std::size_t> parent_;
};

/// Tree_n in lexicographic order of parent arrays: (n-1)! labeled trees.
inline std::vector<LabeledTree> enumerate_trees(std::size_t n) {
  if (n < 1 || n > LabeledTree::max_enumeration_order)
    throw InvalidArgument("enumerate_trees: n=" + std::to_string(n) + " outside 1.." +
                          std::to_string(LabeledTree::max_enumeration_order));
  std::vector<LabeledTree> level{LabeledTree()};
  for (std::size_t k = 1; k < n; ++k) {
    std::vector<LabeledTree> next;
    next.reserve(level.size() * k);
    for (const auto& t : level)
      for (std::size_t i = 1; i <= k; ++i) next.push_back(t.add_leaf(i));
    level = std::move(next);
  }
  std::sort(level.begin(), level.end());
  return level;
}

}  // namespace mfgraph
