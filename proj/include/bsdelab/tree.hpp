// The exact discrete Brownian model: a non-recombining 2^d-ary tree.
//
// Level k holds branching^k nodes; the edge into child slot j carries the
// increment vector (sign_0 * step, ..., sign_{d-1} * step) where sign_l is
// +1 if bit l of j is set and -1 otherwise, so the children of a node
// enumerate every sign pattern exactly once.  Conditional expectations are
// uniform averages over descendant leaves and are computed by pairwise
// halving, which makes the tower property hold bitwise: dividing by two is
// exact in binary floating point, so the average over a subtree equals the
// average of the children's averages with no extra rounding.
#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "bsdelab/errors.hpp"

namespace bsdelab {

struct TreeModel {
  int depth = 0;        // N: number of time steps
  double horizon = 0;   // T
  int dim = 0;          // d: Brownian dimension, 1 or 2
  double dt = 0;        // T / N
  double step = 0;      // sqrt(dt)
  int branching = 0;    // 2^d

  std::size_t nodes_at(int level) const {
    return std::size_t{1} << (static_cast<std::size_t>(level) * dim);
  }
  std::size_t leaf_count() const { return nodes_at(depth); }
  double time_at(int level) const { return level * dt; }

  // Sign of Brownian component `axis` on the edge into child slot `slot`.
  static double increment_sign(int slot, int axis) {
    return (slot >> axis) & 1 ? 1.0 : -1.0;
  }
};

struct NodeRef {
  int level = 0;
  std::size_t path_index = 0;
};

inline NodeRef child_of(const TreeModel& model, NodeRef u, int slot) {
  return {u.level + 1, u.path_index * model.branching + slot};
}

inline NodeRef parent_of(const TreeModel& model, NodeRef u) {
  return {u.level - 1, u.path_index / model.branching};
}

// Current leaf budget: BSDE_LAB_MAX_NODES if set, else 2^26 leaves.
std::size_t leaf_budget();

// Builds the model.  Throws InvalidDim for d outside {1,2}, BudgetExceeded
// when branching^N would exceed the leaf budget.
TreeModel build_tree(int N, double T, int d);

// Per-level values of one Brownian coordinate: out[k][node] = B^axis at the
// node (root value 0).  Used by terminal-condition and coefficient builders.
std::vector<std::vector<double>> brownian_component(const TreeModel& model,
                                                    int axis = 0);

// Exact conditional expectations of leaf data at every node, by pairwise
// halving.  `leaf_values` holds `comps` doubles per leaf, node-major; the
// result has the same layout per level (level N is a copy of the input).
std::vector<std::vector<double>> backward_means(
    const TreeModel& model, const std::vector<double>& leaf_values, int comps);

// Exact conditional expectation of leaf data at a single node (same halving
// scheme, so it agrees bitwise with backward_means).  Throws ShapeMismatch
// if `leaf_values` does not hold `comps` doubles per leaf.
std::vector<double> conditional_expectation(const TreeModel& model,
                                            const std::vector<double>& leaf_values,
                                            int comps, NodeRef u);

}  // namespace bsdelab
