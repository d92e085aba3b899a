// Adapted processes, stopping times, and random partitions on the tree.
//
// An AdaptedProcess stores one value per node for levels 0..N-1, or 0..N when
// the process carries a terminal value (includes_terminal).  Values are flat
// per-level arrays, node-major; a node value is a scalar, an n-vector, or an
// n-by-n matrix whose entries are reals or d-vectors (one real per Brownian
// axis).  Adaptedness is structural: a value is indexed by its own node only.
//
// The matrix-times-vector product used throughout contracts the d-axis:
// (A z)^i = sum_k <A^i_k, z^k> with <.,.> the d-dimensional inner product.
#pragma once

#include <cstdint>
#include <vector>

#include "bsdelab/errors.hpp"
#include "bsdelab/tree.hpp"

namespace bsdelab {

enum class Shape { scalar, vector_n, matrix_nn };

struct AdaptedProcess {
  TreeModel model;  // by value: processes stay valid when moved around
  Shape shape = Shape::scalar;
  bool vec_entries = false;       // entries are d-vectors instead of reals
  bool includes_terminal = false; // defined on levels 0..N instead of 0..N-1
  int n = 1;                      // state dimension for vector/matrix shapes
  std::vector<std::vector<double>> values;  // values[level][node*stride + c]

  static AdaptedProcess make(const TreeModel& model, Shape shape,
                             bool vec_entries, bool includes_terminal, int n,
                             double fill = 0.0);

  int rows() const { return shape == Shape::scalar ? 1 : n; }
  int cols() const { return shape == Shape::matrix_nn ? n : 1; }
  int entry_len() const { return vec_entries ? model.dim : 1; }
  int stride() const { return rows() * cols() * entry_len(); }
  int top_level() const { return model.depth - (includes_terminal ? 0 : 1); }

  double& at(int level, std::size_t node, int i = 0, int j = 0, int axis = 0) {
    return values[level][node * stride() + (i * cols() + j) * entry_len() + axis];
  }
  double at(int level, std::size_t node, int i = 0, int j = 0,
            int axis = 0) const {
    return values[level][node * stride() + (i * cols() + j) * entry_len() + axis];
  }
  const double* node_ptr(int level, std::size_t node) const {
    return values[level].data() + node * stride();
  }
  double* node_ptr(int level, std::size_t node) {
    return values[level].data() + node * stride();
  }

  // Euclidean/Frobenius magnitude of the node value over all components.
  double node_abs(int level, std::size_t node) const;
};

// A stopping time, stored as hereditary "has fired at or before this node"
// flags: once a path stops, every descendant is flagged.  Every leaf-level
// node must be flagged (paths stop no later than level N).
struct StoppingTime {
  TreeModel model;
  std::vector<std::vector<std::uint8_t>> fired;  // fired[level][node]

  // Deterministic stopping time identically equal to `level`.
  static StoppingTime at_level(const TreeModel& model, int level);

  // Checks heredity and leaf coverage.
  bool valid() const;
};

// Ordered stopping times tau_0 <= ... <= tau_m with tau_0 == level 0 and
// tau_m == level N; slice j covers the nodes where tau_{j-1} has fired and
// tau_j has not.
struct RandomPartition {
  std::vector<StoppingTime> times;

  int slice_count() const { return static_cast<int>(times.size()) - 1; }
  // True iff node (level,node) lies in slice j (1-based).
  bool in_slice(int j, int level, std::size_t node) const {
    return times[j - 1].fired[level][node] && !times[j].fired[level][node];
  }
};

}  // namespace bsdelab
