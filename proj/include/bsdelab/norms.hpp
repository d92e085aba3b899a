// Process-space norms and the sliceability index, computed exactly.
//
// Essential suprema over stopping times are replaced by maxima over nodes:
// every node is attainable by a first-hitting stopping time, and conversely
// a stopping-time conditional expectation is an average of node conditional
// expectations, so the two suprema coincide on the tree (node-max lemma).
// All expectations are exact leaf averages via pairwise halving.
#pragma once

#include <string>
#include <utility>

#include "bsdelab/process.hpp"

namespace bsdelab {

// sqrt( max_u E_u[ sum_{k >= level(u)} |g_k|^2 dt ] ) over all nodes u.
double bmo_norm(const AdaptedProcess& g);

// max_u E_u[ sum_{k >= level(u)} |g_k| dt ].
double bmo_half_norm(const AdaptedProcess& g);

// max over nodes (and the terminal level, when present) of |g_u|.
double sup_norm(const AdaptedProcess& g);

// ( E[ (max over the path of |g|)^q ] )^{1/q}: the S^q norm of the running
// maximum, exact over leaf paths.
double sq_norm(const AdaptedProcess& g, double q);

// ( E[ ( sum_k |g_k|^p dt )^{q/p} ] )^{1/q}: the L^{q,p} norm.  The time
// integral runs over levels 0..N-1 (a terminal value does not contribute).
double lqp_norm(const AdaptedProcess& g, double q, double p);

struct NormReport {
  double s_inf = 0, s_2 = 0, s_4 = 0;
  double bmo = 0, bmo_half = 0;
  double l_22 = 0, l_42 = 0, l_24 = 0;
};

NormReport make_norm_report(const AdaptedProcess& g);

// CSV header / row for NormReport serialization (full round-trip decimals).
std::string norm_report_csv_header();
std::string norm_report_csv_row(const std::string& name, const NormReport& r);

enum class SliceMode { deterministic, node_greedy };

// Partitions time so that every slice of g has bmo norm <= delta; returns the
// slice count m (an upper bound on the minimal index) and the partition.
// deterministic: greedy left-to-right level cuts.  node_greedy: per-path
// greedy stopping that extends each slice until the next step would push the
// pathwise tail sum past delta^2.  Throws Unsliceable when even a single step
// exceeds delta (|g_u| sqrt(dt) > delta somewhere).
std::pair<int, RandomPartition> slice_index(const AdaptedProcess& g,
                                            double delta, SliceMode mode);

// bmo norm of g restricted to slice j of the partition (used by tests and by
// the sliced Picard solver to certify its slices).
double bmo_norm_slice(const AdaptedProcess& g, const RandomPartition& part,
                      int j);
double bmo_half_norm_slice(const AdaptedProcess& g, const RandomPartition& part,
                           int j);

// bmo / bmo_half of g restricted to the level window [a, b) (deterministic
// slices are level windows; the Picard solver sizes its slices with these).
double bmo_window(const AdaptedProcess& g, int a, int b);
double bmo_half_window(const AdaptedProcess& g, int a, int b);

}  // namespace bsdelab
