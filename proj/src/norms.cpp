#include "bsdelab/norms.hpp"

#include <algorithm>
#include <cmath>

#include "bsdelab/csvio.hpp"

namespace bsdelab {

namespace {

// Child-mean of a scalar per-node array (size nodes_at(k+1)) down to level k,
// by pairwise halving per Brownian axis.
std::vector<double> child_mean(const TreeModel& model,
                               std::vector<double> next) {
  std::vector<double> out;
  for (int h = 0; h < model.dim; ++h) {
    out.resize(next.size() / 2);
    for (std::size_t p = 0; p < out.size(); ++p)
      out[p] = (next[2 * p] + next[2 * p + 1]) * 0.5;
    next.swap(out);
  }
  return next;
}

// Shared backward tail accumulator: per_step(u) is added at each node, the
// maximum of the accumulated conditional tails is returned.
template <typename PerStep>
double max_conditional_tail(const AdaptedProcess& g, PerStep per_step) {
  const TreeModel& model = g.model;
  const int last = std::min(g.top_level(), model.depth - 1);
  std::vector<double> tail(model.nodes_at(last + 1), 0.0);
  double best = 0.0;
  for (int k = last; k >= 0; --k) {
    tail = child_mean(model, std::move(tail));
    for (std::size_t u = 0; u < tail.size(); ++u) {
      tail[u] += per_step(k, u);
      best = std::max(best, tail[u]);
    }
  }
  return best;
}

}  // namespace

double bmo_norm(const AdaptedProcess& g) {
  const double dt = g.model.dt;
  return std::sqrt(max_conditional_tail(g, [&](int k, std::size_t u) {
    const double a = g.node_abs(k, u);
    return a * a * dt;
  }));
}

double bmo_half_norm(const AdaptedProcess& g) {
  const double dt = g.model.dt;
  return max_conditional_tail(
      g, [&](int k, std::size_t u) { return g.node_abs(k, u) * dt; });
}

double sup_norm(const AdaptedProcess& g) {
  double best = 0.0;
  for (int k = 0; k <= g.top_level(); ++k)
    for (std::size_t u = 0; u < g.model.nodes_at(k); ++u)
      best = std::max(best, g.node_abs(k, u));
  return best;
}

double sq_norm(const AdaptedProcess& g, double q) {
  const TreeModel& model = g.model;
  const std::size_t leaves = model.leaf_count();
  std::vector<double> running(leaves, 0.0);
  for (int k = 0; k <= g.top_level(); ++k) {
    const std::size_t span = model.nodes_at(model.depth - k);
    for (std::size_t u = 0; u < model.nodes_at(k); ++u) {
      const double a = g.node_abs(k, u);
      for (std::size_t l = u * span; l < (u + 1) * span; ++l)
        running[l] = std::max(running[l], a);
    }
  }
  double acc = 0.0;
  for (double r : running) acc += std::pow(r, q);
  return std::pow(acc / static_cast<double>(leaves), 1.0 / q);
}

double lqp_norm(const AdaptedProcess& g, double q, double p) {
  const TreeModel& model = g.model;
  const std::size_t leaves = model.leaf_count();
  const int last = std::min(g.top_level(), model.depth - 1);
  std::vector<double> sums(leaves, 0.0);
  for (int k = 0; k <= last; ++k) {
    const std::size_t span = model.nodes_at(model.depth - k);
    for (std::size_t u = 0; u < model.nodes_at(k); ++u) {
      const double term = std::pow(g.node_abs(k, u), p) * model.dt;
      for (std::size_t l = u * span; l < (u + 1) * span; ++l) sums[l] += term;
    }
  }
  double acc = 0.0;
  for (double s : sums) acc += std::pow(s, q / p);
  return std::pow(acc / static_cast<double>(leaves), 1.0 / q);
}

NormReport make_norm_report(const AdaptedProcess& g) {
  NormReport r;
  r.s_inf = sup_norm(g);
  r.s_2 = sq_norm(g, 2);
  r.s_4 = sq_norm(g, 4);
  r.bmo = bmo_norm(g);
  r.bmo_half = bmo_half_norm(g);
  r.l_22 = lqp_norm(g, 2, 2);
  r.l_42 = lqp_norm(g, 4, 2);
  r.l_24 = lqp_norm(g, 2, 4);
  return r;
}

std::string norm_report_csv_header() {
  return "name,s_inf,s_2,s_4,bmo,bmo_half,l_22,l_42,l_24";
}

std::string norm_report_csv_row(const std::string& name, const NormReport& r) {
  std::string row = name;
  for (double v : {r.s_inf, r.s_2, r.s_4, r.bmo, r.bmo_half, r.l_22, r.l_42,
                   r.l_24})
    row += "," + format_double(v);
  return row;
}

namespace {

// bmo of g restricted by an in-slice predicate, maximized over all nodes.
template <typename InSlice>
double restricted_bmo(const AdaptedProcess& g, InSlice in_slice, bool half) {
  const double dt = g.model.dt;
  const double v = max_conditional_tail(g, [&](int k, std::size_t u) {
    if (!in_slice(k, u)) return 0.0;
    const double a = g.node_abs(k, u);
    return half ? a * dt : a * a * dt;
  });
  return half ? v : std::sqrt(v);
}

}  // namespace

double bmo_norm_slice(const AdaptedProcess& g, const RandomPartition& part,
                      int j) {
  return restricted_bmo(
      g, [&](int k, std::size_t u) { return part.in_slice(j, k, u); }, false);
}

double bmo_half_norm_slice(const AdaptedProcess& g, const RandomPartition& part,
                           int j) {
  return restricted_bmo(
      g, [&](int k, std::size_t u) { return part.in_slice(j, k, u); }, true);
}

double bmo_window(const AdaptedProcess& g, int a, int b) {
  return restricted_bmo(
      g, [&](int k, std::size_t) { return k >= a && k < b; }, false);
}

double bmo_half_window(const AdaptedProcess& g, int a, int b) {
  return restricted_bmo(
      g, [&](int k, std::size_t) { return k >= a && k < b; }, true);
}

namespace {

std::pair<int, RandomPartition> slice_levels(const AdaptedProcess& g,
                                             double delta) {
  const TreeModel& model = g.model;
  const int N = model.depth;
  std::vector<int> cuts{0};
  int a = 0;
  while (a < N) {
    int b = a + 1;
    if (bmo_window(g, a, b) > delta)
      raise(errc::unsliceable,
            "a single step at level " + std::to_string(a) +
                " already exceeds delta = " + format_double(delta));
    while (b < N && bmo_window(g, a, b + 1) <= delta) ++b;
    cuts.push_back(b);
    a = b;
  }
  RandomPartition part;
  for (int c : cuts) part.times.push_back(StoppingTime::at_level(model, c));
  return {static_cast<int>(cuts.size()) - 1, part};
}

std::pair<int, RandomPartition> slice_nodes(const AdaptedProcess& g,
                                            double delta) {
  const TreeModel& model = g.model;
  const int N = model.depth;
  const double d2 = delta * delta;
  RandomPartition part;
  part.times.push_back(StoppingTime::at_level(model, 0));

  auto is_terminal_time = [&](const StoppingTime& t) {
    for (int k = 0; k < N; ++k)
      for (auto f : t.fired[k])
        if (f) return false;
    return true;
  };

  while (!is_terminal_time(part.times.back())) {
    if (part.slice_count() > N)
      raise(errc::unsliceable, "slice construction failed to advance");
    const StoppingTime& prev = part.times.back();
    StoppingTime cur;
    cur.model = model;
    cur.fired.resize(N + 1);
    // cum[u]: pathwise sum of |g|^2 dt accumulated strictly before u within
    // the current slice; meaningful only where prev fired and cur has not.
    std::vector<double> cum{0.0}, cum_next;
    for (int k = 0; k <= N; ++k) {
      cur.fired[k].assign(model.nodes_at(k), 0);
      cum_next.assign(model.nodes_at(k) * (k < N ? model.branching : 0), 0.0);
      for (std::size_t u = 0; u < model.nodes_at(k); ++u) {
        const bool parent_fired =
            k > 0 && cur.fired[k - 1][u / model.branching];
        if (parent_fired) {
          cur.fired[k][u] = 1;  // heredity
        } else if (prev.fired[k][u]) {
          if (k == N) {
            cur.fired[k][u] = 1;  // paths stop at the horizon
          } else {
            const double a = g.node_abs(k, u);
            const double step = a * a * model.dt;
            if (cum[u] + step > d2) {
              if (cum[u] == 0.0)
                raise(errc::unsliceable,
                      "|g| sqrt(dt) exceeds delta at level " +
                          std::to_string(k));
              cur.fired[k][u] = 1;  // stop before taking this step
            } else {
              for (int j = 0; j < model.branching; ++j)
                cum_next[u * model.branching + j] = cum[u] + step;
            }
          }
        }
        if (cur.fired[k][u] && k < N)
          for (int j = 0; j < model.branching; ++j)
            cum_next[u * model.branching + j] = 0.0;
      }
      cum.swap(cum_next);
    }
    part.times.push_back(std::move(cur));
  }
  return {part.slice_count(), part};
}

}  // namespace

std::pair<int, RandomPartition> slice_index(const AdaptedProcess& g,
                                            double delta, SliceMode mode) {
  if (!(delta > 0)) raise(errc::shape_mismatch, "delta must be positive");
  return mode == SliceMode::deterministic ? slice_levels(g, delta)
                                          : slice_nodes(g, delta);
}

}  // namespace bsdelab
