#include "bsdelab/tree.hpp"

#include <cmath>
#include <cstdlib>
#include <string>

namespace bsdelab {

std::size_t leaf_budget() {
  constexpr std::size_t kDefault = std::size_t{1} << 26;
  if (const char* env = std::getenv("BSDE_LAB_MAX_NODES")) {
    char* end = nullptr;
    unsigned long long v = std::strtoull(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return kDefault;
}

TreeModel build_tree(int N, double T, int d) {
  if (d != 1 && d != 2)
    raise(errc::invalid_dim, "Brownian dimension must be 1 or 2, got " +
                                 std::to_string(d));
  if (N < 1) raise(errc::shape_mismatch, "depth must be >= 1");
  if (!(T > 0)) raise(errc::shape_mismatch, "horizon must be positive");

  // branching^N leaves, guarded against overflow before comparing.
  const std::size_t budget = leaf_budget();
  std::size_t leaves = 1;
  for (int k = 0; k < N * d; ++k) {
    if (leaves > budget / 2)
      raise(errc::budget_exceeded,
            "2^" + std::to_string(N * d) + " leaves exceed the budget of " +
                std::to_string(budget));
    leaves <<= 1;
  }
  if (leaves > budget)
    raise(errc::budget_exceeded,
          std::to_string(leaves) + " leaves exceed the budget of " +
              std::to_string(budget));

  TreeModel m;
  m.depth = N;
  m.horizon = T;
  m.dim = d;
  m.dt = T / N;
  m.step = std::sqrt(m.dt);
  m.branching = 1 << d;
  return m;
}

std::vector<std::vector<double>> brownian_component(const TreeModel& model,
                                                    int axis) {
  // Each value is the exact product step * (ups - downs), not a running sum.
  // A running sum rounds once per level, so a path with equally many up- and
  // down-moves could land an ulp away from zero; terminal-sign conventions
  // ("B_T = 0 counts as positive") need that zero to be bitwise exact.
  std::vector<std::vector<double>> B(model.depth + 1);
  B[0] = {0.0};
  std::vector<int> ups{0}, ups_next;
  for (int k = 0; k < model.depth; ++k) {
    auto& nxt = B[k + 1];
    nxt.resize(ups.size() * model.branching);
    ups_next.resize(nxt.size());
    for (std::size_t u = 0; u < ups.size(); ++u)
      for (int j = 0; j < model.branching; ++j) {
        const int n_up = ups[u] + ((j >> axis) & 1);
        ups_next[u * model.branching + j] = n_up;
        nxt[u * model.branching + j] =
            model.step * static_cast<double>(2 * n_up - (k + 1));
      }
    ups.swap(ups_next);
  }
  return B;
}

namespace {

// Pairwise halving of 2^s adjacent blocks of `comps` doubles; exact in the
// sense that each /2 introduces no rounding, so repeated halving commutes
// with grouping (the bitwise tower property).
void halve_once(const std::vector<double>& in, std::vector<double>& out,
                int comps) {
  out.resize(in.size() / 2);
  const std::size_t pairs = out.size() / comps;
  for (std::size_t p = 0; p < pairs; ++p)
    for (int c = 0; c < comps; ++c)
      out[p * comps + c] =
          (in[(2 * p) * comps + c] + in[(2 * p + 1) * comps + c]) * 0.5;
}

}  // namespace

std::vector<std::vector<double>> backward_means(
    const TreeModel& model, const std::vector<double>& leaf_values, int comps) {
  if (leaf_values.size() != model.leaf_count() * static_cast<std::size_t>(comps))
    raise(errc::shape_mismatch, "leaf array does not hold " +
                                    std::to_string(comps) +
                                    " components per leaf");
  std::vector<std::vector<double>> levels(model.depth + 1);
  levels[model.depth] = leaf_values;
  for (int k = model.depth - 1; k >= 0; --k) {
    // One halving per Brownian axis keeps the reduction binary for d = 2.
    std::vector<double> cur = levels[k + 1];
    std::vector<double> nxt;
    for (int h = 0; h < model.dim; ++h) {
      halve_once(cur, nxt, comps);
      cur.swap(nxt);
    }
    levels[k] = std::move(cur);
  }
  return levels;
}

std::vector<double> conditional_expectation(const TreeModel& model,
                                            const std::vector<double>& leaf_values,
                                            int comps, NodeRef u) {
  if (leaf_values.size() != model.leaf_count() * static_cast<std::size_t>(comps))
    raise(errc::shape_mismatch, "leaf array does not hold " +
                                    std::to_string(comps) +
                                    " components per leaf");
  if (u.level < 0 || u.level > model.depth || u.path_index >= model.nodes_at(u.level))
    raise(errc::shape_mismatch, "node reference outside the tree");

  const std::size_t span = model.nodes_at(model.depth - u.level);
  std::vector<double> cur(leaf_values.begin() + u.path_index * span * comps,
                          leaf_values.begin() + (u.path_index + 1) * span * comps);
  std::vector<double> nxt;
  while (cur.size() > static_cast<std::size_t>(comps)) {
    halve_once(cur, nxt, comps);
    cur.swap(nxt);
  }
  return cur;
}

}  // namespace bsdelab
