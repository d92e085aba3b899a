// Exact-tree model: construction guards, increment signs, Brownian values,
// and the bitwise tower property of pairwise-halving expectations.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <vector>

#include "bsdelab/tree.hpp"

using namespace bsdelab;

TEST_CASE("model parameters") {
  const TreeModel m = build_tree(4, 1.0, 2);
  CHECK(m.depth == 4);
  CHECK(m.dim == 2);
  CHECK(m.branching == 4);
  CHECK(m.dt == 0.25);
  CHECK(m.step == 0.5);
  CHECK(m.leaf_count() == 256);
  CHECK(m.nodes_at(3) == 64);
  CHECK(m.time_at(2) == 0.5);
}

TEST_CASE("dimension guard") {
  CHECK_THROWS_AS(build_tree(2, 1.0, 0), Error);
  CHECK_THROWS_AS(build_tree(2, 1.0, 3), Error);
  try {
    build_tree(2, 1.0, 3);
  } catch (const Error& e) {
    CHECK(e.code() == errc::invalid_dim);
    CHECK(std::string(e.name()) == "InvalidDim");
  }
  CHECK_THROWS_AS(build_tree(0, 1.0, 1), Error);
  CHECK_THROWS_AS(build_tree(2, 0.0, 1), Error);
  CHECK_THROWS_AS(build_tree(2, -1.0, 1), Error);
}

TEST_CASE("leaf budget") {
  CHECK(leaf_budget() == (std::size_t{1} << 26));
  CHECK_THROWS_AS(build_tree(27, 1.0, 1), Error);
  CHECK_THROWS_AS(build_tree(14, 1.0, 2), Error);
  CHECK_NOTHROW(build_tree(13, 1.0, 2));

  // The environment variable overrides the budget (counts leaves).
  setenv("BSDE_LAB_MAX_NODES", "16", 1);
  CHECK(leaf_budget() == 16);
  CHECK_THROWS_AS(build_tree(5, 1.0, 1), Error);
  try {
    build_tree(5, 1.0, 1);
  } catch (const Error& e) {
    CHECK(e.code() == errc::budget_exceeded);
  }
  CHECK_NOTHROW(build_tree(4, 1.0, 1));
  unsetenv("BSDE_LAB_MAX_NODES");
  CHECK(leaf_budget() == (std::size_t{1} << 26));
}

TEST_CASE("increment signs enumerate every pattern") {
  // d = 2, slots 0..3: bit 0 drives axis 0, bit 1 drives axis 1.
  CHECK(TreeModel::increment_sign(0, 0) == -1.0);
  CHECK(TreeModel::increment_sign(0, 1) == -1.0);
  CHECK(TreeModel::increment_sign(1, 0) == 1.0);
  CHECK(TreeModel::increment_sign(1, 1) == -1.0);
  CHECK(TreeModel::increment_sign(2, 0) == -1.0);
  CHECK(TreeModel::increment_sign(2, 1) == 1.0);
  CHECK(TreeModel::increment_sign(3, 0) == 1.0);
  CHECK(TreeModel::increment_sign(3, 1) == 1.0);
}

TEST_CASE("child/parent round trip") {
  const TreeModel m = build_tree(3, 1.0, 2);
  const NodeRef u{1, 2};
  for (int slot = 0; slot < m.branching; ++slot) {
    const NodeRef c = child_of(m, u, slot);
    CHECK(c.level == 2);
    CHECK(c.path_index == 2 * 4 + static_cast<std::size_t>(slot));
    const NodeRef back = parent_of(m, c);
    CHECK(back.level == u.level);
    CHECK(back.path_index == u.path_index);
  }
}

TEST_CASE("brownian component values, d = 1") {
  const TreeModel m = build_tree(2, 1.0, 1);
  const double h = m.step;
  const auto B = brownian_component(m, 0);
  REQUIRE(B.size() == 3);
  CHECK(B[0] == std::vector<double>{0.0});
  CHECK(B[1] == std::vector<double>{-h, h});
  // Interior paths 01 and 10 return to zero exactly.
  CHECK(B[2] == std::vector<double>{-2 * h, 0.0, 0.0, 2 * h});
}

TEST_CASE("brownian component values, d = 2 second axis") {
  const TreeModel m = build_tree(1, 1.0, 2);
  const double h = m.step;
  const auto B0 = brownian_component(m, 0);
  const auto B1 = brownian_component(m, 1);
  CHECK(B0[1] == std::vector<double>{-h, h, -h, h});
  CHECK(B1[1] == std::vector<double>{-h, -h, h, h});
}

TEST_CASE("backward means: tower property is bitwise") {
  const TreeModel m = build_tree(2, 1.0, 1);
  const auto means = backward_means(m, {1.0, 2.0, 3.0, 4.0}, 1);
  REQUIRE(means.size() == 3);
  CHECK(means[2] == std::vector<double>{1.0, 2.0, 3.0, 4.0});
  CHECK(means[1] == std::vector<double>{1.5, 3.5});
  CHECK(means[0] == std::vector<double>{2.5});
}

TEST_CASE("backward means interleave components") {
  const TreeModel m = build_tree(1, 1.0, 1);
  const auto means = backward_means(m, {1.0, 10.0, 3.0, 30.0}, 2);
  CHECK(means[0] == std::vector<double>{2.0, 20.0});
}

TEST_CASE("backward means: random leaves, all levels consistent") {
  const TreeModel m = build_tree(6, 2.0, 1);
  std::vector<double> xi(m.leaf_count());
  for (std::size_t i = 0; i < xi.size(); ++i)
    xi[i] = std::sin(0.7 * static_cast<double>(i) + 0.3);
  const auto means = backward_means(m, xi, 1);
  // Parent value must equal the exact half-sum of its children, bitwise.
  for (int k = 0; k < m.depth; ++k)
    for (std::size_t u = 0; u < m.nodes_at(k); ++u)
      CHECK(means[k][u] == 0.5 * (means[k + 1][2 * u] + means[k + 1][2 * u + 1]));
}

TEST_CASE("conditional expectation at a node matches backward means bitwise") {
  const TreeModel m = build_tree(5, 1.0, 2);
  std::vector<double> xi(m.leaf_count() * 2);
  for (std::size_t i = 0; i < xi.size(); ++i)
    xi[i] = std::cos(0.11 * static_cast<double>(i));
  const auto means = backward_means(m, xi, 2);
  for (int level : {0, 2, 4}) {
    const std::size_t node = m.nodes_at(level) / 3;
    const auto v = conditional_expectation(m, xi, 2, {level, node});
    CHECK(v[0] == means[level][node * 2]);
    CHECK(v[1] == means[level][node * 2 + 1]);
  }
}

TEST_CASE("conditional expectation validates the leaf payload") {
  const TreeModel m = build_tree(3, 1.0, 1);
  std::vector<double> bad(m.leaf_count() + 1, 0.0);
  CHECK_THROWS_AS(conditional_expectation(m, bad, 1, {0, 0}), Error);
}
