#include "bsdelab/process.hpp"

#include <cmath>

namespace bsdelab {

AdaptedProcess AdaptedProcess::make(const TreeModel& model, Shape shape,
                                    bool vec_entries, bool includes_terminal,
                                    int n, double fill) {
  AdaptedProcess p;
  p.model = model;
  p.shape = shape;
  p.vec_entries = vec_entries;
  p.includes_terminal = includes_terminal;
  p.n = n;
  const int top = p.top_level();
  p.values.resize(top + 1);
  for (int k = 0; k <= top; ++k)
    p.values[k].assign(model.nodes_at(k) * p.stride(), fill);
  return p;
}

double AdaptedProcess::node_abs(int level, std::size_t node) const {
  const double* v = node_ptr(level, node);
  double s = 0;
  for (int c = 0; c < stride(); ++c) s += v[c] * v[c];
  return std::sqrt(s);
}

StoppingTime StoppingTime::at_level(const TreeModel& model, int level) {
  StoppingTime t;
  t.model = model;
  t.fired.resize(model.depth + 1);
  for (int k = 0; k <= model.depth; ++k)
    t.fired[k].assign(model.nodes_at(k), k >= level ? 1 : 0);
  return t;
}

bool StoppingTime::valid() const {
  if (fired.size() != static_cast<std::size_t>(model.depth) + 1)
    return false;
  for (int k = 0; k <= model.depth; ++k)
    if (fired[k].size() != model.nodes_at(k)) return false;
  // Heredity: a fired node's children are fired.
  for (int k = 0; k < model.depth; ++k)
    for (std::size_t u = 0; u < fired[k].size(); ++u)
      if (fired[k][u])
        for (int j = 0; j < model.branching; ++j)
          if (!fired[k + 1][u * model.branching + j]) return false;
  // Every path stops by level N.
  for (std::size_t u = 0; u < fired[model.depth].size(); ++u)
    if (!fired[model.depth][u]) return false;
  return true;
}

}  // namespace bsdelab
