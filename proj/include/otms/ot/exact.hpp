#ifndef OTMS_OT_EXACT_HPP_
#define OTMS_OT_EXACT_HPP_

// Exact transport: a shortest-augmenting-path Hungarian method for square
// uniform problems and a successive-shortest-path min-cost flow for general
// (rectangular, non-uniform) transportation problems.

#include <limits>
#include <vector>

#include "otms/ot/cost.hpp"
#include "otms/ot/plan.hpp"

namespace otms {

// Minimum-cost perfect matching on a square cost matrix. Returns, for every
// row, the column it is assigned to.
inline std::vector<Index> solve_assignment(const Matrix& cost) {
  require(cost.rows() == cost.cols(), ErrorCode::DimensionMismatch, "assignment needs a square cost");
  const Index n = cost.rows();
  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials; column 0 is the virtual root.
  std::vector<double> u(std::size_t(n + 1), 0.0), v(std::size_t(n + 1), 0.0);
  std::vector<Index> match(std::size_t(n + 1), 0), way(std::size_t(n + 1), 0);
  for (Index i = 1; i <= n; ++i) {
    match[0] = i;
    Index j0 = 0;
    std::vector<double> minv(std::size_t(n + 1), inf);
    std::vector<char> used(std::size_t(n + 1), 0);
    do {
      used[std::size_t(j0)] = 1;
      const Index i0 = match[std::size_t(j0)];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= n; ++j) {
        if (used[std::size_t(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[std::size_t(i0)] - v[std::size_t(j)];
        if (cur < minv[std::size_t(j)]) {
          minv[std::size_t(j)] = cur;
          way[std::size_t(j)] = j0;
        }
        if (minv[std::size_t(j)] < delta) {
          delta = minv[std::size_t(j)];
          j1 = j;
        }
      }
      require(j1 != 0, ErrorCode::InfeasibleMarginals, "assignment cost contains non-finite entries");
      for (Index j = 0; j <= n; ++j) {
        if (used[std::size_t(j)]) {
          u[std::size_t(match[std::size_t(j)])] += delta;
          v[std::size_t(j)] -= delta;
        } else {
          minv[std::size_t(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[std::size_t(j0)] != 0);
    do {
      const Index j1 = way[std::size_t(j0)];
      match[std::size_t(j0)] = match[std::size_t(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<Index> row_to_col(static_cast<std::size_t>(n));
  for (Index j = 1; j <= n; ++j) row_to_col[std::size_t(match[std::size_t(j)] - 1)] = j - 1;
  return row_to_col;
}

// Min-cost transportation: minimize <C, X> subject to X 1 = supply,
// X^T 1 = demand, X >= 0. Amounts at or below `dust` count as zero; pass
// integer-valued supplies with dust = 0.5 for an exact integral flow.
inline Matrix solve_transportation(const Matrix& cost, const Vector& supply, const Vector& demand,
                                   double dust) {
  const Index a = cost.rows(), b = cost.cols();
  require(supply.size() == a && demand.size() == b, ErrorCode::DimensionMismatch,
          "transportation marginals do not match the cost");
  require(a > 0 && b > 0, ErrorCode::InfeasibleMarginals, "empty transportation problem");
  require(std::abs(supply.sum() - demand.sum()) <= 1e-9 * std::max(1.0, supply.sum()),
          ErrorCode::InfeasibleMarginals, "supply and demand totals differ");
  constexpr double inf = std::numeric_limits<double>::infinity();

  Matrix flow = Matrix::Zero(a, b);
  Vector left = supply, need = demand;
  // Reduced cost of row->col arc: C(i,j) + pr(i) - pc(j) >= 0.
  Vector pr = Vector::Zero(a), pc = Vector::Zero(b);
  const double shift = std::min(0.0, cost.minCoeff());

  std::vector<double> dr(static_cast<std::size_t>(a)), dc(static_cast<std::size_t>(b));
  std::vector<char> done_r(static_cast<std::size_t>(a)), done_c(static_cast<std::size_t>(b));
  std::vector<Index> parent_c(static_cast<std::size_t>(b)), parent_r(static_cast<std::size_t>(a));

  auto surplus_left = [&] {
    for (Index i = 0; i < a; ++i)
      if (left[i] > dust) return true;
    return false;
  };

  while (surplus_left()) {
    std::fill(dr.begin(), dr.end(), inf);
    std::fill(dc.begin(), dc.end(), inf);
    std::fill(done_r.begin(), done_r.end(), 0);
    std::fill(done_c.begin(), done_c.end(), 0);
    for (Index i = 0; i < a; ++i) {
      parent_r[std::size_t(i)] = -1;
      if (left[i] > dust) dr[std::size_t(i)] = 0;
    }
    Index sink = -1;
    double reach = inf;
    for (;;) {
      // Dense Dijkstra: the graph is complete bipartite.
      double best = inf;
      Index node = -1;
      bool is_row = true;
      for (Index i = 0; i < a; ++i)
        if (!done_r[std::size_t(i)] && dr[std::size_t(i)] < best) best = dr[std::size_t(i)], node = i, is_row = true;
      for (Index j = 0; j < b; ++j)
        if (!done_c[std::size_t(j)] && dc[std::size_t(j)] < best) best = dc[std::size_t(j)], node = j, is_row = false;
      if (node < 0) break;
      if (is_row) {
        done_r[std::size_t(node)] = 1;
        for (Index j = 0; j < b; ++j) {
          if (done_c[std::size_t(j)]) continue;
          const double rc = std::max(0.0, cost(node, j) - shift + pr[node] - pc[j]);
          if (best + rc < dc[std::size_t(j)]) {
            dc[std::size_t(j)] = best + rc;
            parent_c[std::size_t(j)] = node;
          }
        }
      } else {
        done_c[std::size_t(node)] = 1;
        if (need[node] > dust) {
          sink = node;
          reach = best;
          break;
        }
        for (Index i = 0; i < a; ++i) {
          if (done_r[std::size_t(i)] || flow(i, node) <= 0.0) continue;
          const double rc = std::max(0.0, -(cost(i, node) - shift) + pc[node] - pr[i]);
          if (best + rc < dr[std::size_t(i)]) {
            dr[std::size_t(i)] = best + rc;
            parent_r[std::size_t(i)] = node;
          }
        }
      }
    }
    if (sink < 0) {
      // Only rounding dust can be stranded once every column is full.
      require(left.sum() <= 1e-12 * std::max(1.0, supply.sum()), ErrorCode::InfeasibleMarginals,
              "no augmenting path for remaining supply");
      break;
    }
    for (Index i = 0; i < a; ++i) pr[i] += std::min(dr[std::size_t(i)], reach);
    for (Index j = 0; j < b; ++j) pc[j] += std::min(dc[std::size_t(j)], reach);

    // Bottleneck along sink <- row <- col <- ... <- source row.
    double push = need[sink];
    Index j = sink, source = -1;
    for (;;) {
      const Index i = parent_c[std::size_t(j)];
      const Index back = parent_r[std::size_t(i)];
      if (back < 0) {
        source = i;
        break;
      }
      push = std::min(push, flow(i, back));
      j = back;
    }
    push = std::min(push, left[source]);
    j = sink;
    for (;;) {
      const Index i = parent_c[std::size_t(j)];
      flow(i, j) += push;
      const Index back = parent_r[std::size_t(i)];
      if (back < 0) break;
      flow(i, back) -= push;
      if (flow(i, back) <= dust * 1e-6) flow(i, back) = 0.0;
      j = back;
    }
    left[source] -= push;
    need[sink] -= push;
  }
  return flow;
}

namespace detail {

inline Vector restrict(const Vector& w, const std::vector<Index>& idx) {
  Vector r(Index(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) r[Index(k)] = w[idx[k]];
  return r;
}

}  // namespace detail

// Exact optimal plan on the support-restricted block of the cost.
inline TransportPlan solve_exact_block(const Matrix& block, const Marginal& u, const Marginal& v) {
  const Index a = Index(u.support().size()), b = Index(v.support().size());
  require(block.rows() == a && block.cols() == b, ErrorCode::DimensionMismatch,
          "cost block does not match the marginal supports");
  require(block.allFinite(), ErrorCode::InvalidArgument, "cost block has non-finite entries");
  Matrix plan = Matrix::Zero(a, b);
  const bool uniform = u.is_uniform() && v.is_uniform();
  if (uniform && a == b) {
    const std::vector<Index> col = solve_assignment(block);
    for (Index i = 0; i < a; ++i) plan(i, col[std::size_t(i)]) = 1.0 / double(a);
  } else if (uniform) {
    // Scale to integers: each row ships b units, each column takes a units.
    const Matrix flow = solve_transportation(block, Vector::Constant(a, double(b)),
                                             Vector::Constant(b, double(a)), 0.5);
    plan = flow / (double(a) * double(b));
  } else {
    const Vector su = detail::restrict(u.weights(), u.support());
    const Vector sv = detail::restrict(v.weights(), v.support());
    plan = solve_transportation(block, su, sv, 1e-15);
  }
  const double value = (block.array() * plan.array()).sum();
  return TransportPlan(u, v, std::move(plan), value);
}

inline TransportPlan solve_exact(const CostMatrix& cost, const Marginal& u, const Marginal& v) {
  require_same_size(u.size(), cost.size(), "row marginal length must match the cost");
  require_same_size(v.size(), cost.size(), "column marginal length must match the cost");
  return solve_exact_block(cost.block(u.support(), v.support()), u, v);
}

}  // namespace otms

#endif  // OTMS_OT_EXACT_HPP_
