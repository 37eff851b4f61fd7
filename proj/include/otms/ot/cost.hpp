#ifndef OTMS_OT_COST_HPP_
#define OTMS_OT_COST_HPP_

#include <vector>

#include "otms/core.hpp"

namespace otms {

// Ground cost C(x_i, z)[n, m] = ||l[n] - l[m]||^2 + lambda / (2 beta) (x_i[n] - z[m])^2.
class CostMatrix {
 public:
  CostMatrix() = default;
  CostMatrix(Grid grid, Matrix entries, double lambda, double beta)
      : grid_(grid), entries_(std::move(entries)), lambda_(lambda), beta_(beta) {
    require(entries_.rows() == grid_.size() && entries_.cols() == grid_.size(),
            ErrorCode::DimensionMismatch, "cost matrix must be N x N");
  }

  const Grid& grid() const noexcept { return grid_; }
  const Matrix& entries() const noexcept { return entries_; }
  double lambda() const noexcept { return lambda_; }
  double beta() const noexcept { return beta_; }
  double operator()(Index n, Index m) const { return entries_(n, m); }
  Index size() const noexcept { return entries_.rows(); }

  Matrix block(const std::vector<Index>& rows, const std::vector<Index>& cols) const {
    Matrix b(Index(rows.size()), Index(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j)
      for (std::size_t i = 0; i < rows.size(); ++i) b(Index(i), Index(j)) = entries_(rows[i], cols[j]);
    return b;
  }

 private:
  Grid grid_;
  Matrix entries_;
  double lambda_ = 0;
  double beta_ = 1;
};

inline void check_cost_weights(double lambda, double beta) {
  require(lambda >= 0 && std::isfinite(lambda), ErrorCode::InvalidArgument, "lambda must be >= 0");
  require(beta > 0 && std::isfinite(beta), ErrorCode::InvalidArgument, "beta must be > 0");
}

// Cost restricted to rows x cols; the solvers only ever see this block.
inline Matrix cost_block(const Grid& grid, const Vector& x_i, const Vector& z,
                         const std::vector<Index>& rows, const std::vector<Index>& cols,
                         double lambda, double beta) {
  const double w = lambda / (2.0 * beta);
  Matrix b(Index(rows.size()), Index(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    const Index m = cols[j];
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const Index n = rows[i];
      const double d = x_i[n] - z[m];
      b(Index(i), Index(j)) = grid.squared_distance(n, m) + w * d * d;
    }
  }
  return b;
}

inline CostMatrix build_cost_matrix(const Signal& x_i, const Signal& z, double lambda, double beta) {
  require(x_i.grid() == z.grid(), ErrorCode::DimensionMismatch, "cost inputs on different grids");
  check_cost_weights(lambda, beta);
  const Index n = x_i.size();
  std::vector<Index> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), Index{0});
  return CostMatrix(x_i.grid(), cost_block(x_i.grid(), x_i.values(), z.values(), all, all, lambda, beta),
                    lambda, beta);
}

// Sum over n, m of ||l[n] - l[m]||^2 P[n, m].
inline double permutation_cost(const Matrix& p, const Grid& grid) {
  require(p.rows() == grid.size() && p.cols() == grid.size(), ErrorCode::DimensionMismatch,
          "plan dimensions must match the grid");
  double total = 0;
  for (Index m = 0; m < p.cols(); ++m)
    for (Index n = 0; n < p.rows(); ++n)
      if (p(n, m) != 0.0) total += grid.squared_distance(n, m) * p(n, m);
  return total;
}

inline double permutation_cost(const Permutation& p, const Grid& grid) {
  require_same_size(p.size(), grid.size(), "permutation size must match the grid");
  double total = 0;
  for (Index m = 0; m < p.size(); ++m) total += grid.squared_distance(m, p[m]);
  return total;
}

}  // namespace otms

#endif  // OTMS_OT_COST_HPP_
