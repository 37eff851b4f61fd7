#ifndef OTMS_OT_IPOT_HPP_
#define OTMS_OT_IPOT_HPP_

// Inexact proximal point transport: each outer step solves an entropic
// subproblem anchored at the current plan (kernel exp(-C / prox) times the
// plan) with a few Sinkhorn scalings. The returned plan is rounded onto the
// coupling polytope so its marginals hold to machine precision.

#include <algorithm>
#include <vector>

#include "otms/ot/cost.hpp"
#include "otms/ot/plan.hpp"

namespace otms {

struct IpotParams {
  // Proximal step on costs divided by their median nonzero entry.
  double prox_weight = 0.1;
  int outer_iters = 2000;
  int inner_sinkhorn_iters = 1;
  double convergence_tol = 1e-10;

  void validate() const {
    require(prox_weight > 0 && outer_iters > 0 && inner_sinkhorn_iters > 0 && convergence_tol > 0,
            ErrorCode::InvalidArgument, "IPOT parameters must be positive");
  }
};

namespace detail {

inline constexpr int kPolishIters = 200;
inline constexpr double kNegligible = 1e-200;

inline double median_nonzero(const Matrix& m) {
  std::vector<double> nz;
  nz.reserve(std::size_t(m.size()));
  for (Index k = 0; k < m.size(); ++k)
    if (m.data()[k] != 0.0) nz.push_back(std::abs(m.data()[k]));
  if (nz.empty()) return 1.0;
  auto mid = nz.begin() + std::ptrdiff_t(nz.size() / 2);
  std::nth_element(nz.begin(), mid, nz.end());
  return *mid;
}

// Projects a positive matrix onto {P >= 0 : P 1 = r, P^T 1 = c}: shrink rows,
// shrink columns, then spread the remaining deficit as a rank-one correction.
inline Matrix round_to_marginals(Matrix p, const Vector& r, const Vector& c) {
  const Vector rows = p.rowwise().sum();
  for (Index i = 0; i < p.rows(); ++i)
    if (rows[i] > r[i]) p.row(i) *= r[i] / rows[i];
  const Vector cols = p.colwise().sum().transpose();
  for (Index j = 0; j < p.cols(); ++j)
    if (cols[j] > c[j]) p.col(j) *= c[j] / cols[j];
  const Vector er = (r - p.rowwise().sum()).cwiseMax(0.0);
  const Vector ec = (c - p.colwise().sum().transpose()).cwiseMax(0.0);
  const double mass = er.sum();
  if (mass > 0) p.noalias() += er * ec.transpose() / mass;
  return p;
}

}  // namespace detail

inline TransportPlan solve_ipot_block(const Matrix& block, const Marginal& u, const Marginal& v,
                                      const IpotParams& params = {}) {
  params.validate();
  const Index a = Index(u.support().size()), b = Index(v.support().size());
  require(block.rows() == a && block.cols() == b, ErrorCode::DimensionMismatch,
          "cost block does not match the marginal supports");
  require(block.allFinite(), ErrorCode::InvalidArgument, "cost block has non-finite entries");

  Vector mu(a), nu(b);
  for (Index i = 0; i < a; ++i) mu[i] = u.weights()[u.support()[std::size_t(i)]];
  for (Index j = 0; j < b; ++j) nu[j] = v.weights()[v.support()[std::size_t(j)]];

  const double scale = detail::median_nonzero(block);
  const Matrix cost = block / scale;
  const Matrix kernel = (-cost.array() / params.prox_weight).exp().matrix();
  auto underflow = [](const Matrix& q) {
    return (q.rowwise().sum().array() <= 0.0).any() || (q.colwise().sum().array() <= 0.0).any();
  };
  require(!underflow(kernel), ErrorCode::NumericalUnderflow,
          "transport kernel underflowed; prox_weight is too small for the cost scale");

  Matrix plan = mu * nu.transpose();
  Vector left(a), right = Vector::Ones(b);
  double previous = std::numeric_limits<double>::infinity();
  SolveStats stats;
  for (int t = 0; t < params.outer_iters; ++t) {
    plan = plan.cwiseProduct(kernel);
    for (int l = 0; l < params.inner_sinkhorn_iters; ++l) {
      left.noalias() = plan * right;
      left = mu.cwiseQuotient(left);
      right.noalias() = plan.transpose() * left;
      right = nu.cwiseQuotient(right);
    }
    if (!left.allFinite() || !right.allFinite())
      throw Error(ErrorCode::NumericalUnderflow, "transport plan underflowed during iteration");
    double objective = 0;
    for (Index j = 0; j < b; ++j) {
      auto col = plan.col(j);
      col = right[j] * left.cwiseProduct(col);
      // Entries this small carry no mass but turn subnormal and stall the loop.
      col = (col.array() < detail::kNegligible).select(0.0, col);
      objective += cost.col(j).dot(col);
    }
    ++stats.iterations;
    if (t > 0 && objective > previous + 1e-12 * std::abs(previous)) ++stats.monotonicity_violations;
    const bool converged = std::abs(previous - objective) < params.convergence_tol;
    previous = objective;
    if (converged) break;
  }
  // Rebalance the last plan (Sinkhorn on the plan itself) before rounding, so
  // the rank-one correction only has to absorb roundoff.
  const Vector ones_a = Vector::Ones(a), ones_b = Vector::Ones(b);
  Vector rows = plan * ones_b;
  for (int k = 0; k < detail::kPolishIters; ++k) {
    left = mu.cwiseQuotient(rows);
    for (Index j = 0; j < b; ++j) plan.col(j) = plan.col(j).cwiseProduct(left);
    const Vector cols = plan.transpose() * ones_a;
    for (Index j = 0; j < b; ++j) plan.col(j) *= nu[j] / cols[j];
    rows.noalias() = plan * ones_b;
    if ((rows - mu).cwiseAbs().maxCoeff() <= 1e-14) break;
  }
  plan = detail::round_to_marginals(std::move(plan), mu, nu);
  const double value = (block.array() * plan.array()).sum();
  return TransportPlan(u, v, std::move(plan), value, stats);
}

inline TransportPlan solve_ipot(const CostMatrix& cost, const Marginal& u, const Marginal& v,
                                const IpotParams& params = {}) {
  require_same_size(u.size(), cost.size(), "row marginal length must match the cost");
  require_same_size(v.size(), cost.size(), "column marginal length must match the cost");
  return solve_ipot_block(cost.block(u.support(), v.support()), u, v, params);
}

}  // namespace otms

#endif  // OTMS_OT_IPOT_HPP_
