#ifndef OTMS_OT_HPP_
#define OTMS_OT_HPP_

#include <string>
#include <string_view>
#include <utility>

#include "otms/core.hpp"
#include "otms/ot/cost.hpp"
#include "otms/ot/exact.hpp"
#include "otms/ot/ipot.hpp"
#include "otms/ot/plan.hpp"

namespace otms {

enum class Solver { Exact, Ipot };

inline std::string_view to_string(Solver s) { return s == Solver::Exact ? "exact" : "ipot"; }

inline Solver parse_solver(std::string_view name) {
  if (name == "exact") return Solver::Exact;
  if (name == "ipot") return Solver::Ipot;
  throw Error(ErrorCode::Parse, "unknown solver '" + std::string(name) + "'");
}

inline TransportPlan solve_block(const Matrix& block, const Marginal& u, const Marginal& v,
                                 Solver solver, const IpotParams& params = {}) {
  return solver == Solver::Exact ? solve_exact_block(block, u, v)
                                 : solve_ipot_block(block, u, v, params);
}

// min over couplings of a(x_i) and a(z) of <C(x_i, z), P>, given explicit
// marginals. Only the support block of C is ever formed.
inline TransportPlan transport(const Grid& grid, const Vector& x_i, const Vector& z,
                               const Marginal& u, const Marginal& v, double lambda, double beta,
                               Solver solver, const IpotParams& params = {}) {
  require_same_size(x_i.size(), grid.size(), "x_i length must match the grid");
  require_same_size(z.size(), grid.size(), "z length must match the grid");
  check_cost_weights(lambda, beta);
  return solve_block(cost_block(grid, x_i, z, u.support(), v.support(), lambda, beta), u, v,
                     solver, params);
}

struct OtResult {
  double value = 0;
  TransportPlan plan;
};

// OT distance between the thresholded marginals of x_i and z.
inline OtResult ot_distance(const Signal& x_i, const Signal& z, double threshold_xi,
                            double threshold_z, double lambda, double beta, Solver solver,
                            const IpotParams& params = {}) {
  require(x_i.grid() == z.grid(), ErrorCode::DimensionMismatch, "OT inputs on different grids");
  const Marginal u = reflectivity_marginal(x_i, threshold_xi);
  const Marginal v = reflectivity_marginal(z, threshold_z);
  TransportPlan plan = transport(x_i.grid(), x_i.values(), z.values(), u, v, lambda, beta, solver, params);
  const double value = plan.value();
  return {value, std::move(plan)};
}

}  // namespace otms

#endif  // OTMS_OT_HPP_
