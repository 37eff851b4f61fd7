#ifndef OTMS_RECOVERY_HPP_
#define OTMS_RECOVERY_HPP_

// Alternating recovery of a reference image from permuted multiview
// measurements. Per view i the objective is
//
//   f(x, x_i) = 1/2 ||y_i - A_i x_i||^2 + beta * OT(a(x_i), a(F_i x)),
//
// where OT uses the ground cost ||l[n] - l[m]||^2 + lambda/(2 beta) (x_i[n] - (F_i x)[m])^2
// and a(.) is the uniform distribution over the K_s largest entries. Gradients
// hold the optimal plan fixed (envelope theorem) and treat a(.) as locally
// constant.

#include <algorithm>
#include <optional>
#include <vector>

#include "otms/core.hpp"
#include "otms/ot.hpp"

namespace otms {

struct RecoveryConfig {
  double beta = 1.0;
  double lambda = 1.0;
  // Base step gamma_0. Unset: 1 / L with L the Lipschitz constant of the
  // fixed-plan surrogate of each subproblem.
  std::optional<double> step_size;
  double step_decay = 0.01;
  int inner_tmax = 10;
  int outer_tmax = 20;
  SupportSet support;
  // K_s; 0 means support.size().
  Index support_size_per_view = 0;
  Solver solver = Solver::Ipot;
  // Plans are re-solved at every step, so a shorter proximal run suffices
  // here than for a standalone solve.
  IpotParams ipot{0.1, 500, 1, 1e-10};
  bool project_support = true;

  Index support_size() const {
    return support_size_per_view > 0 ? support_size_per_view : support.size();
  }
  double step(int t, double lipschitz) const {
    if (!step_size && lipschitz <= 0) return 0.0;
    const double base = step_size ? *step_size : 1.0 / lipschitz;
    return base / (1.0 + step_decay * t);
  }
  void validate(Index n) const {
    require(beta >= 0 && std::isfinite(beta), ErrorCode::InvalidArgument, "beta must be >= 0");
    require(lambda >= 0 && std::isfinite(lambda), ErrorCode::InvalidArgument, "lambda must be >= 0");
    require(!step_size || *step_size >= 0, ErrorCode::InvalidArgument, "step size must be >= 0");
    require(step_decay >= 0, ErrorCode::InvalidArgument, "step decay must be >= 0");
    require(inner_tmax >= 1 && outer_tmax >= 1, ErrorCode::InvalidArgument, "iteration bounds must be >= 1");
    require(support.size() > 0, ErrorCode::EmptySupport, "recovery needs the known support");
    support.check_within(n);
    require(support_size() >= 1 && support_size() <= n, ErrorCode::InvalidArgument,
            "support size per view out of range");
    ipot.validate();
  }
};

struct RecoveryState {
  Signal prototype;
  std::vector<Signal> views;
  std::vector<TransportPlan> plans;
  // Sum over views of f(x^t, x_i^t) after each outer iteration.
  std::vector<double> objective_trace;
};

struct RecoveryResult {
  Signal estimate;
  RecoveryState state;
};

namespace detail {

// ||M||_2^2 by power iteration on M^T M, from a fixed start vector.
inline double spectral_norm_sq(const Matrix& m, int iters = 50) {
  if (m.size() == 0) return 0.0;
  Vector v = Vector::Ones(m.cols()).normalized();
  double est = 0;
  for (int k = 0; k < iters; ++k) {
    Vector w = m.transpose() * (m * v);
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    est = norm;
    v = w / norm;
  }
  return est;
}

inline double operator_norm_sq(const DeformationOp& f) {
  return f.is_permutation() ? 1.0 : spectral_norm_sq(f.matrix());
}

inline bool transport_active(const RecoveryConfig& cfg) { return cfg.beta > 0; }

inline TransportPlan solve_view_plan(const Grid& grid, const Vector& x_i, const Vector& z,
                                     const Marginal& u, const Marginal& v,
                                     const RecoveryConfig& cfg) {
  return transport(grid, x_i, z, u, v, cfg.lambda, cfg.beta, cfg.solver, cfg.ipot);
}

// a(F_i x) for the prototype side. With support projection on, every entry of
// F_i x outside F_i(support) is zero by construction, so the K_s largest are
// taken among the deformed support pixels only; otherwise a support pixel that
// went negative would be displaced by background zeros and never move again.
inline Marginal prototype_marginal(const Vector& z, const DeformationOp& f, const RecoveryConfig& cfg) {
  const Index k = cfg.support_size();
  if (!cfg.project_support) return support_marginal(z, k);
  Vector mask = Vector::Zero(z.size());
  for (Index n : cfg.support.indices()) mask[n] = 1.0;
  mask = f.apply(mask);
  std::vector<Index> cand;
  for (Index n = 0; n < z.size(); ++n)
    if (mask[n] > 0.5) cand.push_back(n);
  if (Index(cand.size()) < k) return support_marginal(z, k);
  Marginal plain = support_marginal(z, k);
  const auto& ps = plain.support();
  if (std::all_of(ps.begin(), ps.end(), [&](Index n) { return mask[n] > 0.5; })) return plain;
  std::stable_sort(cand.begin(), cand.end(), [&](Index a, Index b) { return z[a] > z[b]; });
  cand.resize(std::size_t(k));
  std::sort(cand.begin(), cand.end());
  return Marginal::uniform(z.size(), cand);
}

inline double data_term(const Vector& x_i, const ViewData& view) {
  return 0.5 * (view.y - view.A.matrix() * x_i).squaredNorm();
}

}  // namespace detail

// f(x, x_i) for one view; the transport term is solved fresh.
inline double objective(const Signal& x, const Signal& x_i, const ViewData& view,
                        const RecoveryConfig& cfg) {
  require(x.grid() == x_i.grid(), ErrorCode::DimensionMismatch, "objective inputs on different grids");
  require_same_size(x.size(), view.signal_size(), "signal length must match the view");
  const double data = detail::data_term(x_i.values(), view);
  if (!detail::transport_active(cfg)) return data;
  const Index k = cfg.support_size();
  const Vector z = view.F.apply(x.values());
  const Marginal u = support_marginal(x_i.values(), k);
  const Marginal v = detail::prototype_marginal(z, view.F, cfg);
  const TransportPlan plan = detail::solve_view_plan(x.grid(), x_i.values(), z, u, v, cfg);
  return data + cfg.beta * plan.value();
}

// lambda F_i^T (a(F_i x) . F_i x - P^T x_i); a(F_i x) is the plan's column marginal.
inline Vector grad_x(const Signal& x, const Signal& x_i, const ViewData& view,
                     const TransportPlan& plan, const RecoveryConfig& cfg) {
  require_same_size(x.size(), view.signal_size(), "signal length must match the view");
  require_same_size(x_i.size(), view.signal_size(), "view estimate length must match the view");
  if (!detail::transport_active(cfg) || cfg.lambda == 0.0) return Vector::Zero(x.size());
  require_same_size(plan.rows(), x.size(), "plan size must match the signal");
  const Vector z = view.F.apply(x.values());
  const Vector inner = plan.col_marginal().weights().cwiseProduct(z) - plan.apply_transpose(x_i.values());
  return cfg.lambda * view.F.apply_transpose(inner);
}

// A_i^T (A_i x_i - y_i) + lambda (a(x_i) . x_i - P F_i x); a(x_i) is the plan's row marginal.
inline Vector grad_xi(const Signal& x, const Signal& x_i, const ViewData& view,
                      const TransportPlan& plan, const RecoveryConfig& cfg) {
  require_same_size(x.size(), view.signal_size(), "signal length must match the view");
  require_same_size(x_i.size(), view.signal_size(), "view estimate length must match the view");
  const Matrix& a = view.A.matrix();
  Vector g = a.transpose() * (a * x_i.values() - view.y);
  if (!detail::transport_active(cfg) || cfg.lambda == 0.0) return g;
  require_same_size(plan.rows(), x.size(), "plan size must match the signal");
  const Vector z = view.F.apply(x.values());
  g += cfg.lambda * (plan.row_marginal().weights().cwiseProduct(x_i.values()) - plan.apply(z));
  return g;
}

struct ViewEstimate {
  Signal estimate;
  std::optional<TransportPlan> plan;
  // f(x, x_i^t) before each step.
  std::vector<double> objective_trace;
};

// Single-view estimate with the prototype held fixed. `data_lipschitz` is
// ||A_i||_2^2 when the caller already knows it.
inline ViewEstimate estimate_view(const ViewData& view, const Signal& x, const Signal& x_i_init,
                                  const RecoveryConfig& cfg,
                                  std::optional<double> data_lipschitz = std::nullopt) {
  const Grid& grid = x.grid();
  require(grid == x_i_init.grid(), ErrorCode::DimensionMismatch, "view estimate on a different grid");
  require_same_size(x.size(), view.signal_size(), "signal length must match the view");
  cfg.validate(x.size());
  const Index k = cfg.support_size();
  const bool active = detail::transport_active(cfg);
  const double data_l =
      data_lipschitz ? *data_lipschitz : detail::spectral_norm_sq(view.A.matrix());
  const double lipschitz = data_l + (active ? cfg.lambda / double(k) : 0.0);

  const Vector z = view.F.apply(x.values());
  std::optional<Marginal> v;
  if (active) v = detail::prototype_marginal(z, view.F, cfg);

  ViewEstimate out{x_i_init, std::nullopt, {}};
  Vector& xi = out.estimate.values();
  for (int t = 1; t <= cfg.inner_tmax; ++t) {
    double obj = detail::data_term(xi, view);
    if (active) {
      const Marginal u = support_marginal(xi, k);
      out.plan = detail::solve_view_plan(grid, xi, z, u, *v, cfg);
      obj += cfg.beta * out.plan->value();
    }
    out.objective_trace.push_back(obj);
    const double gamma = cfg.step(t, lipschitz);
    if (gamma == 0.0) continue;
    const Vector g = active ? grad_xi(x, out.estimate, view, *out.plan, cfg)
                            : Vector(view.A.matrix().transpose() * (view.A.matrix() * xi - view.y));
    xi -= gamma * g;
    require_finite(xi, "view estimate became non-finite");
  }
  return out;
}

struct PrototypeEstimate {
  Signal estimate;
  std::vector<TransportPlan> plans;
  // Sum over views of the transport part beta * <C, P> before each step.
  std::vector<double> objective_trace;
};

// Prototype estimate with the per-view estimates held fixed.
inline PrototypeEstimate estimate_prototype(const std::vector<Signal>& views_x,
                                            const std::vector<DeformationOp>& deformations,
                                            const Signal& x_init, const RecoveryConfig& cfg) {
  require(!views_x.empty(), ErrorCode::InvalidArgument, "at least one view is required");
  require(views_x.size() == deformations.size(), ErrorCode::DimensionMismatch,
          "one deformation per view estimate");
  const Grid& grid = x_init.grid();
  cfg.validate(x_init.size());
  for (const auto& xi : views_x)
    require(xi.grid() == grid, ErrorCode::DimensionMismatch, "view estimate on a different grid");

  PrototypeEstimate out{x_init, {}, {}};
  if (cfg.project_support) cfg.support.project(out.estimate.values());
  if (!detail::transport_active(cfg)) return out;

  const Index k = cfg.support_size();
  std::vector<Marginal> u;
  double lipschitz = 0;
  for (std::size_t i = 0; i < views_x.size(); ++i) {
    u.push_back(support_marginal(views_x[i].values(), k));
    lipschitz += cfg.lambda / double(k) * detail::operator_norm_sq(deformations[i]);
  }

  Vector& x = out.estimate.values();
  for (int t = 1; t <= cfg.inner_tmax; ++t) {
    Vector grad = Vector::Zero(x.size());
    double obj = 0;
    out.plans.clear();
    for (std::size_t i = 0; i < views_x.size(); ++i) {
      const Vector z = deformations[i].apply(x);
      const Marginal v = detail::prototype_marginal(z, deformations[i], cfg);
      TransportPlan plan = detail::solve_view_plan(grid, views_x[i].values(), z, u[i], v, cfg);
      obj += cfg.beta * plan.value();
      const Vector inner = v.weights().cwiseProduct(z) - plan.apply_transpose(views_x[i].values());
      grad += cfg.lambda * deformations[i].apply_transpose(inner);
      out.plans.push_back(std::move(plan));
    }
    out.objective_trace.push_back(obj);
    const double gamma = cfg.step(t, lipschitz);
    if (gamma == 0.0) continue;
    x -= gamma * grad;
    if (cfg.project_support) cfg.support.project(x);
    require_finite(x, "prototype became non-finite");
  }
  return out;
}

// x^0 = F_1^T A_1^T y_1, projected onto the known support when enabled.
inline Signal initial_prototype(const std::vector<ViewData>& views, const Grid& grid,
                                const RecoveryConfig& cfg) {
  require(!views.empty(), ErrorCode::InvalidArgument, "at least one view is required");
  const ViewData& v = views.front();
  Signal x(grid, v.F.apply_transpose(v.A.matrix().transpose() * v.y));
  if (cfg.project_support) cfg.support.project(x.values());
  return x;
}

inline double total_objective(const Signal& x, const std::vector<Signal>& views_x,
                              const std::vector<ViewData>& views, const RecoveryConfig& cfg) {
  double total = 0;
  for (std::size_t i = 0; i < views.size(); ++i) total += objective(x, views_x[i], views[i], cfg);
  return total;
}

// Full alternation: per-view estimates (warm-started), then the prototype.
inline RecoveryResult recover(const std::vector<ViewData>& views, const RecoveryConfig& cfg,
                              const Signal& x_init) {
  require(!views.empty(), ErrorCode::InvalidArgument, "at least one view is required");
  const Grid& grid = x_init.grid();
  for (const auto& v : views) require_same_size(v.signal_size(), grid.size(), "view does not match the grid");
  cfg.validate(grid.size());

  std::vector<double> data_l;
  std::vector<DeformationOp> deformations;
  RecoveryState state;
  for (const auto& v : views) {
    data_l.push_back(detail::spectral_norm_sq(v.A.matrix()));
    deformations.push_back(v.F);
    state.views.emplace_back(grid, v.A.matrix().transpose() * v.y);
  }
  state.prototype = x_init;
  require_finite(state.prototype.values(), "initial prototype is non-finite");

  for (int t = 1; t <= cfg.outer_tmax; ++t) {
    for (std::size_t i = 0; i < views.size(); ++i)
      state.views[i] = estimate_view(views[i], state.prototype, state.views[i], cfg, data_l[i]).estimate;
    PrototypeEstimate proto = estimate_prototype(state.views, deformations, state.prototype, cfg);
    state.prototype = std::move(proto.estimate);
    state.plans = std::move(proto.plans);
    state.objective_trace.push_back(total_objective(state.prototype, state.views, views, cfg));
  }
  return {state.prototype, std::move(state)};
}

inline RecoveryResult recover(const std::vector<ViewData>& views, const RecoveryConfig& cfg,
                              const Grid& grid) {
  return recover(views, cfg, initial_prototype(views, grid, cfg));
}

}  // namespace otms

#endif  // OTMS_RECOVERY_HPP_
