#ifndef OTMS_SELFTEST_HPP_
#define OTMS_SELFTEST_HPP_

// Oracle checks runnable outside the unit-test build: brute-force assignment
// against the exact solver, IPOT against the exact solver, finite-difference
// gradients, the identity-operator fixed point, and the displacement bound of
// generated permutations. Each check records every plan it produces in a
// PlanAudit so feasibility is verified across all of them.

#include <algorithm>
#include <chrono>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "otms/core.hpp"
#include "otms/ot.hpp"
#include "otms/recovery.hpp"
#include "otms/synthdata.hpp"

namespace otms {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0;
};

inline constexpr double kFeasibilityTol = 1e-8;

struct PlanAudit {
  std::size_t plans = 0;
  std::size_t infeasible = 0;
  double worst_marginal_error = 0;
  bool any_negative = false;

  void operator()(const TransportPlan& p) {
    ++plans;
    const double err = p.marginal_error();
    const bool neg = !p.nonnegative();
    worst_marginal_error = std::max(worst_marginal_error, err);
    any_negative = any_negative || neg;
    if (neg || !(err <= kFeasibilityTol)) ++infeasible;
  }
};

namespace detail {

template <class F>
CheckResult timed(std::string name, F&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r;
  try {
    r = body();
  } catch (const std::exception& e) {
    r.pass = false;
    r.detail = std::string("threw: ") + e.what();
  }
  r.name = std::move(name);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline std::vector<Index> random_subset(Index n, Index k, Rng& rng) {
  std::vector<Index> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), Index{0});
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(static_cast<std::size_t>(k));
  std::sort(all.begin(), all.end());
  return all;
}

// min over permutations s of sum_r block(r, s[r]), by enumeration.
inline double brute_force_assignment(const Matrix& block) {
  std::vector<Index> s(static_cast<std::size_t>(block.rows()));
  std::iota(s.begin(), s.end(), Index{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0;
    for (Index r = 0; r < block.rows(); ++r) c += block(r, s[std::size_t(r)]);
    best = std::min(best, c);
  } while (std::next_permutation(s.begin(), s.end()));
  return best;
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

}  // namespace detail

// Uniform marginals over equal supports of size <= max_support on a 4x4
// grid: exact value times |support| equals the best of all |support|!
// assignments.
inline CheckResult check_exact_vs_brute_force(PlanAudit& audit, int instances = 100,
                                              Index max_support = 6, std::uint64_t seed = 1) {
  return detail::timed("exact OT matches brute-force assignment", [&] {
    const Grid g(4, 4);
    Rng rng(mix_seed({seed, 0xB0}));
    std::uniform_real_distribution<double> val(0.0, 2.0), weight(0.1, 3.0);
    std::uniform_int_distribution<Index> size(1, max_support);
    double worst = 0;
    for (int t = 0; t < instances; ++t) {
      const Index k = size(rng);
      Vector x(g.size()), z(g.size());
      for (Index n = 0; n < g.size(); ++n) {
        x[n] = val(rng);
        z[n] = val(rng);
      }
      const double lambda = weight(rng), beta = weight(rng);
      const Marginal u = Marginal::uniform(g.size(), detail::random_subset(g.size(), k, rng));
      const Marginal v = Marginal::uniform(g.size(), detail::random_subset(g.size(), k, rng));
      const TransportPlan plan = transport(g, x, z, u, v, lambda, beta, Solver::Exact);
      audit(plan);
      const double brute =
          detail::brute_force_assignment(cost_block(g, x, z, u.support(), v.support(), lambda, beta)) /
          double(k);
      worst = std::max(worst, std::abs(plan.value() - brute) / std::max(1.0, std::abs(brute)));
    }
    return CheckResult{"", worst <= 1e-9, "worst deviation " + detail::fmt(worst) + " (tol 1e-9)"};
  });
}

// 32x32 support-restricted costs from random signals on a 16x32 grid.
inline CheckResult check_ipot_vs_exact(PlanAudit& audit, int instances = 100, Index support = 32,
                                       const IpotParams& params = {}, std::uint64_t seed = 2) {
  return detail::timed("IPOT value within 1e-3 of exact", [&] {
    const Grid g(16, 32);
    Rng rng(mix_seed({seed, 0x1B}));
    std::uniform_real_distribution<double> val(0.0, 1.0), weight(0.2, 5.0);
    double worst = 0;
    for (int t = 0; t < instances; ++t) {
      Vector x(g.size()), z(g.size());
      for (Index n = 0; n < g.size(); ++n) {
        x[n] = val(rng);
        z[n] = val(rng);
      }
      const double lambda = weight(rng), beta = weight(rng);
      const Marginal u = Marginal::uniform(g.size(), detail::random_subset(g.size(), support, rng));
      const Marginal v = Marginal::uniform(g.size(), detail::random_subset(g.size(), support, rng));
      const Matrix block = cost_block(g, x, z, u.support(), v.support(), lambda, beta);
      const TransportPlan exact = solve_exact_block(block, u, v);
      const TransportPlan ipot = solve_ipot_block(block, u, v, params);
      audit(exact);
      audit(ipot);
      worst = std::max(worst, std::abs(ipot.value() - exact.value()) / std::max(exact.value(), 1e-12));
    }
    return CheckResult{"", worst <= 1e-3, "worst relative gap " + detail::fmt(worst) + " (tol 1e-3)"};
  });
}

namespace detail {

// Values with every pair, and in particular the K-th and (K+1)-th largest,
// at least `gap` apart, so +-h probes never reorder the top K.
inline Vector separated_values(Index n, double gap, Rng& rng) {
  std::uniform_real_distribution<double> jitter(0.0, 0.5);
  std::vector<double> levels(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k) levels[std::size_t(k)] = 0.1 + double(k) * (gap + 0.05) + jitter(rng) * 0.05;
  std::shuffle(levels.begin(), levels.end(), rng);
  Vector v(n);
  for (Index k = 0; k < n; ++k) v[k] = levels[std::size_t(k)];
  return v;
}

inline double relative_error(const Vector& a, const Vector& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-12);
}

}  // namespace detail

// Central differences of f(x, x_i) with the plan re-solved at every probe,
// against grad_x and grad_xi, on 4x4 problems.
inline CheckResult check_gradients(PlanAudit& audit, int instances = 20, double h = 1e-5,
                                   double tol = 1e-5, std::uint64_t seed = 3) {
  return detail::timed("envelope gradients match finite differences", [&] {
    const Grid g(4, 4);
    const Index n = g.size();
    Rng rng(mix_seed({seed, 0x9D}));
    std::uniform_real_distribution<double> weight(0.3, 3.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Index> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), Index{0});
    double worst = 0;
    for (int t = 0; t < instances; ++t) {
      RecoveryConfig cfg;
      cfg.lambda = weight(rng);
      cfg.beta = weight(rng);
      cfg.support = SupportSet(all);
      cfg.support_size_per_view = 5;
      cfg.solver = Solver::Exact;
      cfg.project_support = false;

      std::vector<Index> perm = all;
      std::shuffle(perm.begin(), perm.end(), rng);
      Matrix a(10, n);
      for (Index k = 0; k < a.size(); ++k) a.data()[k] = normal(rng) / std::sqrt(double(n));
      const Signal x(g, detail::separated_values(n, 1e-2, rng));
      const Signal xi(g, detail::separated_values(n, 1e-2, rng));
      Vector y(a.rows());
      for (Index k = 0; k < y.size(); ++k) y[k] = normal(rng);
      const ViewData view(y, LinearMeasurementOp(a), DeformationOp(Permutation(perm)));

      const Index k = cfg.support_size();
      const Vector z = view.F.apply(x.values());
      const TransportPlan plan =
          transport(g, xi.values(), z, support_marginal(xi.values(), k), support_marginal(z, k),
                    cfg.lambda, cfg.beta, cfg.solver);
      audit(plan);
      const Vector gx = grad_x(x, xi, view, plan, cfg);
      const Vector gxi = grad_xi(x, xi, view, plan, cfg);

      Vector fx(n), fxi(n);
      for (Index m = 0; m < n; ++m) {
        Signal xp = x, xm = x;
        xp.values()[m] += h;
        xm.values()[m] -= h;
        fx[m] = (objective(xp, xi, view, cfg) - objective(xm, xi, view, cfg)) / (2 * h);
        Signal ip = xi, im = xi;
        ip.values()[m] += h;
        im.values()[m] -= h;
        fxi[m] = (objective(x, ip, view, cfg) - objective(x, im, view, cfg)) / (2 * h);
      }
      worst = std::max({worst, detail::relative_error(gx, fx), detail::relative_error(gxi, fxi)});
    }
    return CheckResult{"", worst <= tol, "worst relative error " + detail::fmt(worst) + " (tol " +
                                             detail::fmt(tol) + ")"};
  });
}

// P_i = I, A_i = I, noiseless views of a letter scene: recover() must return
// x within NMSE 1e-6.
inline CheckResult check_identity_recovery(PlanAudit& audit, int views = 2, Solver solver = Solver::Ipot,
                                           std::uint64_t seed = 4) {
  return detail::timed("identity operators recover x exactly", [&] {
    SceneSpec spec;
    Rng rng(mix_seed({seed, 0x1D}));
    const Scene scene = make_scene(spec, rng);
    const Index n = spec.grid.size();
    std::vector<ViewData> vs;
    for (int i = 0; i < views; ++i) {
      const DeformationOp f = make_deformation(scene, PerturbSpec{}, rng);
      const Vector xi = f.apply(scene.signal.values());
      vs.emplace_back(xi, LinearMeasurementOp(Matrix::Identity(n, n)), f);
    }
    RecoveryConfig cfg;
    cfg.support = scene.support;
    cfg.solver = solver;
    cfg.outer_tmax = 20;
    const RecoveryResult r = recover(vs, cfg, spec.grid);
    for (const auto& p : r.state.plans) audit(p);
    const double err = nmse(r.estimate, scene.signal);
    return CheckResult{"", err <= 1e-6, "NMSE " + detail::fmt(err) + " (tol 1e-6)"};
  });
}

inline CheckResult check_displacement_bound(int per_radius = 1000, std::uint64_t seed = 5) {
  return detail::timed("local permutations respect the radius", [&] {
    SceneSpec spec;
    std::size_t violations = 0, total = 0;
    double worst_excess = 0;
    for (int r = 0; r <= 3; ++r) {
      for (int t = 0; t < per_radius; ++t) {
        Rng rng(mix_seed({seed, std::uint64_t(r), std::uint64_t(t)}));
        const Scene scene = make_scene(spec, rng);
        const Permutation p = make_local_permutation(spec.grid, scene.support, r, rng, 0.5);
        const double d = max_displacement(p, spec.grid);
        ++total;
        if (d > double(r)) {
          ++violations;
          worst_excess = std::max(worst_excess, d - double(r));
        }
      }
    }
    return CheckResult{"", violations == 0,
                       std::to_string(total) + " permutations, " + std::to_string(violations) +
                           " over radius"};
  });
}

inline CheckResult check_plan_feasibility(const PlanAudit& audit) {
  CheckResult r;
  r.name = "every plan is feasible";
  r.pass = audit.plans > 0 && audit.infeasible == 0;
  r.detail = std::to_string(audit.plans) + " plans, worst marginal error " +
             detail::fmt(audit.worst_marginal_error) + (audit.any_negative ? ", negative entries" : "");
  return r;
}

// The fast suites, in criterion order 1-5 plus the permutation bound.
inline std::vector<CheckResult> run_selftests() {
  PlanAudit audit;
  std::vector<CheckResult> out;
  out.push_back(check_exact_vs_brute_force(audit));
  out.push_back(check_ipot_vs_exact(audit));
  out.push_back(check_gradients(audit));
  out.push_back(check_identity_recovery(audit));
  out.push_back(check_displacement_bound());
  out.insert(out.begin() + 2, check_plan_feasibility(audit));
  return out;
}

}  // namespace otms

#endif  // OTMS_SELFTEST_HPP_
