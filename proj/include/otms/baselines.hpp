#ifndef OTMS_BASELINES_HPP_
#define OTMS_BASELINES_HPP_

// Comparison methods:
//  - gradient: alternating projected gradient on x and relaxed P_i in [0,1]^{NxN}
//    for sum_i 1/2||y_i - A_i P_i F_i x||^2 + beta R(P_i) + mu(||P_i 1 - 1||^2 + ||P_i^T 1 - 1||^2);
//  - ignore_p: least squares with every P_i taken as the identity.

#include <optional>
#include <vector>

#include "otms/core.hpp"
#include "otms/recovery.hpp"

namespace otms {

struct BaselineConfig {
  double beta = 1.0;
  // Row/column-sum penalty weight; unset means 10 * beta.
  std::optional<double> mu;
  std::optional<double> step_size;
  double step_decay = 0.01;
  int inner_tmax = 10;
  int outer_tmax = 20;
  bool box_projection = true;
  SupportSet support;
  bool project_support = true;
  // Start P_i at the identity (default) or at the uniform matrix 1/N.
  bool identity_start = true;

  double mu_value() const { return mu ? *mu : 10.0 * beta; }
  double step(int t, double lipschitz) const {
    if (!step_size && lipschitz <= 0) return 0.0;
    const double base = step_size ? *step_size : 1.0 / lipschitz;
    return base / (1.0 + step_decay * t);
  }
  void validate(Index n) const {
    require(beta >= 0 && mu_value() >= 0, ErrorCode::InvalidArgument, "beta and mu must be >= 0");
    require(!step_size || *step_size >= 0, ErrorCode::InvalidArgument, "step size must be >= 0");
    require(inner_tmax >= 1 && outer_tmax >= 1, ErrorCode::InvalidArgument, "iteration bounds must be >= 1");
    if (project_support) {
      require(support.size() > 0, ErrorCode::EmptySupport, "support projection needs the support");
      support.check_within(n);
    }
  }
};

struct BaselineResult {
  Signal estimate;
  int iterations = 0;
};

struct GradientBaselineResult {
  Signal estimate;
  std::vector<Matrix> plans;
  // Share of total P mass on the diagonal, averaged over views, after each
  // outer iteration.
  std::vector<double> diagonal_fraction;
  int iterations = 0;
};

namespace detail {

inline void check_views(const std::vector<ViewData>& views, Index n) {
  require(!views.empty(), ErrorCode::InvalidArgument, "at least one view is required");
  for (const auto& v : views) require_same_size(v.signal_size(), n, "view does not match the signal");
}

inline double diagonal_fraction(const std::vector<Matrix>& plans) {
  double acc = 0;
  for (const auto& p : plans) {
    const double total = p.sum();
    acc += total > 0 ? p.diagonal().sum() / total : 0.0;
  }
  return acc / double(plans.size());
}

}  // namespace detail

inline GradientBaselineResult baseline_gradient_detailed(const std::vector<ViewData>& views,
                                                         const BaselineConfig& cfg,
                                                         const Signal& x_init) {
  const Grid& grid = x_init.grid();
  const Index n = grid.size();
  detail::check_views(views, n);
  cfg.validate(n);
  const double mu = cfg.mu_value();
  const Matrix dist = grid.squared_distance_matrix();
  const Vector ones = Vector::Ones(n);

  GradientBaselineResult out{x_init, {}, {}, 0};
  Vector& x = out.estimate.values();
  if (cfg.project_support) cfg.support.project(x);
  for (std::size_t i = 0; i < views.size(); ++i)
    out.plans.push_back(cfg.identity_start ? Matrix(Matrix::Identity(n, n))
                                           : Matrix(Matrix::Constant(n, n, 1.0 / double(n))));
  std::vector<double> a_norm;
  for (const auto& v : views) a_norm.push_back(detail::spectral_norm_sq(v.A.matrix()));

  for (int t = 1; t <= cfg.outer_tmax; ++t) {
    // x-subproblem with the relaxed P_i fixed.
    std::vector<Matrix> ops;
    double lx = 0;
    for (std::size_t i = 0; i < views.size(); ++i) {
      Matrix b = views[i].A.matrix() * out.plans[i];
      if (views[i].F.is_permutation()) {
        const Permutation& f = views[i].F.permutation();
        Matrix bf(b.rows(), n);
        for (Index m = 0; m < n; ++m) bf.col(f[m]) = b.col(m);
        b = std::move(bf);
      } else {
        b = b * views[i].F.matrix();
      }
      lx += detail::spectral_norm_sq(b, 30);
      ops.push_back(std::move(b));
    }
    for (int s = 1; s <= cfg.inner_tmax; ++s) {
      Vector g = Vector::Zero(n);
      for (std::size_t i = 0; i < views.size(); ++i) g += ops[i].transpose() * (ops[i] * x - views[i].y);
      x -= cfg.step(s, lx) * g;
      if (cfg.project_support) cfg.support.project(x);
      require_finite(x, "gradient baseline: x became non-finite");
      ++out.iterations;
    }
    // P-subproblems with x fixed.
    for (std::size_t i = 0; i < views.size(); ++i) {
      const Vector fx = views[i].F.apply(x);
      const Matrix& a = views[i].A.matrix();
      const double lp = a_norm[i] * fx.squaredNorm() + 4.0 * mu * double(n);
      Matrix& p = out.plans[i];
      for (int s = 1; s <= cfg.inner_tmax; ++s) {
        const Vector back = a.transpose() * (a * (p * fx) - views[i].y);
        Matrix g = back * fx.transpose();
        if (cfg.beta > 0) g += cfg.beta * dist;
        if (mu > 0) {
          const Vector row_excess = p * ones - ones;
          const Vector col_excess = p.transpose() * ones - ones;
          g += 2.0 * mu * (row_excess * ones.transpose() + ones * col_excess.transpose());
        }
        p -= cfg.step(s, lp) * g;
        if (cfg.box_projection) p = p.cwiseMax(0.0).cwiseMin(1.0);
        require(p.allFinite(), ErrorCode::NonFiniteIterate, "gradient baseline: P became non-finite");
      }
    }
    out.diagonal_fraction.push_back(detail::diagonal_fraction(out.plans));
  }
  return out;
}

inline Signal baseline_gradient(const std::vector<ViewData>& views, const BaselineConfig& cfg,
                                const Signal& x_init) {
  return baseline_gradient_detailed(views, cfg, x_init).estimate;
}

// min_x sum_i 1/2 ||y_i - A_i F_i x||^2 over the support (when projected):
// QR when the stacked operator has full column rank, gradient descent otherwise.
inline BaselineResult baseline_ignore_p_detailed(const std::vector<ViewData>& views,
                                                 const BaselineConfig& cfg, const Signal& x_init) {
  const Grid& grid = x_init.grid();
  const Index n = grid.size();
  detail::check_views(views, n);
  cfg.validate(n);

  std::vector<Index> cols;
  if (cfg.project_support) {
    cols = cfg.support.indices();
  } else {
    cols.resize(std::size_t(n));
    std::iota(cols.begin(), cols.end(), Index{0});
  }
  Index rows = 0;
  for (const auto& v : views) rows += v.A.rows();
  Matrix b(rows, Index(cols.size()));
  Vector y(rows);
  Index offset = 0;
  for (const auto& v : views) {
    const Matrix& a = v.A.matrix();
    for (std::size_t k = 0; k < cols.size(); ++k) {
      // Column cols[k] of A F.
      Vector e = Vector::Zero(n);
      e[cols[k]] = 1.0;
      b.block(offset, Index(k), a.rows(), 1) = a * v.F.apply(e);
    }
    y.segment(offset, a.rows()) = v.y;
    offset += a.rows();
  }

  BaselineResult out{x_init, 0};
  Vector& x = out.estimate.values();
  Eigen::ColPivHouseholderQR<Matrix> qr(b);
  Vector sub;
  if (qr.rank() == b.cols()) {
    sub = qr.solve(y);
  } else {
    sub.resize(Index(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) sub[Index(k)] = x[cols[k]];
    const double l = detail::spectral_norm_sq(b);
    for (int t = 1; t <= cfg.outer_tmax * cfg.inner_tmax; ++t) {
      sub -= cfg.step(t, l) * (b.transpose() * (b * sub - y));
      ++out.iterations;
    }
  }
  require_finite(sub, "ignore-P baseline produced non-finite values");
  x.setZero();
  for (std::size_t k = 0; k < cols.size(); ++k) x[cols[k]] = sub[Index(k)];
  return out;
}

inline Signal baseline_ignore_p(const std::vector<ViewData>& views, const BaselineConfig& cfg,
                                const Signal& x_init) {
  return baseline_ignore_p_detailed(views, cfg, x_init).estimate;
}

}  // namespace otms

#endif  // OTMS_BASELINES_HPP_
