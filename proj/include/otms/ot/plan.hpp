#ifndef OTMS_OT_PLAN_HPP_
#define OTMS_OT_PLAN_HPP_

#include <vector>

#include "otms/core.hpp"

namespace otms {

struct SolveStats {
  int iterations = 0;
  // Outer IPOT steps whose objective rose above the previous one.
  int monotonicity_violations = 0;
};

// Coupling between two marginals on an N-point grid. Only the
// supp(row) x supp(col) block is stored; everything else is exactly zero.
class TransportPlan {
 public:
  TransportPlan() = default;
  TransportPlan(Marginal row, Marginal col, Matrix block, double value, SolveStats stats = {})
      : row_(std::move(row)), col_(std::move(col)), block_(std::move(block)), value_(value),
        stats_(stats) {
    require(block_.rows() == Index(row_.support().size()) &&
                block_.cols() == Index(col_.support().size()),
            ErrorCode::DimensionMismatch, "plan block must match the marginal supports");
  }

  const Marginal& row_marginal() const noexcept { return row_; }
  const Marginal& col_marginal() const noexcept { return col_; }
  const Matrix& block() const noexcept { return block_; }
  double value() const noexcept { return value_; }
  const SolveStats& stats() const noexcept { return stats_; }
  Index rows() const noexcept { return row_.size(); }
  Index cols() const noexcept { return col_.size(); }

  Matrix dense() const {
    Matrix p = Matrix::Zero(rows(), cols());
    const auto& r = row_.support();
    const auto& c = col_.support();
    for (std::size_t j = 0; j < c.size(); ++j)
      for (std::size_t i = 0; i < r.size(); ++i) p(r[i], c[j]) = block_(Index(i), Index(j));
    return p;
  }

  // P z
  Vector apply(const Vector& z) const {
    require_same_size(z.size(), cols(), "plan applied to vector of wrong length");
    Vector zs(Index(col_.support().size()));
    for (std::size_t j = 0; j < col_.support().size(); ++j) zs[Index(j)] = z[col_.support()[j]];
    const Vector rs = block_ * zs;
    Vector out = Vector::Zero(rows());
    for (std::size_t i = 0; i < row_.support().size(); ++i) out[row_.support()[i]] = rs[Index(i)];
    return out;
  }

  // P^T x
  Vector apply_transpose(const Vector& x) const {
    require_same_size(x.size(), rows(), "plan applied to vector of wrong length");
    Vector xs(Index(row_.support().size()));
    for (std::size_t i = 0; i < row_.support().size(); ++i) xs[Index(i)] = x[row_.support()[i]];
    const Vector cs = block_.transpose() * xs;
    Vector out = Vector::Zero(cols());
    for (std::size_t j = 0; j < col_.support().size(); ++j) out[col_.support()[j]] = cs[Index(j)];
    return out;
  }

  Vector row_sums() const { return apply(Vector::Ones(cols())); }
  Vector col_sums() const { return apply_transpose(Vector::Ones(rows())); }

  // Largest deviation of the plan's marginals from the prescribed ones.
  double marginal_error() const {
    return std::max((row_sums() - row_.weights()).cwiseAbs().maxCoeff(),
                    (col_sums() - col_.weights()).cwiseAbs().maxCoeff());
  }
  bool nonnegative() const { return (block_.array() >= 0.0).all(); }
  bool feasible(double tol = 1e-8) const { return nonnegative() && marginal_error() <= tol; }

 private:
  Marginal row_;
  Marginal col_;
  Matrix block_;
  double value_ = 0;
  SolveStats stats_;
};

}  // namespace otms

#endif  // OTMS_OT_PLAN_HPP_
