#pragma once

#include <cmath>
#include <string>
#include <string_view>

#include "scones/error.hpp"
#include "scones/linalg.hpp"

namespace scones {

/// Ground costs. kMeanSquaredL2 divides the squared distance by the dimension.
enum class CostKind : std::uint8_t { kSquaredL2 = 0, kMeanSquaredL2 = 1, kZero = 2 };

inline std::string_view to_string(CostKind c) {
  switch (c) {
    case CostKind::kSquaredL2: return "sq-l2";
    case CostKind::kMeanSquaredL2: return "mean-sq-l2";
    case CostKind::kZero: return "zero";
  }
  return "?";
}

inline CostKind cost_kind_from_string(std::string_view s) {
  if (s == "sq-l2") return CostKind::kSquaredL2;
  if (s == "mean-sq-l2") return CostKind::kMeanSquaredL2;
  if (s == "zero") return CostKind::kZero;
  throw InvalidArgument("unknown cost '" + std::string(s) + "'");
}

inline double cost(CostKind kind, const Vector& x, const Vector& y) {
  switch (kind) {
    case CostKind::kSquaredL2: return (x - y).squaredNorm();
    case CostKind::kMeanSquaredL2: return (x - y).squaredNorm() / double(x.size());
    case CostKind::kZero: return 0.0;
  }
  return 0.0;
}

/// c(x_i, y_j) for rows of xs (n x d) and ys (m x d).
inline Matrix cost_matrix(CostKind kind, const Matrix& xs, const Matrix& ys) {
  if (kind == CostKind::kZero) return Matrix::Zero(xs.rows(), ys.rows());
  if (xs.cols() != ys.cols()) throw InvalidArgument("cost_matrix: dimension mismatch");
  Matrix c = -2.0 * xs * ys.transpose();
  c.colwise() += xs.rowwise().squaredNorm();
  c.rowwise() += ys.rowwise().squaredNorm().transpose();
  c = c.cwiseMax(0.0);
  if (kind == CostKind::kMeanSquaredL2) c /= double(xs.cols());
  return c;
}

/// Rows of grad_y c(x_k, y_k) for paired rows.
inline Matrix cost_grad_y(CostKind kind, const Matrix& xs, const Matrix& ys) {
  switch (kind) {
    case CostKind::kSquaredL2: return 2.0 * (ys - xs);
    case CostKind::kMeanSquaredL2: return (2.0 / double(xs.cols())) * (ys - xs);
    case CostKind::kZero: return Matrix::Zero(ys.rows(), ys.cols());
  }
  return ys;
}

/// Weighted point cloud; weights form a probability vector.
struct EmpiricalMeasure {
  Matrix atoms;  // (n x d)
  Vector weights;

  Eigen::Index size() const { return atoms.rows(); }
  Eigen::Index dim() const { return atoms.cols(); }

  void validate() const {
    if (atoms.rows() != weights.size()) throw InvalidArgument("EmpiricalMeasure: atoms/weights size mismatch");
    if (atoms.rows() == 0) throw InvalidArgument("EmpiricalMeasure: empty");
    if ((weights.array() < 0.0).any()) throw InvalidArgument("EmpiricalMeasure: negative weight");
    if (std::abs(weights.sum() - 1.0) > 1e-12) throw InvalidArgument("EmpiricalMeasure: weights do not sum to 1");
  }

  static EmpiricalMeasure uniform(Matrix atoms) {
    const Eigen::Index n = atoms.rows();
    return {std::move(atoms), Vector::Constant(n, 1.0 / double(n))};
  }
};

}  // namespace scones
