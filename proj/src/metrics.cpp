#include "drnn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "drnn/errors.hpp"

namespace drnn {

OrthonormalBasis::OrthonormalBasis(Matrix b, double tol) : b_(std::move(b)) {
  if (b_.cols() < 1 || b_.cols() > b_.rows()) {
    throw ValidationError("basis must be p x d with 1 <= d <= p, got " +
                          std::to_string(b_.rows()) + "x" +
                          std::to_string(b_.cols()));
  }
  if (!b_.allFinite()) throw ValidationError("basis has non-finite entries");
  const double err = orthonormality_error();
  if (err > tol) {
    throw ValidationError("basis is not orthonormal: ||B^T B - I||_F = " +
                          std::to_string(err));
  }
}

OrthonormalBasis OrthonormalBasis::from_span(const Matrix& a) {
  return OrthonormalBasis(thin_qr(a).q, 1e-10);
}

double OrthonormalBasis::orthonormality_error() const {
  return (b_.transpose() * b_ - Matrix::Identity(d(), d())).norm();
}

Matrix projection(const OrthonormalBasis& b) {
  return b.matrix() * b.matrix().transpose();
}

double proj_distance(const OrthonormalBasis& b1, const OrthonormalBasis& b2) {
  if (b1.p() != b2.p()) {
    throw ValidationError("proj_distance: ambient dimensions differ (" +
                          std::to_string(b1.p()) + " vs " +
                          std::to_string(b2.p()) + ")");
  }
  // ||P1 - P2||_F^2 = d1 + d2 - 2 ||B1^T B2||_F^2, but the direct form is
  // exactly symmetric, which the triangle/symmetry checks rely on.
  return (projection(b1) - projection(b2)).norm();
}

SubspaceDistanceReport procrustes_distance(const OrthonormalBasis& b,
                                           const OrthonormalBasis& b0) {
  if (b.p() != b0.p() || b.d() != b0.d()) {
    throw ValidationError("procrustes_distance: basis shapes differ");
  }
  const SvdResult s = svd(b.matrix().transpose() * b0.matrix());
  SubspaceDistanceReport report;
  report.aligning_q = s.u * s.v.transpose();
  const Matrix residual = b0.matrix() - b.matrix() * report.aligning_q;
  report.procrustes_frobenius = residual.norm();
  report.procrustes_spectral = svd(residual).s(0);
  report.proj_frobenius = proj_distance(b, b0);
  return report;
}

double cosine_to_subspace(const Vector& v, const OrthonormalBasis& b) {
  if (v.size() != b.p()) {
    throw ValidationError("cosine_to_subspace: vector length differs from p");
  }
  const double norm = v.norm();
  if (!(norm > 0.0)) throw ValidationError("cosine_to_subspace: zero vector");
  const double c = (b.matrix().transpose() * v).norm() / norm;
  return std::clamp(c, 0.0, 1.0);
}

}  // namespace drnn
