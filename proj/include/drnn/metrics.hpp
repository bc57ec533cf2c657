#pragma once

#include "drnn/numerics.hpp"

namespace drnn {

// p x d matrix with orthonormal columns (B^T B = I_d).
class OrthonormalBasis {
 public:
  OrthonormalBasis() = default;
  // Validates B^T B = I within `tol`; throws ValidationError otherwise.
  explicit OrthonormalBasis(Matrix b, double tol = 1e-8);

  // Orthonormalizes the columns of `a` with thin_qr.
  static OrthonormalBasis from_span(const Matrix& a);

  const Matrix& matrix() const noexcept { return b_; }
  Eigen::Index p() const noexcept { return b_.rows(); }
  Eigen::Index d() const noexcept { return b_.cols(); }

  double orthonormality_error() const;

 private:
  Matrix b_;
};

struct SubspaceDistanceReport {
  double proj_frobenius = 0.0;
  double procrustes_frobenius = 0.0;
  double procrustes_spectral = 0.0;
  Matrix aligning_q;
};

// pi_B = B B^T.
Matrix projection(const OrthonormalBasis& b);

// ||pi_B1 - pi_B2||_F; the bases may differ in d but not in p.
double proj_distance(const OrthonormalBasis& b1, const OrthonormalBasis& b2);

// min over orthogonal Q of ||B0 - B Q||, with Q the Frobenius minimizer
// U V^T from svd(B^T B0). Residual reported in Frobenius and spectral norm.
SubspaceDistanceReport procrustes_distance(const OrthonormalBasis& b,
                                           const OrthonormalBasis& b0);

// |cos| between v and its projection onto span(B): ||B B^T v|| / ||v||.
double cosine_to_subspace(const Vector& v, const OrthonormalBasis& b);

}  // namespace drnn
