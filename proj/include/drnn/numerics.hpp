#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <variant>

#include <Eigen/Dense>

namespace drnn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Seeded draw sequence. (seed, stream_id) fully determines the sequence, and
// distinct stream ids give independent streams. Not thread-safe: one stream
// per task.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  double normal();
  double uniform(double a, double b);
  std::uint64_t next_u64() { return engine_(); }
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  // A fresh stream whose seed is mixed with `tag`; used to give each method
  // in a replicate its own stream without sharing state.
  RngStream derive(std::string_view tag) const;

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

namespace dist {
struct StandardNormal {};
struct Uniform {
  double a = 0.0;
  double b = 1.0;
};
struct StudentT {
  int dof = 5;
};
struct ChiSquare {
  int dof = 1;
};
}  // namespace dist

using Distribution =
    std::variant<dist::StandardNormal, dist::Uniform, dist::StudentT,
                 dist::ChiSquare>;

// n i.i.d. scalar draws. Chi-square draws are raw (not centered).
Vector sample(RngStream& stream, const Distribution& distribution,
              Eigen::Index n);

// n draws from N(mean, covariance), one per row. Throws ValidationError when
// the covariance is not symmetric positive semidefinite.
Matrix sample_mvn(RngStream& stream, const Vector& mean,
                  const Matrix& covariance, Eigen::Index n);

struct QrResult {
  Matrix q;  // p x d, orthonormal columns
  Matrix r;  // d x d, upper triangular, positive diagonal
};

// Thin QR with R's diagonal forced positive. Throws RankDeficiencyError
// naming the first deficient column.
QrResult thin_qr(const Matrix& a);

struct SvdResult {
  Matrix u;
  Vector s;  // descending, nonnegative
  Matrix v;
};

SvdResult svd(const Matrix& a);

enum class EigenOrder { kValueDescending, kMagnitudeDescending };

struct EigResult {
  Vector values;
  Matrix vectors;  // columns are eigenvectors matching `values`
};

EigResult sym_eig(const Matrix& a,
                  EigenOrder order = EigenOrder::kValueDescending);

// Symmetric inverse square root with eigenvalues floored at `floor`.
Matrix inverse_sqrt_psd(const Matrix& a, double floor = 1e-10);

// Column means and sample covariance (n-1 denominator).
Vector column_means(const Matrix& x);
Matrix sample_covariance(const Matrix& x);

bool all_finite(const Matrix& a);

}  // namespace drnn
