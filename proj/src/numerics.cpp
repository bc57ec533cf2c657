#include "drnn/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "drnn/errors.hpp"

namespace drnn {
namespace {

std::seed_seq make_seed_seq(std::uint64_t seed, std::uint64_t stream_id) {
  return std::seed_seq{static_cast<std::uint32_t>(seed),
                       static_cast<std::uint32_t>(seed >> 32),
                       static_cast<std::uint32_t>(stream_id),
                       static_cast<std::uint32_t>(stream_id >> 32),
                       0x9e3779b9u};
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a; only needs to be stable, not strong.
std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double chi_square_draw(RngStream& stream, int dof) {
  double acc = 0.0;
  for (int k = 0; k < dof; ++k) {
    const double z = stream.normal();
    acc += z * z;
  }
  return acc;
}

struct Sampler {
  RngStream& stream;

  double operator()(const dist::StandardNormal&) const {
    return stream.normal();
  }
  double operator()(const dist::Uniform& u) const {
    return stream.uniform(u.a, u.b);
  }
  double operator()(const dist::StudentT& t) const {
    const double z = stream.normal();
    const double c = chi_square_draw(stream, t.dof);
    return z / std::sqrt(c / t.dof);
  }
  double operator()(const dist::ChiSquare& c) const {
    return chi_square_draw(stream, c.dof);
  }
};

void validate(const Distribution& distribution) {
  if (const auto* u = std::get_if<dist::Uniform>(&distribution)) {
    if (!(std::isfinite(u->a) && std::isfinite(u->b) && u->a < u->b)) {
      throw ValidationError("uniform(a, b) requires finite a < b");
    }
  } else if (const auto* t = std::get_if<dist::StudentT>(&distribution)) {
    if (t->dof <= 0) throw ValidationError("student-t requires dof > 0");
  } else if (const auto* c = std::get_if<dist::ChiSquare>(&distribution)) {
    if (c->dof <= 0) throw ValidationError("chi-square requires dof > 0");
  }
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {
  auto seq = make_seed_seq(seed, stream_id);
  engine_.seed(seq);
}

double RngStream::normal() { return normal_(engine_); }

double RngStream::uniform(double a, double b) {
  return std::uniform_real_distribution<double>(a, b)(engine_);
}

std::size_t RngStream::index(std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

RngStream RngStream::derive(std::string_view tag) const {
  return RngStream(splitmix64(seed_ ^ hash_tag(tag)), stream_id_);
}

Vector sample(RngStream& stream, const Distribution& distribution,
              Eigen::Index n) {
  validate(distribution);
  Vector out(n);
  const Sampler sampler{stream};
  for (Eigen::Index i = 0; i < n; ++i) out(i) = std::visit(sampler, distribution);
  return out;
}

Matrix sample_mvn(RngStream& stream, const Vector& mean,
                  const Matrix& covariance, Eigen::Index n) {
  const Eigen::Index p = mean.size();
  if (covariance.rows() != p || covariance.cols() != p) {
    throw ValidationError("covariance shape does not match mean");
  }
  const EigResult eig = sym_eig(covariance);
  const double scale = std::max(1.0, eig.values.cwiseAbs().maxCoeff());
  if (eig.values.minCoeff() < -1e-10 * scale) {
    throw ValidationError("covariance is not positive semidefinite");
  }
  const Matrix factor =
      eig.vectors * eig.values.cwiseMax(0.0).cwiseSqrt().asDiagonal();
  Matrix z(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) z(i, j) = stream.normal();
  }
  Matrix out = z * factor.transpose();
  out.rowwise() += mean.transpose();
  return out;
}

QrResult thin_qr(const Matrix& a) {
  const Eigen::Index p = a.rows();
  const Eigen::Index d = a.cols();
  if (d == 0 || p < d) {
    throw ValidationError("thin_qr requires p >= d >= 1, got " +
                          std::to_string(p) + "x" + std::to_string(d));
  }
  if (!all_finite(a)) throw ValidationError("thin_qr: non-finite input");

  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix r = qr.matrixQR().topRows(d).triangularView<Eigen::Upper>();
  Matrix q = qr.householderQ() * Matrix::Identity(p, d);

  const double scale = std::max(1.0, a.colwise().norm().maxCoeff());
  for (Eigen::Index j = 0; j < d; ++j) {
    if (std::abs(r(j, j)) <= 1e-12 * scale) {
      throw RankDeficiencyError(
          "thin_qr: input is rank deficient at column " + std::to_string(j),
          static_cast<std::size_t>(j));
    }
    if (r(j, j) < 0.0) {
      r.row(j) *= -1.0;
      q.col(j) *= -1.0;
    }
  }
  return {std::move(q), std::move(r)};
}

SvdResult svd(const Matrix& a) {
  if (!all_finite(a)) throw ValidationError("svd: non-finite input");
  Eigen::JacobiSVD<Matrix> solver(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return {solver.matrixU(), solver.singularValues(), solver.matrixV()};
}

EigResult sym_eig(const Matrix& a, EigenOrder order) {
  if (a.rows() != a.cols()) throw ValidationError("sym_eig: matrix not square");
  if (!all_finite(a)) throw ValidationError("sym_eig: non-finite input");
  const double asym = (a - a.transpose()).norm() / std::max(1.0, a.norm());
  if (asym >= 1e-10) {
    throw ValidationError("sym_eig: matrix is not symmetric (relative asymmetry " +
                          std::to_string(asym) + ")");
  }
  const Matrix sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("sym_eig: eigensolver failed to converge");
  }
  const Vector& vals = solver.eigenvalues();
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(vals.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  if (order == EigenOrder::kValueDescending) {
    std::stable_sort(idx.begin(), idx.end(),
                     [&](auto i, auto j) { return vals(i) > vals(j); });
  } else {
    std::stable_sort(idx.begin(), idx.end(), [&](auto i, auto j) {
      return std::abs(vals(i)) > std::abs(vals(j));
    });
  }
  EigResult out{Vector(vals.size()), Matrix(a.rows(), a.cols())};
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto col = static_cast<Eigen::Index>(k);
    out.values(col) = vals(idx[k]);
    out.vectors.col(col) = solver.eigenvectors().col(idx[k]);
  }
  return out;
}

Matrix inverse_sqrt_psd(const Matrix& a, double floor) {
  const EigResult eig = sym_eig(a);
  const Vector inv = eig.values.cwiseMax(floor).cwiseSqrt().cwiseInverse();
  return eig.vectors * inv.asDiagonal() * eig.vectors.transpose();
}

Vector column_means(const Matrix& x) { return x.colwise().mean().transpose(); }

Matrix sample_covariance(const Matrix& x) {
  if (x.rows() < 2) throw ValidationError("covariance needs at least 2 rows");
  const Matrix centered = x.rowwise() - x.colwise().mean();
  return centered.transpose() * centered / static_cast<double>(x.rows() - 1);
}

bool all_finite(const Matrix& a) { return a.allFinite(); }

}  // namespace drnn
