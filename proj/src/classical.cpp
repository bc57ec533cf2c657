#include "drnn/classical.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "drnn/errors.hpp"

namespace drnn {
namespace {

struct Whitened {
  Matrix z;         // n x p, centered and whitened
  Matrix inv_sqrt;  // Sigma^{-1/2}
};

Whitened whiten(const Matrix& x) {
  if (x.rows() <= x.cols()) {
    throw NumericalError("whitening needs n > p (got n=" + std::to_string(x.rows()) +
                         ", p=" + std::to_string(x.cols()) + ")");
  }
  const Matrix cov = sample_covariance(x);
  const EigResult eig = sym_eig(cov);
  const double top = eig.values(0);
  if (!(top > 0.0) || eig.values.minCoeff() <= 1e-10 * top) {
    throw NumericalError("whitening failed: sample covariance is singular");
  }
  Whitened w;
  w.inv_sqrt = inverse_sqrt_psd(cov, 1e-10);
  w.z = (x.rowwise() - x.colwise().mean()) * w.inv_sqrt;
  return w;
}

void check_inputs(const Matrix& x, const Vector& y, Eigen::Index d,
                  const char* method) {
  if (x.rows() != y.size()) {
    throw ValidationError(std::string(method) + ": X rows and y length differ");
  }
  if (d < 1 || d > x.cols()) {
    throw ValidationError(std::string(method) + ": need 1 <= d <= p");
  }
  if (!x.allFinite() || !y.allFinite()) {
    throw ValidationError(std::string(method) + ": non-finite input");
  }
}

SdrEstimate finish(const Whitened& w, const Matrix& candidate, Eigen::Index d,
                   EigenOrder order) {
  const EigResult eig = sym_eig(candidate, order);
  const Matrix back = w.inv_sqrt * eig.vectors.leftCols(d);
  return {OrthonormalBasis::from_span(back), eig.values, candidate};
}

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

double median_pairwise_distance(const Matrix& u) {
  const Eigen::Index n = u.rows();
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) dists.push_back((u.row(i) - u.row(j)).norm());
  }
  if (dists.empty()) return 0.0;
  const auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  return *mid;
}

// Row-normalized Gaussian kernel weights on the rows of u.
Matrix kernel_weights(const Matrix& u, double bandwidth) {
  const Eigen::Index n = u.rows();
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
    throw BandwidthError("MAVE: bandwidth is not positive");
  }
  const Vector sq = u.rowwise().squaredNorm();
  Matrix d2 = (-2.0 * u * u.transpose()).colwise() + sq;
  d2.rowwise() += sq.transpose();
  Matrix w = (-d2.cwiseMax(0.0) / (2.0 * bandwidth * bandwidth)).array().exp();
  Eigen::Index isolated = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (w.row(i).sum() - 1.0 < 1e-10) ++isolated;
  }
  if (2 * isolated > n) {
    throw BandwidthError("MAVE: kernel weights are degenerate (bandwidth " +
                         std::to_string(bandwidth) + " too small)");
  }
  const Vector rows = w.rowwise().sum();
  return w.array().colwise() / rows.array();
}

struct LocalFit {
  Vector a;    // n local intercepts
  Matrix b;    // n x k local slopes
  double objective = 0.0;
};

// Weighted local-linear fits y_j ~ a_i + b_i^T (u_j - u_i) for every i.
LocalFit local_linear(const Matrix& u, const Vector& y, const Matrix& w) {
  const Eigen::Index n = u.rows();
  const Eigen::Index k = u.cols();
  LocalFit fit{Vector(n), Matrix(n, k), 0.0};
  Matrix design(n, k + 1);
  design.col(0).setOnes();
  for (Eigen::Index i = 0; i < n; ++i) {
    design.rightCols(k) = u.rowwise() - u.row(i);
    const Vector wi = w.row(i).transpose();
    const Matrix weighted = design.array().colwise() * wi.array();
    Matrix gram = design.transpose() * weighted;
    const Vector rhs = weighted.transpose() * y;
    const double ridge = 1e-10 * (gram.trace() / static_cast<double>(k + 1)) + 1e-14;
    gram.diagonal().array() += ridge;
    const Vector coef = gram.ldlt().solve(rhs);
    fit.a(i) = coef(0);
    fit.b.row(i) = coef.tail(k).transpose();
    const Vector resid = y - design * coef;
    fit.objective += wi.dot(resid.cwiseAbs2());
  }
  fit.objective /= static_cast<double>(n);
  return fit;
}

double mave_bandwidth(const Matrix& u, double c, Eigen::Index dim) {
  const double n = static_cast<double>(u.rows());
  const double med = median_pairwise_distance(u);
  if (!(med > 0.0)) throw BandwidthError("MAVE: projected data has zero spread");
  return c * std::pow(n, -1.0 / (static_cast<double>(dim) + 4.0)) * med;
}

struct MaveState {
  Matrix w;
  LocalFit fit;
};

MaveState evaluate(const Matrix& z, const Vector& y, const Matrix& b, double c) {
  const Matrix u = z * b;
  MaveState s;
  s.w = kernel_weights(u, mave_bandwidth(u, c, b.cols()));
  s.fit = local_linear(u, y, s.w);
  return s;
}

// Least-squares B given weights and local coefficients, unconstrained.
Matrix solve_basis(const Matrix& z, const Vector& y, const MaveState& s) {
  const Eigen::Index n = z.rows();
  const Eigen::Index p = z.cols();
  const Eigen::Index d = s.fit.b.cols();
  Matrix normal = Matrix::Zero(p * d, p * d);
  Vector rhs = Vector::Zero(p * d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Matrix diff = z.rowwise() - z.row(i);  // rows z_j - z_i
    const Vector wi = s.w.row(i).transpose();
    const Matrix weighted = diff.array().colwise() * wi.array();
    const Matrix scatter = diff.transpose() * weighted;  // S_i
    const Vector target = weighted.transpose() * (y.array() - s.fit.a(i)).matrix();
    const Vector bi = s.fit.b.row(i).transpose();
    for (Eigen::Index k = 0; k < d; ++k) {
      rhs.segment(k * p, p) += bi(k) * target;
      for (Eigen::Index l = 0; l < d; ++l) {
        normal.block(k * p, l * p, p, p) += (bi(k) * bi(l)) * scatter;
      }
    }
  }
  normal = symmetrize(normal);
  normal.diagonal().array() += 1e-10 * normal.trace() / static_cast<double>(p * d) + 1e-14;
  const Vector vec_b = normal.ldlt().solve(rhs);
  return Eigen::Map<const Matrix>(vec_b.data(), p, d);
}

}  // namespace

SliceSpec default_save_slices(Eigen::Index n, Eigen::Index p) {
  const Eigen::Index by_size = n / (2 * std::max<Eigen::Index>(p, 1));
  return {std::max<Eigen::Index>(5, std::min<Eigen::Index>(10, by_size))};
}

std::vector<std::vector<Eigen::Index>> make_slices(const Vector& y,
                                                   Eigen::Index n_slices) {
  const Eigen::Index n = y.size();
  if (n_slices < 2 || n_slices > n / 2) {
    throw ValidationError("slice count must satisfy 2 <= H <= n/2 (H=" +
                          std::to_string(n_slices) + ", n=" + std::to_string(n) + ")");
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return y(a) < y(b); });
  std::vector<std::vector<Eigen::Index>> slices(static_cast<std::size_t>(n_slices));
  for (Eigen::Index h = 0; h < n_slices; ++h) {
    const Eigen::Index lo = h * n / n_slices;
    const Eigen::Index hi = (h + 1) * n / n_slices;
    slices[static_cast<std::size_t>(h)].assign(order.begin() + lo, order.begin() + hi);
  }
  return slices;
}

SdrEstimate sir(const Matrix& x, const Vector& y, Eigen::Index d,
                const SliceSpec& slices) {
  check_inputs(x, y, d, "sir");
  if (x.rows() < 4 * slices.n_slices) {
    throw ValidationError("sir: n=" + std::to_string(x.rows()) +
                          " is too small for " + std::to_string(slices.n_slices) +
                          " slices (need n >= 4H)");
  }
  const Whitened w = whiten(x);
  const Eigen::Index p = x.cols();
  const double n = static_cast<double>(x.rows());
  Matrix m = Matrix::Zero(p, p);
  for (const auto& slice : make_slices(y, slices.n_slices)) {
    Vector mean = Vector::Zero(p);
    for (Eigen::Index i : slice) mean += w.z.row(i).transpose();
    mean /= static_cast<double>(slice.size());
    m += (static_cast<double>(slice.size()) / n) * mean * mean.transpose();
  }
  return finish(w, symmetrize(m), d, EigenOrder::kValueDescending);
}

SdrEstimate save(const Matrix& x, const Vector& y, Eigen::Index d,
                 const SliceSpec& slices) {
  check_inputs(x, y, d, "save");
  const Eigen::Index p = x.cols();
  const auto parts = make_slices(y, slices.n_slices);
  for (const auto& s : parts) {
    if (static_cast<Eigen::Index>(s.size()) < p + 1) {
      throw ValidationError("save: a slice has " + std::to_string(s.size()) +
                            " points but needs at least p+1=" + std::to_string(p + 1) +
                            "; use fewer slices");
    }
  }
  const Whitened w = whiten(x);
  const double n = static_cast<double>(x.rows());
  Matrix m = Matrix::Zero(p, p);
  const Matrix eye = Matrix::Identity(p, p);
  for (const auto& slice : parts) {
    Matrix zs(static_cast<Eigen::Index>(slice.size()), p);
    for (std::size_t k = 0; k < slice.size(); ++k) zs.row(static_cast<Eigen::Index>(k)) = w.z.row(slice[k]);
    const Matrix centered = zs.rowwise() - zs.colwise().mean();
    const Matrix v = centered.transpose() * centered / static_cast<double>(zs.rows());
    const Matrix gap = eye - v;
    m += (static_cast<double>(slice.size()) / n) * gap * gap;
  }
  return finish(w, symmetrize(m), d, EigenOrder::kValueDescending);
}

SdrEstimate phd(const Matrix& x, const Vector& y, Eigen::Index d) {
  check_inputs(x, y, d, "phd");
  if (x.rows() <= x.cols()) throw ValidationError("phd: requires n > p");
  const Whitened w = whiten(x);
  const double n = static_cast<double>(x.rows());
  const Vector yc = y.array() - y.mean();
  // OLS residuals on the whitened covariates (z is centered with identity
  // sample covariance up to the n-1 factor).
  const Vector slope = (w.z.transpose() * w.z).ldlt().solve(w.z.transpose() * yc);
  const Vector resid = yc - w.z * slope;
  const Matrix weighted = w.z.array().colwise() * resid.array();
  const Matrix m = weighted.transpose() * w.z / n;
  return finish(w, symmetrize(m), d, EigenOrder::kMagnitudeDescending);
}

MaveResult mave(const Matrix& x, const Vector& y, Eigen::Index d,
                const MaveConfig& config) {
  check_inputs(x, y, d, "mave");
  if (config.max_iter < 1 || !(config.bandwidth_multiplier > 0.0) || !(config.tol > 0.0)) {
    throw ValidationError("mave: invalid configuration");
  }
  const Eigen::Index p = x.cols();
  if (x.rows() <= p + d) throw ValidationError("mave: requires n > p + d");
  const Whitened w = whiten(x);
  const double c = config.bandwidth_multiplier;

  // Initial directions from the outer product of local gradients in the full
  // whitened space. The unit-scale rule c n^{-1/(p+4)} keeps the kernel local;
  // scaling by pairwise distances would grow it with sqrt(p) toward a global
  // fit whose gradients vanish for symmetric links.
  Matrix b;
  {
    const double h0 = c * std::pow(static_cast<double>(x.rows()), -1.0 / (static_cast<double>(p) + 4.0));
    const Matrix weights = kernel_weights(w.z, h0);
    const LocalFit fit = local_linear(w.z, y, weights);
    const Matrix opg = fit.b.transpose() * fit.b / static_cast<double>(x.rows());
    b = sym_eig(symmetrize(opg)).vectors.leftCols(d);
  }

  MaveResult result;
  MaveState state = evaluate(w.z, y, b, c);
  result.objective_trace.push_back(state.fit.objective);

  for (int it = 0; it < config.max_iter; ++it) {
    result.iterations = it + 1;
    const Matrix target = solve_basis(w.z, y, state);
    if (!target.allFinite()) throw NumericalError("mave: basis update is not finite");

    // Accept the least-squares update, or a damped one, only if the
    // objective does not increase.
    bool accepted = false;
    Matrix next;
    MaveState next_state;
    double step = 1.0;
    for (int tries = 0; tries < 6 && !accepted; ++tries, step *= 0.5) {
      const Matrix blend = b + step * (target - b);
      try {
        next = thin_qr(blend).q;
      } catch (const RankDeficiencyError&) {
        continue;
      }
      next_state = evaluate(w.z, y, next, c);
      accepted = next_state.fit.objective <= state.fit.objective;
    }
    if (!accepted) {
      result.converged = true;
      break;
    }
    const double change = (next * next.transpose() - b * b.transpose()).norm();
    b = std::move(next);
    state = std::move(next_state);
    result.objective_trace.push_back(state.fit.objective);
    if (change < config.tol) {
      result.converged = true;
      break;
    }
  }
  result.basis = OrthonormalBasis::from_span(w.inv_sqrt * b);
  return result;
}

}  // namespace drnn
