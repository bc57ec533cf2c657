#pragma once

#include <vector>

#include "drnn/metrics.hpp"
#include "drnn/numerics.hpp"

namespace drnn {

struct SliceSpec {
  Eigen::Index n_slices = 10;
};

// SAVE's default: max(5, min(10, floor(n / (2p)))).
SliceSpec default_save_slices(Eigen::Index n, Eigen::Index p);

struct MaveConfig {
  int max_iter = 25;
  double bandwidth_multiplier = 2.34;
  double tol = 1e-4;
};

// Candidate matrix and its spectrum; `basis` is already mapped back to the
// original coordinates.
struct SdrEstimate {
  OrthonormalBasis basis;
  Vector eigenvalues;  // of the candidate matrix, in selection order
  Matrix candidate;    // in whitened coordinates
};

// Slices of near-equal size after a stable sort by (y, row index); returns
// the row indices of each slice.
std::vector<std::vector<Eigen::Index>> make_slices(const Vector& y,
                                                   Eigen::Index n_slices);

SdrEstimate sir(const Matrix& x, const Vector& y, Eigen::Index d,
                const SliceSpec& slices = {});
SdrEstimate save(const Matrix& x, const Vector& y, Eigen::Index d,
                 const SliceSpec& slices);
SdrEstimate phd(const Matrix& x, const Vector& y, Eigen::Index d);

struct MaveResult {
  OrthonormalBasis basis;
  std::vector<double> objective_trace;  // one entry per accepted iterate
  int iterations = 0;
  bool converged = false;
};

MaveResult mave(const Matrix& x, const Vector& y, Eigen::Index d,
                const MaveConfig& config = {});

}  // namespace drnn
