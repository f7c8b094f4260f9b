#pragma once

// Shared fixture helpers for the test suite.

#include <Eigen/Dense>

#include "wpc/rng.hpp"

namespace support {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline MatrixXd random_matrix(wpc::CounterRng& rng, Eigen::Index rows,
                              Eigen::Index cols) {
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

inline VectorXd random_vector(wpc::CounterRng& rng, Eigen::Index n) {
  VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

// Well-conditioned random positive definite matrix.
inline MatrixXd random_pd(wpc::CounterRng& rng, Eigen::Index n, double ridge = 0.5) {
  const MatrixXd g = random_matrix(rng, n, n);
  return g * g.transpose() / static_cast<double>(n) +
         ridge * MatrixXd::Identity(n, n);
}

// Matrix with orthonormal columns, from the thin QR of a Gaussian draw.
inline MatrixXd random_orthonormal(wpc::CounterRng& rng, Eigen::Index rows,
                                   Eigen::Index cols) {
  const MatrixXd g = random_matrix(rng, rows, cols);
  Eigen::HouseholderQR<MatrixXd> qr(g);
  return qr.householderQ() * MatrixXd::Identity(rows, cols);
}

}  // namespace support
