#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "support.hpp"
#include "wpc/numerics.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("SymmetricMatrix symmetrizes and validates", "[numerics]") {
  MatrixXd m(2, 2);
  m << 1.0, 0.3, 0.5, 2.0;
  const wpc::SymmetricMatrix s(m);
  REQUIRE(s.data()(0, 1) == s.data()(1, 0));
  REQUIRE(s.data()(0, 1) == Catch::Approx(0.4).margin(1e-16));

  REQUIRE_THROWS_AS(wpc::SymmetricMatrix(MatrixXd::Zero(2, 3)), wpc::DimensionError);
  MatrixXd bad = MatrixXd::Zero(2, 2);
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(wpc::SymmetricMatrix(bad), wpc::NumericalError);
}

TEST_CASE("sym_eigs diagonal case", "[numerics]") {
  MatrixXd d = MatrixXd::Zero(2, 2);
  d(0, 0) = 3.0;
  d(1, 1) = 1.0;
  const wpc::EigenPairs e = wpc::sym_eigs(wpc::SymmetricMatrix(d), 2);
  REQUIRE(e.values(0) == Catch::Approx(3.0).margin(1e-14));
  REQUIRE(e.values(1) == Catch::Approx(1.0).margin(1e-14));
  REQUIRE((e.vectors - MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("sym_eigs full reconstruction", "[numerics]") {
  wpc::CounterRng rng(101, 0);
  const MatrixXd g = support::random_matrix(rng, 7, 7);
  const wpc::SymmetricMatrix s(MatrixXd(g + g.transpose()));
  const wpc::EigenPairs e = wpc::sym_eigs(s, 7);
  MatrixXd rebuilt = MatrixXd::Zero(7, 7);
  for (int j = 0; j < 7; ++j)
    rebuilt += e.values(j) * e.vectors.col(j) * e.vectors.col(j).transpose();
  REQUIRE((rebuilt - s.data()).norm() < 1e-8);
}

TEST_CASE("sym_eigs matches Jacobi oracle on the 4x4 Hilbert matrix", "[numerics]") {
  MatrixXd h(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) h(i, j) = 1.0 / static_cast<double>(i + j + 1);
  const oracle::EigResult ref = oracle::jacobi_eig(h);
  const wpc::EigenPairs e = wpc::sym_eigs(wpc::SymmetricMatrix(h), 2);
  REQUIRE(std::abs(e.values(0) - ref.values(0)) < 1e-10);
  REQUIRE(std::abs(e.values(1) - ref.values(1)) < 1e-10);
}

TEST_CASE("sym_eigs orthonormality and eigen residuals", "[numerics]") {
  wpc::CounterRng rng(102, 0);
  for (const int n : {3, 6, 11}) {
    const MatrixXd g = support::random_matrix(rng, n, n);
    const wpc::SymmetricMatrix s(MatrixXd(g + g.transpose()));
    const int k = std::max(1, n / 2);
    const wpc::EigenPairs e = wpc::sym_eigs(s, k);
    REQUIRE((e.vectors.transpose() * e.vectors - MatrixXd::Identity(k, k)).norm() <
            1e-10);
    for (int j = 0; j < k; ++j) {
      const VectorXd v = e.vectors.col(j);
      const double resid = (s.data() * v - e.values(j) * v).norm();
      REQUIRE(resid <= 1e-8 * (1.0 + std::abs(e.values(j))) * v.norm());
    }
    for (int j = 0; j + 1 < k; ++j) REQUIRE(e.values(j) >= e.values(j + 1) - 1e-12);
  }
}

TEST_CASE("sym_eigs sign convention and determinism", "[numerics]") {
  wpc::CounterRng rng(103, 0);
  const MatrixXd g = support::random_matrix(rng, 8, 8);
  const wpc::SymmetricMatrix s(MatrixXd(g + g.transpose()));
  const wpc::EigenPairs a = wpc::sym_eigs(s, 5);
  const wpc::EigenPairs b = wpc::sym_eigs(s, 5);
  REQUIRE(a.values == b.values);
  REQUIRE(a.vectors == b.vectors);
  for (int j = 0; j < 5; ++j) {
    Eigen::Index arg = 0;
    a.vectors.col(j).cwiseAbs().maxCoeff(&arg);
    REQUIRE(a.vectors(arg, j) >= 0.0);
  }
}

TEST_CASE("sym_eigs stable under symmetrization noise", "[numerics]") {
  wpc::CounterRng rng(104, 0);
  const MatrixXd g = support::random_matrix(rng, 6, 6);
  const MatrixXd base = g + g.transpose();
  MatrixXd noisy = base;
  for (Eigen::Index i = 0; i < 6; ++i)
    for (Eigen::Index j = 0; j < 6; ++j) noisy(i, j) += 1e-14 * rng.normal();
  const wpc::EigenPairs a = wpc::sym_eigs(wpc::SymmetricMatrix(base), 6);
  const wpc::EigenPairs b = wpc::sym_eigs(wpc::SymmetricMatrix(noisy), 6);
  REQUIRE((a.values - b.values).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE((a.vectors - b.vectors).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("sym_eigs rejects out-of-range k", "[numerics]") {
  const wpc::SymmetricMatrix s(MatrixXd::Identity(3, 3));
  REQUIRE_THROWS_AS(wpc::sym_eigs(s, 0), wpc::DimensionError);
  REQUIRE_THROWS_AS(wpc::sym_eigs(s, 4), wpc::DimensionError);
}

TEST_CASE("pd_inverse identity and diagonal cases", "[numerics]") {
  const wpc::SymmetricMatrix id(MatrixXd::Identity(5, 5));
  REQUIRE((wpc::pd_inverse(id).data() - MatrixXd::Identity(5, 5)).norm() < 1e-14);

  MatrixXd d = MatrixXd::Zero(2, 2);
  d(0, 0) = 2.0;
  d(1, 1) = 4.0;
  const wpc::SymmetricMatrix dinv = wpc::pd_inverse(wpc::SymmetricMatrix(d));
  REQUIRE(dinv.data()(0, 0) == Catch::Approx(0.5).margin(1e-15));
  REQUIRE(dinv.data()(1, 1) == Catch::Approx(0.25).margin(1e-15));
  REQUIRE(std::abs(dinv.data()(0, 1)) < 1e-15);
}

TEST_CASE("pd_inverse multiply-back on tridiagonal instance", "[numerics]") {
  MatrixXd m(3, 3);
  m << 2, 1, 0, 1, 2, 1, 0, 1, 2;
  const wpc::SymmetricMatrix inv = wpc::pd_inverse(wpc::SymmetricMatrix(m));
  REQUIRE((m * inv.data() - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("pd_inverse involution on well-conditioned input", "[numerics]") {
  wpc::CounterRng rng(105, 0);
  const MatrixXd pd = support::random_pd(rng, 8);
  const wpc::SymmetricMatrix s(pd);
  const wpc::SymmetricMatrix back = wpc::pd_inverse(wpc::pd_inverse(s));
  REQUIRE((back.data() - s.data()).norm() < 1e-8);
}

TEST_CASE("pd_inverse reports the failing pivot", "[numerics]") {
  MatrixXd m(2, 2);
  m << 1, 2, 2, 1;  // eigenvalues 3 and -1
  try {
    wpc::pd_inverse(wpc::SymmetricMatrix(m));
    FAIL("expected DefinitenessError");
  } catch (const wpc::DefinitenessError& e) {
    REQUIRE(e.pivot == 1);
  }

  MatrixXd z = MatrixXd::Zero(3, 3);
  z(0, 0) = -1.0;
  try {
    wpc::pd_inverse(wpc::SymmetricMatrix(z));
    FAIL("expected DefinitenessError");
  } catch (const wpc::DefinitenessError& e) {
    REQUIRE(e.pivot == 0);
  }
}

TEST_CASE("inverse normal cdf reference values", "[numerics]") {
  REQUIRE(wpc::inverse_normal_cdf(0.975) ==
          Catch::Approx(1.959963984540054).margin(1e-12));
  REQUIRE(std::abs(wpc::inverse_normal_cdf(0.5)) < 1e-15);
  REQUIRE(wpc::inverse_normal_cdf(0.025) ==
          Catch::Approx(-1.959963984540054).margin(1e-12));
  REQUIRE(wpc::inverse_normal_cdf(0.995) ==
          Catch::Approx(2.5758293035489004).margin(1e-10));
  REQUIRE_THROWS_AS(wpc::inverse_normal_cdf(0.0), wpc::DimensionError);
  REQUIRE_THROWS_AS(wpc::inverse_normal_cdf(1.0), wpc::DimensionError);
}
