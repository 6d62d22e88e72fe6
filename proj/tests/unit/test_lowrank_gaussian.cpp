#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "../support/dense_oracle.hpp"
#include "mfa/error.hpp"
#include "mfa/lowrank_gaussian.hpp"

using namespace mfa;
using mfa::testing::dense_log_density;
using mfa::testing::dense_posterior_mean;
using mfa::testing::random_matrix;
using mfa::testing::random_vector;
using mfa::testing::relative_error;

namespace {

FactorComponent unit_axis_component() {
  FactorComponent c{Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Zero(2, 1)};
  c.loadings(0, 0) = 1.0;
  return c;
}

}  // namespace

TEST_CASE("log_density: standard normal at its mean") {
  const FactorComponent c{Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Zero(2, 1)};
  CHECK(log_density(Eigen::VectorXd::Zero(2), c, Eigen::VectorXd::Ones(2)) ==
        doctest::Approx(-std::log(2.0 * std::numbers::pi)).epsilon(1e-12));
}

TEST_CASE("log_density: hand case C = diag(2, 1)") {
  const Eigen::Vector2d x(1.0, 0.0);
  const double dense = dense_log_density(x, Eigen::VectorXd::Zero(2), unit_axis_component().loadings,
                                         Eigen::VectorXd::Ones(2));
  CHECK(dense == doctest::Approx(-2.434451).epsilon(1e-6));
  CHECK(log_density(x, unit_axis_component(), Eigen::VectorXd::Ones(2)) == doctest::Approx(dense).epsilon(1e-13));
}

TEST_CASE("log_density and posterior_mean match the dense oracle on random instances") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> dim(1, 8);
  for (int trial = 0; trial < 100; ++trial) {
    const int d = dim(rng);
    const int r = std::uniform_int_distribution<int>(1, std::min(3, d))(rng);
    const FactorComponent c{random_vector(rng, d), random_matrix(rng, d, r)};
    Eigen::VectorXd psi(d);
    for (int i = 0; i < d; ++i) psi(i) = std::uniform_real_distribution<double>(0.1, 3.0)(rng);
    const Eigen::VectorXd x = random_vector(rng, d, 2.0);
    CHECK(relative_error(log_density(x, c, psi), dense_log_density(x, c.mean, c.loadings, psi)) < 1e-8);
    const Eigen::VectorXd z = posterior_mean(x, c, psi).z;
    const Eigen::VectorXd zd = dense_posterior_mean(x, c.mean, c.loadings, psi);
    CHECK((z - zd).norm() <= 1e-8 * std::max(1.0, zd.norm()));
  }
}

TEST_CASE("log_density is invariant to orthogonal rotation of the loadings") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const FactorComponent c{random_vector(rng, 6), random_matrix(rng, 6, 3)};
    const Eigen::MatrixXd q = mfa::testing::random_orthogonal(rng, 3);
    const FactorComponent rotated{c.mean, c.loadings * q};
    const Eigen::VectorXd psi = Eigen::VectorXd::Constant(6, 0.7);
    const Eigen::VectorXd x = random_vector(rng, 6, 2.0);
    CHECK(std::abs(log_density(x, c, psi) - log_density(x, rotated, psi)) < 1e-8);
  }
}

TEST_CASE("posterior_mean: zero cases and the hand case") {
  std::mt19937_64 rng(5);
  const FactorComponent c{random_vector(rng, 4), random_matrix(rng, 4, 2)};
  const Eigen::VectorXd psi = Eigen::VectorXd::Constant(4, 0.5);
  CHECK(posterior_mean(c.mean, c, psi).z.norm() == 0.0);

  const FactorComponent zero_w{c.mean, Eigen::MatrixXd::Zero(4, 2)};
  CHECK(posterior_mean(random_vector(rng, 4), zero_w, psi).z.norm() == 0.0);

  const Eigen::VectorXd z = posterior_mean(Eigen::Vector2d(1.0, 0.0), unit_axis_component(), Eigen::VectorXd::Ones(2)).z;
  REQUIRE(z.size() == 1);
  CHECK(z(0) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("posterior_mean is linear in the residual") {
  std::mt19937_64 rng(17);
  const FactorComponent c{random_vector(rng, 5), random_matrix(rng, 5, 2)};
  const Eigen::VectorXd psi = Eigen::VectorXd::Constant(5, 0.9);
  const Eigen::VectorXd x1 = random_vector(rng, 5), x2 = random_vector(rng, 5);
  const Eigen::VectorXd lhs = posterior_mean(x1, c, psi).z + posterior_mean(x2, c, psi).z;
  const Eigen::VectorXd rhs = posterior_mean(x1 + x2 - c.mean, c, psi).z + posterior_mean(c.mean, c, psi).z;
  CHECK((lhs - rhs).norm() < 1e-10);
}

TEST_CASE("local_reconstruction") {
  std::mt19937_64 rng(23);
  const FactorComponent c{random_vector(rng, 4), random_matrix(rng, 4, 2)};
  CHECK(local_reconstruction(c, {Eigen::VectorXd::Zero(2)}) == c.mean);
  CHECK((local_reconstruction(c, {Eigen::Vector2d(0.0, 1.0)}) - (c.mean + c.loadings.col(1))).norm() == 0.0);

  const Eigen::VectorXd z = random_vector(rng, 2);
  Eigen::VectorXd naive = c.mean;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 2; ++j) naive(i) += c.loadings(i, j) * z(j);
  CHECK((local_reconstruction(c, {z}) - naive).norm() < 1e-12);

  CHECK_THROWS_AS(local_reconstruction(c, {Eigen::VectorXd::Zero(3)}), InvalidInputError);
}

TEST_CASE("error paths") {
  const FactorComponent c = unit_axis_component();
  const Eigen::VectorXd psi = Eigen::VectorXd::Ones(2);
  CHECK_THROWS_AS(log_density(Eigen::Vector2d(NAN, 0.0), c, psi), InvalidInputError);
  CHECK_THROWS_AS(log_density(Eigen::Vector3d(0.0, 0.0, 0.0), c, psi), InvalidInputError);
  CHECK_THROWS_AS(posterior_mean(Eigen::Vector2d(INFINITY, 0.0), c, psi), InvalidInputError);

  // Overflowing loadings make the capacitance matrix unusable.
  try {
    CapacitanceFactor f(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Constant(2, 1, 1e200), psi, 7);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    REQUIRE(e.component().has_value());
    CHECK(*e.component() == 7);
  }
}

TEST_CASE("psi floor is applied when reading the noise diagonal") {
  const Eigen::VectorXd floored = floor_psi(Eigen::Vector2d(0.0, 1e-9));
  CHECK(floored(0) == kPsiFloor);
  CHECK(floored(1) == kPsiFloor);
  const FactorComponent c = unit_axis_component();
  CHECK(std::isfinite(log_density(Eigen::Vector2d(0.0, 0.0), c, Eigen::Vector2d(0.0, 0.0))));
}
