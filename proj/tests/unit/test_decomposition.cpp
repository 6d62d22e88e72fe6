#include <doctest.h>

#include <algorithm>
#include <random>

#include "../support/dense_oracle.hpp"
#include "mfa/decomposition.hpp"
#include "mfa/error.hpp"

using namespace mfa;

namespace {

MfaModel single_model(const Eigen::VectorXd& mu, const Eigen::MatrixXd& w, double psi) {
  MfaParameters p;
  p.means = mu.transpose();
  p.loadings = {w};
  p.psi_raw = Eigen::VectorXd::Constant(mu.size(), std::log(psi));
  p.pi_logits = Eigen::VectorXd::Zero(1);
  return MfaModel(p);
}

MfaModel centroid_model(std::initializer_list<double> centers) {
  MfaParameters p;
  p.means = Eigen::MatrixXd(static_cast<Eigen::Index>(centers.size()), 1);
  Eigen::Index i = 0;
  for (double c : centers) {
    p.means(i++, 0) = c;
    p.loadings.push_back(Eigen::MatrixXd::Zero(1, 1));
  }
  p.psi_raw = Eigen::VectorXd::Zero(1);
  p.pi_logits = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(centers.size()));
  return MfaModel(p);
}

ActivationBatch batch_1d(std::initializer_list<double> xs) {
  ActivationBatch b(1);
  for (double x : xs) b.append(Eigen::VectorXd::Constant(1, x));
  return b;
}

}  // namespace

TEST_CASE("decompose: single component") {
  std::mt19937_64 rng(1);
  const Eigen::VectorXd mu = mfa::testing::random_vector(rng, 5);
  const Eigen::MatrixXd w = mfa::testing::random_matrix(rng, 5, 2);
  const MfaModel m = single_model(mu, w, 0.5);
  const Eigen::VectorXd x = mfa::testing::random_vector(rng, 5, 2.0);
  const Decomposition dec = decompose(m, x);
  CHECK(dec.responsibilities(0) == 1.0);
  CHECK(dec.active_set == std::vector<std::size_t>{0});
  const Eigen::VectorXd z = mfa::testing::dense_posterior_mean(x, mu, w, m.psi());
  CHECK((dec.latents.row(0).transpose() - z).norm() < 1e-10);
  CHECK((reconstruct(m, dec) - (mu + w * z)).norm() < 1e-10);
}

TEST_CASE("decompose: input at a separated centroid") {
  MfaParameters p;
  p.means = Eigen::MatrixXd::Zero(3, 4);
  for (int k = 0; k < 3; ++k) p.means(k, k) = 60.0;
  std::mt19937_64 rng(2);
  for (int k = 0; k < 3; ++k) p.loadings.push_back(mfa::testing::random_matrix(rng, 4, 2, 0.3));
  p.psi_raw = Eigen::VectorXd::Constant(4, std::log(0.2));
  p.pi_logits = Eigen::VectorXd::Zero(3);
  const MfaModel m(p);
  for (std::size_t j = 0; j < 3; ++j) {
    const Decomposition dec = decompose(m, m.mean(j));
    CHECK(dec.active_set == std::vector<std::size_t>{j});
    CHECK(dec.responsibilities(static_cast<Eigen::Index>(j)) == doctest::Approx(1.0));
    CHECK(dec.latents.row(static_cast<Eigen::Index>(j)).norm() < 1e-12);
    CHECK((reconstruct(m, dec) - m.mean(j)).norm() < 1e-9);
    const auto contribs = feature_contributions(m, m.mean(j));
    REQUIRE(contribs.size() == 2);
    CHECK(contribs[1].magnitude < 1e-12);
  }
}

TEST_CASE("dictionary product equals the component sum") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const MfaModel m = mfa::testing::random_model(rng, 1 + trial % 5, 2 + trial % 6, 1 + trial % 2);
    const Eigen::VectorXd x = mfa::testing::random_vector(rng, static_cast<Eigen::Index>(m.dim()), 2.0);
    const Decomposition dec = decompose(m, x);
    CHECK(dec.responsibilities.sum() == doctest::Approx(1.0).epsilon(1e-9));
    const Eigen::VectorXd via_a = dictionary_matrix(m) * dictionary_code(dec);
    Eigen::VectorXd via_sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.dim()));
    for (std::size_t k = 0; k < m.num_components(); ++k) {
      const double r = dec.responsibilities(static_cast<Eigen::Index>(k));
      via_sum += r * (m.mean(k) + m.loadings(k) * dec.latents.row(static_cast<Eigen::Index>(k)).transpose());
    }
    const Eigen::VectorXd direct = reconstruct(m, dec);
    const double scale = std::max(1.0, via_sum.norm());
    CHECK((via_a - via_sum).norm() / scale < 1e-10);
    CHECK((direct - via_sum).norm() / scale < 1e-10);
  }
}

TEST_CASE("reconstruction of inputs in the exact span") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd mu = mfa::testing::random_vector(rng, 8, 3.0);
    const Eigen::MatrixXd w = mfa::testing::random_matrix(rng, 8, 3);
    const MfaModel m = single_model(mu, w, kPsiFloor);
    const Eigen::VectorXd x = mu + w * mfa::testing::random_vector(rng, 3);
    const Eigen::VectorXd xh = reconstruct(m, decompose(m, x));
    CHECK((xh - x).norm() / x.norm() < 1e-6);
  }
}

TEST_CASE("feature contributions") {
  Eigen::MatrixXd w(2, 1);
  w << 1.0, 0.0;
  const MfaModel m = single_model(Eigen::VectorXd::Zero(2), w, 1.0);
  const auto c = feature_contributions(m, Eigen::Vector2d(1.0, 0.0));
  REQUIRE(c.size() == 2);
  CHECK(c[0].label == FeatureContribution::Label::kCentroid);
  CHECK(c[1].label == FeatureContribution::Label::kLocalOffset);
  CHECK(c[0].vector.norm() == 0.0);
  CHECK(c[1].vector(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(c[1].vector(1) == 0.0);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const MfaModel rm = mfa::testing::random_model(rng, 3, 4, 2);
    const Eigen::VectorXd x = mfa::testing::random_vector(rng, 4, 2.0);
    const auto fc = feature_contributions(rm, x);
    const MixtureEvaluator eval(rm);
    CHECK(fc[0].component == eval.assign(x));
    CHECK((fc[0].vector + fc[1].vector - reconstruct_hard(eval, x)).norm() < 1e-12);
    for (const auto& f : fc) CHECK(std::abs(f.magnitude - f.vector.norm()) < 1e-12);

    const auto soft = soft_feature_contributions(rm, decompose(rm, x));
    Eigen::VectorXd total = Eigen::VectorXd::Zero(4);
    for (std::size_t i = 0; i < soft.size(); ++i) {
      total += soft[i].vector;
      if (i > 0) CHECK(soft[i - 1].magnitude >= soft[i].magnitude);
    }
    CHECK((total - reconstruct(rm, decompose(rm, x))).norm() < 1e-10);
  }
}

TEST_CASE("interpretability fraction") {
  auto make = [](std::vector<double> mags) {
    std::vector<FeatureContribution> out;
    for (double v : mags) out.push_back({Eigen::VectorXd::Constant(1, v), FeatureContribution::Label::kCentroid, 0, v});
    return out;
  };
  CHECK(interpretability_fraction(make({3, 1}), {true, true}) == 1.0);
  CHECK(interpretability_fraction(make({3, 1}), {false, false}) == 0.0);
  CHECK(interpretability_fraction(make({3, 1}), {true, false}) == 0.75);
  CHECK(interpretability_fraction(make({0.3, 0.1}), {true, false}) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(interpretability_fraction(make({12, 4}), {true, false}) == 0.75);
  CHECK_THROWS_AS(interpretability_fraction(make({0, 0}), {true, false}), UndefinedMetricError);
  CHECK_THROWS_AS(interpretability_fraction(make({1}), {true, false}), InvalidInputError);
}

TEST_CASE("dataset and baseline MSE") {
  InMemorySource data(batch_1d({1.0, 9.0}), false);
  Eigen::MatrixXd c(2, 1);
  c << 0.0, 10.0;
  const MseEstimate base = kmeans_baseline_mse(c, data);
  CHECK(base.mse == 1.0);
  CHECK(base.count == 2);
  CHECK(base.standard_error == 0.0);

  InMemorySource exact(batch_1d({0.0, 10.0, 0.0}), false);
  CHECK(kmeans_baseline_mse(c, exact).mse == 0.0);

  const MfaModel single = centroid_model({2.5});
  InMemorySource point(batch_1d({2.5, 2.5, 2.5}), false);
  CHECK(dataset_mse(single, point).mse == 0.0);
  CHECK(dataset_mse(single, point, ReconstructionMode::kHard).mse == 0.0);
}

TEST_CASE("dataset MSE does not depend on stream order") {
  std::mt19937_64 rng(6);
  const MfaModel m = mfa::testing::random_model(rng, 4, 6, 2);
  ActivationBatch b(6);
  for (int i = 0; i < 2000; ++i) b.append(mfa::testing::random_vector(rng, 6, 3.0));
  InMemorySource ordered(b, false);
  const double ref = dataset_mse(m, ordered).mse;

  std::vector<std::size_t> perm(b.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  ActivationBatch shuffled(6);
  for (std::size_t i : perm) shuffled.append(b.row(i));
  InMemorySource other(shuffled, false);
  CHECK(std::abs(dataset_mse(m, other).mse - ref) <= 1e-12 * ref);

  InMemorySource reshuffling(b, true);
  CHECK(std::abs(dataset_mse(m, reshuffling).mse - ref) <= 1e-12 * ref);
}
