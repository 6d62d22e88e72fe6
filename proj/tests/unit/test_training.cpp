#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "../support/dense_oracle.hpp"
#include "../support/gradient_oracle.hpp"
#include "mfa/error.hpp"
#include "mfa/init.hpp"
#include "mfa/training.hpp"

using namespace mfa;

namespace {

std::vector<Eigen::VectorXd> rows_of(const ActivationBatch& b) {
  std::vector<Eigen::VectorXd> out;
  for (std::size_t i = 0; i < b.size(); ++i) out.push_back(b.row(i));
  return out;
}

MfaModel permute_components(const MfaModel& m, const std::vector<std::size_t>& perm) {
  MfaParameters p = m.parameters();
  for (std::size_t k = 0; k < perm.size(); ++k) {
    const auto ki = static_cast<Eigen::Index>(k), pk = static_cast<Eigen::Index>(perm[k]);
    p.means.row(ki) = m.parameters().means.row(pk);
    p.loadings[k] = m.loadings(perm[k]);
    p.pi_logits(ki) = m.parameters().pi_logits(pk);
  }
  return MfaModel(p);
}

}  // namespace

TEST_CASE("nll_batch basics") {
  std::mt19937_64 rng(1);
  const MfaModel m = mfa::testing::random_model(rng, 1, 3, 1);
  ActivationBatch one(3);
  one.append(m.mean(0));
  const double at_mean = log_density(Eigen::VectorXd(one.row(0)), m.component(0), m.psi());
  CHECK(nll_batch(m, one) == doctest::Approx(-at_mean).epsilon(1e-14));

  ActivationBatch two = one;
  two.append(one.row(0));
  CHECK(nll_batch(m, two) == doctest::Approx(nll_batch(m, one)).epsilon(1e-14));

  CHECK_THROWS_AS(nll_batch(m, ActivationBatch(3)), InvalidInputError);
  CHECK_THROWS_AS(nll_batch(m, ActivationBatch(4)), InvalidInputError);
}

TEST_CASE("nll_batch matches the dense oracle") {
  std::mt19937_64 rng(2);
  const MfaModel m = mfa::testing::random_model(rng, 3, 5, 2);
  const ActivationBatch b = sample_synthetic(m, 300, 5);
  CHECK(mfa::testing::relative_error(nll_batch(m, b), mfa::testing::dense_nll(m, rows_of(b))) < 1e-8);
}

TEST_CASE("analytic gradient matches central finite differences") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t k = 1 + trial % 3, d = 2 + trial % 5, r = 1 + trial % 2;
    const MfaModel m = mfa::testing::random_model(rng, k, d, r);
    const MfaModel other = mfa::testing::random_model(rng, k, d, r);
    const ActivationBatch b = sample_synthetic(other, 40, 100 + trial);
    const NllAndGradient ng = nll_and_gradient(m, b);
    CHECK(ng.nll == doctest::Approx(nll_batch(m, b)).epsilon(1e-13));
    const auto check = mfa::testing::finite_difference_check(m, rows_of(b), ng.gradient);
    CHECK(check.max_relative_error < 1e-4);
  }
}

TEST_CASE("gradient vanishes for psi entries held at the floor") {
  std::mt19937_64 rng(4);
  MfaParameters p = mfa::testing::random_model(rng, 2, 3, 1).parameters();
  p.psi_raw(1) = -40.0;
  const MfaModel m(p);
  const NllAndGradient ng = nll_and_gradient(m, sample_synthetic(m, 20, 1));
  CHECK(ng.gradient.psi_raw(1) == 0.0);
}

TEST_CASE("sample_synthetic: degenerate noise concentrates at the centroid") {
  MfaParameters p;
  p.means = Eigen::MatrixXd(1, 3);
  p.means << 1.0, -2.0, 3.0;
  p.loadings = {Eigen::MatrixXd::Zero(3, 1)};
  p.psi_raw = Eigen::VectorXd::Constant(3, std::log(kPsiFloor));
  p.pi_logits = Eigen::VectorXd::Zero(1);
  const MfaModel m(p);
  const ActivationBatch b = sample_synthetic(m, 10'000, 1);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
  for (std::size_t i = 0; i < b.size(); ++i) mean += b.row(i);
  mean /= 10'000.0;
  // Noise sd is sqrt(floor); the sample mean sits within a few standard
  // errors of mu, far inside 5 noise-floor units.
  const double noise_sd = std::sqrt(kPsiFloor);
  CHECK((mean - m.mean(0)).cwiseAbs().maxCoeff() < 5.0 * noise_sd / std::sqrt(10'000.0));
  CHECK((mean - m.mean(0)).cwiseAbs().maxCoeff() < 5.0 * noise_sd);
}

TEST_CASE("sample_synthetic: covariance and component frequencies") {
  std::mt19937_64 rng(5);
  const MfaModel single = mfa::testing::random_model(rng, 1, 4, 2);
  const ActivationBatch b = sample_synthetic(single, 100'000, 2);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(b.size()), 4);
  for (std::size_t i = 0; i < b.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = b.row(i).transpose();
  const Eigen::RowVectorXd mu = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mu;
  const Eigen::MatrixXd emp = centered.transpose() * centered / static_cast<double>(b.size() - 1);
  const Eigen::MatrixXd truth = mfa::testing::dense_covariance(single.loadings(0), single.psi());
  CHECK((emp - truth).norm() / truth.norm() < 0.05);

  const MfaModel mix = mfa::testing::random_model(rng, 3, 2, 1);
  std::vector<std::size_t> labels;
  sample_synthetic(mix, 100'000, 3, &labels);
  for (std::size_t k = 0; k < 3; ++k) {
    const double pk = mix.weights()(static_cast<Eigen::Index>(k));
    const double count = static_cast<double>(std::count(labels.begin(), labels.end(), k));
    const double sd = std::sqrt(100'000.0 * pk * (1.0 - pk));
    CHECK(std::abs(count - 100'000.0 * pk) < 3.0 * sd);
  }

  const ActivationBatch again = sample_synthetic(mix, 50, 3);
  CHECK(again.values() == sample_synthetic(mix, 50, 3).values());
}

TEST_CASE("fit keeps parameters valid and does not degrade a near-optimal start") {
  std::mt19937_64 rng(6);
  const MfaModel truth = make_synthetic_model({.components = 3, .dim = 6, .rank = 2, .seed = 9});
  InMemorySource src(sample_synthetic(truth, 6000, 4), true);
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.eval_interval = 5;
  cfg.heldout_size = 1000;
  cfg.seed = 1;
  auto [fitted, report] = fit(truth, src, cfg);
  REQUIRE(!report.nll_trace.empty());
  CHECK(report.steps_run > 0);
  CHECK(report.nll_trace.front().first == 0);
  const double initial = report.nll_trace.front().second;
  CHECK(report.final_nll <= initial * 1.01);
  CHECK(fitted.weights().sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((fitted.psi().array() >= cfg.psi_floor).all());
}

TEST_CASE("fit: best-so-far held-out NLL is non-increasing and training improves") {
  const MfaModel truth = make_synthetic_model({.components = 2, .dim = 5, .rank = 1, .seed = 4});
  const ActivationBatch data = sample_synthetic(truth, 4000, 8);
  InitConfig icfg;
  icfg.components = 2;
  icfg.seed = 3;
  const MfaModel init = init_model(icfg, data, 1);
  InMemorySource src(data, true);
  TrainConfig cfg;
  cfg.max_epochs = 10;
  cfg.eval_interval = 10;
  cfg.heldout_size = 800;
  cfg.learning_rate = 2e-2;
  auto [fitted, report] = fit(init, src, cfg);
  double best = report.nll_trace.front().second;
  double previous_best = best;
  for (const auto& [step, nll] : report.nll_trace) {
    best = std::min(best, nll);
    CHECK(best <= previous_best);
    previous_best = best;
  }
  CHECK(report.final_nll < report.nll_trace.front().second);
}

TEST_CASE("fit is permutation-equivariant and bit-reproducible") {
  const MfaModel truth = make_synthetic_model({.components = 3, .dim = 4, .rank = 1, .seed = 2});
  const ActivationBatch data = sample_synthetic(truth, 3000, 1);
  InitConfig icfg;
  icfg.components = 3;
  icfg.strategy = InitStrategy::kRandomPoint;
  const MfaModel init = init_model(icfg, data, 1);
  const std::vector<std::size_t> perm{2, 0, 1};
  const MfaModel init_perm = permute_components(init, perm);

  TrainConfig cfg;
  cfg.max_epochs = 2;
  cfg.eval_interval = 4;
  cfg.heldout_size = 500;
  cfg.seed = 77;
  InMemorySource a(data, true), b(data, true), c(data, true);
  auto [fa, ra] = fit(init, a, cfg);
  auto [fb, rb] = fit(init_perm, b, cfg);
  auto [fc, rc] = fit(init, c, cfg);

  CHECK(ra.nll_trace == rb.nll_trace);
  CHECK(ra.nll_trace == rc.nll_trace);
  CHECK(serialize_model(fa) == serialize_model(fc));
  const MfaModel fa_perm = permute_components(fa, perm);
  CHECK(serialize_model(fa_perm) == serialize_model(fb));
}

TEST_CASE("fit validates inputs") {
  const MfaModel truth = make_synthetic_model({.components = 2, .dim = 3, .rank = 1});
  InMemorySource src(sample_synthetic(truth, 100, 1), false);
  TrainConfig cfg;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(fit(truth, src, cfg), InvalidInputError);
  cfg = TrainConfig{};
  cfg.convergence_delta = 0.0;
  CHECK_THROWS_AS(fit(truth, src, cfg), InvalidInputError);
  const MfaModel wrong = make_synthetic_model({.components = 2, .dim = 4, .rank = 1});
  CHECK_THROWS_AS(fit(wrong, src, TrainConfig{}), InvalidInputError);
}

TEST_CASE("fit aborts with a diagnostic when the loss blows up") {
  const MfaModel truth = make_synthetic_model({.components = 2, .dim = 3, .rank = 1});
  InMemorySource src(sample_synthetic(truth, 400, 1), true);
  TrainConfig cfg;
  cfg.optimizer = Optimizer::kPlainGradient;
  cfg.learning_rate = 1e12;
  cfg.eval_interval = 1;
  cfg.heldout_size = 50;
  try {
    fit(truth, src, cfg);
    FAIL("expected TrainingAbortedError");
  } catch (const TrainingAbortedError& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}
