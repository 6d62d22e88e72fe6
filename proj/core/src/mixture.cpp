#include "mfa/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

#include "mfa/error.hpp"
#include "mfa/numeric.hpp"

namespace mfa {
namespace {

std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

void validate(const MfaParameters& p, double psi_floor) {
  const auto k = p.means.rows();
  const auto d = p.means.cols();
  if (k < 1 || d < 1) throw InvalidInputError("model needs K >= 1 and d >= 1");
  if (static_cast<Eigen::Index>(p.loadings.size()) != k) {
    throw InvalidInputError("expected " + std::to_string(k) + " loading matrices, got " +
                            std::to_string(p.loadings.size()));
  }
  const auto r = p.loadings.front().cols();
  if (r < 1 || r > d) throw InvalidInputError("rank must satisfy 1 <= R <= d");
  for (std::size_t i = 0; i < p.loadings.size(); ++i) {
    if (p.loadings[i].rows() != d || p.loadings[i].cols() != r) {
      throw InvalidInputError("loading matrix " + std::to_string(i) + " has wrong shape");
    }
    if (!p.loadings[i].allFinite()) {
      throw InvalidInputError("loading matrix " + std::to_string(i) + " has non-finite entries");
    }
  }
  if (p.psi_raw.size() != d) throw InvalidInputError("psi_raw must have length d");
  if (p.pi_logits.size() != k) throw InvalidInputError("pi_logits must have length K");
  if (!p.means.allFinite() || !p.psi_raw.allFinite() || !p.pi_logits.allFinite()) {
    throw InvalidInputError("model parameters contain non-finite values");
  }
  if (!(psi_floor > 0.0) || !std::isfinite(psi_floor)) throw InvalidInputError("psi_floor must be positive");
}

}  // namespace

Eigen::VectorXd psi_from_raw(const Eigen::VectorXd& psi_raw, double psi_floor) {
  return psi_raw.unaryExpr([psi_floor](double r) { return std::max(std::exp(r), psi_floor); });
}

Eigen::VectorXd raw_from_psi(const Eigen::VectorXd& psi) {
  return psi.unaryExpr([](double v) { return std::log(v); });
}

Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits) {
  const double lse = log_sum_exp(as_span(logits));
  return (logits.array() - lse).matrix();
}

MfaModel::MfaModel(MfaParameters params, double psi_floor) : params_(std::move(params)), psi_floor_(psi_floor) {
  validate(params_, psi_floor_);
  psi_ = psi_from_raw(params_.psi_raw, psi_floor_);
  if (!psi_.allFinite()) throw InvalidInputError("noise diagonal overflows; psi_raw is too large");
  log_weights_ = log_softmax(params_.pi_logits);
  weights_ = log_weights_.unaryExpr([](double v) { return std::exp(v); });
  if ((weights_.array() <= 0.0).any()) {
    throw InvalidInputError("mixture weights underflow to zero; pi_logits spread is too large");
  }
}

MixtureEvaluator::MixtureEvaluator(const MfaModel& model) : model_(&model) {
  factors_.reserve(model.num_components());
  for (std::size_t k = 0; k < model.num_components(); ++k) {
    factors_.emplace_back(model.mean(k), model.loadings(k), model.psi(), k);
  }
}

Eigen::VectorXd MixtureEvaluator::component_log_densities(const Eigen::VectorXd& x) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(factors_.size()));
  for (std::size_t k = 0; k < factors_.size(); ++k) out(static_cast<Eigen::Index>(k)) = factors_[k].log_density(x);
  return out;
}

Eigen::VectorXd MixtureEvaluator::joint_log_probs(const Eigen::VectorXd& x) const {
  return model_->log_weights() + component_log_densities(x);
}

double MixtureEvaluator::log_likelihood(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd joint = joint_log_probs(x);
  return log_sum_exp(as_span(joint));
}

Eigen::VectorXd normalize_log_probs(const Eigen::VectorXd& joint) {
  const double lse = log_sum_exp(as_span(joint));
  // Scalar exp: Eigen's packet exp can differ from std::exp in the last
  // bit, which would make results depend on a component's position.
  return joint.unaryExpr([lse](double v) { return std::exp(v - lse); });
}

Eigen::VectorXd MixtureEvaluator::responsibilities(const Eigen::VectorXd& x) const {
  return normalize_log_probs(joint_log_probs(x));
}

std::size_t MixtureEvaluator::assign(const Eigen::VectorXd& x) const {
  // argmax in log space; monotone in the responsibilities.
  const Eigen::VectorXd joint = joint_log_probs(x);
  std::size_t best = 0;
  for (Eigen::Index k = 1; k < joint.size(); ++k) {
    if (joint(k) > joint(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(k);
  }
  return best;
}

double log_likelihood(const MfaModel& model, const Eigen::VectorXd& x) {
  return MixtureEvaluator(model).log_likelihood(x);
}

Eigen::VectorXd responsibilities(const MfaModel& model, const Eigen::VectorXd& x) {
  return MixtureEvaluator(model).responsibilities(x);
}

std::size_t assign(const MfaModel& model, const Eigen::VectorXd& x) { return MixtureEvaluator(model).assign(x); }

Eigen::VectorXd per_component_log_density(const MfaModel& model, const Eigen::VectorXd& x) {
  return MixtureEvaluator(model).component_log_densities(x);
}

}  // namespace mfa
