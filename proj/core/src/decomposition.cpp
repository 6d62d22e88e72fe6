#include "mfa/decomposition.hpp"

#include <algorithm>
#include <cmath>

#include "mfa/error.hpp"
#include "mfa/init.hpp"
#include "mfa/numeric.hpp"
#include "mfa/parallel.hpp"

namespace mfa {
namespace {

constexpr std::size_t kRowsPerRead = 4096;
constexpr std::size_t kChunk = 256;

void check_model_match(const MfaModel& model, const Decomposition& dec) {
  if (static_cast<std::size_t>(dec.responsibilities.size()) != model.num_components() ||
      static_cast<std::size_t>(dec.latents.rows()) != model.num_components() ||
      static_cast<std::size_t>(dec.latents.cols()) != model.rank()) {
    throw ModelMismatchError("decomposition shape does not match the model");
  }
}

// Streams a pass, computing per-row squared errors with `err`, and
// accumulates sum and sum of squares of err / d with compensated sums.
template <typename ErrFn>
MseEstimate stream_mse(ActivationSource& source, std::size_t dim, double work_per_row, ErrFn err) {
  if (source.dim() != dim) {
    throw InvalidInputError("stream dimension " + std::to_string(source.dim()) + " does not match " +
                            std::to_string(dim));
  }
  source.rewind(0);
  CompensatedSum sum, sum_sq;
  std::uint64_t n = 0;
  const double d = static_cast<double>(dim);
  ActivationBatch batch;
  std::vector<double> per_row;
  while (source.next_batch(kRowsPerRead, batch)) {
    per_row.assign(batch.size(), 0.0);
    parallel_chunks(batch.size(), kChunk, work_per_row, [&](std::size_t, std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) per_row[i] = err(batch.row(i)) / d;
    });
    for (double v : per_row) {
      sum.add(v);
      sum_sq.add(v * v);
    }
    n += batch.size();
  }
  if (n == 0) throw InvalidInputError("stream is empty");
  MseEstimate out;
  out.count = n;
  out.mse = sum.value() / static_cast<double>(n);
  if (n > 1) {
    const double var = std::max(0.0, (sum_sq.value() - static_cast<double>(n) * out.mse * out.mse) /
                                         static_cast<double>(n - 1));
    out.standard_error = std::sqrt(var / static_cast<double>(n));
  }
  return out;
}

}  // namespace

Decomposition decompose(const MixtureEvaluator& eval, const Eigen::VectorXd& x) {
  const MfaModel& model = eval.model();
  const auto K = static_cast<Eigen::Index>(model.num_components());
  Decomposition dec;
  dec.responsibilities = eval.responsibilities(x);
  dec.latents = Eigen::MatrixXd::Zero(K, static_cast<Eigen::Index>(model.rank()));
  for (Eigen::Index k = 0; k < K; ++k) {
    if (dec.responsibilities(k) <= kResponsibilityFlush) {
      dec.responsibilities(k) = 0.0;
      continue;
    }
    dec.active_set.push_back(static_cast<std::size_t>(k));
    dec.latents.row(k) = eval.factor(static_cast<std::size_t>(k)).posterior_mean(x).z.transpose();
  }
  return dec;
}

Decomposition decompose(const MfaModel& model, const Eigen::VectorXd& x) {
  return decompose(MixtureEvaluator(model), x);
}

Eigen::VectorXd reconstruct(const MfaModel& model, const Decomposition& dec) {
  check_model_match(model, dec);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.dim()));
  for (std::size_t k : dec.active_set) {
    const auto ki = static_cast<Eigen::Index>(k);
    out += dec.responsibilities(ki) *
           (model.parameters().means.row(ki).transpose() + model.loadings(k) * dec.latents.row(ki).transpose());
  }
  return out;
}

Eigen::VectorXd reconstruct_hard(const MixtureEvaluator& eval, const Eigen::VectorXd& x) {
  const std::size_t a = eval.assign(x);
  return eval.model().mean(a) + eval.model().loadings(a) * eval.factor(a).posterior_mean(x).z;
}

Eigen::MatrixXd dictionary_matrix(const MfaModel& model) {
  const auto K = static_cast<Eigen::Index>(model.num_components());
  const auto d = static_cast<Eigen::Index>(model.dim());
  const auto R = static_cast<Eigen::Index>(model.rank());
  Eigen::MatrixXd a(d, K * (1 + R));
  a.leftCols(K) = model.parameters().means.transpose();
  for (Eigen::Index k = 0; k < K; ++k) a.block(0, K + k * R, d, R) = model.loadings(static_cast<std::size_t>(k));
  return a;
}

Eigen::VectorXd dictionary_code(const Decomposition& dec) {
  const auto K = dec.responsibilities.size();
  const auto R = dec.latents.cols();
  Eigen::VectorXd b(K * (1 + R));
  b.head(K) = dec.responsibilities;
  for (Eigen::Index k = 0; k < K; ++k) b.segment(K + k * R, R) = dec.responsibilities(k) * dec.latents.row(k).transpose();
  return b;
}

std::string to_string(FeatureContribution::Label label) {
  return label == FeatureContribution::Label::kCentroid ? "centroid" : "local-offset";
}

std::vector<FeatureContribution> feature_contributions(const MfaModel& model, const Eigen::VectorXd& x) {
  const MixtureEvaluator eval(model);
  const std::size_t a = eval.assign(x);
  Eigen::VectorXd centroid = model.mean(a);
  Eigen::VectorXd offset = model.loadings(a) * eval.factor(a).posterior_mean(x).z;
  std::vector<FeatureContribution> out;
  const double cn = centroid.norm(), on = offset.norm();
  out.push_back({std::move(centroid), FeatureContribution::Label::kCentroid, a, cn});
  out.push_back({std::move(offset), FeatureContribution::Label::kLocalOffset, a, on});
  return out;
}

std::vector<FeatureContribution> soft_feature_contributions(const MfaModel& model, const Decomposition& dec) {
  check_model_match(model, dec);
  std::vector<FeatureContribution> out;
  for (std::size_t k : dec.active_set) {
    const auto ki = static_cast<Eigen::Index>(k);
    const double r = dec.responsibilities(ki);
    Eigen::VectorXd c = r * model.mean(k);
    Eigen::VectorXd o = r * (model.loadings(k) * dec.latents.row(ki).transpose());
    const double cn = c.norm(), on = o.norm();
    out.push_back({std::move(c), FeatureContribution::Label::kCentroid, k, cn});
    out.push_back({std::move(o), FeatureContribution::Label::kLocalOffset, k, on});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const FeatureContribution& a, const FeatureContribution& b) { return a.magnitude > b.magnitude; });
  return out;
}

double interpretability_fraction(const std::vector<FeatureContribution>& contribs,
                                 const std::vector<bool>& interpretable) {
  if (contribs.size() != interpretable.size()) {
    throw InvalidInputError("interpretability flags must align with contributions");
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < contribs.size(); ++i) {
    den += contribs[i].magnitude;
    if (interpretable[i]) num += contribs[i].magnitude;
  }
  if (!(den > 0.0)) throw UndefinedMetricError("total contribution magnitude is zero");
  return num / den;
}

MseEstimate dataset_mse(const MfaModel& model, ActivationSource& source, ReconstructionMode mode) {
  const MixtureEvaluator eval(model);
  const double work = static_cast<double>(model.num_components() * model.dim() * model.rank());
  return stream_mse(source, model.dim(), work, [&](const Eigen::VectorXd& x) {
    const Eigen::VectorXd xhat =
        mode == ReconstructionMode::kSoft ? reconstruct(model, decompose(eval, x)) : reconstruct_hard(eval, x);
    return (x - xhat).squaredNorm();
  });
}

MseEstimate kmeans_baseline_mse(const Eigen::MatrixXd& centroids, ActivationSource& source) {
  const double work = static_cast<double>(centroids.rows() * centroids.cols());
  return stream_mse(source, static_cast<std::size_t>(centroids.cols()), work,
                    [&](const Eigen::VectorXd& x) { return nearest_centroid(centroids, x).second; });
}

}  // namespace mfa
