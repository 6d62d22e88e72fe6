#include "mfa/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <random>
#include <sstream>
#include <span>

#include "mfa/error.hpp"
#include "mfa/numeric.hpp"
#include "mfa/parallel.hpp"
#include "mfa/random.hpp"

namespace mfa {
namespace {

constexpr std::size_t kChunk = 64;

void check_batch(const MfaModel& model, const ActivationBatch& batch) {
  if (batch.empty()) throw InvalidInputError("batch is empty");
  if (batch.dim() != model.dim()) {
    throw InvalidInputError("batch dimension " + std::to_string(batch.dim()) + " does not match model dimension " +
                            std::to_string(model.dim()));
  }
}

// Per-chunk sufficient statistics for the gradient.
struct ChunkStats {
  double loglik = 0.0;
  Eigen::VectorXd resp_sum;                // K
  Eigen::MatrixXd whitened_sum;            // K x d: sum g a
  Eigen::MatrixXd whitened_sq_sum;         // K x d: sum g a^2
  std::vector<Eigen::MatrixXd> outer_sum;  // K of d x R: sum g a (a^T W)

  ChunkStats(std::size_t k, std::size_t d, std::size_t r)
      : resp_sum(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k))),
        whitened_sum(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d))),
        whitened_sq_sum(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d))),
        outer_sum(k, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(r))) {}
};

std::string component_diagnostics(const MfaModel& model) {
  std::ostringstream os;
  os << "min psi " << model.psi().minCoeff() << "; components:";
  const std::size_t shown = std::min<std::size_t>(model.num_components(), 16);
  for (std::size_t k = 0; k < shown; ++k) {
    os << " [" << k << ": pi=" << model.weights()(static_cast<Eigen::Index>(k))
       << " |mu|=" << model.parameters().means.row(static_cast<Eigen::Index>(k)).norm()
       << " |W|=" << model.loadings(k).norm() << "]";
  }
  if (shown < model.num_components()) os << " ...";
  return os.str();
}

std::string parameter_diagnostics(const MfaParameters& p) {
  std::ostringstream os;
  os << "non-finite parameters:";
  bool any = false;
  for (Eigen::Index k = 0; k < p.means.rows(); ++k) {
    const bool bad = !p.means.row(k).allFinite() || !p.loadings[static_cast<std::size_t>(k)].allFinite() ||
                     !std::isfinite(p.pi_logits(k));
    if (bad) {
      os << " component " << k;
      any = true;
    }
  }
  if (!p.psi_raw.allFinite()) {
    os << " psi_raw";
    any = true;
  }
  if (!any) os << " none (loss overflow)";
  return os.str();
}

}  // namespace

std::string to_string(Optimizer opt) {
  return opt == Optimizer::kPlainGradient ? "plain-gradient" : "adaptive-moment";
}

Optimizer optimizer_from_string(const std::string& name) {
  if (name == "plain-gradient" || name == "sgd") return Optimizer::kPlainGradient;
  if (name == "adaptive-moment" || name == "adam") return Optimizer::kAdaptiveMoment;
  throw InvalidInputError("unknown optimizer '" + name + "'");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidInputError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw InvalidInputError("learning_rate must be positive");
  if (max_epochs < 1) throw InvalidInputError("max_epochs must be >= 1");
  if (!(convergence_delta > 0.0)) throw InvalidInputError("convergence_delta must be positive");
  if (!(psi_floor > 0.0)) throw InvalidInputError("psi_floor must be positive");
  if (eval_interval < 1) throw InvalidInputError("eval_interval must be >= 1");
  if (heldout_size < 1) throw InvalidInputError("heldout_size must be >= 1");
  if (nll_window < 1) throw InvalidInputError("nll_window must be >= 1");
}

double nll_batch(const MfaModel& model, const ActivationBatch& batch) {
  check_batch(model, batch);
  const MixtureEvaluator eval(model);
  const std::size_t n = batch.size();
  std::vector<double> partial(num_chunks(n, kChunk), 0.0);
  const double work = static_cast<double>(model.num_components() * model.dim() * model.rank());
  parallel_chunks(n, kChunk, work, [&](std::size_t c, std::size_t begin, std::size_t end) {
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) s += eval.log_likelihood(batch.row(i));
    partial[c] = s;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return -total / static_cast<double>(n);
}

NllAndGradient nll_and_gradient(const MfaModel& model, const ActivationBatch& batch) {
  check_batch(model, batch);
  const std::size_t K = model.num_components(), d = model.dim(), R = model.rank();
  const MixtureEvaluator eval(model);
  const std::size_t n = batch.size();
  const std::size_t chunks = num_chunks(n, kChunk);
  std::vector<ChunkStats> stats(chunks, ChunkStats(K, d, R));

  parallel_chunks(n, kChunk, static_cast<double>(K * d * R), [&](std::size_t c, std::size_t begin, std::size_t end) {
    ChunkStats& s = stats[c];
    Eigen::VectorXd joint(static_cast<Eigen::Index>(K));
    std::vector<CapacitanceFactor::Evaluation> evals(K);
    for (std::size_t i = begin; i < end; ++i) {
      const Eigen::VectorXd x = batch.row(i);
      for (std::size_t k = 0; k < K; ++k) {
        evals[k] = eval.factor(k).evaluate(x);
        joint(static_cast<Eigen::Index>(k)) = model.log_weights()(static_cast<Eigen::Index>(k)) + evals[k].log_density;
      }
      const double lse = log_sum_exp(std::span<const double>(joint.data(), K));
      s.loglik += lse;
      for (std::size_t k = 0; k < K; ++k) {
        const auto ki = static_cast<Eigen::Index>(k);
        const double g = std::exp(joint(ki) - lse);
        const Eigen::VectorXd& a = evals[k].whitened;
        s.resp_sum(ki) += g;
        s.whitened_sum.row(ki) += g * a.transpose();
        s.whitened_sq_sum.row(ki) += g * a.cwiseAbs2().transpose();
        const Eigen::RowVectorXd aw = a.transpose() * model.loadings(k);
        s.outer_sum[k].noalias() += (g * a) * aw;
      }
    }
  });

  // Reduce chunks in order.
  ChunkStats total(K, d, R);
  for (const auto& s : stats) {
    total.loglik += s.loglik;
    total.resp_sum += s.resp_sum;
    total.whitened_sum += s.whitened_sum;
    total.whitened_sq_sum += s.whitened_sq_sum;
    for (std::size_t k = 0; k < K; ++k) total.outer_sum[k] += s.outer_sum[k];
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  NllAndGradient out;
  out.nll = -total.loglik * inv_n;
  ParameterGradient& g = out.gradient;
  g.means = -inv_n * total.whitened_sum;
  g.loadings.resize(K);
  Eigen::MatrixXd psi_terms(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(d));
  for (std::size_t k = 0; k < K; ++k) {
    const auto ki = static_cast<Eigen::Index>(k);
    const CapacitanceFactor& f = eval.factor(k);
    g.loadings[k] = -inv_n * (total.outer_sum[k] - total.resp_sum(ki) * f.precision_times_loadings());
    psi_terms.row(ki) =
        0.5 * (total.whitened_sq_sum.row(ki) - total.resp_sum(ki) * f.precision_diagonal().transpose());
  }

  // dPsi/dpsi_raw = exp(psi_raw) above the floor, 0 where the floor binds.
  const auto& raw = model.parameters().psi_raw;
  g.psi_raw.resize(static_cast<Eigen::Index>(d));
  std::vector<double> column(K);
  for (std::size_t j = 0; j < d; ++j) {
    const auto ji = static_cast<Eigen::Index>(j);
    for (std::size_t k = 0; k < K; ++k) column[k] = psi_terms(static_cast<Eigen::Index>(k), ji);
    const double e = std::exp(raw(ji));
    const double chain = e >= model.psi_floor() ? e : 0.0;
    g.psi_raw(ji) = -inv_n * sorted_sum(column) * chain;
  }
  g.pi_logits = -inv_n * (total.resp_sum - static_cast<double>(n) * model.weights());
  return out;
}

namespace {

class ParameterUpdater {
 public:
  ParameterUpdater(const TrainConfig& cfg, const MfaParameters& shape) : cfg_(cfg) {
    if (cfg.optimizer == Optimizer::kAdaptiveMoment) {
      m_ = zeros_like(shape);
      v_ = zeros_like(shape);
    }
  }

  void apply(MfaParameters& p, const ParameterGradient& g) {
    ++t_;
    if (cfg_.optimizer == Optimizer::kPlainGradient) {
      p.means -= cfg_.learning_rate * g.means;
      for (std::size_t k = 0; k < p.loadings.size(); ++k) p.loadings[k] -= cfg_.learning_rate * g.loadings[k];
      p.psi_raw -= cfg_.learning_rate * g.psi_raw;
      p.pi_logits -= cfg_.learning_rate * g.pi_logits;
      return;
    }
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    adam(p.means, m_.means, v_.means, g.means, bc1, bc2);
    for (std::size_t k = 0; k < p.loadings.size(); ++k) {
      adam(p.loadings[k], m_.loadings[k], v_.loadings[k], g.loadings[k], bc1, bc2);
    }
    adam(p.psi_raw, m_.psi_raw, v_.psi_raw, g.psi_raw, bc1, bc2);
    adam(p.pi_logits, m_.pi_logits, v_.pi_logits, g.pi_logits, bc1, bc2);
  }

 private:
  static MfaParameters zeros_like(const MfaParameters& p) {
    MfaParameters z;
    z.means = Eigen::MatrixXd::Zero(p.means.rows(), p.means.cols());
    for (const auto& w : p.loadings) z.loadings.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    z.psi_raw = Eigen::VectorXd::Zero(p.psi_raw.size());
    z.pi_logits = Eigen::VectorXd::Zero(p.pi_logits.size());
    return z;
  }

  template <typename Derived>
  void adam(Eigen::MatrixBase<Derived>& param, Eigen::MatrixBase<Derived>& m, Eigen::MatrixBase<Derived>& v,
            const Eigen::MatrixBase<Derived>& grad, double bc1, double bc2) const {
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * grad;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * grad.cwiseAbs2();
    param -= (cfg_.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg_.epsilon)).matrix();
  }

  const TrainConfig& cfg_;
  MfaParameters m_;
  MfaParameters v_;
  std::uint64_t t_ = 0;
};

double window_mean(const std::vector<std::pair<std::uint64_t, double>>& trace, std::size_t end, std::size_t w) {
  double s = 0.0;
  for (std::size_t i = end - w; i < end; ++i) s += trace[i].second;
  return s / static_cast<double>(w);
}

}  // namespace

std::size_t heldout_rows(const TrainConfig& cfg, std::uint64_t source_size) {
  // Never hold out more than half of the data.
  return static_cast<std::size_t>(std::min<std::uint64_t>(cfg.heldout_size, source_size / 2));
}

std::pair<MfaModel, TrainReport> fit(const MfaModel& init, ActivationSource& source, const TrainConfig& cfg,
                                     const std::function<void(const TrainProgress&)>& on_eval) {
  cfg.validate();
  if (source.dim() != init.dim()) {
    throw InvalidInputError("stream dimension " + std::to_string(source.dim()) + " does not match model dimension " +
                            std::to_string(init.dim()));
  }
  if (source.size() < 2) throw InvalidInputError("need at least two rows to hold out an evaluation slice");

  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&start] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  const std::size_t heldout_n = heldout_rows(cfg, source.size());
  const ActivationBatch heldout = source.read_head(heldout_n);
  source.exclude_head(heldout_n);

  MfaParameters params = init.parameters();
  ParameterUpdater updater(cfg, params);
  TrainReport report;
  std::uint64_t step = 0;

  auto make_model = [&](const MfaParameters& p) {
    try {
      return MfaModel(p, cfg.psi_floor);
    } catch (const InvalidInputError&) {
      throw TrainingAbortedError("training diverged at step " + std::to_string(step) + ": " +
                                     parameter_diagnostics(p),
                                 step);
    }
  };

  auto evaluate = [&](const MfaModel& model) {
    double nll = 0.0;
    try {
      nll = nll_batch(model, heldout);
    } catch (const NumericalError& e) {
      throw TrainingAbortedError(std::string(e.what()) + " at step " + std::to_string(step) + ": " +
                                     component_diagnostics(model),
                                 step);
    }
    if (!std::isfinite(nll)) {
      throw TrainingAbortedError("held-out NLL is not finite at step " + std::to_string(step) + ": " +
                                     component_diagnostics(model),
                                 step);
    }
    report.nll_trace.emplace_back(step, nll);
    if (on_eval) on_eval({step, nll, elapsed()});
    return nll;
  };

  auto converged_now = [&] {
    const std::size_t w = cfg.nll_window;
    const auto& tr = report.nll_trace;
    if (tr.size() < w + 1) return false;
    return std::abs(window_mean(tr, tr.size(), w) - window_mean(tr, tr.size() - 1, w)) < cfg.convergence_delta;
  };

  evaluate(make_model(params));
  std::uint64_t last_eval_step = 0;
  ActivationBatch batch;
  for (std::size_t epoch = 0; epoch < cfg.max_epochs && !report.converged; ++epoch) {
    source.rewind(derive_seed(cfg.seed, epoch));
    ++report.epochs_run;
    while (source.next_batch(cfg.batch_size, batch)) {
      const MfaModel model = make_model(params);
      NllAndGradient ng;
      try {
        ng = nll_and_gradient(model, batch);
      } catch (const NumericalError& e) {
        throw TrainingAbortedError(std::string(e.what()) + " at step " + std::to_string(step) + ": " +
                                       component_diagnostics(model),
                                   step);
      }
      if (!std::isfinite(ng.nll)) {
        throw TrainingAbortedError("batch NLL is not finite at step " + std::to_string(step) + ": " +
                                       component_diagnostics(model),
                                   step);
      }
      updater.apply(params, ng.gradient);
      ++step;
      if (step % cfg.eval_interval == 0) {
        evaluate(make_model(params));
        last_eval_step = step;
        if (converged_now()) {
          report.converged = true;
          break;
        }
      }
    }
  }
  MfaModel fitted = make_model(params);
  if (last_eval_step != step) evaluate(fitted);
  report.steps_run = step;
  report.final_nll = report.nll_trace.back().second;
  report.wall_time = elapsed();
  return {std::move(fitted), std::move(report)};
}

ActivationBatch sample_synthetic(const MfaModel& truth, std::size_t n, std::uint64_t seed,
                                 std::vector<std::size_t>* components) {
  if (n < 1) throw InvalidInputError("sample count must be >= 1");
  Rng rng(seed);
  const auto& w = truth.weights();
  std::discrete_distribution<std::size_t> pick(w.data(), w.data() + w.size());
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto d = static_cast<Eigen::Index>(truth.dim());
  const auto r = static_cast<Eigen::Index>(truth.rank());
  const Eigen::VectorXd noise_sd = truth.psi().cwiseSqrt();

  ActivationBatch out(truth.dim());
  out.reserve(n);
  if (components) components->assign(n, 0);
  Eigen::VectorXd z(r), eps(d);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = pick(rng);
    for (Eigen::Index j = 0; j < r; ++j) z(j) = normal(rng);
    for (Eigen::Index j = 0; j < d; ++j) eps(j) = noise_sd(j) * normal(rng);
    const Eigen::VectorXd x = truth.mean(k) + truth.loadings(k) * z + eps;
    out.append(x, i);
    if (components) (*components)[i] = k;
  }
  return out;
}

MfaModel make_synthetic_model(const SyntheticModelConfig& cfg) {
  if (cfg.components < 1 || cfg.dim < 1 || cfg.rank < 1 || cfg.rank > cfg.dim) {
    throw InvalidInputError("synthetic model needs K >= 1 and 1 <= R <= d");
  }
  if (!(cfg.noise_scale > 0.0) || cfg.separation < 0.0 || cfg.loading_scale < 0.0) {
    throw InvalidInputError("synthetic model scales must be non-negative (noise positive)");
  }
  Rng rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto K = static_cast<Eigen::Index>(cfg.components);
  const auto d = static_cast<Eigen::Index>(cfg.dim);
  const auto R = static_cast<Eigen::Index>(cfg.rank);

  // Rejection-sample centroids on a sphere-ish cloud wide enough to make the
  // separation constraint easy to satisfy.
  const double spread = std::max(cfg.separation, 1.0) * std::max(1.0, std::cbrt(static_cast<double>(K)));
  MfaParameters p;
  p.means.resize(K, d);
  for (Eigen::Index k = 0; k < K; ++k) {
    for (int attempt = 0;; ++attempt) {
      if (attempt > 100000) throw DegenerateInputError("could not place well-separated centroids");
      Eigen::RowVectorXd c(d);
      for (Eigen::Index j = 0; j < d; ++j) c(j) = spread * normal(rng);
      bool ok = true;
      for (Eigen::Index o = 0; o < k && ok; ++o) ok = (p.means.row(o) - c).norm() >= cfg.separation;
      if (ok) {
        p.means.row(k) = c;
        break;
      }
    }
  }
  for (Eigen::Index k = 0; k < K; ++k) {
    Eigen::MatrixXd w(d, R);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < R; ++j) w(i, j) = cfg.loading_scale * normal(rng);
    p.loadings.push_back(std::move(w));
  }
  p.psi_raw = Eigen::VectorXd::Constant(d, std::log(cfg.noise_scale * cfg.noise_scale));
  p.pi_logits = Eigen::VectorXd::Zero(K);
  return MfaModel(std::move(p));
}

}  // namespace mfa
