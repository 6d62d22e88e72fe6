#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "commands.hpp"
#include "mfa/decomposition.hpp"
#include "mfa/error.hpp"
#include "mfa/geometry.hpp"
#include "mfa/init.hpp"
#include "mfa/io.hpp"
#include "mfa/random.hpp"
#include "mfa/steering.hpp"

namespace mfa::cli {
namespace {

constexpr std::size_t kRowsPerRead = 4096;

// Output files are written under a temporary name and renamed on success.
void commit_text(const std::filesystem::path& path, const std::ostringstream& text) {
  write_file_atomic(path, text.str());
}

std::ostringstream text_buffer() {
  std::ostringstream os;
  os << std::setprecision(17);
  return os;
}

json mse_json(const MseEstimate& e) {
  return {{"mse", e.mse}, {"standard_error", e.standard_error}, {"count", e.count}};
}

void check_dims(const MfaModel& model, const ActivationSource& source) {
  if (source.dim() != model.dim()) {
    throw ModelMismatchError("activation dimension " + std::to_string(source.dim()) +
                             " does not match model dimension " + std::to_string(model.dim()));
  }
}

std::size_t checked_component(const MfaModel& model, std::int64_t c, const std::string& flag) {
  if (c < 0 || static_cast<std::size_t>(c) >= model.num_components()) {
    throw InvalidInputError(flag + " must lie in [0, " + std::to_string(model.num_components()) + ")");
  }
  return static_cast<std::size_t>(c);
}

class MseCommand final : public Command {
 public:
  explicit MseCommand(CLI::App& root)
      : Command(root, "mse", "Reconstruction MSE of a model against a nearest-centroid k-means baseline") {
    add_model_option();
    add_activations_option();
    params_.add("baseline_model", baseline_model_,
                "Model whose centroids form the baseline; empty fits k-means with the model's K");
    params_.add("kmeans_sample_size", kmeans_sample_size_, "Rows drawn to fit the baseline k-means");
    params_.add("kmeans_iters", kmeans_iters_, "K-means passes over the sample");
    params_.add("kmeans_batch", kmeans_batch_, "K-means minibatch size");
    app_->footer(
        "Writes mse.json with soft and hard MFA reconstruction MSE, the baseline MSE, their\n"
        "standard errors and the baseline/MFA ratio. MSE is normalized by 1/(N d).\n"
        "Errors: exit 2 on a dimension mismatch, 3 on unreadable files.\n"
        "Determinism: the same files and --seed give identical numbers.");
  }

 protected:
  int run() override {
    const LoadedModel lm = load_model(required(model_, "--model"));
    ActivationStream stream(required(activations_, "--activations"), 0, 0);
    check_dims(lm.model, stream);
    RunDir rd = open_run_dir();

    Eigen::MatrixXd centroids;
    if (!baseline_model_.empty()) {
      centroids = load_model(baseline_model_).model.parameters().means;
    } else {
      ActivationStream sampler(activations_, 65'536, derive_seed(seed_, "mse.sample"));
      sampler.rewind(derive_seed(seed_, "mse.sample.pass"));
      ActivationBatch sample(sampler.dim());
      sampler.next_batch(kmeans_sample_size_, sample);
      centroids = minibatch_kmeans(sample, lm.model.num_components(), kmeans_iters_,
                                   derive_seed(seed_, "mse.kmeans"), kmeans_batch_)
                      .centroids;
    }
    const MseEstimate soft = dataset_mse(lm.model, stream, ReconstructionMode::kSoft);
    const MseEstimate hard = dataset_mse(lm.model, stream, ReconstructionMode::kHard);
    const MseEstimate base = kmeans_baseline_mse(centroids, stream);
    const json doc = {{"model_fingerprint", lm.fingerprint},
                      {"mfa_soft", mse_json(soft)},
                      {"mfa_hard", mse_json(hard)},
                      {"kmeans", mse_json(base)},
                      {"ratio", soft.mse > 0.0 ? json(base.mse / soft.mse) : json(nullptr)}};
    rd.write_json("mse.json", doc);
    std::cout << doc.dump(2) << "\n";
    return kExitOk;
  }

 private:
  std::string baseline_model_;
  std::size_t kmeans_sample_size_ = 100'000;
  std::size_t kmeans_iters_ = 50;
  std::size_t kmeans_batch_ = 8192;
};

class AssignCommand final : public Command {
 public:
  explicit AssignCommand(CLI::App& root)
      : Command(root, "assign", "Hard-assign every activation row to its most responsible component") {
    add_model_option();
    add_activations_option();
    app_->footer(
        "Writes assignments.tsv (id, component, responsibility, log_likelihood) in file order.\n"
        "Ties go to the lowest component index.\n"
        "Errors: exit 2 on a dimension mismatch, 3 on unreadable files.\n"
        "Determinism: output depends only on the two input files.");
  }

 protected:
  int run() override {
    const LoadedModel lm = load_model(required(model_, "--model"));
    ActivationStream stream(required(activations_, "--activations"), 0, 0);
    check_dims(lm.model, stream);
    RunDir rd = open_run_dir();
    const MixtureEvaluator eval(lm.model);
    std::ostringstream os = text_buffer();
    os << "id\tcomponent\tresponsibility\tlog_likelihood\n";
    stream.rewind(0);
    ActivationBatch batch;
    while (stream.next_batch(kRowsPerRead, batch)) {
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const Eigen::VectorXd x = batch.row(i);
        const Eigen::VectorXd r = eval.responsibilities(x);
        const std::size_t k = eval.assign(x);
        os << batch.id(i) << '\t' << k << '\t' << r(static_cast<Eigen::Index>(k)) << '\t' << eval.log_likelihood(x)
           << '\n';
      }
    }
    commit_text(rd.file("assignments.tsv"), os);
    rd.log("assign", {{"rows", stream.size()}});
    return kExitOk;
  }
};

class DecomposeCommand final : public Command {
 public:
  explicit DecomposeCommand(CLI::App& root)
      : Command(root, "decompose", "Dictionary decomposition records and cumulative feature paths") {
    add_model_option();
    add_activations_option();
    params_.add("limit", limit_, "Rows to decompose, from the start of the file");
    params_.add("mode", mode_, "soft: all active components by magnitude; hard: assigned component only");
    app_->footer(
        "Writes decompositions.jsonl (per row: responsibilities and latent coordinates of\n"
        "active components) and contributions.csv: one line per feature in order, with the\n"
        "running sum c0..c{d-1} and the residual norm ||x - running sum||.\n"
        "Errors: exit 2 on a dimension mismatch or unknown mode, 3 on unreadable files.\n"
        "Determinism: output depends only on the inputs and --limit/--mode.");
  }

 protected:
  int run() override {
    if (mode_ != "soft" && mode_ != "hard") throw InvalidInputError("--mode must be soft or hard");
    const LoadedModel lm = load_model(required(model_, "--model"));
    ActivationStream stream(required(activations_, "--activations"), 0, 0);
    check_dims(lm.model, stream);
    RunDir rd = open_run_dir();
    const MfaModel& m = lm.model;
    const MixtureEvaluator eval(m);

    std::ostringstream records = text_buffer();
    std::ostringstream csv = text_buffer();
    csv << "id,step,component,label,magnitude,residual_norm";
    for (std::size_t j = 0; j < m.dim(); ++j) csv << ",c" << j;
    csv << '\n';

    const ActivationBatch rows = stream.read_head(limit_);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const Eigen::VectorXd x = rows.row(i);
      const Decomposition dec = decompose(eval, x);
      json comps = json::array();
      for (std::size_t k : dec.active_set) {
        const auto ki = static_cast<Eigen::Index>(k);
        std::vector<double> z;
        for (Eigen::Index r = 0; r < dec.latents.cols(); ++r) z.push_back(dec.latents(ki, r));
        comps.push_back({{"component", k}, {"responsibility", dec.responsibilities(ki)}, {"latent", z}});
      }
      records << json{{"id", rows.id(i)}, {"log_likelihood", eval.log_likelihood(x)}, {"components", comps}}.dump()
              << '\n';

      const auto contribs = mode_ == "soft" ? soft_feature_contributions(m, dec) : feature_contributions(m, x);
      Eigen::VectorXd running = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.dim()));
      for (std::size_t s = 0; s < contribs.size(); ++s) {
        running += contribs[s].vector;
        csv << rows.id(i) << ',' << s << ',' << contribs[s].component << ',' << to_string(contribs[s].label) << ','
            << contribs[s].magnitude << ',' << (x - running).norm();
        for (Eigen::Index j = 0; j < running.size(); ++j) csv << ',' << running(j);
        csv << '\n';
      }
    }
    commit_text(rd.file("decompositions.jsonl"), records);
    commit_text(rd.file("contributions.csv"), csv);
    rd.log("decompose", {{"rows", rows.size()}, {"mode", mode_}});
    return kExitOk;
  }

 private:
  std::size_t limit_ = 100;
  std::string mode_ = "soft";
};

class NeighborsCommand final : public Command {
 public:
  explicit NeighborsCommand(CLI::App& root)
      : Command(root, "neighbors", "Exact kNN graph over centroids and BFS neighborhoods") {
    add_model_option();
    params_.add("k", k_, "Neighbors per component (1 <= k < K)");
    params_.add("bfs_from", bfs_from_, "Component to start a BFS from; -1 skips the BFS");
    params_.add("max_nodes", max_nodes_, "BFS truncation");
    app_->footer(
        "Writes graph.tsv (node, neighbor, distance; ties by lower index) and, with\n"
        "--bfs-from, bfs.txt with one component per line in visiting order.\n"
        "Errors: exit 2 when k >= K or the BFS seed is out of range.\n"
        "Determinism: output depends only on the model file and flags.");
  }

 protected:
  int run() override {
    const LoadedModel lm = load_model(required(model_, "--model"));
    const NeighborhoodGraph g = build_knn_graph(lm.model, k_);
    std::vector<std::size_t> order;
    if (bfs_from_ >= 0) order = bfs_neighborhood(g, checked_component(lm.model, bfs_from_, "--bfs-from"), max_nodes_);
    RunDir rd = open_run_dir();
    std::ostringstream os = text_buffer();
    write_graph_tsv(os, g);
    commit_text(rd.file("graph.tsv"), os);
    if (bfs_from_ >= 0) {
      std::ostringstream bfs;
      for (std::size_t n : order) bfs << n << '\n';
      commit_text(rd.file("bfs.txt"), bfs);
    }
    rd.log("neighbors", {{"k", k_}, {"bfs_nodes", order.size()}});
    return kExitOk;
  }

 private:
  std::size_t k_ = 5;
  std::int64_t bfs_from_ = -1;
  std::size_t max_nodes_ = 25;
};

void write_ranked(const std::filesystem::path& path, const RankedItems& r) {
  std::ostringstream os = text_buffer();
  os << "rank\tid\tscore\n";
  for (std::size_t i = 0; i < r.items.size(); ++i) os << i << '\t' << r.items[i].id << '\t' << r.items[i].score << '\n';
  commit_text(path, os);
}

class ContextsCommand final : public Command {
 public:
  explicit ContextsCommand(CLI::App& root)
      : Command(root, "contexts", "Highest-likelihood rows of a component and loading extremes") {
    add_model_option();
    add_activations_option();
    params_.add("component", component_, "Component index");
    params_.add("n", n_, "Rows to keep");
    params_.add("loading", loading_, "Latent coordinate for extremes; -1 skips them");
    app_->footer(
        "Writes contexts.tsv (rank, id, log-density; ties by earlier row) and, with --loading,\n"
        "loading_top.tsv and loading_bottom.tsv among rows hard-assigned to the component.\n"
        "contexts.json flags lists shorter than --n. Ids are row positions in the file.\n"
        "Errors: exit 2 on an invalid component or loading index, 3 on unreadable files.\n"
        "Determinism: output depends only on the inputs and flags.");
  }

 protected:
  int run() override {
    const LoadedModel lm = load_model(required(model_, "--model"));
    ActivationStream stream(required(activations_, "--activations"), 0, 0);
    check_dims(lm.model, stream);
    const std::size_t c = checked_component(lm.model, component_, "--component");
    RunDir rd = open_run_dir();
    const RankedItems top = top_contexts(lm.model, stream, c, n_);
    write_ranked(rd.file("contexts.tsv"), top);
    json summary = {{"component", c}, {"contexts", top.items.size()}, {"contexts_truncated", top.truncated}};
    if (loading_ >= 0) {
      const LoadingExtremes ex = loading_extremes(lm.model, stream, c, static_cast<std::size_t>(loading_), n_);
      write_ranked(rd.file("loading_top.tsv"), ex.top);
      write_ranked(rd.file("loading_bottom.tsv"), ex.bottom);
      summary["loading"] = loading_;
      summary["extremes"] = ex.top.items.size();
      summary["extremes_truncated"] = ex.top.truncated;
    }
    rd.write_json("contexts.json", summary);
    return kExitOk;
  }

 private:
  std::int64_t component_ = 0;
  std::size_t n_ = 25;
  std::int64_t loading_ = -1;
};

class SteerCommand final : public Command {
 public:
  explicit SteerCommand(CLI::App& root)
      : Command(root, "steer", "Export a steering spec and optionally apply it to activations") {
    add_model_option();
    params_.add("component", component_, "Component index");
    params_.add("kind", kind_, "centroid-interpolation or loading-offset");
    params_.add("alpha", alpha_, "Interpolation strength in [0, 1] (centroid kind)");
    params_.add("v", v_, "Latent offset, R values (loading kind)");
    params_.add("apply_to", apply_to_, "Activation file to steer; writes steered.mfaa");
    app_->footer(
        "Writes steering.spec (header line, then base64 little-endian float32 blocks) and,\n"
        "with --apply-to, steered.mfaa holding every row after the intervention.\n"
        "Errors: exit 2 on alpha outside [0, 1], a v of the wrong length or a dimension\n"
        "mismatch; 3 on unreadable files.\n"
        "Determinism: output depends only on the model, flags and input rows.");
  }

 protected:
  int run() override {
    const LoadedModel lm = load_model(required(model_, "--model"));
    const std::size_t c = checked_component(lm.model, component_, "--component");
    const SteeringKind kind = steering_kind_from_string(kind_);
    SteeringSpec spec;
    if (kind == SteeringKind::kCentroidInterpolation) {
      spec = make_centroid_spec(lm.model, c, alpha_);
    } else {
      spec = make_loading_spec(lm.model, c, Eigen::Map<const Eigen::VectorXd>(v_.data(), static_cast<Eigen::Index>(v_.size())));
    }
    std::optional<ActivationBatch> input;
    if (!apply_to_.empty()) {
      input = read_activations(apply_to_);
      if (input->dim() != lm.model.dim()) throw ModelMismatchError("--apply-to dimension does not match the model");
    }
    RunDir rd = open_run_dir();
    export_spec(lm.model, spec, rd.file("steering.spec"));
    if (input) {
      ActivationBatch steered(input->dim());
      steered.reserve(input->size());
      for (std::size_t i = 0; i < input->size(); ++i) steered.append(apply_steering(input->row(i), spec));
      write_activations(rd.file("steered.mfaa"), steered);
    }
    rd.log("steer", {{"kind", to_string(kind)}, {"component", c}, {"fingerprint", lm.fingerprint}});
    std::cout << rd.file("steering.spec").string() << "\n";
    return kExitOk;
  }

 private:
  std::int64_t component_ = 0;
  std::string kind_ = "centroid-interpolation";
  double alpha_ = 0.5;
  std::vector<double> v_;
  std::string apply_to_;
};

class StatsCommand final : public Command {
 public:
  explicit StatsCommand(CLI::App& root)
      : Command(root, "stats", "Pairwise centroid distance statistics and model summary") {
    add_model_option();
    app_->footer(
        "Writes stats.json: K, d, R, fingerprint, mixture weights and the mean and\n"
        "population standard deviation of pairwise centroid distances.\n"
        "Errors: exit 2 when K < 2, 3 on an unreadable model.\n"
        "Determinism: output depends only on the model file.");
  }

 protected:
  int run() override {
    const LoadedModel lm = load_model(required(model_, "--model"));
    const PairwiseDistanceStats s = pairwise_centroid_stats(lm.model);
    RunDir rd = open_run_dir();
    const Eigen::VectorXd w = lm.model.weights();
    const json doc = {{"components", lm.model.num_components()},
                      {"dim", lm.model.dim()},
                      {"rank", lm.model.rank()},
                      {"fingerprint", lm.fingerprint},
                      {"weights", std::vector<double>(w.data(), w.data() + w.size())},
                      {"pairwise_mean", s.mean},
                      {"pairwise_std", s.std}};
    rd.write_json("stats.json", doc);
    std::cout << doc.dump(2) << "\n";
    return kExitOk;
  }
};

}  // namespace

std::vector<std::unique_ptr<Command>> make_analysis_commands(CLI::App& root) {
  std::vector<std::unique_ptr<Command>> out;
  out.push_back(std::make_unique<MseCommand>(root));
  out.push_back(std::make_unique<AssignCommand>(root));
  out.push_back(std::make_unique<DecomposeCommand>(root));
  out.push_back(std::make_unique<NeighborsCommand>(root));
  out.push_back(std::make_unique<ContextsCommand>(root));
  out.push_back(std::make_unique<SteerCommand>(root));
  out.push_back(std::make_unique<StatsCommand>(root));
  return out;
}

}  // namespace mfa::cli
