#include <iostream>

#include "commands.hpp"
#include "mfa/error.hpp"
#include "mfa/init.hpp"
#include "mfa/io.hpp"
#include "mfa/random.hpp"
#include "mfa/training.hpp"

namespace mfa::cli {
namespace {

json report_json(const TrainReport& r, const std::string& fingerprint) {
  json trace = json::array();
  for (const auto& [step, nll] : r.nll_trace) trace.push_back({{"step", step}, {"nll", nll}});
  return {{"steps_run", r.steps_run},     {"epochs_run", r.epochs_run},
          {"final_nll", r.final_nll},     {"converged", r.converged},
          {"evaluations", r.evaluations()}, {"wall_time", r.wall_time},
          {"fingerprint", fingerprint},   {"nll_trace", trace}};
}

class TrainCommand final : public Command {
 public:
  explicit TrainCommand(CLI::App& root)
      : Command(root, "train", "Initialize and fit an MFA on an activation file") {
    add_activations_option();
    params_.add("components", init_.components, "Number of components K");
    params_.add("rank", rank_, "Factor rank R");
    params_.add("init", init_strategy_, "Centroid initialization: kmeans, random or random-point");
    params_.add("init_sample_size", init_.sample_size, "Rows drawn for initialization");
    params_.add("init_sigma", init_.sigma, "Centroid scale for random initialization");
    params_.add("kmeans_iters", init_.kmeans_iters, "K-means passes over the sample");
    params_.add("kmeans_batch", init_.kmeans_batch, "K-means minibatch size");
    params_.add("batch_size", train_.batch_size, "Training minibatch size");
    params_.add("learning_rate", train_.learning_rate, "Step size");
    params_.add("max_epochs", train_.max_epochs, "Upper bound on passes over the training rows");
    params_.add("convergence_delta", train_.convergence_delta, "Stop when smoothed held-out NLL moves less");
    params_.add("optimizer", optimizer_, "adam or sgd");
    params_.add("eval_interval", train_.eval_interval, "Batches between held-out evaluations");
    params_.add("heldout_size", train_.heldout_size, "Leading rows held out for evaluation");
    params_.add("nll_window", train_.nll_window, "Evaluations averaged for the convergence test");
    params_.add("shuffle_buffer", shuffle_buffer_, "Rows in the streaming shuffle buffer");
    app_->footer(
        "Writes model.mfa, init.mfa, report.json, config.json and log.jsonl under --out.\n"
        "The model file is written atomically once fitting ends.\n"
        "Errors: exit 3 when the activation file is missing or malformed (no model file is\n"
        "written), 4 when training diverges, 2 on invalid settings.\n"
        "Determinism: the same config, --seed and input give a byte-identical model.mfa\n"
        "for any --threads value.");
  }

 protected:
  int run() override {
    init_.strategy = init_strategy_from_string(init_strategy_);
    train_.optimizer = optimizer_from_string(optimizer_);
    init_.seed = derive_seed(seed_, "init");
    train_.seed = derive_seed(seed_, "train");
    init_.validate();
    train_.validate();

    ActivationStream stream(required(activations_, "--activations"), shuffle_buffer_, derive_seed(seed_, "stream"));
    RunDir rd = open_run_dir();
    rd.log("start", {{"rows", stream.size()}, {"dim", stream.dim()}});

    // Initialization sees only training rows.
    stream.exclude_head(heldout_rows(train_, stream.size()));
    stream.rewind(derive_seed(seed_, "init.sample"));
    ActivationBatch sample(stream.dim());
    stream.next_batch(init_.sample_size, sample);
    const MfaModel init = init_model(init_, sample, rank_);
    save_model(rd.file("init.mfa"), init);
    rd.log("init", {{"strategy", to_string(init_.strategy)}, {"sample_rows", sample.size()}});

    auto on_eval = [&rd](const TrainProgress& p) {
      rd.log("eval", {{"step", p.step}, {"nll", p.nll}, {"wall_time", p.wall_time}});
      std::cerr << "step " << p.step << "  held-out NLL " << p.nll << "\n";
    };
    try {
      auto [model, report] = fit(init, stream, train_, on_eval);
      save_model(rd.file("model.mfa"), model);
      const json rj = report_json(report, model_fingerprint(model));
      rd.write_json("report.json", rj);
      rd.log("done", {{"converged", report.converged}, {"final_nll", report.final_nll}});
      std::cout << rd.file("model.mfa").string() << "\n";
    } catch (const TrainingAbortedError& e) {
      rd.log("aborted", {{"step", e.step()}, {"reason", e.what()}});
      rd.write_json("report.json", {{"aborted", true}, {"step", e.step()}, {"reason", e.what()}});
      throw;
    }
    return kExitOk;
  }

 private:
  InitConfig init_;
  TrainConfig train_;
  std::size_t rank_ = 2;
  std::string init_strategy_ = "kmeans";
  std::string optimizer_ = "adam";
  std::size_t shuffle_buffer_ = 65'536;
};

}  // namespace

std::vector<std::unique_ptr<Command>> make_train_commands(CLI::App& root) {
  std::vector<std::unique_ptr<Command>> out;
  out.push_back(std::make_unique<TrainCommand>(root));
  return out;
}

}  // namespace mfa::cli
