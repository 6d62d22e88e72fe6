#include <cmath>
#include <iostream>

#include "commands.hpp"
#include "mfa/error.hpp"
#include "mfa/io.hpp"
#include "mfa/random.hpp"
#include "mfa/training.hpp"

namespace mfa::cli {
namespace {

class SynthCommand final : public Command {
 public:
  explicit SynthCommand(CLI::App& root)
      : Command(root, "synth", "Sample a synthetic activation file from a random ground-truth MFA") {
    params_.add("components", gen_.components, "Ground-truth components K");
    params_.add("dim", gen_.dim, "Dimension d");
    params_.add("rank", gen_.rank, "Factor rank R");
    params_.add("separation", gen_.separation, "Minimum pairwise centroid distance");
    params_.add("noise_scale", gen_.noise_scale, "Noise standard deviation per coordinate");
    params_.add("loading_scale", gen_.loading_scale, "Standard deviation of loading entries");
    params_.add("count", count_, "Rows to sample");
    app_->footer(
        "Writes activations.mfaa (rows in sampling order) and truth.mfa under --out.\n"
        "Errors: exit 2 on invalid shapes, 3 on I/O failure.\n"
        "Determinism: the same flags and --seed give byte-identical files.");
  }

 protected:
  int run() override {
    RunDir rd = open_run_dir();
    SyntheticModelConfig gen = gen_;
    gen.seed = derive_seed(seed_, "synth.model");
    const MfaModel truth = make_synthetic_model(gen);
    const ActivationBatch data = sample_synthetic(truth, count_, derive_seed(seed_, "synth.samples"));
    write_activations(rd.file("activations.mfaa"), data);
    save_model(rd.file("truth.mfa"), truth);
    const std::string fp = model_fingerprint(truth);
    rd.log("synth", {{"count", count_}, {"truth_fingerprint", fp}});
    std::cout << rd.file("activations.mfaa").string() << "\n";
    return kExitOk;
  }

 private:
  SyntheticModelConfig gen_;
  std::size_t count_ = 60'000;
};

class ValidateCommand final : public Command {
 public:
  explicit ValidateCommand(CLI::App& root)
      : Command(root, "validate", "Check activation and model files and print their shapes as JSON") {
    add_activations_option();
    add_model_option();
    app_->footer(
        "Reads every activation row and rejects non-finite values. With both files, their\n"
        "dimensions must agree. --out is optional; the report always goes to stdout.\n"
        "Errors: exit 3 on format errors (message carries the byte offset), 2 on a\n"
        "dimension mismatch. Determinism: output depends only on the file contents.");
  }

 protected:
  int run() override {
    if (activations_.empty() && model_.empty()) {
      throw InvalidInputError("validate: give --activations and/or --model");
    }
    json report = json::object();
    std::size_t act_dim = 0;
    if (!activations_.empty()) {
      ActivationStream stream(activations_, 0, 0);
      const ActivationFileHeader& h = stream.header();
      stream.rewind(0);
      ActivationBatch batch;
      std::uint64_t row = 0;
      while (stream.next_batch(4096, batch)) {
        for (std::size_t i = 0; i < batch.size(); ++i, ++row) {
          for (float v : batch.row_span(i)) {
            if (!std::isfinite(v)) {
              throw FormatError("non-finite value in row " + std::to_string(row),
                                kActivationHeaderBytes + row * h.dim * sizeof(float));
            }
          }
        }
      }
      act_dim = h.dim;
      report["activations"] = {{"path", activations_}, {"version", h.version}, {"dim", h.dim},
                               {"dtype", h.dtype}, {"count", h.count}};
    }
    if (!model_.empty()) {
      const LoadedModel lm = load_model(model_);
      report["model"] = {{"path", model_},
                         {"components", lm.model.num_components()},
                         {"dim", lm.model.dim()},
                         {"rank", lm.model.rank()},
                         {"fingerprint", lm.fingerprint}};
      if (act_dim != 0 && act_dim != lm.model.dim()) {
        throw ModelMismatchError("activation dimension " + std::to_string(act_dim) + " does not match model dimension " +
                                 std::to_string(lm.model.dim()));
      }
    }
    if (!out_.empty()) {
      RunDir rd = open_run_dir();
      rd.write_json("validate.json", report);
    }
    std::cout << report.dump(2) << "\n";
    return kExitOk;
  }
};

}  // namespace

std::vector<std::unique_ptr<Command>> make_data_commands(CLI::App& root) {
  std::vector<std::unique_ptr<Command>> out;
  out.push_back(std::make_unique<SynthCommand>(root));
  out.push_back(std::make_unique<ValidateCommand>(root));
  return out;
}

}  // namespace mfa::cli
