#include <iostream>

#include "commands.hpp"
#include "mfa/error.hpp"
#include "mfa/parallel.hpp"

namespace mfa::cli {

Command::Command(CLI::App& root, const std::string& name, const std::string& help)
    : app_(root.add_subcommand(name, help)), params_(app_) {
  app_->add_option("--config", config_path_, "JSON config document; flags override its values");
  params_.add("seed", seed_, "Top-level seed; every module derives its own stream from it");
  params_.add("threads", threads_, "Worker thread cap (0 = all cores); results do not depend on it");
  params_.add("out", out_, "Run directory for the resolved config, log and artifacts");
}

void Command::add_model_option() { params_.add("model", model_, "Model file (MFA1)"); }

void Command::add_activations_option() { params_.add("activations", activations_, "Activation file (MFAA)"); }

const std::string& Command::required(const std::string& value, const std::string& flag) const {
  if (value.empty()) throw InvalidInputError(app_->get_name() + ": " + flag + " is required");
  return value;
}

RunDir Command::open_run_dir() const {
  return RunDir(required(out_, "--out"), params_.resolved());
}

int Command::execute() {
  if (!config_path_.empty()) params_.apply(read_config_file(config_path_));
  set_num_threads(threads_);
  return run();
}

}  // namespace mfa::cli

int main(int argc, char** argv) {
  using namespace mfa::cli;
  CLI::App app{"Mixture-of-factor-analyzers toolkit for activation datasets"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "mfa 0.1.0");

  std::vector<std::unique_ptr<Command>> commands;
  for (auto* make : {&make_data_commands, &make_train_commands, &make_analysis_commands}) {
    for (auto& c : make(app)) commands.push_back(std::move(c));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  for (auto& cmd : commands) {
    if (!cmd->app()->parsed()) continue;
    const std::string name = cmd->app()->get_name();
    try {
      return cmd->execute();
    } catch (const mfa::TrainingAbortedError& e) {
      std::cerr << "mfa " << name << ": training aborted: " << e.what() << "\n";
      return kExitTrainingAborted;
    } catch (const mfa::FormatError& e) {
      std::cerr << "mfa " << name << ": format error: " << e.what() << "\n";
      return kExitIo;
    } catch (const mfa::IoError& e) {
      std::cerr << "mfa " << name << ": I/O error: " << e.what() << "\n";
      return kExitIo;
    } catch (const mfa::NumericalError& e) {
      std::cerr << "mfa " << name << ": numerical error: " << e.what() << "\n";
      return kExitNumerical;
    } catch (const mfa::Error& e) {
      std::cerr << "mfa " << name << ": " << e.what() << "\n";
      return kExitInvalidInput;
    } catch (const std::exception& e) {
      std::cerr << "mfa " << name << ": " << e.what() << "\n";
      return kExitFailure;
    }
  }
  return kExitFailure;
}
