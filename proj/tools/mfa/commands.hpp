#pragma once

#include <CLI11.hpp>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "params.hpp"
#include "run_dir.hpp"

namespace mfa::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitInvalidInput = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitTrainingAborted = 4;
inline constexpr int kExitNumerical = 5;

class Command {
 public:
  Command(CLI::App& root, const std::string& name, const std::string& help);
  virtual ~Command() = default;
  Command(const Command&) = delete;
  Command& operator=(const Command&) = delete;

  CLI::App* app() const { return app_; }
  // Merges --config into the flags, applies --threads and runs.
  int execute();

 protected:
  virtual int run() = 0;

  void add_model_option();
  void add_activations_option();
  // Throws InvalidInputError naming `flag` when `value` is empty.
  const std::string& required(const std::string& value, const std::string& flag) const;
  // Opens the run directory named by --out and writes the resolved config.
  RunDir open_run_dir() const;

  CLI::App* app_;
  Params params_;
  std::string config_path_;
  std::uint64_t seed_ = 0;
  std::size_t threads_ = 0;
  std::string out_;
  std::string model_;
  std::string activations_;
};

std::vector<std::unique_ptr<Command>> make_data_commands(CLI::App& root);
std::vector<std::unique_ptr<Command>> make_train_commands(CLI::App& root);
std::vector<std::unique_ptr<Command>> make_analysis_commands(CLI::App& root);

}  // namespace mfa::cli
