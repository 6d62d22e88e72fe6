#pragma once

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>

namespace mfa::cli {

// Output directory of one invocation: the resolved config, a JSON-lines
// event log and the artifacts.
class RunDir {
 public:
  RunDir(const std::filesystem::path& root, const nlohmann::json& resolved_config);

  std::filesystem::path file(const std::string& name) const { return root_ / name; }
  void log(const std::string& event, nlohmann::json fields = nlohmann::json::object());
  void write_json(const std::string& name, const nlohmann::json& doc) const;

 private:
  std::filesystem::path root_;
  std::ofstream log_;
};

}  // namespace mfa::cli
