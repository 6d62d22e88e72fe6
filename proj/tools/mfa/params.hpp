#pragma once

#include <CLI11.hpp>
#include <functional>
#include <json.hpp>
#include <string>
#include <vector>

namespace mfa::cli {

using nlohmann::json;

// Binds subcommand flags to keys of a JSON config document. Values given on
// the command line win over the document; the document wins over defaults.
// Keys use snake_case, flags the same name in kebab-case.
class Params {
 public:
  explicit Params(CLI::App* app) : app_(app) {}

  template <class T>
  CLI::Option* add(const std::string& key, T& value, const std::string& help) {
    CLI::Option* opt = app_->add_option(flag_name(key), value, help)->capture_default_str();
    entries_.push_back({key, opt,
                        [&value](const json& j) { value = j.get<T>(); },
                        [&value] { return json(value); }});
    return opt;
  }

  // Rejects unknown keys and a "command" entry naming another subcommand.
  void apply(const json& config);
  json resolved() const;

 private:
  static std::string flag_name(const std::string& key);

  struct Entry {
    std::string key;
    CLI::Option* option;
    std::function<void(const json&)> load;
    std::function<json()> dump;
  };

  CLI::App* app_;
  std::vector<Entry> entries_;
};

json read_config_file(const std::string& path);

}  // namespace mfa::cli
