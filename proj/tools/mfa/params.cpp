#include "params.hpp"

#include <fstream>

#include "mfa/error.hpp"

namespace mfa::cli {

std::string Params::flag_name(const std::string& key) {
  std::string flag = "--" + key;
  for (char& c : flag) {
    if (c == '_') c = '-';
  }
  return flag;
}

void Params::apply(const json& config) {
  if (!config.is_object()) throw InvalidInputError("config document must be a JSON object");
  for (const auto& [key, value] : config.items()) {
    if (key == "command") {
      if (value != app_->get_name()) {
        throw InvalidInputError("config was written for '" + value.dump() + "', not '" + app_->get_name() + "'");
      }
      continue;
    }
    auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.key == key; });
    if (it == entries_.end()) throw InvalidInputError("unknown config key '" + key + "'");
    if (it->option->count() > 0) continue;
    try {
      it->load(value);
    } catch (const json::exception& e) {
      throw InvalidInputError("config key '" + key + "': " + e.what());
    }
  }
}

json Params::resolved() const {
  json out = json::object();
  out["command"] = app_->get_name();
  for (const Entry& e : entries_) out[e.key] = e.dump();
  return out;
}

json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("config " + path + ": " + e.what(), e.byte);
  }
}

}  // namespace mfa::cli
