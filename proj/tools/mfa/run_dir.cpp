#include "run_dir.hpp"

#include "mfa/error.hpp"
#include "mfa/io.hpp"

namespace mfa::cli {

RunDir::RunDir(const std::filesystem::path& root, const nlohmann::json& resolved_config) : root_(root) {
  std::error_code ec;
  std::filesystem::create_directories(root_, ec);
  if (ec) throw IoError("cannot create run directory " + root_.string() + ": " + ec.message());
  write_json("config.json", resolved_config);
  log_.open(root_ / "log.jsonl", std::ios::trunc);
  if (!log_) throw IoError("cannot open " + (root_ / "log.jsonl").string());
}

void RunDir::log(const std::string& event, nlohmann::json fields) {
  fields["event"] = event;
  log_ << fields.dump() << '\n';
  log_.flush();
}

void RunDir::write_json(const std::string& name, const nlohmann::json& doc) const {
  write_file_atomic(root_ / name, doc.dump(2) + "\n");
}

}  // namespace mfa::cli
