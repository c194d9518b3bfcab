#include "run.hpp"

#include <filesystem>

#include "lrhp/types.hpp"
#include "lrhp/util.hpp"

namespace lrhp::cli {

namespace fs = std::filesystem;

Run::Run(std::string command, std::string output_dir, json config)
    : command_(std::move(command)), output_dir_(std::move(output_dir)), config_(std::move(config)) {
  std::error_code ec;
  fs::create_directories(output_dir_, ec);
  if (ec) fail(ErrorCategory::io, "cannot create output directory '" + output_dir_ + "': " + ec.message());
  if (fs::exists(path_of("manifest.json")))
    fail(ErrorCategory::io, "output directory '" + output_dir_ + "' already holds a run manifest");
}

std::string Run::path_of(const std::string& name) const { return (fs::path(output_dir_) / name).string(); }

const std::string& Run::input(const std::string& role, const std::string& path) {
  if (!fs::is_regular_file(path)) fail(ErrorCategory::io, role + ": no such file '" + path + "'");
  inputs_[role] = {{"path", path}, {"digest", digest_file(path)}};
  return path;
}

std::string Run::claim(const std::string& name) {
  const std::string path = path_of(name);
  if (fs::exists(path)) fail(ErrorCategory::io, "refusing to overwrite '" + path + "'");
  if (artifacts_.contains(name)) fail(ErrorCategory::io, "artifact '" + name + "' written twice");
  return path;
}

void Run::record(const std::string& name) { artifacts_[name] = digest_file(path_of(name)); }

void Run::artifact(const std::string& name, std::string_view bytes) {
  write_file(claim(name), bytes);
  artifacts_[name] = digest_hex(bytes);
}

void Run::fail_after_finish(ErrorCategory category, std::string message) {
  deferred_.emplace(category, std::move(message));
}

void Run::finish() {
  const std::string config_text = config_.dump();
  json manifest = {{"command", command_},
                   {"config", config_},
                   {"config_digest", digest_hex(config_text)},
                   {"inputs", inputs_},
                   {"artifacts", artifacts_}};
  write_file(claim("manifest.json"), manifest.dump(2) + "\n");
  if (deferred_) throw *deferred_;
}

}  // namespace lrhp::cli
