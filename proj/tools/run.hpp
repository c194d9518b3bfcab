#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lrhp/types.hpp"

namespace lrhp::cli {

using json = nlohmann::json;

/// Registers options on a subcommand and remembers how to read each bound
/// value back, so the resolved configuration can be written to the manifest.
class OptionSet {
 public:
  explicit OptionSet(CLI::App* app) : app_(app) {}

  template <typename T>
  CLI::Option* add(const std::string& name, T& value, const std::string& help) {
    dump_.push_back([name, &value](json& j) { j[name] = value; });
    return app_->add_option("--" + name, value, help)->capture_default_str();
  }
  CLI::Option* flag(const std::string& name, bool& value, const std::string& help) {
    dump_.push_back([name, &value](json& j) { j[name] = value; });
    return app_->add_flag("--" + name, value, help);
  }

  json values() const {
    json j = json::object();
    for (const auto& d : dump_) d(j);
    return j;
  }
  CLI::App* app() const { return app_; }

 private:
  CLI::App* app_;
  std::vector<std::function<void(json&)>> dump_;
};

/// One invocation: collects input and artifact digests and writes
/// manifest.json into the output directory when finished. Artifacts are
/// write-once; a run never replaces an existing file.
class Run {
 public:
  Run(std::string command, std::string output_dir, json config);

  /// Checks that `path` exists and records its digest under `role`.
  const std::string& input(const std::string& role, const std::string& path);
  /// Writes `bytes` to output_dir/name and records its digest.
  void artifact(const std::string& name, std::string_view bytes);
  /// Path for an artifact written by library code; call `record` afterwards.
  std::string claim(const std::string& name);
  void record(const std::string& name);
  /// The run still completes with its manifest, then reports this failure.
  void fail_after_finish(ErrorCategory category, std::string message);
  void finish();

 private:
  std::string path_of(const std::string& name) const;

  std::string command_;
  std::string output_dir_;
  json config_;
  std::map<std::string, json> inputs_;
  std::map<std::string, std::string> artifacts_;
  std::optional<Error> deferred_;
};

}  // namespace lrhp::cli
