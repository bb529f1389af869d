#pragma once

// Runtime settings. Precedence, highest first: command-line flags,
// environment (CELLFLOW_PORT), config file (TOML, path from --config or
// CELLFLOW_CONFIG), built-in defaults. Unknown keys are rejected.
//
//   [flow]       lambda, iterations
//   [patches]    patch_size, overlap, frame_count, frame_stride, literal_step
//   [diffusion]  schedule ("cosine" | "linear-log-snr"), steps
//   [stats]      px_per_micron
//   [serve]      port

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include "cellflow/annotation.hpp"
#include "cellflow/diffusion.hpp"
#include "cellflow/flow.hpp"
#include "cellflow/patches.hpp"

namespace cellflow::config {

struct Config {
  flow::FlowParams flow;
  patches::PatchSpec patches;
  diffusion::ScheduleKind schedule = diffusion::ScheduleKind::cosine;
  int steps = 1000;
  double px_per_micron = annotation::kDefaultPxPerMicron;
  int port = 8080;

  void validate() const;
};

using EnvLookup = std::function<std::optional<std::string>(std::string_view)>;

// Reads the process environment.
std::optional<std::string> process_env(std::string_view name);

// Overlays a TOML document onto `base`.
Config apply_toml(Config base, std::string_view toml_text, std::string_view origin = "config");

// Defaults, then the config file, then environment overrides. Flags are
// applied afterwards by the caller.
Config resolve(const std::optional<std::filesystem::path>& config_flag, const EnvLookup& env);

}  // namespace cellflow::config
