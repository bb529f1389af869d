#include "cellflow/config.hpp"

#include <cstdlib>
#include <set>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "cellflow/annotation.hpp"
#include "cellflow/error.hpp"
#include "cellflow/formats.hpp"

namespace cellflow::config {

namespace {

[[noreturn]] void bad_key(std::string_view origin, const std::string& key, const std::string& why) {
  throw InputError(std::string(origin) + ": " + key + ": " + why);
}

template <typename T>
T get_value(const toml::node& node, std::string_view origin, const std::string& key) {
  if constexpr (std::is_same_v<T, double>) {
    if (auto v = node.value<double>()) return *v;
  } else if constexpr (std::is_same_v<T, bool>) {
    if (node.is_boolean()) return *node.value<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (node.is_string()) return *node.value<std::string>();
  } else {
    if (node.is_integer()) return static_cast<T>(*node.value<std::int64_t>());
  }
  bad_key(origin, key, "wrong value type");
}

int parse_port(std::string_view text, std::string_view origin) {
  char* end = nullptr;
  const std::string s(text);
  const long v = std::strtol(s.c_str(), &end, 10);
  if (s.empty() || *end != '\0' || v < 0 || v > 65535) {
    throw InputError(std::string(origin) + ": invalid port '" + s + "'");
  }
  return static_cast<int>(v);
}

}  // namespace

void Config::validate() const {
  flow.validate();
  patches.validate();
  if (steps < 1) throw RangeError("diffusion steps must be >= 1");
  if (!(px_per_micron > 0.0)) throw RangeError("px_per_micron must be positive");
  if (port < 0 || port > 65535) throw RangeError("port must be within [0, 65535]");
}

std::optional<std::string> process_env(std::string_view name) {
  const char* v = std::getenv(std::string(name).c_str());
  if (!v) return std::nullopt;
  return std::string(v);
}

Config apply_toml(Config cfg, std::string_view toml_text, std::string_view origin) {
  toml::table doc;
  try {
    doc = toml::parse(toml_text, origin);
  } catch (const toml::parse_error& e) {
    throw InputError(std::string(origin) + ": " + std::string(e.description()));
  }

  static const std::set<std::string> kSections = {"flow", "patches", "diffusion", "stats", "serve"};
  for (const auto& [section_key, section_node] : doc) {
    const std::string section(section_key.str());
    if (!kSections.contains(section)) bad_key(origin, section, "unknown section");
    const toml::table* table = section_node.as_table();
    if (!table) bad_key(origin, section, "expected a table");

    for (const auto& [k, node] : *table) {
      const std::string key = section + "." + std::string(k.str());
      if (key == "flow.lambda") cfg.flow.lambda = get_value<double>(node, origin, key);
      else if (key == "flow.iterations") cfg.flow.iterations = get_value<int>(node, origin, key);
      else if (key == "patches.patch_size") cfg.patches.patch_size = get_value<std::size_t>(node, origin, key);
      else if (key == "patches.overlap") cfg.patches.overlap = get_value<double>(node, origin, key);
      else if (key == "patches.frame_count") cfg.patches.frame_count = get_value<std::size_t>(node, origin, key);
      else if (key == "patches.frame_stride") cfg.patches.frame_stride = get_value<std::size_t>(node, origin, key);
      else if (key == "patches.literal_step") cfg.patches.literal_step = get_value<bool>(node, origin, key);
      else if (key == "diffusion.schedule") cfg.schedule = diffusion::parse_schedule_kind(get_value<std::string>(node, origin, key));
      else if (key == "diffusion.steps") cfg.steps = get_value<int>(node, origin, key);
      else if (key == "stats.px_per_micron") cfg.px_per_micron = get_value<double>(node, origin, key);
      else if (key == "serve.port") cfg.port = get_value<int>(node, origin, key);
      else bad_key(origin, key, "unknown key");
    }
  }
  return cfg;
}

Config resolve(const std::optional<std::filesystem::path>& config_flag, const EnvLookup& env) {
  Config cfg;
  std::optional<std::filesystem::path> path = config_flag;
  if (!path) {
    if (auto p = env("CELLFLOW_CONFIG"); p && !p->empty()) path = *p;
  }
  if (path) {
    if (!std::filesystem::exists(*path)) {
      throw InputError("config file not found: " + path->string());
    }
    cfg = apply_toml(cfg, formats::read_file(*path), path->string());
  }
  if (auto port = env("CELLFLOW_PORT"); port && !port->empty()) {
    cfg.port = parse_port(*port, "CELLFLOW_PORT");
  }
  return cfg;
}

}  // namespace cellflow::config
