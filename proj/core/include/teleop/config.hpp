#pragma once

// Flat INI-style scenario configs: `[section]` headers, `key = value` lines,
// `#`/`;` comments. Vector values are space-separated numbers. Overrides use
// dotted keys (`channel.kappa_f=800`) and must reference existing keys.

#include <string>
#include <utility>
#include <vector>

#include "teleop/sim.hpp"

namespace teleop {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IniDoc {
 public:
  using Section = std::vector<std::pair<std::string, std::string>>;

  void set(const std::string& section, const std::string& key,
           const std::string& value);
  const std::string* find(const std::string& section,
                          const std::string& key) const;
  bool has_section(const std::string& section) const;

  // Throws ConfigError when the dotted key does not already exist.
  void override_value(const std::string& dotted_key, const std::string& value);

  const std::vector<std::pair<std::string, Section>>& sections() const {
    return sections_;
  }

 private:
  std::vector<std::pair<std::string, Section>> sections_;
};

IniDoc parse_ini(const std::string& text);
std::string serialize_ini(const IniDoc& doc);

IniDoc scenario_to_ini(const ScenarioConfig& cfg);
// Rejects unknown sections/keys so that override typos surface as errors.
ScenarioConfig scenario_from_ini(const IniDoc& doc);

std::string scenario_to_text(const ScenarioConfig& cfg);
ScenarioConfig scenario_from_text(const std::string& text);

// Reads a config file, applies `key=value` overrides, validates.
ScenarioConfig load_scenario_file(
    const std::string& path,
    const std::vector<std::string>& overrides = {});
ScenarioConfig apply_overrides(const ScenarioConfig& cfg,
                               const std::vector<std::string>& overrides);

}  // namespace teleop
