#pragma once

#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>

#include "cammarl/env/cooperative_navigation.hpp"
#include "cammarl/env/environment.hpp"
#include "cammarl/env/level_based_foraging.hpp"
#include "cammarl/env/pressure_plate.hpp"

namespace cammarl::env {

using EnvFactory = std::function<std::unique_ptr<Environment>(const EnvSpec&, int horizon)>;

inline const std::map<std::string, EnvFactory, std::less<>>& env_registry() {
  static const std::map<std::string, EnvFactory, std::less<>> registry{
      {"cn",
       [](const EnvSpec& s, int h) {
         return std::make_unique<CooperativeNavigation>(s.agents, h, s.cn);
       }},
      {"lbf",
       [](const EnvSpec& s, int h) {
         return std::make_unique<LevelBasedForaging>(s.agents, h, s.lbf);
       }},
      {"pressure_plate",
       [](const EnvSpec& s, int h) { return std::make_unique<PressurePlate>(s.agents, h); }},
  };
  return registry;
}

inline std::string registered_env_names() {
  std::string names;
  for (const auto& [name, _] : env_registry()) {
    if (!names.empty()) names += ", ";
    names += name;
  }
  return names;
}

/// Throws std::invalid_argument for unknown names and bad parameters.
inline std::unique_ptr<Environment> make_env(const EnvSpec& spec) {
  const auto& registry = env_registry();
  const auto it = registry.find(spec.name);
  if (it == registry.end()) {
    throw std::invalid_argument("unknown environment '" + spec.name +
                                "' (valid: " + registered_env_names() + ")");
  }
  if (spec.agents == 0) throw std::invalid_argument("agents must be >= 1");
  if (spec.horizon < 0) throw std::invalid_argument("horizon must be >= 0");
  const int horizon = spec.horizon > 0 ? spec.horizon : default_horizon(spec.name);
  return it->second(spec, horizon);
}

}  // namespace cammarl::env
