#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cammarl/env/registry.hpp"
#include "cammarl/modeling.hpp"
#include "cammarl/trainer.hpp"

namespace cammarl::runner {

inline constexpr int kConfigSchemaVersion = 1;

/// Bad configuration. `field` is a dotted path such as "ppo.lr".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  std::string run_id;  // defaults to the output directory name
  env::EnvSpec env;
  ModelingMode mode = ModelingMode(ModeTag::cammarl, CamVariant::binary);
  std::vector<std::uint64_t> seeds{1};
  std::size_t episodes = 1000;
  ppo::PpoConfig ppo;
  conformal::ConformalConfig conformal;
  std::filesystem::path output_dir = "runs/default";
  std::size_t checkpoint_interval = 0;
  std::size_t workers = 1;  // seeds trained concurrently

  TrainConfig for_seed(std::uint64_t seed) const {
    TrainConfig t;
    t.env = env;
    t.mode = mode;
    t.ppo = ppo;
    t.conformal = conformal;
    t.episodes = episodes;
    t.seed = seed;
    t.checkpoint_interval = checkpoint_interval;
    if (checkpoint_interval > 0) t.checkpoint_dir = output_dir / "checkpoints" / ("seed_" + std::to_string(seed));
    return t;
  }
};

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& prefix) {
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.contains(key)) {
      std::string valid;
      for (const auto& a : allowed) valid += (valid.empty() ? "" : ", ") + a;
      throw ConfigError(prefix + key, "unknown key (valid: " + valid + ")");
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& prefix) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(prefix + key, std::string("wrong type (") + e.what() + ")");
  }
}

inline void read_count(const json& obj, const char* key, std::size_t& out, const std::string& prefix,
                       std::size_t min_value) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(min_value)) {
    throw ConfigError(prefix + key, "expected an integer >= " + std::to_string(min_value));
  }
  out = v.get<std::size_t>();
}

inline void require(bool ok, const std::string& field, const std::string& message) {
  if (!ok) throw ConfigError(field, message);
}

inline env::EnvSpec parse_env(const json& j) {
  env::EnvSpec spec;
  if (j.is_string()) {
    spec.name = j.get<std::string>();
  } else if (j.is_object()) {
    reject_unknown(j, {"name", "agents", "horizon", "landmarks", "grid", "foods", "max_agent_level",
                       "max_food_level", "cooperative"},
                   "env.");
    require(j.contains("name"), "env.name", "required");
    read(j, "name", spec.name, "env.");
    read_count(j, "agents", spec.agents, "env.", 1);
    std::size_t horizon = 0;
    read_count(j, "horizon", horizon, "env.", 0);
    spec.horizon = static_cast<int>(horizon);
    read_count(j, "landmarks", spec.cn.landmarks, "env.", 1);
    read_count(j, "grid", spec.lbf.grid, "env.", 3);
    read_count(j, "foods", spec.lbf.foods, "env.", 1);
    read(j, "max_agent_level", spec.lbf.max_agent_level, "env.");
    read(j, "max_food_level", spec.lbf.max_food_level, "env.");
    read(j, "cooperative", spec.lbf.cooperative, "env.");
  } else {
    throw ConfigError("env", "expected a name or an object");
  }
  if (!env::env_registry().contains(spec.name)) {
    throw ConfigError("env.name", "unknown environment '" + spec.name + "' (valid: " + env::registered_env_names() + ")");
  }
  if (spec.name == "pressure_plate") require(spec.agents >= 2, "env.agents", "pressure_plate needs >= 2 agents");
  return spec;
}

}  // namespace detail

/// Validates and fills defaults. Throws ConfigError naming the offending field.
inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using detail::read;
  using detail::read_count;
  using detail::require;
  if (!j.is_object()) throw ConfigError("", "config must be a JSON object");
  detail::reject_unknown(j, {"schema_version", "run_id", "env", "mode", "alpha", "lambda_grid", "seeds",
                             "episodes", "update_interval", "ppo", "conformal", "output_dir",
                             "checkpoint_interval", "workers"},
                         "");
  ExperimentConfig c;
  read(j, "schema_version", c.schema_version, "");
  require(c.schema_version == kConfigSchemaVersion, "schema_version",
          "unsupported version " + std::to_string(c.schema_version) + " (expected " +
              std::to_string(kConfigSchemaVersion) + ")");
  read(j, "run_id", c.run_id, "");
  require(j.contains("env"), "env", "required");
  c.env = detail::parse_env(j.at("env"));

  require(j.contains("mode"), "mode", "required");
  std::string mode;
  read(j, "mode", mode, "");
  try {
    c.mode = ModelingMode::parse(mode);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("mode", e.what());
  }

  read(j, "alpha", c.conformal.alpha, "");
  require(c.conformal.alpha > 0.0 && c.conformal.alpha < 1.0, "alpha", "must lie in (0, 1)");
  read(j, "lambda_grid", c.conformal.lambda_grid, "");
  require(!c.conformal.lambda_grid.empty(), "lambda_grid", "must be non-empty");
  for (double l : c.conformal.lambda_grid) require(l >= 0.0, "lambda_grid", "entries must be >= 0");

  require(j.contains("seeds"), "seeds", "required");
  read(j, "seeds", c.seeds, "");
  require(!c.seeds.empty(), "seeds", "must be non-empty");
  require(std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() == c.seeds.size(), "seeds",
          "must not repeat");

  read_count(j, "episodes", c.episodes, "", 1);
  read_count(j, "update_interval", c.ppo.update_interval, "", 1);
  if (j.contains("ppo")) {
    const auto& p = j.at("ppo");
    require(p.is_object(), "ppo", "expected an object");
    detail::reject_unknown(p, {"gamma", "gae_lambda", "clip", "lr", "epochs", "minibatch", "entropy_coef",
                               "value_coef", "max_grad_norm", "hidden"},
                           "ppo.");
    read(p, "gamma", c.ppo.gamma, "ppo.");
    read(p, "gae_lambda", c.ppo.gae_lambda, "ppo.");
    read(p, "clip", c.ppo.clip, "ppo.");
    read(p, "lr", c.ppo.lr, "ppo.");
    read(p, "epochs", c.ppo.epochs, "ppo.");
    read_count(p, "minibatch", c.ppo.minibatch, "ppo.", 1);
    read(p, "entropy_coef", c.ppo.entropy_coef, "ppo.");
    read(p, "value_coef", c.ppo.value_coef, "ppo.");
    read(p, "max_grad_norm", c.ppo.max_grad_norm, "ppo.");
    read_count(p, "hidden", c.ppo.hidden, "ppo.", 1);
    require(c.ppo.gamma >= 0.0 && c.ppo.gamma < 1.0, "ppo.gamma", "must lie in [0, 1)");
    require(c.ppo.gae_lambda >= 0.0 && c.ppo.gae_lambda <= 1.0, "ppo.gae_lambda", "must lie in [0, 1]");
    require(c.ppo.clip > 0.0, "ppo.clip", "must be > 0");
    require(c.ppo.lr > 0.0, "ppo.lr", "must be > 0");
    require(c.ppo.epochs >= 1, "ppo.epochs", "must be >= 1");
  }
  if (j.contains("conformal")) {
    const auto& p = j.at("conformal");
    require(p.is_object(), "conformal", "expected an object");
    detail::reject_unknown(p, {"hidden", "lr", "batch", "epochs", "train_fraction", "buffer_capacity"},
                           "conformal.");
    read_count(p, "hidden", c.conformal.hidden, "conformal.", 1);
    read(p, "lr", c.conformal.lr, "conformal.");
    read_count(p, "batch", c.conformal.batch, "conformal.", 1);
    read(p, "epochs", c.conformal.epochs, "conformal.");
    read(p, "train_fraction", c.conformal.train_fraction, "conformal.");
    read_count(p, "buffer_capacity", c.conformal.buffer_capacity, "conformal.", 4);
    require(c.conformal.lr > 0.0, "conformal.lr", "must be > 0");
    require(c.conformal.epochs >= 1, "conformal.epochs", "must be >= 1");
    require(c.conformal.train_fraction > 0.0 && c.conformal.train_fraction < 1.0, "conformal.train_fraction",
            "must lie in (0, 1)");
  }
  std::string out = c.output_dir.string();
  read(j, "output_dir", out, "");
  require(!out.empty(), "output_dir", "must be non-empty");
  c.output_dir = out;
  read_count(j, "checkpoint_interval", c.checkpoint_interval, "", 0);
  read_count(j, "workers", c.workers, "", 1);
  if (c.run_id.empty()) c.run_id = c.output_dir.filename().string();
  if (c.run_id.empty()) c.run_id = "run";

  if (c.mode.uses_classifier()) require(c.env.agents >= 2, "env.agents", "mode " + c.mode.name() + " needs >= 2 agents");
  try {
    env::make_env(c.env);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("env", e.what());
  }
  return c;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json env{{"name", c.env.name}, {"agents", c.env.agents},
                     {"horizon", c.env.horizon > 0 ? c.env.horizon : env::default_horizon(c.env.name)}};
  if (c.env.name == "cn") env["landmarks"] = c.env.cn.landmarks;
  if (c.env.name == "lbf") {
    env["grid"] = c.env.lbf.grid;
    env["foods"] = c.env.lbf.foods;
    env["max_agent_level"] = c.env.lbf.max_agent_level;
    env["max_food_level"] = c.env.lbf.max_food_level;
    env["cooperative"] = c.env.lbf.cooperative;
  }
  return {
      {"schema_version", c.schema_version},
      {"run_id", c.run_id},
      {"env", env},
      {"mode", c.mode.name()},
      {"alpha", c.conformal.alpha},
      {"lambda_grid", c.conformal.lambda_grid},
      {"seeds", c.seeds},
      {"episodes", c.episodes},
      {"update_interval", c.ppo.update_interval},
      {"ppo",
       {{"gamma", c.ppo.gamma},
        {"gae_lambda", c.ppo.gae_lambda},
        {"clip", c.ppo.clip},
        {"lr", c.ppo.lr},
        {"epochs", c.ppo.epochs},
        {"minibatch", c.ppo.minibatch},
        {"entropy_coef", c.ppo.entropy_coef},
        {"value_coef", c.ppo.value_coef},
        {"max_grad_norm", c.ppo.max_grad_norm},
        {"hidden", c.ppo.hidden}}},
      {"conformal",
       {{"hidden", c.conformal.hidden},
        {"lr", c.conformal.lr},
        {"batch", c.conformal.batch},
        {"epochs", c.conformal.epochs},
        {"train_fraction", c.conformal.train_fraction},
        {"buffer_capacity", c.conformal.buffer_capacity}}},
      {"output_dir", c.output_dir.string()},
      {"checkpoint_interval", c.checkpoint_interval},
      {"workers", c.workers},
  };
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("", "parse error in " + path.string() + ": " + e.what());
  }
  return parse_config(j);
}

}  // namespace cammarl::runner
