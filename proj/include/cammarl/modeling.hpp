#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cammarl/conformal/conformal_model.hpp"
#include "cammarl/env/environment.hpp"
#include "cammarl/rng.hpp"

namespace cammarl {

/// What the self agent gets to see about the other agents.
enum class ModeTag {
  noam,     // nothing
  taam,     // true current actions
  toam,     // true observations
  giam,     // true observations and actions
  eap,      // one-hot of the classifier's most likely action
  apu,      // classifier probability vector
  cammarl,  // conformal action set (see CamVariant)
};

enum class CamVariant { binary, padding, penultimate };

class ModelingMode {
 public:
  ModelingMode() = default;
  explicit ModelingMode(ModeTag tag, std::optional<CamVariant> variant = std::nullopt)
      : tag_(tag), variant_(variant) {
    if ((tag == ModeTag::cammarl) != variant.has_value()) {
      throw std::invalid_argument("a variant is required for cammarl and forbidden otherwise");
    }
  }

  static ModelingMode parse(std::string_view name) {
    for (const ModelingMode& m : all()) {
      if (m.name() == name) return m;
    }
    if (name == "cammarl") return ModelingMode(ModeTag::cammarl, CamVariant::binary);
    throw std::invalid_argument("unknown mode '" + std::string(name) + "' (valid: " + valid_names() + ")");
  }

  static std::vector<ModelingMode> all() {
    return {ModelingMode(ModeTag::noam),
            ModelingMode(ModeTag::taam),
            ModelingMode(ModeTag::toam),
            ModelingMode(ModeTag::giam),
            ModelingMode(ModeTag::eap),
            ModelingMode(ModeTag::apu),
            ModelingMode(ModeTag::cammarl, CamVariant::binary),
            ModelingMode(ModeTag::cammarl, CamVariant::padding),
            ModelingMode(ModeTag::cammarl, CamVariant::penultimate)};
  }

  static std::string valid_names() {
    std::string out;
    for (const ModelingMode& m : all()) {
      if (!out.empty()) out += ", ";
      out += m.name();
    }
    return out;
  }

  std::string name() const {
    switch (tag_) {
      case ModeTag::noam: return "noam";
      case ModeTag::taam: return "taam";
      case ModeTag::toam: return "toam";
      case ModeTag::giam: return "giam";
      case ModeTag::eap: return "eap";
      case ModeTag::apu: return "apu";
      case ModeTag::cammarl:
        switch (*variant_) {
          case CamVariant::binary: return "cammarl-binary";
          case CamVariant::padding: return "cammarl-padding";
          case CamVariant::penultimate: return "cammarl-penultimate";
        }
    }
    return "?";
  }

  ModeTag tag() const noexcept { return tag_; }
  std::optional<CamVariant> variant() const noexcept { return variant_; }

  /// Modes that own a classifier (and hence a conformal model) per other agent.
  bool uses_classifier() const noexcept {
    return tag_ == ModeTag::eap || tag_ == ModeTag::apu || tag_ == ModeTag::cammarl;
  }
  bool needs_true_actions() const noexcept { return tag_ == ModeTag::taam || tag_ == ModeTag::giam; }

  friend bool operator==(const ModelingMode&, const ModelingMode&) = default;

 private:
  ModeTag tag_ = ModeTag::noam;
  std::optional<CamVariant> variant_;
};

/// Membership bit vector.
inline std::vector<double> encode_binary(const conformal::ConformalSet& set, std::size_t action_count) {
  std::vector<double> bits(action_count, 0.0);
  for (int a : set.actions) {
    if (a < 0 || static_cast<std::size_t>(a) >= action_count) throw std::out_of_range("encode_binary: action id out of range");
    bits[static_cast<std::size_t>(a)] = 1.0;
  }
  return bits;
}

/// 1-based ids in ranked order, right-padded with 0.
inline std::vector<double> encode_padded(const conformal::ConformalSet& set, std::size_t action_count) {
  if (set.actions.size() > action_count) throw std::invalid_argument("encode_padded: set larger than action space");
  std::vector<double> ids(action_count, 0.0);
  for (std::size_t i = 0; i < set.actions.size(); ++i) {
    const int a = set.actions[i];
    if (a < 0 || static_cast<std::size_t>(a) >= action_count) throw std::out_of_range("encode_padded: action id out of range");
    ids[i] = static_cast<double>(a + 1);
  }
  return ids;
}

inline std::vector<double> one_hot(int index, std::size_t size) {
  if (index < 0 || static_cast<std::size_t>(index) >= size) throw std::out_of_range("one_hot: index out of range");
  std::vector<double> v(size, 0.0);
  v[static_cast<std::size_t>(index)] = 1.0;
  return v;
}

/// Input width of `agent`'s policy under `mode`. Other agents always see
/// just their own observation.
inline std::size_t augmented_dim(const ModelingMode& mode, const env::Environment& env, env::AgentId agent,
                                 std::size_t embedding_dim = 64) {
  const std::size_t base = env.observation_dim(agent);
  if (!agent.is_self()) return base;
  std::size_t extra = 0;
  for (std::size_t j = 1; j < env.agent_count(); ++j) {
    const env::AgentId other{j};
    const std::size_t d = env.observation_dim(other);
    const std::size_t a = env.action_count(other);
    switch (mode.tag()) {
      case ModeTag::noam: break;
      case ModeTag::taam:
      case ModeTag::eap:
      case ModeTag::apu: extra += a; break;
      case ModeTag::toam: extra += d; break;
      case ModeTag::giam: extra += d + a; break;
      case ModeTag::cammarl:
        extra += *mode.variant() == CamVariant::penultimate ? embedding_dim : a;
        break;
    }
  }
  return base + extra;
}

/// Per-step view of one other agent, as handed to the augmentation.
struct OtherAgentInfo {
  std::span<const double> obs;
  std::optional<int> action;  // this step's sampled action (TAAM/GIAM)
  std::size_t action_count = 0;
};

struct AugmentedObservation {
  std::vector<double> values;
  // Conformal sets predicted this step, one per other agent; empty for modes
  // without a classifier.
  std::vector<conformal::ConformalSet> sets;
};

/// o_self followed by one block per other agent in ascending id.
inline AugmentedObservation augment_observation(const ModelingMode& mode, std::span<const double> self_obs,
                                                std::span<const OtherAgentInfo> others,
                                                std::span<const conformal::ConformalModel> models, Rng& rng) {
  AugmentedObservation out;
  out.values.assign(self_obs.begin(), self_obs.end());
  if (mode.uses_classifier() && models.size() != others.size()) {
    throw std::invalid_argument("augment_observation: mode " + mode.name() + " needs one model per other agent");
  }
  auto append = [&out](const std::vector<double>& block) {
    out.values.insert(out.values.end(), block.begin(), block.end());
  };
  for (std::size_t j = 0; j < others.size(); ++j) {
    const OtherAgentInfo& info = others[j];
    if (mode.needs_true_actions() && !info.action) {
      throw std::invalid_argument("augment_observation: mode " + mode.name() + " needs the other agent's action");
    }
    switch (mode.tag()) {
      case ModeTag::noam: break;
      case ModeTag::taam: append(one_hot(*info.action, info.action_count)); break;
      case ModeTag::toam: out.values.insert(out.values.end(), info.obs.begin(), info.obs.end()); break;
      case ModeTag::giam:
        out.values.insert(out.values.end(), info.obs.begin(), info.obs.end());
        append(one_hot(*info.action, info.action_count));
        break;
      case ModeTag::eap:
      case ModeTag::apu:
      case ModeTag::cammarl: {
        const conformal::ConformalModel& model = models[j];
        const std::vector<double> probs = model.probabilities(info.obs);
        // Sets are drawn in every classifier mode so coverage can be tracked;
        // only the binary and padding variants feed them to the policy.
        out.sets.push_back(model.predict(info.obs, rng));
        if (mode.tag() == ModeTag::eap) {
          const auto best = std::max_element(probs.begin(), probs.end()) - probs.begin();
          append(one_hot(static_cast<int>(best), info.action_count));
        } else if (mode.tag() == ModeTag::apu) {
          append(probs);
        } else if (*mode.variant() == CamVariant::binary) {
          append(encode_binary(out.sets.back(), info.action_count));
        } else if (*mode.variant() == CamVariant::padding) {
          append(encode_padded(out.sets.back(), info.action_count));
        } else {
          append(model.penultimate_embedding(info.obs));
        }
        break;
      }
    }
  }
  return out;
}

}  // namespace cammarl
