#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "json.hpp"

#include "dialogsim/error.hpp"

namespace dialogsim {

/// Knobs of the heuristic user and system policies.
struct AgentConfig {
  double p_correct = 0.15;        // per-turn chance of a user correction
  int max_corrections = 2;        // per dialog
  double multi_act_p = 0.5;       // chance of popping one more agenda act
  int max_acts_per_turn = 3;
  double p_offer = 0.3;           // chance of a proactive offer after a fulfilled call
  double api_failure_rate = 0.05;

  bool operator==(const AgentConfig&) const = default;
};

/// Relative weights of the three goal sources.
struct SamplerMix {
  double base = 0.0;
  double golden = 0.4;
  double markov = 0.6;

  bool operator==(const SamplerMix&) const = default;
};

struct GenerationConfig {
  std::size_t n_dialogs = 1000;
  SamplerMix sampler_mix;
  std::size_t max_turns = 40;
  std::uint64_t rng_seed = 0;
  AgentConfig agent;
  std::size_t max_len = 8;
  std::size_t max_attempts = 100;
  std::size_t threads = 1;  // 0 = hardware concurrency

  bool operator==(const GenerationConfig&) const = default;
};

inline void check_config(const GenerationConfig& c) {
  const auto& m = c.sampler_mix;
  if (m.base < 0 || m.golden < 0 || m.markov < 0) throw Error("sampler weights must be non-negative");
  if (m.base + m.golden + m.markov <= 0) throw Error("sampler weights must have a positive sum");
  if (c.n_dialogs < 1) throw Error("n_dialogs must be at least 1");
  if (c.max_turns < 1) throw Error("max_turns must be at least 1");
  if (c.max_len < 1) throw Error("max_len must be at least 1");
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(std::string(name) + " must lie in [0, 1]");
  };
  prob(c.agent.p_correct, "p_correct");
  prob(c.agent.multi_act_p, "multi_act_p");
  prob(c.agent.p_offer, "p_offer");
  prob(c.agent.api_failure_rate, "api_failure_rate");
  if (c.agent.max_acts_per_turn < 1) throw Error("max_acts_per_turn must be at least 1");
  if (c.agent.max_corrections < 0) throw Error("max_corrections must be non-negative");
}

/// Applies the keys present in `j` on top of `c`. Unknown keys are rejected.
inline void apply_config_json(GenerationConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw Error("config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "n_dialogs") c.n_dialogs = v.get<std::size_t>();
      else if (key == "max_turns") c.max_turns = v.get<std::size_t>();
      else if (key == "rng_seed") c.rng_seed = v.get<std::uint64_t>();
      else if (key == "max_len") c.max_len = v.get<std::size_t>();
      else if (key == "max_attempts") c.max_attempts = v.get<std::size_t>();
      else if (key == "threads") c.threads = v.get<std::size_t>();
      else if (key == "p_correct") c.agent.p_correct = v.get<double>();
      else if (key == "max_corrections") c.agent.max_corrections = v.get<int>();
      else if (key == "multi_act_p") c.agent.multi_act_p = v.get<double>();
      else if (key == "max_acts_per_turn") c.agent.max_acts_per_turn = v.get<int>();
      else if (key == "p_offer") c.agent.p_offer = v.get<double>();
      else if (key == "api_failure_rate") c.agent.api_failure_rate = v.get<double>();
      else if (key == "sampler_mix") {
        SamplerMix m{0.0, 0.0, 0.0};
        for (const auto& [name, w] : v.items()) {
          if (name == "base") m.base = w.get<double>();
          else if (name == "golden") m.golden = w.get<double>();
          else if (name == "markov") m.markov = w.get<double>();
          else throw Error("unknown sampler '" + name + "'");
        }
        c.sampler_mix = m;
      } else {
        throw Error("unknown config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad config value: ") + e.what());
  }
}

inline nlohmann::json config_to_json(const GenerationConfig& c) {
  return {{"n_dialogs", c.n_dialogs},
          {"sampler_mix", {{"base", c.sampler_mix.base}, {"golden", c.sampler_mix.golden}, {"markov", c.sampler_mix.markov}}},
          {"max_turns", c.max_turns},
          {"rng_seed", c.rng_seed},
          {"p_correct", c.agent.p_correct},
          {"max_corrections", c.agent.max_corrections},
          {"multi_act_p", c.agent.multi_act_p},
          {"max_acts_per_turn", c.agent.max_acts_per_turn},
          {"p_offer", c.agent.p_offer},
          {"api_failure_rate", c.agent.api_failure_rate},
          {"max_len", c.max_len},
          {"max_attempts", c.max_attempts},
          {"threads", c.threads}};
}

/// Parses "golden=0.4,markov=0.6". Unlisted samplers get weight 0.
inline SamplerMix parse_mix(const std::string& spec) {
  SamplerMix m{0.0, 0.0, 0.0};
  std::size_t start = 0;
  while (start <= spec.size()) {
    auto end = spec.find(',', start);
    if (end == std::string::npos) end = spec.size();
    const auto item = spec.substr(start, end - start);
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw Error("bad sampler mix entry '" + item + "'");
    const auto name = item.substr(0, eq);
    double w = 0;
    try {
      std::size_t used = 0;
      w = std::stod(item.substr(eq + 1), &used);
      if (used != item.size() - eq - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error("bad weight in sampler mix entry '" + item + "'");
    }
    if (name == "base") m.base = w;
    else if (name == "golden") m.golden = w;
    else if (name == "markov") m.markov = w;
    else throw Error("unknown sampler '" + name + "'");
    start = end + 1;
  }
  return m;
}

}  // namespace dialogsim
