#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dialogsim/dialogsim.hpp"

namespace testing_support {

inline const std::string kBookingSeed =
    "U-1: What movie are playing in [Sunnyvale|c0] after [2 PM|t0]?\n"
    "S-2: call: FindMovies(location=$c0,timeLowerBound=$t0) -> movies0\n"
    "S-3: nlg: Tenet is playing in AMC Theater at 4 PM\n"
    "U-4: tell me more about the [4 PM|t1] show of [Tenet|m0]\n"
    "S-5: call: SelectShow(time=$t1,movieName=$m0,movies=$movies0) -> show0\n"
    "S-6: nlg: OK. The available ticket type is adult ticket\n"
    "U-7: Book [two|c0] [adult|type0] tickets for this show\n"
    "S-8: call: BookTickets(show=$show0,count=$c0,type=$type0) -> booking0\n"
    "U-9: Ok thank you\n"
    "S-10: nlg: Thank you for using Atom Tickets\n";

inline std::filesystem::path data_dir() { return DIALOGSIM_DATA; }

inline const dialogsim::SchemaBundle& demo_bundle() {
  static const auto bundle = dialogsim::load_schema(data_dir() / "demo" / "schema.json");
  return bundle;
}

inline std::vector<dialogsim::Dialog> demo_seeds() {
  return dialogsim::load_corpus(data_dir() / "demo" / "seeds.txt", &demo_bundle());
}

inline const dialogsim::SimulationContext& demo_context() {
  static const auto ctx = dialogsim::prepare_context(demo_bundle(), demo_seeds());
  return ctx;
}

inline dialogsim::Dialog booking_seed() { return dialogsim::parse_dialog(kBookingSeed, demo_bundle()); }

inline dialogsim::SimulationContext context_for(const std::string& seeds_text) {
  return dialogsim::prepare_context(demo_bundle(), dialogsim::parse_corpus(seeds_text, &demo_bundle()));
}

/// Agent settings with every stochastic detour switched off.
inline dialogsim::GenerationConfig quiet_config() {
  dialogsim::GenerationConfig c;
  c.agent.p_correct = 0;
  c.agent.p_offer = 0;
  c.agent.api_failure_rate = 0;
  return c;
}

}  // namespace testing_support
