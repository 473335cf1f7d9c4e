#pragma once

#include <algorithm>
#include <cstddef>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dialogsim/acts.hpp"
#include "dialogsim/config.hpp"
#include "dialogsim/goals.hpp"
#include "dialogsim/rng.hpp"
#include "dialogsim/schema.hpp"

namespace dialogsim {

using ArgKey = std::pair<std::size_t, std::string>;  // (intent index, arg)

struct UserState {
  const SchemaBundle* bundle = nullptr;
  UserGoal goal;           // mutated by corrections
  UserGoal original_goal;  // as sampled
  std::size_t cursor = 0;
  std::deque<DialogAct> agenda;
  std::map<ArgKey, std::string> informed;
  std::map<ArgKey, UserValue> alternatives;
  std::map<ArgKey, std::size_t> informed_turn;
  std::set<ArgKey> corrected;
  std::vector<bool> active;     // false once abandoned
  std::vector<bool> fulfilled;  // a call for the intent succeeded
  std::vector<std::size_t> started_order;  // intents in the order the system opened frames for them
  bool started = false;                    // current intent announced
  bool done = false;
  int corrections = 0;
  std::size_t turn = 0;
  std::size_t abandoned = 0;
};

/// What the user perceives of the previous system turn.
struct SystemObservation {
  std::vector<DialogAct> acts;
  std::map<std::string, std::string> values;  // arg -> surface in confirm/offer acts
  std::vector<std::size_t> called_frames;      // frames with a successful call this turn
  std::vector<std::size_t> failed_frames;      // frames that failed this turn
};

struct UserTurnOutput {
  std::vector<DialogAct> acts;
  std::map<std::string, UserValue> slot_values;  // slot -> surface and type
};

namespace detail {

inline void seed_agenda(UserState& s) {
  s.agenda.clear();
  s.started = false;
  if (s.cursor >= s.goal.intents.size()) return;
  const auto& intent = s.goal.intents[s.cursor];
  s.agenda.push_back(DialogAct::intent(ActName::inform, Side::user, intent.api));
  for (const auto& [arg, b] : intent.bindings)
    if (std::holds_alternative<UserValue>(b)) s.agenda.push_back(DialogAct::entity(ActName::inform, Side::user, arg));
}

inline void advance(UserState& s) {
  while (s.cursor < s.goal.intents.size() && (!s.active[s.cursor] || s.fulfilled[s.cursor])) ++s.cursor;
  if (s.cursor >= s.goal.intents.size()) {
    s.done = true;
    s.agenda.clear();
    s.started = false;
  } else {
    seed_agenda(s);
  }
}

inline bool current_is_open(const UserState& s) {
  return !s.done && s.cursor < s.goal.intents.size() && s.started;
}

inline void remove_from_agenda(UserState& s, const DialogAct& a) {
  s.agenda.erase(std::remove(s.agenda.begin(), s.agenda.end(), a), s.agenda.end());
}

inline bool has_arg(const SchemaBundle& bundle, const std::string& api, const std::string& arg) {
  const auto* def = bundle.find_api(api);
  return def && def->find_arg(arg);
}

// Mirrors the system's frame resolution for a bare inform(entity:arg).
inline std::optional<std::size_t> resolve_bare(const UserState& s, const std::string& arg) {
  if (s.started_order.empty()) return std::nullopt;
  const auto last = s.started_order.back();
  if (has_arg(*s.bundle, s.goal.intents[last].api, arg)) return last;
  for (auto it = s.started_order.rbegin(); it != s.started_order.rend(); ++it)
    if (has_arg(*s.bundle, s.goal.intents[*it].api, arg)) return *it;
  return std::nullopt;
}

inline std::optional<std::size_t> resolve_role(const UserState& s, const std::string& api, const std::string& arg) {
  for (auto it = s.started_order.rbegin(); it != s.started_order.rend(); ++it)
    if (s.goal.intents[*it].api == api && has_arg(*s.bundle, api, arg)) return *it;
  return std::nullopt;
}

inline void emit_inform(UserState& s, UserTurnOutput& out, std::size_t intent, const std::string& arg,
                        const std::string& role = {}) {
  const auto* uv = std::get_if<UserValue>(s.goal.intents[intent].find(arg));
  if (!uv) return;
  out.acts.push_back(DialogAct::entity(ActName::inform, Side::user, arg, role));
  out.slot_values[arg] = *uv;
  s.informed[{intent, arg}] = uv->surface;
  s.informed_turn[{intent, arg}] = s.turn;
}

inline bool informs_arg(const UserTurnOutput& out, const std::string& arg) {
  return std::any_of(out.acts.begin(), out.acts.end(), [&](const DialogAct& a) {
    return a.name == ActName::inform && a.kind == ArgKind::entity && a.arg == arg;
  });
}

}  // namespace detail

inline UserState init_user(const UserGoal& goal, const SchemaBundle& bundle, const AgentConfig&, Rng& rng) {
  UserState s;
  s.bundle = &bundle;
  s.goal = goal;
  s.original_goal = goal;
  s.active.assign(goal.intents.size(), true);
  s.fulfilled.assign(goal.intents.size(), false);
  for (std::size_t i = 0; i < goal.intents.size(); ++i) {
    for (const auto& [arg, b] : goal.intents[i].bindings) {
      const auto* uv = std::get_if<UserValue>(&b);
      if (!uv) continue;
      const auto* et = bundle.find_entity_type(uv->entity_type);
      if (!et) continue;
      std::vector<std::string> others;
      for (const auto& v : et->catalog)
        if (v != uv->surface) others.push_back(v);
      if (others.empty()) continue;
      s.alternatives[{i, arg}] = UserValue{others[rng.uniform_index(others.size())], uv->entity_type};
    }
  }
  if (goal.intents.empty()) s.done = true;
  else detail::seed_agenda(s);
  return s;
}

/// Drops `failed` and every intent whose references lead back to it.
inline void abandon_intent(UserState& s, std::size_t failed) {
  if (failed >= s.goal.intents.size()) return;
  std::vector<bool> removed(s.goal.intents.size(), false);
  removed[failed] = true;
  for (std::size_t j = failed + 1; j < s.goal.intents.size(); ++j)
    for (const auto& [arg, b] : s.goal.intents[j].bindings)
      if (const auto* r = std::get_if<ReturnRef>(&b); r && removed[r->intent_index]) removed[j] = true;
  for (std::size_t j = 0; j < removed.size(); ++j)
    if (removed[j] && s.active[j]) {
      s.active[j] = false;
      ++s.abandoned;
    }
  if (s.cursor < removed.size() && removed[s.cursor]) detail::advance(s);
}

inline UserTurnOutput next_user_turn(UserState& s, const SystemObservation& obs, const AgentConfig& config, Rng& rng) {
  using detail::emit_inform;
  UserTurnOutput out;
  if (s.done) {
    out.acts.push_back(DialogAct::bare(ActName::bye, Side::user));
    return out;
  }
  ++s.turn;
  const auto intent_of_frame = [&](std::size_t f) -> std::optional<std::size_t> {
    if (f < s.started_order.size()) return s.started_order[f];
    return std::nullopt;
  };

  for (const auto f : obs.called_frames)
    if (const auto i = intent_of_frame(f)) s.fulfilled[*i] = true;

  for (const auto& a : obs.acts) {
    if (a.name != ActName::failure) continue;
    std::optional<std::size_t> target;
    for (const auto f : obs.failed_frames)
      if (const auto i = intent_of_frame(f); i && s.goal.intents[*i].api == a.arg && !s.fulfilled[*i]) target = i;
    if (!target)
      for (auto it = s.started_order.rbegin(); it != s.started_order.rend(); ++it)
        if (s.active[*it] && s.goal.intents[*it].api == a.arg) {
          target = *it;
          break;
        }
    if (target && s.active[*target]) abandon_intent(s, *target);
  }
  if (!s.done && s.cursor < s.goal.intents.size() && s.fulfilled[s.cursor]) detail::advance(s);

  // responses to confirmations
  for (std::size_t k = 0; k < obs.acts.size(); ++k) {
    const auto& a = obs.acts[k];
    if (a.name != ActName::confirm) continue;
    if (a.kind == ArgKind::intent) {
      const bool ours = detail::current_is_open(s) && s.goal.intents[s.cursor].api == a.arg;
      out.acts.push_back(DialogAct::intent(ours ? ActName::affirm : ActName::deny, Side::user, a.arg));
      continue;
    }
    if (!detail::current_is_open(s)) continue;
    const auto* uv = std::get_if<UserValue>(s.goal.intents[s.cursor].find(a.arg));
    const auto shown = obs.values.find(a.arg);
    if (uv && shown != obs.values.end() && shown->second != uv->surface) {
      out.acts.push_back(DialogAct::entity(ActName::deny, Side::user, a.arg));
      emit_inform(s, out, s.cursor, a.arg);
    } else {
      out.acts.push_back(DialogAct::entity(ActName::affirm, Side::user, a.arg));
    }
  }

  // responses to offers
  for (std::size_t k = 0; k < obs.acts.size(); ++k) {
    const auto& a = obs.acts[k];
    if (a.name != ActName::offer || a.kind != ArgKind::intent) continue;
    const bool accept = !s.done && s.cursor < s.goal.intents.size() && !s.started && s.goal.intents[s.cursor].api == a.arg;
    if (!accept) {
      out.acts.push_back(DialogAct::intent(ActName::deny, Side::user, a.arg));
      continue;
    }
    out.acts.push_back(DialogAct::intent(ActName::affirm, Side::user, a.arg));
    s.started = true;
    s.started_order.push_back(s.cursor);
    detail::remove_from_agenda(s, DialogAct::intent(ActName::inform, Side::user, a.arg));
    for (std::size_t e = k + 1; e < obs.acts.size(); ++e) {
      const auto& oe = obs.acts[e];
      if (oe.name != ActName::offer || oe.kind != ArgKind::entity) break;
      const auto* b = s.goal.intents[s.cursor].find(oe.arg);
      const auto inform_act = DialogAct::entity(ActName::inform, Side::user, oe.arg);
      if (!b) {
        out.acts.push_back(DialogAct::entity(ActName::deny, Side::user, oe.arg));
      } else if (std::holds_alternative<ReturnRef>(*b)) {
        out.acts.push_back(DialogAct::entity(ActName::affirm, Side::user, oe.arg));
      } else {
        const auto& uv = std::get<UserValue>(*b);
        const auto shown = obs.values.find(oe.arg);
        if (shown != obs.values.end() && shown->second == uv.surface) {
          out.acts.push_back(DialogAct::entity(ActName::affirm, Side::user, oe.arg));
          s.informed[{s.cursor, oe.arg}] = uv.surface;
          s.informed_turn[{s.cursor, oe.arg}] = s.turn;
        } else {
          out.acts.push_back(DialogAct::entity(ActName::deny, Side::user, oe.arg));
          emit_inform(s, out, s.cursor, oe.arg);
        }
        detail::remove_from_agenda(s, inform_act);
      }
    }
  }

  // answers to requests
  for (const auto& a : obs.acts) {
    if (a.name != ActName::request || a.kind != ArgKind::entity) continue;
    if (detail::informs_arg(out, a.arg)) continue;
    const Binding* b = detail::current_is_open(s) ? s.goal.intents[s.cursor].find(a.arg) : nullptr;
    if (b && std::holds_alternative<UserValue>(*b)) {
      emit_inform(s, out, s.cursor, a.arg);
      detail::remove_from_agenda(s, DialogAct::entity(ActName::inform, Side::user, a.arg));
    } else {
      out.acts.push_back(DialogAct::entity(ActName::deny, Side::user, a.arg));
    }
  }

  // agenda
  if (!s.done && !s.agenda.empty()) {
    int k = 1;
    while (k < config.max_acts_per_turn && rng.bernoulli(config.multi_act_p)) ++k;
    for (int popped = 0; popped < k && !s.agenda.empty(); ++popped) {
      const auto act = s.agenda.front();
      s.agenda.pop_front();
      if (act.kind == ArgKind::intent) {
        out.acts.push_back(act);
        s.started = true;
        s.started_order.push_back(s.cursor);
      } else if (!detail::informs_arg(out, act.arg)) {
        emit_inform(s, out, s.cursor, act.arg);
      }
    }
  }

  // change of mind about an earlier informed value
  if (!s.done && s.corrections < config.max_corrections && config.p_correct > 0) {
    struct Candidate {
      ArgKey key;
      std::string role;
    };
    std::vector<Candidate> eligible;
    for (const auto& [key, turn] : s.informed_turn) {
      const auto& [i, arg] = key;
      if (turn >= s.turn || s.corrected.count(key) || !s.active[i] || !s.alternatives.count(key)) continue;
      if (detail::informs_arg(out, arg)) continue;
      if (!std::holds_alternative<UserValue>(*s.goal.intents[i].find(arg))) continue;
      std::string role;
      if (detail::resolve_bare(s, arg) != std::optional<std::size_t>(i)) {
        const auto& api = s.goal.intents[i].api;
        if (detail::resolve_role(s, api, arg) != std::optional<std::size_t>(i)) continue;
        role = api + "." + arg;
      }
      eligible.push_back({key, role});
    }
    if (!eligible.empty() && rng.bernoulli(config.p_correct)) {
      const auto& c = eligible[rng.uniform_index(eligible.size())];
      const auto& [i, arg] = c.key;
      *s.goal.intents[i].find(arg) = s.alternatives.at(c.key);
      out.acts.push_back(DialogAct::entity(ActName::deny, Side::user, arg, c.role));
      emit_inform(s, out, i, arg, c.role);
      s.corrected.insert(c.key);
      ++s.corrections;
    }
  }

  if (s.done) out.acts.push_back(DialogAct::bare(ActName::bye, Side::user));
  if (out.acts.empty()) out.acts.push_back(DialogAct::bare(ActName::repeat, Side::user));
  return out;
}

}  // namespace dialogsim
