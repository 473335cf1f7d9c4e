#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dialogsim/acts.hpp"
#include "dialogsim/config.hpp"
#include "dialogsim/goals.hpp"
#include "dialogsim/markup.hpp"
#include "dialogsim/nlg.hpp"
#include "dialogsim/rng.hpp"
#include "dialogsim/schema.hpp"
#include "dialogsim/user_agent.hpp"

namespace dialogsim {

enum class FrameStatus { collecting, confirmed, called_ok, called_failed };

struct Frame {
  std::string api;
  std::vector<std::pair<std::string, std::string>> filled;  // arg -> var id
  FrameStatus status = FrameStatus::collecting;
  bool awaiting_confirm = false;
  bool dirty = false;  // a called frame whose args changed
  std::string return_var;

  const std::string* get(std::string_view arg) const {
    for (const auto& [a, v] : filled)
      if (a == arg) return &v;
    return nullptr;
  }
  void set(const std::string& arg, const std::string& var) {
    for (auto& [a, v] : filled)
      if (a == arg) {
        v = var;
        return;
      }
    filled.emplace_back(arg, var);
  }
  void erase(std::string_view arg) {
    filled.erase(std::remove_if(filled.begin(), filled.end(), [&](const auto& p) { return p.first == arg; }),
                 filled.end());
  }
};

struct ContextVar {
  std::string var;
  std::string entity_type;
  std::string surface;  // empty for opaque objects
  std::string source_api;  // API that returned it; empty for user values
};

/// Per-prefix counters, so ids are unique within a dialog.
class VarAllocator {
 public:
  std::string next(const std::string& prefix) { return prefix + std::to_string(counters_[prefix]++); }

 private:
  std::map<std::string, std::size_t> counters_;
};

struct PendingOffer {
  std::string api;
  std::vector<std::pair<std::string, std::string>> prefill;  // arg -> var
};

struct SystemState {
  const SchemaBundle* bundle = nullptr;
  const MarkovGoalModel* offer_model = nullptr;
  std::vector<Frame> frames;
  std::vector<ContextVar> context_vars;
  std::map<std::size_t, bool> last_call_results;
  std::optional<PendingOffer> pending_offer;
  std::set<std::string> denied_offers;
  std::string last_fulfilled;
  std::vector<SystemSegment> last_segments;
  VarAllocator vars;

  std::size_t offers_made = 0;
  std::size_t offers_accepted = 0;
  std::size_t api_failures = 0;
  std::size_t recalls = 0;

  const ContextVar* find_var(std::string_view id) const {
    for (auto it = context_vars.rbegin(); it != context_vars.rend(); ++it)
      if (it->var == id) return &*it;
    return nullptr;
  }
};

struct SystemTurnOutput {
  std::vector<ApiCall> api_calls;
  std::vector<DialogAct> acts;
  std::vector<SystemSegment> segments;
  std::vector<std::size_t> called_frames;
  std::vector<std::size_t> failed_frames;
  bool closing = false;

  /// The part of the turn the user agent reacts to.
  SystemObservation observation() const {
    SystemObservation obs;
    obs.acts = acts;
    for (const auto& seg : segments) {
      if (seg.acts.empty()) continue;
      const auto head = seg.acts.front().name;
      if (head == ActName::confirm || head == ActName::offer)
        for (const auto& [k, v] : seg.values) obs.values[k] = v;
    }
    obs.called_frames = called_frames;
    obs.failed_frames = failed_frames;
    return obs;
  }
};

inline SystemState init_system(const SchemaBundle& bundle, const MarkovGoalModel* offer_model) {
  SystemState s;
  s.bundle = &bundle;
  s.offer_model = offer_model;
  return s;
}

struct CallResult {
  bool ok = false;
  std::string return_var;
};

/// Samples a return value for a complete frame instead of calling anything.
inline CallResult simulate_api_call(SystemState& s, const Frame& frame, const AgentConfig& config, Rng& rng) {
  const auto* api = s.bundle->find_api(frame.api);
  if (!api) throw PreconditionError("unknown API '" + frame.api + "'");
  if (rng.bernoulli(config.api_failure_rate)) {
    ++s.api_failures;
    return {};
  }
  CallResult r{true, s.vars.next(api->return_name)};
  ContextVar cv{r.return_var, api->return_type, {}, api->name};
  const auto* et = s.bundle->find_entity_type(api->return_type);
  if (et && et->kind != EntityKind::object && !et->catalog.empty()) cv.surface = sample_catalog(*s.bundle, api->return_type, rng);
  s.context_vars.push_back(std::move(cv));
  return r;
}

/// Offer for the API most likely to follow the last fulfilled one, with every
/// argument that can be pre-filled from the context by type.
inline std::optional<SystemSegment> propose_offer(SystemState& s, const MarkovGoalModel& model, Rng& rng) {
  if (s.last_fulfilled.empty()) return std::nullopt;
  const auto row = model.transition.find(s.last_fulfilled);
  if (row == model.transition.end()) return std::nullopt;
  std::vector<std::string> names;
  std::vector<double> weights;
  for (const auto& [api, p] : row->second) {
    if (api == kEndState || p <= 0 || s.denied_offers.count(api) || !s.bundle->find_api(api)) continue;
    names.push_back(api);
    weights.push_back(p);
  }
  if (names.empty()) return std::nullopt;
  const auto& chosen = names[rng.categorical(weights)];
  const auto* api = s.bundle->find_api(chosen);

  SystemSegment seg;
  PendingOffer offer{chosen, {}};
  seg.acts.push_back(DialogAct::intent(ActName::offer, Side::system, chosen));
  for (const auto& arg : api->args) {
    const ContextVar* hit = nullptr;
    for (auto it = s.context_vars.rbegin(); it != s.context_vars.rend(); ++it)
      if (it->entity_type == arg.entity_type) {
        hit = &*it;
        break;
      }
    if (!hit) continue;
    seg.acts.push_back(DialogAct::entity(ActName::offer, Side::system, arg.name));
    seg.values[arg.name] = hit->surface;
    offer.prefill.emplace_back(arg.name, hit->var);
  }
  s.pending_offer = std::move(offer);
  ++s.offers_made;
  return seg;
}

namespace detail {

inline std::optional<std::size_t> resolve_frame(const SystemState& s, const DialogAct& act) {
  if (s.frames.empty()) return std::nullopt;
  const auto has = [&](std::size_t f) {
    const auto* api = s.bundle->find_api(s.frames[f].api);
    return api && api->find_arg(act.arg);
  };
  if (!act.role.empty()) {
    const auto api = act.role.substr(0, act.role.find('.'));
    for (std::size_t f = s.frames.size(); f-- > 0;)
      if (s.frames[f].api == api && has(f)) return f;
    return std::nullopt;
  }
  if (has(s.frames.size() - 1)) return s.frames.size() - 1;
  for (std::size_t f = s.frames.size(); f-- > 0;)
    if (has(f)) return f;
  return std::nullopt;
}

inline SystemSegment failure_segment(const std::string& api) {
  return {{}, {DialogAct::intent(ActName::failure, Side::system, api)}, {}};
}

inline SystemSegment response_segment(const SystemState& s, const ApiDef& api, const Frame& frame, Rng& rng) {
  SystemSegment seg;
  const auto* resp = s.bundle->find_response(api.response_template);
  if (!resp) throw PreconditionError("API " + api.name + " has no response template");
  seg.response = resp->name;
  seg.acts = resp->dialog_acts;
  for (const auto& arg : resp->args) {
    std::string surface;
    if (const auto* var = frame.get(arg.name))
      if (const auto* cv = s.find_var(*var)) surface = cv->surface;
    if (surface.empty()) {
      const auto* et = s.bundle->find_entity_type(arg.entity_type);
      if (et && !et->catalog.empty()) surface = sample_catalog(*s.bundle, arg.entity_type, rng);
    }
    seg.values[arg.name] = surface;
  }
  return seg;
}

inline ApiCall make_call(const Frame& frame, const ApiDef& api, const std::string& return_var) {
  ApiCall call;
  call.api = api.name;
  for (const auto& arg : api.args)
    if (const auto* v = frame.get(arg.name)) call.bindings.emplace_back(arg.name, ValueRef::ref(*v));
  call.return_var = return_var;
  return call;
}

// Object-typed args come from the latest return of their type; builtin args
// only from returns of another domain.
inline void auto_fill(SystemState& s, Frame& frame, const ApiDef& api) {
  const auto domain = s.bundle->domain_of(api.name);
  for (const auto& arg : api.args) {
    if (frame.get(arg.name)) continue;
    const auto* et = s.bundle->find_entity_type(arg.entity_type);
    if (!et || et->kind == EntityKind::catalog) continue;
    for (auto it = s.context_vars.rbegin(); it != s.context_vars.rend(); ++it) {
      if (it->source_api.empty() || it->entity_type != arg.entity_type) continue;
      if (et->kind == EntityKind::builtin && s.bundle->domain_of(it->source_api) == domain) continue;
      frame.set(arg.name, it->var);
      break;
    }
  }
}

}  // namespace detail

/// One system policy step. `slot_values` maps the slots of the user's inform
/// acts to the values (and var ids) realized in the user utterance.
inline SystemTurnOutput next_system_turn(SystemState& s, const std::vector<DialogAct>& user_acts,
                                         const std::map<std::string, SlotValue>& slot_values,
                                         const AgentConfig& config, Rng& rng) {
  SystemTurnOutput out;
  const auto& bundle = *s.bundle;
  auto emit = [&](SystemSegment seg) {
    out.acts.insert(out.acts.end(), seg.acts.begin(), seg.acts.end());
    out.segments.push_back(std::move(seg));
  };

  if (contains_act(user_acts, ActName::bye)) {
    SystemSegment seg{{}, {DialogAct::bare(ActName::bye, Side::system)}, {}};
    for (const auto* r : bundle.all_responses())
      if (r->dialog_acts == seg.acts && r->args.empty()) {
        seg.response = r->name;
        break;
      }
    emit(std::move(seg));
    out.closing = true;
    return out;
  }
  if (contains_act(user_acts, ActName::repeat) && !s.last_segments.empty()) {
    for (const auto& seg : s.last_segments) emit(seg);
    return out;
  }

  for (const auto& [slot, v] : slot_values)
    if (!s.find_var(v.var_id) || s.find_var(v.var_id)->surface != v.surface)
      s.context_vars.push_back({v.var_id, v.entity_type, v.surface, {}});

  std::set<std::string> denied_args;
  auto offer = std::move(s.pending_offer);
  s.pending_offer.reset();

  for (std::size_t k = 0; k < user_acts.size(); ++k) {
    const auto& a = user_acts[k];
    if (a.kind == ArgKind::intent) {
      if (a.name == ActName::affirm) {
        if (offer && offer->api == a.arg) {
          Frame f;
          f.api = a.arg;
          f.filled = offer->prefill;
          s.frames.push_back(std::move(f));
          ++s.offers_accepted;
          offer.reset();
        } else if (!s.frames.empty() && s.frames.back().awaiting_confirm && s.frames.back().api == a.arg) {
          s.frames.back().awaiting_confirm = false;
          s.frames.back().status = FrameStatus::confirmed;
        }
      } else if (a.name == ActName::deny) {
        if (offer && offer->api == a.arg) {
          s.denied_offers.insert(a.arg);
          offer.reset();
        } else if (!s.frames.empty() && s.frames.back().awaiting_confirm && s.frames.back().api == a.arg) {
          s.frames.back().awaiting_confirm = false;
          s.frames.back().status = FrameStatus::called_failed;
        }
      } else if (a.name == ActName::inform) {
        if (!bundle.find_api(a.arg)) {
          emit(detail::failure_segment(a.arg));
          continue;
        }
        Frame f;
        f.api = a.arg;
        s.frames.push_back(std::move(f));
      }
      continue;
    }
    if (a.kind != ArgKind::entity) continue;
    const auto target = detail::resolve_frame(s, a);
    if (!target) continue;
    auto& frame = s.frames[*target];
    if (a.name == ActName::deny) {
      const bool followed = k + 1 < user_acts.size() && user_acts[k + 1].name == ActName::inform &&
                            user_acts[k + 1].arg == a.arg && user_acts[k + 1].role == a.role;
      if (!followed && frame.status != FrameStatus::called_ok) {
        frame.erase(a.arg);
        denied_args.insert(a.arg);
      }
    } else if (a.name == ActName::inform) {
      const auto it = slot_values.find(a.arg);
      if (it == slot_values.end()) continue;
      const auto* old = frame.get(a.arg);
      const bool changed = !old || *old != it->second.var_id;
      frame.set(a.arg, it->second.var_id);
      if (changed && frame.status == FrameStatus::called_ok) frame.dirty = true;
      if (changed && (frame.status == FrameStatus::confirmed || frame.awaiting_confirm)) {
        frame.status = FrameStatus::collecting;
        frame.awaiting_confirm = false;
      }
    }
  }

  // re-calls after corrections, cascading through returned objects
  for (std::size_t f = 0; f < s.frames.size(); ++f) {
    auto& frame = s.frames[f];
    if (!frame.dirty) continue;
    frame.dirty = false;
    if (frame.status != FrameStatus::called_ok) continue;
    const auto* api = bundle.find_api(frame.api);
    const auto old_ret = frame.return_var;
    ++s.recalls;
    const auto r = simulate_api_call(s, frame, config, rng);
    s.last_call_results[f] = r.ok;
    if (!r.ok) {
      frame.status = FrameStatus::called_failed;
      out.failed_frames.push_back(f);
      emit(detail::failure_segment(frame.api));
      continue;
    }
    frame.return_var = r.return_var;
    out.api_calls.push_back(detail::make_call(frame, *api, r.return_var));
    out.called_frames.push_back(f);
    emit(detail::response_segment(s, *api, frame, rng));
    for (std::size_t g = f + 1; g < s.frames.size(); ++g)
      for (auto& [arg, var] : s.frames[g].filled)
        if (var == old_ret) {
          var = r.return_var;
          if (s.frames[g].status == FrameStatus::called_ok) s.frames[g].dirty = true;
        }
  }

  if (!s.frames.empty()) {
    const auto f = s.frames.size() - 1;
    auto& frame = s.frames[f];
    const auto* api = bundle.find_api(frame.api);
    if (frame.status == FrameStatus::collecting || frame.status == FrameStatus::confirmed) {
      detail::auto_fill(s, frame, *api);
      const ArgSpec* missing = nullptr;
      for (const auto& arg : api->args)
        if (arg.required && !frame.get(arg.name)) {
          missing = &arg;
          break;
        }
      if (missing) {
        if (denied_args.count(missing->name)) {
          frame.status = FrameStatus::called_failed;
          out.failed_frames.push_back(f);
          emit(detail::failure_segment(frame.api));
        } else {
          emit({{}, {DialogAct::entity(ActName::request, Side::system, missing->name)}, {}});
        }
      } else if (api->confirm_before_call && frame.status != FrameStatus::confirmed) {
        if (!frame.awaiting_confirm) {
          SystemSegment seg;
          seg.acts.push_back(DialogAct::intent(ActName::confirm, Side::system, api->name));
          for (const auto& arg : api->args) {
            const auto* var = frame.get(arg.name);
            if (!var) continue;
            const auto* cv = s.find_var(*var);
            if (!cv || cv->surface.empty()) continue;
            seg.acts.push_back(DialogAct::entity(ActName::confirm, Side::system, arg.name));
            seg.values[arg.name] = cv->surface;
          }
          frame.awaiting_confirm = true;
          emit(std::move(seg));
        }
      } else {
        const auto r = simulate_api_call(s, frame, config, rng);
        s.last_call_results[f] = r.ok;
        if (!r.ok) {
          frame.status = FrameStatus::called_failed;
          out.failed_frames.push_back(f);
          emit(detail::failure_segment(frame.api));
        } else {
          frame.status = FrameStatus::called_ok;
          frame.return_var = r.return_var;
          s.last_fulfilled = frame.api;
          out.api_calls.push_back(detail::make_call(frame, *api, r.return_var));
          out.called_frames.push_back(f);
          emit(detail::response_segment(s, *api, frame, rng));
          if (s.offer_model && rng.bernoulli(config.p_offer))
            if (auto seg = propose_offer(s, *s.offer_model, rng)) emit(std::move(*seg));
        }
      }
    }
  }

  if (!out.segments.empty()) s.last_segments = out.segments;
  return out;
}

}  // namespace dialogsim
