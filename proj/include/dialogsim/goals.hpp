#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "dialogsim/acts.hpp"
#include "dialogsim/error.hpp"
#include "dialogsim/markup.hpp"
#include "dialogsim/rng.hpp"
#include "dialogsim/schema.hpp"

namespace dialogsim {

struct UserValue {
  std::string surface;
  std::string entity_type;

  bool operator==(const UserValue&) const = default;
};

/// Argument filled by the return value of an earlier intent of the same goal.
struct ReturnRef {
  std::size_t intent_index = 0;

  bool operator==(const ReturnRef&) const = default;
};

using Binding = std::variant<UserValue, ReturnRef>;

struct IntentInstance {
  std::string api;
  std::vector<std::pair<std::string, Binding>> bindings;  // ApiDef argument order

  const Binding* find(std::string_view arg) const {
    for (const auto& [name, b] : bindings)
      if (name == arg) return &b;
    return nullptr;
  }
  Binding* find(std::string_view arg) {
    for (auto& [name, b] : bindings)
      if (name == arg) return &b;
    return nullptr;
  }

  bool operator==(const IntentInstance&) const = default;
};

enum class GoalOrigin { golden, markov };

inline std::string_view to_string(GoalOrigin o) { return o == GoalOrigin::golden ? "golden" : "markov"; }

struct UserGoal {
  std::vector<IntentInstance> intents;
  GoalOrigin origin = GoalOrigin::golden;
  std::optional<std::string> source_seed;

  bool operator==(const UserGoal&) const = default;
};

/// Structural view of a goal: APIs, bound args and which are references.
/// Two goals with equal structures differ at most in user-provided surfaces.
inline std::string goal_structure(const UserGoal& g) {
  std::string out;
  for (const auto& intent : g.intents) {
    if (!out.empty()) out += " > ";
    out += intent.api + '(';
    bool first = true;
    for (const auto& [arg, b] : intent.bindings) {
      if (!first) out += ',';
      first = false;
      out += arg;
      if (const auto* r = std::get_if<ReturnRef>(&b))
        out += "=#" + std::to_string(r->intent_index);
      else
        out += "=" + std::get<UserValue>(b).entity_type;
    }
    out += ')';
  }
  return out;
}

inline std::string goal_to_string(const UserGoal& g) {
  std::string out;
  for (std::size_t i = 0; i < g.intents.size(); ++i) {
    const auto& intent = g.intents[i];
    if (i) out += "; ";
    out += intent.api + '(';
    for (std::size_t j = 0; j < intent.bindings.size(); ++j) {
      const auto& [arg, b] = intent.bindings[j];
      if (j) out += ", ";
      if (const auto* r = std::get_if<ReturnRef>(&b))
        out += arg + "=#" + std::to_string(r->intent_index);
      else
        out += arg + "=\"" + std::get<UserValue>(b).surface + '"';
    }
    out += ')';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Validation

/// Empty iff required args are bound, references point backward to a
/// type-matching return, and cross-domain sharing uses builtin types only.
inline std::vector<Diagnostic> validate_goal(const UserGoal& g, const SchemaBundle& bundle) {
  std::vector<Diagnostic> out;
  auto error = [&](std::string loc, std::string msg) {
    out.push_back({Severity::error, std::move(loc), std::move(msg)});
  };
  if (g.intents.empty()) error("goal", "goal has no intents");
  for (std::size_t i = 0; i < g.intents.size(); ++i) {
    const auto& intent = g.intents[i];
    const std::string loc = "intents[" + std::to_string(i) + "]";
    const ApiDef* api = bundle.find_api(intent.api);
    if (!api) {
      error(loc, "unknown API '" + intent.api + "'");
      continue;
    }
    for (const auto& spec : api->args)
      if (spec.required && !intent.find(spec.name))
        error(loc, "required argument '" + spec.name + "' of " + api->name + " is not bound");
    for (const auto& [arg, binding] : intent.bindings) {
      const ArgSpec* spec = api->find_arg(arg);
      if (!spec) {
        error(loc, api->name + " has no argument '" + arg + "'");
        continue;
      }
      if (const auto* uv = std::get_if<UserValue>(&binding)) {
        const auto* type = bundle.find_entity_type(uv->entity_type);
        if (uv->entity_type != spec->entity_type)
          error(loc, "value for " + arg + " has type " + uv->entity_type + ", expected " + spec->entity_type);
        else if (!type || type->kind == EntityKind::object)
          error(loc, "argument '" + arg + "' of object type cannot take a user-provided value");
        continue;
      }
      const auto ref = std::get<ReturnRef>(binding).intent_index;
      if (ref >= i) {
        error(loc, "argument '" + arg + "' references intent " + std::to_string(ref) + " which is not earlier");
        continue;
      }
      const ApiDef* source = bundle.find_api(g.intents[ref].api);
      if (!source) continue;
      if (source->return_type != spec->entity_type) {
        error(loc, "argument '" + arg + "' expects " + spec->entity_type + " but intent " + std::to_string(ref) +
                       " returns " + source->return_type);
        continue;
      }
      const auto* type = bundle.find_entity_type(spec->entity_type);
      if (bundle.domain_of(source->name) != bundle.domain_of(api->name) &&
          !(type && type->kind == EntityKind::builtin))
        error(loc, "cross-domain sharing of non-builtin type " + spec->entity_type + " from " + source->name +
                       " to " + api->name);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Seed act inference and goal extraction

/// Fills in acts for seed turns that carry no `|acts:` annotation.
///
/// User spans consumed by a later call become `inform(intent)` (first mention
/// of that call) plus `inform(entity:<arg>)`. A span-free user turn answering
/// a confirmation is an `affirm(intent)`, the final user turn a `bye()`. An
/// nlg turn right after a call carries the API's response acts, and the turn
/// after a user `bye()` is a `bye()`. Turns that match none of these rules are
/// left empty and reported.
inline void infer_seed_acts(Dialog& d, const SchemaBundle& bundle, std::vector<Diagnostic>* warnings = nullptr) {
  auto warn = [&](std::size_t t, std::string msg) {
    if (warnings)
      warnings->push_back({Severity::warning, "turn " + std::to_string(d.turns[t].index), std::move(msg)});
  };
  // (turn, span) -> (call turn, arg)
  std::map<std::pair<std::size_t, std::size_t>, std::pair<std::size_t, std::string>> consumer;
  for (const auto& [t, row] : binding_sources(d))
    for (std::size_t b = 0; b < row.size(); ++b)
      if (row[b] && row[b]->span)
        consumer.try_emplace({row[b]->turn, *row[b]->span}, t, d.turns[t].call()->bindings[b].first);

  std::size_t last_user = 0;
  for (std::size_t t = 0; t < d.turns.size(); ++t)
    if (d.turns[t].user()) last_user = t;

  std::set<std::size_t> introduced;  // call turns whose intent was informed
  for (std::size_t t = 0; t < d.turns.size(); ++t) {
    auto& turn = d.turns[t];
    if (auto* u = turn.user()) {
      if (!u->acts.empty()) {
        for (const auto& a : u->acts)
          if (a.name == ActName::inform && a.kind == ArgKind::intent)
            for (std::size_t c = t + 1; c < d.turns.size(); ++c)
              if (const auto* call = d.turns[c].call(); call && call->api == a.arg && !introduced.count(c)) {
                introduced.insert(c);
                break;
              }
        continue;
      }
      std::map<std::size_t, std::vector<std::string>> by_call;
      for (std::size_t s = 0; s < u->spans.size(); ++s) {
        const auto it = consumer.find({t, s});
        if (it == consumer.end()) {
          warn(t, "span '" + u->spans[s].surface + "' is never used by an API call");
          continue;
        }
        by_call[it->second.first].push_back(it->second.second);
      }
      for (auto& [c, args] : by_call) {
        const auto* call = d.turns[c].call();
        if (!introduced.count(c)) {
          u->acts.push_back(DialogAct::intent(ActName::inform, Side::user, call->api));
          introduced.insert(c);
        }
        if (const ApiDef* api = bundle.find_api(call->api)) {
          for (const auto& spec : api->args)
            if (std::find(args.begin(), args.end(), spec.name) != args.end())
              u->acts.push_back(DialogAct::entity(ActName::inform, Side::user, spec.name));
        }
      }
      if (!u->acts.empty()) continue;

      const NlgResponse* prev = t > 0 ? d.turns[t - 1].nlg() : nullptr;
      if (prev) {
        for (const auto& a : prev->acts)
          if (a.name == ActName::confirm && a.kind == ArgKind::intent)
            u->acts.push_back(DialogAct::intent(ActName::affirm, Side::user, a.arg));
        if (!u->acts.empty()) continue;
      }
      for (std::size_t c = t + 1; c < d.turns.size() && !d.turns[c].user(); ++c) {
        const auto* call = d.turns[c].call();
        if (call && !introduced.count(c)) {
          u->acts.push_back(DialogAct::intent(ActName::inform, Side::user, call->api));
          introduced.insert(c);
          break;
        }
      }
      if (!u->acts.empty()) continue;
      if (t == last_user) {
        u->acts.push_back(DialogAct::bare(ActName::bye, Side::user));
        continue;
      }
      warn(t, "cannot infer acts for user turn; annotate it with |acts:");
    } else if (auto* n = turn.nlg()) {
      if (!n->acts.empty()) continue;
      if (t > 0) {
        if (const auto* call = d.turns[t - 1].call()) {
          const ApiDef* api = bundle.find_api(call->api);
          const auto* resp = api ? bundle.find_response(api->response_template) : nullptr;
          if (resp) {
            n->acts = resp->dialog_acts;
            continue;
          }
        }
        for (std::size_t p = t; p-- > 0;) {
          if (const auto* u = d.turns[p].user()) {
            if (contains_act(u->acts, ActName::bye)) n->acts.push_back(DialogAct::bare(ActName::bye, Side::system));
            break;
          }
        }
      }
      if (n->acts.empty()) warn(t, "cannot infer acts for nlg turn; annotate it with |acts:");
    }
  }
}

/// Converts each seed's API call graph into a goal. Seeds without calls are
/// skipped with a warning.
inline std::vector<UserGoal> extract_goals(const std::vector<Dialog>& seeds, const SchemaBundle& bundle,
                                           std::vector<Diagnostic>* warnings = nullptr) {
  std::vector<UserGoal> goals;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    const auto& d = seeds[s];
    const auto meta = d.metadata.find("seed");
    const std::string id = meta != d.metadata.end() ? meta->second : std::to_string(s);
    UserGoal goal;
    goal.origin = GoalOrigin::golden;
    goal.source_seed = id;
    std::map<std::size_t, std::size_t> intent_of_turn;
    for (const auto& [t, row] : binding_sources(d)) {
      const auto* call = d.turns[t].call();
      const ApiDef* api = bundle.find_api(call->api);
      if (!api) throw SchemaError("seed " + id + ": unknown API '" + call->api + "'");
      IntentInstance intent;
      intent.api = call->api;
      for (const auto& spec : api->args) {
        const auto pos = std::find_if(call->bindings.begin(), call->bindings.end(),
                                      [&](const auto& b) { return b.first == spec.name; });
        if (pos == call->bindings.end()) continue;
        const auto& src = row[static_cast<std::size_t>(pos - call->bindings.begin())];
        if (!src) {
          intent.bindings.emplace_back(spec.name, UserValue{*pos->second.literal, spec.entity_type});
        } else if (src->span) {
          const auto& span = d.turns[src->turn].user()->spans[*src->span];
          intent.bindings.emplace_back(spec.name, UserValue{span.surface, span.entity_type});
        } else {
          const auto it = intent_of_turn.find(src->turn);
          if (it == intent_of_turn.end())
            throw SchemaError("seed " + id + ": unresolvable binding for " + call->api + "." + spec.name);
          intent.bindings.emplace_back(spec.name, ReturnRef{it->second});
        }
      }
      intent_of_turn[t] = goal.intents.size();
      goal.intents.push_back(std::move(intent));
    }
    if (goal.intents.empty()) {
      if (warnings) warnings->push_back({Severity::warning, "seed " + id, "seed has no API calls; skipped"});
      continue;
    }
    goals.push_back(std::move(goal));
  }
  return goals;
}

namespace detail {

inline const std::vector<std::string>& catalog_of(const SchemaBundle& bundle, const std::string& type) {
  const auto* et = bundle.find_entity_type(type);
  if (!et) throw SamplerError("unknown entity type '" + type + "'");
  if (et->catalog.empty()) throw SamplerError("entity type '" + type + "' has an empty catalog");
  return et->catalog;
}

}  // namespace detail

/// Uniform draw from the catalog of `type`.
inline std::string sample_catalog(const SchemaBundle& bundle, const std::string& type, Rng& rng) {
  const auto& cat = detail::catalog_of(bundle, type);
  return cat[rng.uniform_index(cat.size())];
}

/// Draws one extracted goal uniformly with replacement and redraws every
/// user-provided value from its type's catalog.
inline UserGoal sample_golden(const std::vector<UserGoal>& goals, const SchemaBundle& bundle, Rng& rng) {
  if (goals.empty()) throw SamplerError("golden sampler needs at least one seed goal");
  UserGoal g = goals[rng.uniform_index(goals.size())];
  g.origin = GoalOrigin::golden;
  for (auto& intent : g.intents)
    for (auto& [arg, b] : intent.bindings)
      if (auto* uv = std::get_if<UserValue>(&b)) uv->surface = sample_catalog(bundle, uv->entity_type, rng);
  return g;
}

// ---------------------------------------------------------------------------
// Markov goal model

inline constexpr const char* kEndState = "<END>";

struct BindingStats {
  double user_value = 0.0;
  double absent = 0.0;
  std::map<std::string, double> return_source;  // source API -> probability

  double return_total() const {
    double s = 0.0;
    for (const auto& [_, p] : return_source) s += p;
    return s;
  }
  bool operator==(const BindingStats&) const = default;
};

/// First-order chain over intents plus per-argument binding statistics,
/// all maximum-likelihood estimates from seed goals (no smoothing).
struct MarkovGoalModel {
  std::map<std::string, double> start;
  std::map<std::string, std::map<std::string, double>> transition;  // includes kEndState
  std::map<std::string, std::map<std::string, BindingStats>> binding_stats;

  bool operator==(const MarkovGoalModel&) const = default;
};

inline MarkovGoalModel fit_markov(const std::vector<UserGoal>& goals, const SchemaBundle& bundle) {
  MarkovGoalModel m;
  std::map<std::string, double> start;
  std::map<std::string, std::map<std::string, double>> trans;
  struct Counts {
    double uv = 0, absent = 0;
    std::map<std::string, double> src;
  };
  std::map<std::string, std::map<std::string, Counts>> bind;
  for (const auto& g : goals) {
    if (g.intents.empty()) continue;
    start[g.intents.front().api] += 1;
    for (std::size_t i = 0; i < g.intents.size(); ++i) {
      const auto& intent = g.intents[i];
      trans[intent.api][i + 1 < g.intents.size() ? g.intents[i + 1].api : kEndState] += 1;
      const ApiDef* api = bundle.find_api(intent.api);
      if (!api) continue;
      for (const auto& spec : api->args) {
        auto& c = bind[api->name][spec.name];
        const Binding* b = intent.find(spec.name);
        if (!b) c.absent += 1;
        else if (std::holds_alternative<UserValue>(*b)) c.uv += 1;
        else c.src[g.intents[std::get<ReturnRef>(*b).intent_index].api] += 1;
      }
    }
  }
  auto normalize = [](const std::map<std::string, double>& counts) {
    double total = 0;
    for (const auto& [_, c] : counts) total += c;
    std::map<std::string, double> out;
    for (const auto& [k, c] : counts) out[k] = c / total;
    return out;
  };
  m.start = normalize(start);
  for (const auto& [api, row] : trans) m.transition[api] = normalize(row);
  for (const auto& [api, args] : bind) {
    for (const auto& [arg, c] : args) {
      double total = c.uv + c.absent;
      for (const auto& [_, n] : c.src) total += n;
      BindingStats s;
      s.user_value = c.uv / total;
      s.absent = c.absent / total;
      for (const auto& [src, n] : c.src) s.return_source[src] = n / total;
      m.binding_stats[api][arg] = s;
    }
  }
  return m;
}

namespace detail {

template <typename Map>
std::string draw_key(const Map& probs, Rng& rng) {
  std::vector<double> w;
  std::vector<std::string> keys;
  for (const auto& [k, p] : probs) {
    keys.push_back(k);
    w.push_back(p);
  }
  return keys[rng.categorical(w)];
}

}  // namespace detail

/// Samples the intent chain, then each argument's binding variant. A drawn
/// reference uses the most recent earlier intent returning the argument's
/// type, falling back to a catalog value when none exists. Drafts failing
/// validate_goal are redrawn up to `max_attempts` times.
inline UserGoal sample_markov(const MarkovGoalModel& model, const SchemaBundle& bundle, Rng& rng,
                              std::size_t max_len = 8, std::size_t max_attempts = 100) {
  if (model.start.empty()) throw SamplerError("Markov model has no start distribution");
  if (max_len == 0) throw SamplerError("max_len must be at least 1");
  for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
    std::vector<std::string> seq{detail::draw_key(model.start, rng)};
    while (seq.size() < max_len) {
      const auto row = model.transition.find(seq.back());
      if (row == model.transition.end() || row->second.empty()) break;
      auto next = detail::draw_key(row->second, rng);
      if (next == kEndState) break;
      seq.push_back(std::move(next));
    }

    UserGoal g;
    g.origin = GoalOrigin::markov;
    bool feasible = true;
    for (std::size_t i = 0; i < seq.size() && feasible; ++i) {
      const ApiDef* api = bundle.find_api(seq[i]);
      if (!api) throw SamplerError("Markov model references unknown API '" + seq[i] + "'");
      IntentInstance intent;
      intent.api = api->name;
      for (const auto& spec : api->args) {
        const auto* type = bundle.find_entity_type(spec.entity_type);
        const bool has_catalog = type && type->kind != EntityKind::object && !type->catalog.empty();
        BindingStats stats;
        if (const auto a = model.binding_stats.find(api->name); a != model.binding_stats.end())
          if (const auto s = a->second.find(spec.name); s != a->second.end()) stats = s->second;
        if (stats.user_value + stats.absent + stats.return_total() <= 0.0) {
          if (spec.required) stats.user_value = 1.0;
          else stats.absent = 1.0;
        }
        const double w[3] = {stats.user_value, stats.absent, stats.return_total()};
        const auto variant = rng.categorical(w);

        std::optional<Binding> binding;
        auto compatible_source = [&]() -> std::optional<std::size_t> {
          for (std::size_t j = i; j-- > 0;) {
            const ApiDef* src = bundle.find_api(g.intents[j].api);
            if (src && src->return_type == spec.entity_type) return j;
          }
          return std::nullopt;
        };
        if (variant == 2) {
          if (auto src = compatible_source()) binding = ReturnRef{*src};
          else if (has_catalog) binding = UserValue{sample_catalog(bundle, spec.entity_type, rng), spec.entity_type};
        } else if (variant == 0) {
          if (has_catalog) binding = UserValue{sample_catalog(bundle, spec.entity_type, rng), spec.entity_type};
          else if (auto src = compatible_source()) binding = ReturnRef{*src};
        }
        if (binding) {
          intent.bindings.emplace_back(spec.name, std::move(*binding));
        } else if (spec.required) {
          feasible = false;
          break;
        }
      }
      g.intents.push_back(std::move(intent));
    }
    if (feasible && validate_goal(g, bundle).empty()) return g;
  }
  throw SamplerError("no valid goal after " + std::to_string(max_attempts) + " Markov samples");
}

// ---------------------------------------------------------------------------
// Model (de)serialization

inline nlohmann::json markov_to_json(const MarkovGoalModel& m) {
  nlohmann::json j;
  j["start"] = m.start;
  j["transition"] = m.transition;
  nlohmann::json bind = nlohmann::json::object();
  for (const auto& [api, args] : m.binding_stats)
    for (const auto& [arg, s] : args)
      bind[api][arg] = {{"user_value", s.user_value}, {"absent", s.absent}, {"return_ref", s.return_source}};
  j["binding_stats"] = std::move(bind);
  return j;
}

inline MarkovGoalModel markov_from_json(const nlohmann::json& j) {
  MarkovGoalModel m;
  try {
    m.start = j.at("start").get<std::map<std::string, double>>();
    m.transition = j.at("transition").get<std::map<std::string, std::map<std::string, double>>>();
    for (const auto& [api, args] : j.at("binding_stats").items())
      for (const auto& [arg, s] : args.items()) {
        BindingStats b;
        b.user_value = s.at("user_value").get<double>();
        b.absent = s.at("absent").get<double>();
        b.return_source = s.at("return_ref").get<std::map<std::string, double>>();
        m.binding_stats[api][arg] = b;
      }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed Markov model: ") + e.what());
  }
  auto check_row = [](const std::map<std::string, double>& row, const std::string& what) {
    double s = 0;
    for (const auto& [_, p] : row) {
      if (p < 0) throw Error("negative probability in " + what);
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-9) throw Error(what + " does not sum to 1");
  };
  check_row(m.start, "start distribution");
  for (const auto& [api, row] : m.transition) check_row(row, "transition row of " + api);
  return m;
}

}  // namespace dialogsim
