#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "dialogsim/config.hpp"
#include "dialogsim/error.hpp"
#include "dialogsim/goals.hpp"
#include "dialogsim/markup.hpp"
#include "dialogsim/nlg.hpp"
#include "dialogsim/rng.hpp"
#include "dialogsim/schema.hpp"
#include "dialogsim/system_agent.hpp"
#include "dialogsim/user_agent.hpp"

namespace dialogsim {

struct DialogStats {
  std::size_t abandonments = 0;
  std::size_t corrections = 0;
  std::size_t offers_made = 0;
  std::size_t offers_accepted = 0;
  std::size_t api_failures = 0;
  std::size_t recalls = 0;
  bool truncated = false;
  bool completed = false;  // every goal intent reached a successful call
};

struct BatchStats {
  std::size_t abandonments = 0;
  std::size_t corrections = 0;
  std::size_t offers_made = 0;
  std::size_t offers_accepted = 0;
  std::size_t api_failures = 0;
  std::size_t recalls = 0;
  std::size_t truncations = 0;
  std::size_t completed = 0;
  std::map<std::string, std::size_t> by_sampler;

  void add(const DialogStats& d) {
    abandonments += d.abandonments;
    corrections += d.corrections;
    offers_made += d.offers_made;
    offers_accepted += d.offers_accepted;
    api_failures += d.api_failures;
    recalls += d.recalls;
    truncations += d.truncated ? 1 : 0;
    completed += d.completed ? 1 : 0;
  }
};

struct BatchResult {
  std::vector<Dialog> dialogs;
  BatchStats stats;
};

/// Everything shared read-only by the dialogs of a batch.
struct SimulationContext {
  const SchemaBundle* bundle = nullptr;
  std::vector<Dialog> seeds;  // with acts inferred
  std::vector<UserGoal> goals;
  MarkovGoalModel model;
  TemplateIndex index;
};

/// Infers seed acts, extracts goals, fits the goal model and indexes templates.
/// `extra_templates` are imported paraphrases.
inline SimulationContext prepare_context(const SchemaBundle& bundle, std::vector<Dialog> seeds,
                                         const std::vector<UtteranceTemplateDef>& extra_templates = {},
                                         std::vector<Diagnostic>* warnings = nullptr) {
  SimulationContext ctx;
  ctx.bundle = &bundle;
  for (auto& d : seeds) infer_seed_acts(d, bundle, warnings);
  ctx.seeds = std::move(seeds);
  ctx.goals = extract_goals(ctx.seeds, bundle, warnings);
  ctx.model = fit_markov(ctx.goals, bundle);
  ctx.index = build_template_index(bundle, ctx.seeds, warnings);
  for (const auto& t : extra_templates) ctx.index.add(t);
  return ctx;
}

/// Runs the user/system interplay loop for one goal.
inline Dialog run_dialog(const UserGoal& goal, const SimulationContext& ctx, const GenerationConfig& config, Rng& rng,
                         DialogStats* stats = nullptr) {
  const auto& bundle = *ctx.bundle;
  if (goal.intents.empty()) throw PreconditionError("goal has no intents");
  for (const auto& d : validate_goal(goal, bundle))
    if (d.severity == Severity::error) throw PreconditionError("invalid goal: " + to_string(d));

  auto user = init_user(goal, bundle, config.agent, rng);
  auto sys = init_system(bundle, &ctx.model);
  Dialog dialog;
  SystemObservation obs;
  bool truncated = false;
  auto push = [&](Side side, auto payload) {
    Turn t;
    t.index = dialog.turns.size() + 1;
    t.side = side;
    t.payload = std::move(payload);
    dialog.turns.push_back(std::move(t));
  };

  while (true) {
    if (dialog.turns.size() >= config.max_turns) {
      truncated = true;
      break;
    }
    auto uo = next_user_turn(user, obs, config.agent, rng);
    std::map<std::string, SlotValue> slots;
    for (const auto& a : uo.acts) {
      if (a.name != ActName::inform || a.kind != ArgKind::entity) continue;
      const auto& v = uo.slot_values.at(a.arg);
      slots[a.arg] = SlotValue{v.surface, sys.vars.next(bundle.var_prefix(v.entity_type)), v.entity_type};
    }
    auto r = realize(uo.acts, slots, ctx.index, rng);
    push(Side::user, UserUtterance{std::move(r.text), std::move(r.spans), uo.acts});

    auto so = next_system_turn(sys, uo.acts, slots, config.agent, rng);
    for (auto& call : so.api_calls) push(Side::system, std::move(call));
    if (!so.segments.empty()) push(Side::system, NlgResponse{realize_system(so.segments, ctx.index, rng), so.acts});
    if (so.closing) break;
    obs = so.observation();
  }

  dialog.metadata["goal_origin"] = std::string(to_string(goal.origin));
  if (goal.source_seed) dialog.metadata["goal_source"] = *goal.source_seed;
  dialog.metadata["truncated"] = truncated ? "true" : "false";
  if (stats) {
    stats->abandonments = user.abandoned;
    stats->corrections = static_cast<std::size_t>(user.corrections);
    stats->offers_made = sys.offers_made;
    stats->offers_accepted = sys.offers_accepted;
    stats->api_failures = sys.api_failures;
    stats->recalls = sys.recalls;
    stats->truncated = truncated;
    stats->completed = std::all_of(user.fulfilled.begin(), user.fulfilled.end(), [](bool b) { return b; });
  }
  return dialog;
}

/// Replays a seed with the same acts, resampling user values from their
/// catalogs and surface forms from the template index.
inline Dialog replay_seed(const Dialog& seed, const SimulationContext& ctx, Rng& rng) {
  const auto& bundle = *ctx.bundle;
  Dialog out;
  out.turns = seed.turns;
  const auto roles = span_roles(seed);
  std::map<std::string, std::string> surface_of;  // var -> latest surface

  for (std::size_t t = 0; t < out.turns.size(); ++t) {
    auto& turn = out.turns[t];
    if (auto* u = turn.user()) {
      std::map<std::size_t, std::string> turn_roles;
      for (std::size_t i = 0; i < u->spans.size(); ++i)
        if (const auto it = roles.find({t, i}); it != roles.end()) turn_roles[i] = it->second;
      const auto names = span_slots(*u, turn_roles);
      std::map<std::string, SlotValue> slots;
      std::set<std::string> wanted;
      for (std::size_t i = 0; i < u->spans.size(); ++i) {
        const auto& span = u->spans[i];
        std::string surface = span.surface;
        const auto* et = bundle.find_entity_type(span.entity_type);
        if (et && !et->catalog.empty()) surface = sample_catalog(bundle, span.entity_type, rng);
        slots[names[i]] = SlotValue{surface, span.var_id, span.entity_type};
        wanted.insert(names[i]);
        surface_of[span.var_id] = surface;
      }
      std::vector<std::string> candidates;
      if (!u->acts.empty())
        if (const auto* bucket = ctx.index.find(u->acts))
          for (const auto& tmpl : *bucket)
            if (detail::slots_of(tmpl.text) == wanted) candidates.push_back(tmpl.text);
      const auto own = delexicalize_turn(*u, turn_roles).text;
      const auto& chosen = candidates.empty() ? own : candidates[rng.uniform_index(candidates.size())];
      Realization r;
      detail::fill(chosen, slots, r);
      u->text = std::move(r.text);
      u->spans = std::move(r.spans);
    } else if (auto* n = turn.nlg()) {
      const ResponseTemplateDef* resp = nullptr;
      const ApiCall* call = t > 0 ? out.turns[t - 1].call() : nullptr;
      if (call) {
        const auto* api = bundle.find_api(call->api);
        const auto* r = api ? bundle.find_response(api->response_template) : nullptr;
        if (r && r->dialog_acts == n->acts) resp = r;
      }
      if (!resp && n->acts.size() == 1 && n->acts[0].name == ActName::bye)
        for (const auto* r : bundle.all_responses())
          if (r->dialog_acts == n->acts && r->args.empty()) {
            resp = r;
            break;
          }
      if (!resp) continue;
      std::map<std::string, std::string> values;
      for (const auto& arg : resp->args) {
        std::string surface;
        if (call)
          if (const auto* ref = call->find(arg.name); ref && ref->is_var())
            if (const auto it = surface_of.find(ref->var); it != surface_of.end()) surface = it->second;
        if (surface.empty()) {
          const auto* et = bundle.find_entity_type(arg.entity_type);
          if (et && !et->catalog.empty()) surface = sample_catalog(bundle, arg.entity_type, rng);
        }
        values[arg.name] = surface;
      }
      n->text = realize_response(*resp, values, rng);
    }
  }
  const auto src = seed.metadata.find("seed");
  if (src != seed.metadata.end()) out.metadata["goal_source"] = src->second;
  out.metadata["goal_origin"] = "base";
  out.metadata["truncated"] = "false";
  return out;
}

namespace detail {

inline Dialog generate_one(const SimulationContext& ctx, const GenerationConfig& config, std::size_t i,
                           DialogStats& stats, std::string& sampler) {
  Rng rng(stream_seed(config.rng_seed, i));
  const auto& m = config.sampler_mix;
  const double w[] = {m.base, m.golden, m.markov};
  const auto pick = rng.categorical(w);
  Dialog d;
  if (pick == 0) {
    sampler = "base";
    if (ctx.seeds.empty()) throw SamplerError("base sampler needs at least one seed");
    d = replay_seed(ctx.seeds[rng.uniform_index(ctx.seeds.size())], ctx, rng);
  } else {
    sampler = pick == 1 ? "golden" : "markov";
    const auto goal = pick == 1 ? sample_golden(ctx.goals, *ctx.bundle, rng)
                                : sample_markov(ctx.model, *ctx.bundle, rng, config.max_len, config.max_attempts);
    d = run_dialog(goal, ctx, config, rng, &stats);
  }
  d.metadata["sampler"] = sampler;
  d.metadata["dialog"] = std::to_string(i);
  d.metadata["rng_seed"] = std::to_string(config.rng_seed);
  return d;
}

}  // namespace detail

/// Generates `config.n_dialogs` dialogs. Dialog i draws everything from the
/// substream stream_seed(rng_seed, i), so the output does not depend on the
/// thread count.
inline BatchResult run_batch(const SimulationContext& ctx, const GenerationConfig& config) {
  check_config(config);
  const auto& m = config.sampler_mix;
  if ((m.golden > 0 || m.markov > 0) && ctx.goals.empty())
    throw PreconditionError("golden and markov sampling need at least one seed dialog with API calls");
  if (m.base > 0 && ctx.seeds.empty()) throw PreconditionError("base sampling needs at least one seed dialog");

  const auto n = config.n_dialogs;
  std::vector<Dialog> dialogs(n);
  std::vector<DialogStats> stats(n);
  std::vector<std::string> samplers(n);
  std::size_t threads = config.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : config.threads;
  threads = std::min(threads, n);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::size_t failed_at = n;
  std::mutex mu;
  auto work = [&]() {
    while (true) {
      const auto i = next.fetch_add(1);
      if (i >= n) return;
      try {
        dialogs[i] = detail::generate_one(ctx, config, i, stats[i], samplers[i]);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < failed_at) {
          failed_at = i;
          failure = std::current_exception();
        }
        next = n;
        return;
      }
    }
  };
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
  }
  if (failure) {
    try {
      std::rethrow_exception(failure);
    } catch (const std::exception& e) {
      throw Error("dialog " + std::to_string(failed_at) + ": " + e.what());
    }
  }

  BatchResult result;
  result.dialogs = std::move(dialogs);
  for (std::size_t i = 0; i < n; ++i) {
    result.stats.add(stats[i]);
    ++result.stats.by_sampler[samplers[i]];
  }
  return result;
}

inline BatchResult run_batch(const SchemaBundle& bundle, const std::vector<Dialog>& seeds, const GenerationConfig& config) {
  const auto ctx = prepare_context(bundle, seeds);
  return run_batch(ctx, config);
}

}  // namespace dialogsim
