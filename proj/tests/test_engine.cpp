#include <gtest/gtest.h>

#include "support.hpp"

using namespace dialogsim;
using testing_support::demo_bundle;
using testing_support::demo_context;
using testing_support::quiet_config;

namespace {

UserGoal booking_goal() { return extract_goals({testing_support::booking_seed()}, demo_bundle())[0]; }

std::vector<const ApiCall*> calls_of(const Dialog& d) {
  std::vector<const ApiCall*> out;
  for (const auto& t : d.turns)
    if (const auto* c = t.call()) out.push_back(c);
  return out;
}

}  // namespace

TEST(Engine, QuietDialogCompletesEveryIntent) {
  Rng rng(1);
  DialogStats stats;
  const auto d = run_dialog(booking_goal(), demo_context(), quiet_config(), rng, &stats);
  EXPECT_TRUE(stats.completed);
  EXPECT_FALSE(stats.truncated);
  const auto calls = calls_of(d);
  ASSERT_EQ(calls.size(), 3u);
  EXPECT_EQ(calls[0]->api, "FindMovies");
  EXPECT_EQ(calls[1]->api, "SelectShow");
  EXPECT_EQ(calls[1]->find("movies")->var, calls[0]->return_var);
  EXPECT_EQ(calls[2]->find("show")->var, calls[1]->return_var);
  EXPECT_EQ(d.turns.back().nlg()->acts, std::vector<DialogAct>{DialogAct::bare(ActName::bye, Side::system)});
  // generated markup parses back to the same dialog
  EXPECT_EQ(parse_dialog(serialize_dialog(d), demo_bundle()), d);
}

TEST(Engine, CallsBindTheGoalValues) {
  const auto goal = booking_goal();
  Rng rng(2);
  const auto d = run_dialog(goal, demo_context(), quiet_config(), rng);
  std::map<std::string, std::string> surface;
  for (const auto& t : d.turns)
    if (const auto* u = t.user())
      for (const auto& s : u->spans) surface[s.var_id] = s.surface;
  const auto calls = calls_of(d);
  ASSERT_EQ(calls.size(), goal.intents.size());
  for (std::size_t i = 0; i < calls.size(); ++i)
    for (const auto& [arg, b] : goal.intents[i].bindings)
      if (const auto* v = std::get_if<UserValue>(&b)) {
        EXPECT_EQ(surface.at(calls[i]->find(arg)->var), v->surface);
      }
}

TEST(Engine, AlwaysFailingApiMakesTheUserAbandon) {
  auto config = quiet_config();
  config.agent.api_failure_rate = 1;
  UserGoal goal;
  goal.intents.push_back(booking_goal().intents[0]);
  Rng rng(3);
  DialogStats stats;
  const auto d = run_dialog(goal, demo_context(), config, rng, &stats);
  EXPECT_EQ(stats.abandonments, 1u);
  EXPECT_FALSE(stats.completed);
  EXPECT_TRUE(calls_of(d).empty());
  EXPECT_TRUE(contains_act(*d.turns.back().acts(), ActName::bye));
}

TEST(Engine, EmptyGoalIsRejected) {
  Rng rng(4);
  EXPECT_THROW(run_dialog(UserGoal{}, demo_context(), quiet_config(), rng), PreconditionError);
}

TEST(Engine, TurnLimitTruncates) {
  auto config = quiet_config();
  config.max_turns = 3;
  Rng rng(5);
  DialogStats stats;
  const auto d = run_dialog(booking_goal(), demo_context(), config, rng, &stats);
  EXPECT_TRUE(stats.truncated);
  EXPECT_EQ(d.metadata.at("truncated"), "true");
}

TEST(Engine, BaseReplayKeepsSeedActs) {
  const auto& ctx = demo_context();
  Rng rng(6);
  for (const auto& seed : ctx.seeds) {
    const auto d = replay_seed(seed, ctx, rng);
    EXPECT_EQ(sequence_string(d), sequence_string(seed));
    EXPECT_EQ(parse_dialog(serialize_dialog(d), demo_bundle()), d);
  }
}

TEST(Engine, MixtureSplitsDialogsByOrigin) {
  GenerationConfig config;
  config.n_dialogs = 2000;
  config.sampler_mix = {0.0, 0.4, 0.6};
  const auto r = run_batch(demo_context(), config);
  std::map<std::string, std::size_t> origins;
  for (const auto& d : r.dialogs) ++origins[d.metadata.at("goal_origin")];
  EXPECT_EQ(origins, r.stats.by_sampler);
  EXPECT_NEAR(origins["golden"] / 2000.0, 0.4, 0.04);
}

TEST(Engine, SameSeedSameCorpus) {
  GenerationConfig config;
  config.n_dialogs = 200;
  config.rng_seed = 42;
  const auto a = serialize_corpus(run_batch(demo_context(), config).dialogs);
  EXPECT_EQ(a, serialize_corpus(run_batch(demo_context(), config).dialogs));
  config.rng_seed = 43;
  EXPECT_NE(a, serialize_corpus(run_batch(demo_context(), config).dialogs));
}

TEST(Engine, ThreadCountDoesNotChangeOutput) {
  GenerationConfig config;
  config.n_dialogs = 300;
  config.sampler_mix = {0.2, 0.4, 0.4};
  const auto one = run_batch(demo_context(), config);
  config.threads = 4;
  const auto four = run_batch(demo_context(), config);
  EXPECT_EQ(one.dialogs, four.dialogs);
  EXPECT_EQ(one.stats.api_failures, four.stats.api_failures);
}

TEST(Engine, GoldenWithoutGoalsIsAPreconditionError) {
  const auto ctx = testing_support::context_for("U-1: hi\nS-2: nlg: hello\n");
  GenerationConfig config;
  config.n_dialogs = 1;
  EXPECT_THROW(run_batch(ctx, config), PreconditionError);
}
