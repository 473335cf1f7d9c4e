// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "support.hpp"

using namespace dialogsim;
using testing_support::demo_bundle;
using testing_support::demo_context;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Check {
 public:
  void expect(bool cond, const std::string& what) {
    if (!cond && failures_.size() < 5) failures_.push_back(what);
    if (!cond) ++failed_;
  }
  void note(const std::string& s) {
    if (!notes_.empty()) notes_ += "; ";
    notes_ += s;
  }
  Outcome outcome() const {
    std::string d = notes_;
    for (const auto& f : failures_) d += (d.empty() ? "" : "; ") + std::string("FAILED ") + f;
    if (failed_ > failures_.size()) d += " (+" + std::to_string(failed_ - failures_.size()) + " more)";
    return {failed_ == 0, d};
  }

 private:
  std::vector<std::string> failures_;
  std::size_t failed_ = 0;
  std::string notes_;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << v;
  return os.str();
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

GenerationConfig config_for(double base, double golden, double markov, std::size_t n, std::uint64_t seed) {
  GenerationConfig c;
  c.n_dialogs = n;
  c.sampler_mix = {base, golden, markov};
  c.rng_seed = seed;
  return c;
}

// Corpora shared between criteria.
struct Corpora {
  std::vector<Dialog> base, golden, markov;
  double seconds = 0;
};

const Corpora& corpora() {
  static const Corpora c = [] {
    Corpora out;
    const auto t0 = std::chrono::steady_clock::now();
    out.base = run_batch(demo_context(), config_for(1, 0, 0, 10000, 2024)).dialogs;
    out.golden = run_batch(demo_context(), config_for(0, 1, 0, 10000, 2024)).dialogs;
    out.markov = run_batch(demo_context(), config_for(0, 0, 1, 10000, 2024)).dialogs;
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
  }();
  return c;
}

// Independent entropy: H = ln N - (1/N) sum c ln c, with counts found by
// pairwise string comparison.
double brute_force_entropy(const std::vector<std::string>& seqs) {
  std::vector<bool> used(seqs.size(), false);
  double sum = 0;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    if (used[i]) continue;
    double c = 0;
    for (std::size_t j = i; j < seqs.size(); ++j)
      if (!used[j] && seqs[j] == seqs[i]) {
        used[j] = true;
        ++c;
      }
    sum += c * std::log(c);
  }
  const double n = static_cast<double>(seqs.size());
  return std::log(n) - sum / n;
}

Dialog single_turn(const std::vector<DialogAct>& acts) {
  Dialog d;
  Turn t;
  t.payload = UserUtterance{"x", {}, acts};
  d.turns.push_back(std::move(t));
  return d;
}

std::set<std::size_t> reachable_dependents(const UserGoal& g, std::size_t failed) {
  std::set<std::size_t> out{failed};
  bool grew = true;
  while (grew) {
    grew = false;
    for (std::size_t j = 0; j < g.intents.size(); ++j) {
      if (out.count(j)) continue;
      for (const auto& [arg, b] : g.intents[j].bindings)
        if (const auto* r = std::get_if<ReturnRef>(&b); r && out.count(r->intent_index)) {
          out.insert(j);
          grew = true;
          break;
        }
    }
  }
  return out;
}

UserValue uv(std::string s, std::string t) { return {std::move(s), std::move(t)}; }

// ---------------------------------------------------------------------------

Outcome entropy_ordering() {
  Check c;
  const auto& k = corpora();
  const auto b = variation_report(k.base), g = variation_report(k.golden), m = variation_report(k.markov);
  c.note("H base/golden/markov = " + fmt(b.entropy_nats) + "/" + fmt(g.entropy_nats) + "/" + fmt(m.entropy_nats));
  c.note("unique base/golden/markov = " + fmt(b.fraction_unique) + "/" + fmt(g.fraction_unique) + "/" +
         fmt(m.fraction_unique));
  c.note("generation " + fmt(k.seconds, 1) + " s");
  c.expect(g.entropy_nats - b.entropy_nats >= 0.3, "entropy gap golden-base < 0.3");
  c.expect(m.entropy_nats - g.entropy_nats >= 0.3, "entropy gap markov-golden < 0.3");
  c.expect(g.fraction_unique - b.fraction_unique >= 0.05, "unique gap golden-base < 5 pp");
  c.expect(m.fraction_unique - g.fraction_unique >= 0.05, "unique gap markov-golden < 5 pp");
  c.expect(k.seconds < 60, "generation took longer than 60 s");
  return c.outcome();
}

Outcome base_ceiling() {
  Check c;
  const auto& base = corpora().base;
  const auto k = demo_context().seeds.size();
  const auto u = unique_sequences(base).count;
  const double h = entropy(base);
  c.note("k=" + std::to_string(k) + " unique=" + std::to_string(u) + " H=" + fmt(h, 6) + " ln k=" +
         fmt(std::log(static_cast<double>(k)), 6));
  c.expect(u <= k, "more unique sequences than seeds");
  c.expect(h <= std::log(static_cast<double>(k)), "entropy above ln k");
  return c.outcome();
}

Outcome entropy_oracle() {
  Check c;
  Rng rng(99);
  const std::vector<DialogAct> pool = {
      DialogAct::bare(ActName::bye, Side::user), DialogAct::bare(ActName::repeat, Side::user),
      DialogAct::intent(ActName::inform, Side::user, "FindMovies"),
      DialogAct::entity(ActName::inform, Side::user, "location"),
      DialogAct::entity(ActName::deny, Side::user, "time")};
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Dialog> corpus;
    std::vector<std::string> seqs;
    const auto n = 1 + rng.uniform_index(300);
    const auto variety = 1 + rng.uniform_index(12);
    for (std::size_t i = 0; i < n; ++i) {
      const auto code = rng.uniform_index(variety);
      std::vector<DialogAct> acts{pool[code % pool.size()]};
      if (code >= pool.size()) acts.push_back(pool[(code / pool.size()) % pool.size()]);
      corpus.push_back(single_turn(acts));
      seqs.push_back(to_string(acts));
    }
    worst = std::max(worst, std::abs(entropy(corpus) - brute_force_entropy(seqs)));
  }
  c.note("max |diff| over 100 corpora = " + fmt(worst, 12));
  c.expect(worst <= 1e-9, "plug-in entropy differs from brute force");
  const std::vector<Dialog> one{single_turn({pool[0]}), single_turn({pool[0]})};
  c.expect(entropy(one) == 0.0, "single sequence entropy is not 0");
  const std::vector<Dialog> two{single_turn({pool[0]}), single_turn({pool[1]})};
  c.expect(std::abs(entropy(two) - 0.693147) <= 1e-6 && std::abs(entropy(two) - std::log(2.0)) <= 1e-9,
           "uniform over two is not ln 2");
  return c.outcome();
}

Outcome goal_validity() {
  Check c;
  const auto& ctx = demo_context();
  Rng rng(7);
  std::size_t diags = 0;
  for (int i = 0; i < 10000; ++i) {
    diags += validate_goal(sample_golden(ctx.goals, demo_bundle(), rng), demo_bundle()).size();
    diags += validate_goal(sample_markov(ctx.model, demo_bundle(), rng), demo_bundle()).size();
  }
  c.note("diagnostics on 20000 goals = " + std::to_string(diags));
  c.expect(diags == 0, "sampled goals produced diagnostics");
  return c.outcome();
}

Outcome golden_fidelity() {
  Check c;
  const auto& ctx = demo_context();
  std::set<std::string> structures;
  for (const auto& g : ctx.goals) structures.insert(goal_structure(g));
  Rng rng(8);
  std::size_t mismatched = 0;
  for (int i = 0; i < 10000; ++i)
    if (!structures.count(goal_structure(sample_golden(ctx.goals, demo_bundle(), rng)))) ++mismatched;
  c.expect(mismatched == 0, std::to_string(mismatched) + " samples with a foreign structure");

  // singleton catalogs: the seed goals, re-expressed in the only available values
  auto domains = demo_bundle().domains();
  for (auto& t : domains[0].entity_types)
    if (!t.catalog.empty()) t.catalog.resize(1);
  auto builtins = demo_bundle().builtins();
  for (auto& t : builtins) t.catalog.resize(1);
  const SchemaBundle singleton(domains, builtins);
  auto seeds = ctx.goals;
  for (auto& g : seeds)
    for (auto& intent : g.intents)
      for (auto& [arg, b] : intent.bindings)
        if (auto* v = std::get_if<UserValue>(&b)) v->surface = singleton.find_entity_type(v->entity_type)->catalog[0];
  std::size_t differing = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto g = sample_golden(seeds, singleton, rng);
    if (std::find(seeds.begin(), seeds.end(), g) == seeds.end()) ++differing;
  }
  c.expect(differing == 0, std::to_string(differing) + " singleton samples differ from every seed goal");
  c.note("structures=" + std::to_string(structures.size()) + " foreign=" + std::to_string(mismatched) +
         " singleton mismatches=" + std::to_string(differing));
  return c.outcome();
}

Outcome markov_fidelity() {
  Check c;
  const auto& m = demo_context().model;
  // hand counts over the five demo seeds
  const std::map<std::string, double> start{{"FindMovies", 4.0 / 5}, {"SelectShow", 1.0 / 5}};
  const std::map<std::string, std::map<std::string, double>> trans{
      {"FindMovies", {{"SelectShow", 3.0 / 5}, {"FindMovies", 1.0 / 5}, {kEndState, 1.0 / 5}}},
      {"SelectShow", {{"BookTickets", 3.0 / 4}, {kEndState, 1.0 / 4}}},
      {"BookTickets", {{kEndState, 1.0}}}};
  c.expect(m.start == start, "start distribution differs from hand counts");
  c.expect(m.transition == trans, "transitions differ from hand counts");

  Rng rng(9);
  std::size_t outside = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto g = sample_markov(m, demo_bundle(), rng);
    if (!m.start.count(g.intents.front().api)) ++outside;
    for (std::size_t k = 0; k + 1 < g.intents.size(); ++k) {
      const auto row = m.transition.find(g.intents[k].api);
      if (row == m.transition.end() || !row->second.count(g.intents[k + 1].api)) ++outside;
    }
    if (g.intents.size() < GenerationConfig{}.max_len && !m.transition.at(g.intents.back().api).count(kEndState))
      ++outside;
  }
  c.expect(outside == 0, std::to_string(outside) + " sampled transitions outside the fitted support");

  const auto ctx = testing_support::context_for(
      "U-1: movies in [Oakland|c0] after [2 PM|t0]\n"
      "S-2: call: FindMovies(location=$c0,timeLowerBound=$t0) -> movies0\n"
      "U-3: the [4 PM|t1] [Dune|m0]\n"
      "S-4: call: SelectShow(time=$t1,movieName=$m0,movies=$movies0) -> show0\n"
      "\n"
      "U-1: [Dune|m0] at [4 PM|t0]\n"
      "S-2: call: SelectShow(time=$t0,movieName=$m0) -> show0\n"
      "U-3: [two|count0] [adult|type0]\n"
      "S-4: call: BookTickets(show=$show0,count=$count0,type=$type0) -> booking0\n");
  int first_abc = -1;
  for (int i = 0; i < 1000 && first_abc < 0; ++i) {
    const auto g = sample_markov(ctx.model, demo_bundle(), rng);
    if (g.intents.size() == 3 && g.intents[0].api == "FindMovies" && g.intents[1].api == "SelectShow" &&
        g.intents[2].api == "BookTickets")
      first_abc = i;
  }
  c.expect(first_abc >= 0, "no [A,B,C] goal within 1000 samples");
  c.note("off-support=" + std::to_string(outside) + " first [A,B,C] at sample " + std::to_string(first_abc));
  return c.outcome();
}

Outcome interplay_soundness() {
  Check c;
  const auto& ctx = demo_context();
  auto quiet = testing_support::quiet_config();
  Rng goal_rng(10);
  std::size_t completed = 0;
  const int n = 2000;
  for (int i = 0; i < n; ++i) {
    Rng rng(stream_seed(10, static_cast<std::uint64_t>(i)));
    DialogStats st;
    run_dialog(sample_golden(ctx.goals, demo_bundle(), goal_rng), ctx, quiet, rng, &st);
    completed += st.completed ? 1 : 0;
  }
  c.expect(completed == static_cast<std::size_t>(n), "quiet golden dialogs left intents unfinished");

  auto failing = quiet;
  failing.agent.api_failure_rate = 1;
  std::size_t abandoned = 0;
  const int m = 500;
  for (int i = 0; i < m; ++i) {
    auto goal = sample_golden(ctx.goals, demo_bundle(), goal_rng);
    goal.intents.resize(1);
    Rng rng(stream_seed(11, static_cast<std::uint64_t>(i)));
    DialogStats st;
    const auto d = run_dialog(goal, ctx, failing, rng, &st);
    bool no_calls = true;
    for (const auto& t : d.turns) no_calls &= t.call() == nullptr;
    if (st.abandonments == 1 && !st.completed && !st.truncated && no_calls) ++abandoned;
  }
  c.expect(abandoned == static_cast<std::size_t>(m), "single-intent goals under total failure not all abandoned");

  // FindMovies, SelectShow (with and without the movie list), BookTickets on the show
  std::size_t closure_cases = 0, closure_ok = 0;
  for (const bool linked : {true, false}) {
    UserGoal g;
    g.intents.push_back({"FindMovies", {{"location", uv("Oakland", "City")}, {"timeLowerBound", uv("2 PM", "Time")}}});
    IntentInstance select{"SelectShow", {{"time", uv("4 PM", "Time")}, {"movieName", uv("Dune", "MovieName")}}};
    if (linked) select.bindings.emplace_back("movies", ReturnRef{0});
    g.intents.push_back(select);
    g.intents.push_back(
        {"BookTickets", {{"show", ReturnRef{1}}, {"count", uv("two", "Count")}, {"type", uv("adult", "TicketType")}}});
    for (std::size_t failed = 0; failed < 3; ++failed) {
      Rng rng(12);
      auto s = init_user(g, demo_bundle(), quiet.agent, rng);
      abandon_intent(s, failed);
      std::set<std::size_t> removed;
      for (std::size_t j = 0; j < 3; ++j)
        if (!s.active[j]) removed.insert(j);
      ++closure_cases;
      closure_ok += removed == reachable_dependents(g, failed) ? 1 : 0;
    }
  }
  c.expect(closure_ok == closure_cases, "abandonment closure differs from reachability");
  c.note("completed " + std::to_string(completed) + "/" + std::to_string(n) + ", abandoned " +
         std::to_string(abandoned) + "/" + std::to_string(m) + ", closure " + std::to_string(closure_ok) + "/" +
         std::to_string(closure_cases));
  return c.outcome();
}

Outcome correction_soundness() {
  Check c;
  const auto& ctx = demo_context();
  auto config = testing_support::quiet_config();
  config.agent.p_correct = 1;
  // first seed goal: FindMovies > SelectShow > BookTickets
  const auto goal = ctx.goals[0];
  std::size_t instances = 0, sound = 0;
  for (int i = 0; i < 500; ++i) {
    Rng rng(stream_seed(13, static_cast<std::uint64_t>(i)));
    const auto d = run_dialog(goal, ctx, config, rng);
    bool select_called = false;
    for (std::size_t t = 0; t < d.turns.size(); ++t) {
      if (const auto* call = d.turns[t].call(); call && call->api == "SelectShow") select_called = true;
      const auto* u = d.turns[t].user();
      if (!u || !select_called) continue;
      std::optional<std::string> corrected_var;
      for (std::size_t k = 0; k + 1 < u->acts.size(); ++k) {
        const auto& a = u->acts[k];
        const auto& b = u->acts[k + 1];
        if (a.name == ActName::deny && a.kind == ArgKind::entity && a.arg == "time" && b.name == ActName::inform &&
            b.arg == "time")
          for (const auto& s : u->spans)
            if (s.entity_type == "Time") corrected_var = s.var_id;
      }
      if (!corrected_var) continue;
      ++instances;
      // the re-issued SelectShow binds the new value and the final booking uses that show
      const ApiCall* reissued = nullptr;
      const ApiCall* last_select = nullptr;
      const ApiCall* last_booking = nullptr;
      for (std::size_t r = t + 1; r < d.turns.size(); ++r)
        if (const auto* call = d.turns[r].call()) {
          if (call->api == "SelectShow") {
            if (!reissued) reissued = call;
            last_select = call;
          }
          if (call->api == "BookTickets") last_booking = call;
        }
      const bool ok = reissued && reissued->find("time")->var == *corrected_var && last_select &&
                      last_select->find("time")->var == *corrected_var && last_booking &&
                      last_booking->find("show")->var == last_select->return_var;
      sound += ok ? 1 : 0;
      break;
    }
  }
  c.note("post-call time corrections=" + std::to_string(instances) + " sound=" + std::to_string(sound));
  c.expect(instances > 0, "no post-call deny(time)+inform(time) correction observed");
  c.expect(sound == instances, "a correction was not propagated to the final booking");
  return c.outcome();
}

Outcome roundtrip_determinism() {
  Check c;
  std::size_t broken = 0;
  for (const auto* corpus : {&corpora().markov}) {
    for (const auto& d : *corpus) {
      const auto text = serialize_dialog(d);
      const auto back = parse_dialog(text, demo_bundle());
      if (!(back == d) || serialize_dialog(back) != text) ++broken;
    }
  }
  c.expect(broken == 0, std::to_string(broken) + " dialogs changed through parse(serialize)");
  const auto cfg = config_for(0.2, 0.4, 0.4, 3000, 77);
  const auto a = fnv1a(serialize_corpus(run_batch(demo_context(), cfg).dialogs));
  const auto b = fnv1a(serialize_corpus(run_batch(demo_context(), cfg).dialogs));
  auto threaded = cfg;
  threaded.threads = 4;
  const auto t = fnv1a(serialize_corpus(run_batch(demo_context(), threaded).dialogs));
  c.expect(a == b, "repeat run changed the checksum");
  c.expect(a == t, "4-thread run changed the checksum");
  char hex[32];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(a));
  c.note("10000 dialogs round-tripped, checksum " + std::string(hex));
  return c.outcome();
}

Outcome mixture_ratio() {
  Check c;
  const auto r = run_batch(demo_context(), config_for(0, 0.4, 0.6, 10000, 31));
  std::map<std::string, double> n;
  for (const auto& d : r.dialogs) n[d.metadata.at("goal_origin")] += 1;
  const double g = n["golden"] / 10000, m = n["markov"] / 10000;
  c.note("golden=" + fmt(g) + " markov=" + fmt(m));
  c.expect(std::abs(g - 0.4) <= 0.015, "golden share off by more than 1.5%");
  c.expect(std::abs(m - 0.6) <= 0.015, "markov share off by more than 1.5%");
  return c.outcome();
}

Outcome export_integrity() {
  Check c;
  const auto r = run_batch(demo_context(), config_for(0.2, 0.4, 0.4, 400, 55));
  const auto set = export_training(r.dialogs, demo_bundle());
  std::vector<const UserUtterance*> sources;
  for (const auto& d : r.dialogs)
    for (const auto& t : d.turns)
      if (const auto* u = t.user()) sources.push_back(u);
  c.expect(sources.size() == set.ner.size(), "NER example count differs from user turns");
  std::size_t checked = 0, lossy = 0;
  for (std::size_t i = 0; i < set.ner.size() && i < sources.size() && checked < 1000; ++i, ++checked) {
    std::vector<std::pair<std::string, CharRange>> expected;
    for (const auto& s : sources[i]->spans) expected.emplace_back(s.entity_type, s.range);
    if (spans_from_tags(set.ner[i]) != expected) ++lossy;
  }
  c.expect(checked == 1000, "fewer than 1000 NER examples");
  c.expect(lossy == 0, std::to_string(lossy) + " NER examples do not reconstruct their spans");

  std::size_t bad_labels = 0;
  for (const auto& ex : set.action_prediction) bad_labels += is_schema_action(ex.label, demo_bundle()) ? 0 : 1;
  c.expect(bad_labels == 0, std::to_string(bad_labels) + " AP labels are not schema actions");

  std::size_t unresolved = 0, labels = 0;
  for (const auto& ex : set.argument_filling) {
    std::string text;
    for (const auto& line : ex.context) text += line + '\n';
    std::set<std::string> vars;
    for (const auto& d : parse_corpus(text, nullptr))
      for (const auto& t : d.turns) {
        if (const auto* u = t.user())
          for (const auto& s : u->spans) vars.insert(s.var_id);
        if (const auto* call = t.call()) vars.insert(call->return_var);
      }
    for (const auto& [arg, var] : ex.labels) {
      ++labels;
      unresolved += vars.count(var) ? 0 : 1;
    }
  }
  c.expect(unresolved == 0, std::to_string(unresolved) + " AF labels do not resolve in context");
  c.note("NER checked=" + std::to_string(checked) + " AP=" + std::to_string(set.action_prediction.size()) +
         " AF labels=" + std::to_string(labels));
  return c.outcome();
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"entropy ordering", entropy_ordering},
      {"base sampler ceiling", base_ceiling},
      {"entropy oracle", entropy_oracle},
      {"goal validity", goal_validity},
      {"golden structural fidelity", golden_fidelity},
      {"markov fidelity", markov_fidelity},
      {"interplay soundness", interplay_soundness},
      {"correction soundness", correction_soundness},
      {"round trip and determinism", roundtrip_determinism},
      {"mixture ratio", mixture_ratio},
      {"export integrity", export_integrity},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  [" << (i + 1 < 10 ? " " : "") << i + 1 << "] " << criteria[i].first
              << ": " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
