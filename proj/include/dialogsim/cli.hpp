#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dialogsim/config.hpp"
#include "dialogsim/engine.hpp"
#include "dialogsim/error.hpp"
#include "dialogsim/goals.hpp"
#include "dialogsim/markup.hpp"
#include "dialogsim/metrics.hpp"
#include "dialogsim/schema.hpp"
#include "dialogsim/training_export.hpp"

namespace dialogsim::cli {

enum ExitCode : int { ok = 0, failure = 1, usage = 2 };

struct GlobalOptions {
  std::string schema;
  std::string seeds;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct GenerateOptions {
  std::optional<std::size_t> n;
  std::string mix;
  std::optional<std::size_t> threads;
  std::string model;
  std::string templates;
  std::optional<double> p_correct, p_offer, api_failure_rate, multi_act_p;
  std::optional<int> max_acts, max_corrections;
  std::optional<std::size_t> max_turns, max_len, max_attempts;
};

namespace detail {

inline void write_output(const std::string& path, const std::string& content, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << content;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path);
  f << content;
  if (!f) throw Error("failed writing " + path);
}

inline void require(const std::string& value, const char* flag) {
  if (value.empty()) throw CLI::RequiredError(flag);
}

inline SimulationContext load_context(const SchemaBundle& bundle, const GlobalOptions& g,
                                      const std::vector<UtteranceTemplateDef>& extra, std::vector<Diagnostic>* warnings) {
  auto seeds = load_corpus(g.seeds, &bundle);
  return prepare_context(bundle, std::move(seeds), extra, warnings);
}

inline void print_diagnostics(const std::vector<Diagnostic>& diags, std::ostream& err) {
  for (const auto& d : diags) err << to_string(d) << '\n';
}

}  // namespace detail

inline int cmd_generate(const GlobalOptions& g, const GenerateOptions& o, std::ostream& out, std::ostream& err) {
  detail::require(g.schema, "--schema");
  detail::require(g.seeds, "--seeds");
  GenerationConfig config;
  if (!g.config.empty()) apply_config_json(config, nlohmann::json::parse(dialogsim::detail::read_file(g.config)));
  if (g.seed) config.rng_seed = *g.seed;
  if (o.n) config.n_dialogs = *o.n;
  if (!o.mix.empty()) config.sampler_mix = parse_mix(o.mix);
  if (o.threads) config.threads = *o.threads;
  if (o.p_correct) config.agent.p_correct = *o.p_correct;
  if (o.p_offer) config.agent.p_offer = *o.p_offer;
  if (o.api_failure_rate) config.agent.api_failure_rate = *o.api_failure_rate;
  if (o.multi_act_p) config.agent.multi_act_p = *o.multi_act_p;
  if (o.max_acts) config.agent.max_acts_per_turn = *o.max_acts;
  if (o.max_corrections) config.agent.max_corrections = *o.max_corrections;
  if (o.max_turns) config.max_turns = *o.max_turns;
  if (o.max_len) config.max_len = *o.max_len;
  if (o.max_attempts) config.max_attempts = *o.max_attempts;
  check_config(config);

  const auto bundle = load_schema(g.schema);
  std::vector<UtteranceTemplateDef> extra;
  if (!o.templates.empty())
    extra = utterance_templates_from_json(nlohmann::json::parse(dialogsim::detail::read_file(o.templates)), o.templates);
  std::vector<Diagnostic> warnings;
  auto ctx = detail::load_context(bundle, g, extra, &warnings);
  detail::print_diagnostics(warnings, err);
  if (!o.model.empty()) ctx.model = markov_from_json(nlohmann::json::parse(dialogsim::detail::read_file(o.model)));

  const auto result = run_batch(ctx, config);
  detail::write_output(g.out, serialize_corpus(result.dialogs), out);
  const auto& s = result.stats;
  err << "generated " << result.dialogs.size() << " dialogs";
  for (const auto& [name, n] : s.by_sampler) err << ' ' << name << '=' << n;
  err << "; completed=" << s.completed << " truncated=" << s.truncations << " abandonments=" << s.abandonments
      << " corrections=" << s.corrections << " offers=" << s.offers_made << " accepted=" << s.offers_accepted
      << " api_failures=" << s.api_failures << '\n';
  return ok;
}

inline int cmd_metrics(const GlobalOptions& g, const std::vector<std::string>& inputs, std::ostream& out,
                       std::ostream& err) {
  if (inputs.empty()) throw CLI::RequiredError("corpus file");
  std::optional<SchemaBundle> bundle;
  if (!g.schema.empty()) bundle = load_schema(g.schema);
  std::vector<std::pair<std::string, VariationReport>> rows;
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& path : inputs) {
    const auto corpus = load_corpus(path, bundle ? &*bundle : nullptr);
    const auto report = variation_report(corpus);
    rows.emplace_back(std::filesystem::path(path).filename().string(), report);
    doc[path] = report_to_json(report);
  }
  const auto json_text = (inputs.size() == 1 ? doc[inputs.front()] : doc).dump(2) + '\n';
  if (g.out.empty() || g.out == "-") {
    out << json_text;
  } else {
    detail::write_output(g.out, json_text, out);
  }
  err << report_table(rows);
  return ok;
}

inline int cmd_export(const GlobalOptions& g, const std::string& input, std::ostream& out, std::ostream& err) {
  detail::require(g.schema, "--schema");
  if (input.empty()) throw CLI::RequiredError("corpus file");
  const auto bundle = load_schema(g.schema);
  const auto corpus = load_corpus(input, &bundle);
  const auto set = export_training(corpus, bundle);
  const std::filesystem::path dir = g.out.empty() ? "." : g.out;
  std::filesystem::create_directories(dir);
  detail::write_output((dir / "ner.jsonl").string(), to_jsonl(set.ner), out);
  detail::write_output((dir / "action_prediction.jsonl").string(), to_jsonl(set.action_prediction), out);
  detail::write_output((dir / "argument_filling.jsonl").string(), to_jsonl(set.argument_filling), out);
  err << "ner=" << set.ner.size() << " action_prediction=" << set.action_prediction.size()
      << " argument_filling=" << set.argument_filling.size() << " -> " << dir.string() << '\n';
  return ok;
}

/// Act signatures the user agent produces on its happy path.
inline std::vector<std::vector<DialogAct>> core_signatures(const SchemaBundle& bundle) {
  std::vector<std::vector<DialogAct>> out;
  auto user_value = [&](const ArgSpec& a) {
    const auto* et = bundle.find_entity_type(a.entity_type);
    return et && et->kind != EntityKind::object;
  };
  for (const auto* api : bundle.all_apis()) {
    std::vector<DialogAct> intro{DialogAct::intent(ActName::inform, Side::user, api->name)};
    for (const auto& a : api->args)
      if (a.required && user_value(a)) intro.push_back(DialogAct::entity(ActName::inform, Side::user, a.name));
    out.push_back(std::move(intro));
    for (const auto& a : api->args)
      if (user_value(a)) out.push_back({DialogAct::entity(ActName::inform, Side::user, a.name)});
  }
  return out;
}

inline int cmd_validate(const GlobalOptions& g, std::ostream& out, std::ostream& err) {
  detail::require(g.schema, "--schema");
  std::vector<Diagnostic> diags;
  SchemaBundle bundle;
  try {
    bundle = parse_schema_text(dialogsim::detail::read_file(g.schema));
  } catch (const ParseError& e) {
    err << g.schema << ": " << e.what() << '\n';
    return failure;
  } catch (const SchemaError& e) {
    err << g.schema << ": " << e.what() << '\n';
    return failure;
  }
  diags = validate_schema(bundle);
  if (!has_errors(diags) && !g.seeds.empty()) {
    try {
      std::vector<Diagnostic> warnings;
      const auto ctx = detail::load_context(bundle, g, {}, &warnings);
      diags.insert(diags.end(), warnings.begin(), warnings.end());
      for (const auto& goal : ctx.goals)
        for (const auto& d : validate_goal(goal, bundle))
          diags.push_back({d.severity, "seed " + goal.source_seed.value_or("?") + ": " + d.location, d.message});
      std::set<std::string> seen;
      for (const auto& sig : core_signatures(bundle)) {
        const auto key = signature_key(sig);
        if (!seen.insert(key).second) continue;
        if (!ctx.index.find(sig))
          diags.push_back({Severity::warning, "templates", "no user template for act signature " + key});
      }
    } catch (const Error& e) {
      diags.push_back({Severity::error, g.seeds, e.what()});
    }
  }
  detail::print_diagnostics(diags, err);
  if (has_errors(diags)) return failure;
  out << "ok\n";
  return ok;
}

inline int cmd_fit(const GlobalOptions& g, std::ostream& out, std::ostream& err) {
  detail::require(g.schema, "--schema");
  detail::require(g.seeds, "--seeds");
  const auto bundle = load_schema(g.schema);
  std::vector<Diagnostic> warnings;
  const auto ctx = detail::load_context(bundle, g, {}, &warnings);
  detail::print_diagnostics(warnings, err);
  detail::write_output(g.out, markov_to_json(ctx.model).dump(2) + '\n', out);
  return ok;
}

/// Entry point shared by the executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Schema-driven dialog simulator"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--schema", g.schema, "domain schema (JSON)");
  app.add_option("--seeds", g.seeds, "seed dialogs (markup)");
  app.add_option("--config", g.config, "generation config (JSON)");
  app.add_option("--seed", g.seed, "RNG seed");
  app.add_option("--out", g.out, "output file or directory");

  GenerateOptions gen;
  auto* generate = app.add_subcommand("generate", "simulate a dialog corpus")->fallthrough();
  generate->add_option("--n", gen.n, "number of dialogs");
  generate->add_option("--mix", gen.mix, "sampler weights, e.g. golden=0.4,markov=0.6");
  generate->add_option("--threads", gen.threads, "worker threads (0 = all cores)");
  generate->add_option("--model", gen.model, "goal model JSON written by fit");
  generate->add_option("--templates", gen.templates, "extra user utterance templates (JSON)");
  generate->add_option("--p-correct", gen.p_correct);
  generate->add_option("--p-offer", gen.p_offer);
  generate->add_option("--api-failure-rate", gen.api_failure_rate);
  generate->add_option("--multi-act-p", gen.multi_act_p);
  generate->add_option("--max-acts", gen.max_acts);
  generate->add_option("--max-corrections", gen.max_corrections);
  generate->add_option("--max-turns", gen.max_turns);
  generate->add_option("--max-len", gen.max_len);
  generate->add_option("--max-attempts", gen.max_attempts);

  std::vector<std::string> metric_inputs;
  auto* metrics = app.add_subcommand("metrics", "variation report of one or more corpora")->fallthrough();
  metrics->add_option("corpus", metric_inputs, "markup corpus files")->required();

  std::string export_input;
  auto* exporter = app.add_subcommand("export-training", "write NER, action and argument examples")->fallthrough();
  exporter->add_option("corpus", export_input, "markup corpus file")->required();

  auto* validate = app.add_subcommand("validate", "check a schema and seed dialogs")->fallthrough();
  auto* fit = app.add_subcommand("fit", "fit and dump the goal model")->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return usage;
  }

  try {
    if (generate->parsed()) return cmd_generate(g, gen, out, err);
    if (metrics->parsed()) return cmd_metrics(g, metric_inputs, out, err);
    if (exporter->parsed()) return cmd_export(g, export_input, out, err);
    if (validate->parsed()) return cmd_validate(g, out, err);
    if (fit->parsed()) return cmd_fit(g, out, err);
  } catch (const CLI::Error& e) {
    err << "error: " << e.what() << '\n';
    return usage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return failure;
  }
  return usage;
}

}  // namespace dialogsim::cli
