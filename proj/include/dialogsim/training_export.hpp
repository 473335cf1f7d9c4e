#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "dialogsim/acts.hpp"
#include "dialogsim/error.hpp"
#include "dialogsim/markup.hpp"
#include "dialogsim/schema.hpp"

namespace dialogsim {

struct Token {
  std::string text;
  CharRange range;
};

struct NerExample {
  std::vector<std::string> context;  // prior turns as markup lines
  std::string text;
  std::vector<Token> tokens;
  std::vector<std::string> tags;  // IOB, one per token
};

struct ActionExample {
  std::vector<std::string> context;
  std::string label;  // API, response template or system act name
};

struct ArgumentExample {
  std::vector<std::string> context;
  std::string api;
  std::map<std::string, std::string> labels;  // arg -> var id
};

namespace detail {

inline bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

inline void split_plain(const std::string& text, std::size_t begin, std::size_t end, std::vector<Token>& out) {
  std::size_t i = begin;
  while (i < end) {
    while (i < end && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < end && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (i == j) break;
    // detach leading and trailing punctuation
    std::size_t a = i, b = j;
    while (a < b && is_punct(text[a])) {
      out.push_back({text.substr(a, 1), {a, a + 1}});
      ++a;
    }
    std::size_t tail = b;
    while (tail > a && is_punct(text[tail - 1])) --tail;
    if (a < tail) out.push_back({text.substr(a, tail - a), {a, tail}});
    for (std::size_t p = tail; p < b; ++p) out.push_back({text.substr(p, 1), {p, p + 1}});
    i = j;
  }
}

inline void split_span(const std::string& text, std::size_t begin, std::size_t end, std::vector<Token>& out) {
  std::size_t i = begin;
  while (i < end) {
    while (i < end && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < end && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (i < j) out.push_back({text.substr(i, j - i), {i, j}});
    i = j;
  }
}

}  // namespace detail

/// Whitespace tokens with punctuation detached outside entities. Span edges
/// are always token boundaries; tags are B-<type>/I-<type>/O.
inline NerExample ner_example(const UserUtterance& u) {
  NerExample ex;
  ex.text = u.text;
  std::vector<const EntitySpan*> spans;
  for (const auto& s : u.spans) spans.push_back(&s);
  std::sort(spans.begin(), spans.end(), [](auto* a, auto* b) { return a->range.begin < b->range.begin; });
  std::size_t pos = 0;
  for (const auto* s : spans) {
    detail::split_plain(u.text, pos, s->range.begin, ex.tokens);
    while (ex.tags.size() < ex.tokens.size()) ex.tags.push_back("O");
    const auto first = ex.tokens.size();
    detail::split_span(u.text, s->range.begin, s->range.end, ex.tokens);
    const std::string type = s->entity_type.empty() ? "Entity" : s->entity_type;
    for (std::size_t k = first; k < ex.tokens.size(); ++k) ex.tags.push_back((k == first ? "B-" : "I-") + type);
    pos = s->range.end;
  }
  detail::split_plain(u.text, pos, u.text.size(), ex.tokens);
  while (ex.tags.size() < ex.tokens.size()) ex.tags.push_back("O");
  return ex;
}

/// Inverse of the tagging: (type, range) of each B/I run.
inline std::vector<std::pair<std::string, CharRange>> spans_from_tags(const NerExample& ex) {
  std::vector<std::pair<std::string, CharRange>> out;
  for (std::size_t k = 0; k < ex.tags.size(); ++k) {
    const auto& tag = ex.tags[k];
    if (tag.rfind("B-", 0) == 0) {
      out.emplace_back(tag.substr(2), ex.tokens[k].range);
    } else if (tag.rfind("I-", 0) == 0) {
      if (out.empty() || out.back().first != tag.substr(2)) throw Error("I- tag without a preceding B- tag");
      out.back().second.end = ex.tokens[k].range.end;
    }
  }
  return out;
}

/// Label for a system nlg turn: the longest response template whose acts
/// prefix the turn's acts, else the name of the turn's first act.
inline std::string action_label(const NlgResponse& n, const SchemaBundle& bundle) {
  std::string best;
  std::size_t best_len = 0;
  for (const auto* r : bundle.all_responses()) {
    const auto& acts = r->dialog_acts;
    if (acts.empty() || acts.size() > n.acts.size() || acts.size() <= best_len) continue;
    if (std::equal(acts.begin(), acts.end(), n.acts.begin())) {
      best = r->name;
      best_len = acts.size();
    }
  }
  if (!best.empty()) return best;
  if (n.acts.empty()) return "inform";
  return std::string(to_string(n.acts.front().name));
}

inline bool is_schema_action(const std::string& label, const SchemaBundle& bundle) {
  static const std::set<std::string> acts = {"inform", "request", "offer", "confirm", "failure", "bye"};
  return bundle.find_api(label) || bundle.find_response(label) || acts.count(label);
}

struct TrainingSet {
  std::vector<NerExample> ner;
  std::vector<ActionExample> action_prediction;
  std::vector<ArgumentExample> argument_filling;
};

inline TrainingSet export_training(const std::vector<Dialog>& corpus, const SchemaBundle& bundle) {
  TrainingSet out;
  for (const auto& d : corpus) {
    std::vector<std::string> context;
    for (const auto& turn : d.turns) {
      if (const auto* u = turn.user()) {
        auto ex = ner_example(*u);
        ex.context = context;
        out.ner.push_back(std::move(ex));
      } else if (const auto* call = turn.call()) {
        out.action_prediction.push_back({context, call->api});
        ArgumentExample af{context, call->api, {}};
        for (const auto& [arg, ref] : call->bindings)
          if (ref.is_var()) af.labels[arg] = ref.var;
        out.argument_filling.push_back(std::move(af));
      } else if (const auto* n = turn.nlg()) {
        out.action_prediction.push_back({context, action_label(*n, bundle)});
      }
      context.push_back(serialize_turn(turn));
    }
  }
  return out;
}

inline nlohmann::json to_json(const NerExample& ex) {
  nlohmann::json tokens = nlohmann::json::array();
  for (const auto& t : ex.tokens) tokens.push_back(t.text);
  return {{"kind", "ner"}, {"context", ex.context}, {"text", ex.text}, {"tokens", tokens}, {"tags", ex.tags}};
}

inline nlohmann::json to_json(const ActionExample& ex) {
  return {{"kind", "action_prediction"}, {"context", ex.context}, {"label", ex.label}};
}

inline nlohmann::json to_json(const ArgumentExample& ex) {
  return {{"kind", "argument_filling"}, {"context", ex.context}, {"api", ex.api}, {"labels", ex.labels}};
}

template <class T>
std::string to_jsonl(const std::vector<T>& examples) {
  std::string out;
  for (const auto& ex : examples) out += to_json(ex).dump() + '\n';
  return out;
}

}  // namespace dialogsim
