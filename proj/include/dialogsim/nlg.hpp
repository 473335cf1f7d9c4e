#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "dialogsim/acts.hpp"
#include "dialogsim/error.hpp"
#include "dialogsim/markup.hpp"
#include "dialogsim/rng.hpp"
#include "dialogsim/schema.hpp"
#include "dialogsim/text.hpp"

namespace dialogsim {

/// User templates keyed by signature_key plus system responses by name.
struct TemplateIndex {
  std::map<std::string, std::vector<UtteranceTemplateDef>> user_index;
  std::map<std::string, ResponseTemplateDef> system_index;

  /// Adds `t` unless an identical template is already indexed. Returns whether it was added.
  bool add(UtteranceTemplateDef t) {
    auto& bucket = user_index[signature_key(t.act_signature)];
    for (const auto& existing : bucket)
      if (existing.text == t.text) return false;
    bucket.push_back(std::move(t));
    return true;
  }

  const std::vector<UtteranceTemplateDef>* find(std::span<const DialogAct> acts) const {
    const auto it = user_index.find(signature_key(acts));
    return it == user_index.end() ? nullptr : &it->second;
  }

  std::size_t user_template_count() const {
    std::size_t n = 0;
    for (const auto& [_, v] : user_index) n += v.size();
    return n;
  }
};

/// Indexes developer templates and the delexicalized user turns of `seeds`.
/// Seeds must already carry acts (see infer_seed_acts).
inline TemplateIndex build_template_index(const SchemaBundle& bundle, const std::vector<Dialog>& seeds,
                                          std::vector<Diagnostic>* warnings = nullptr) {
  TemplateIndex index;
  for (const auto* r : bundle.all_responses()) index.system_index.emplace(r->name, *r);
  for (const auto& dom : bundle.domains())
    for (const auto& u : dom.utterance_templates) index.add(u);
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    const auto& d = seeds[s];
    const auto roles = span_roles(d);
    for (std::size_t t = 0; t < d.turns.size(); ++t) {
      const auto* u = d.turns[t].user();
      if (!u || u->acts.empty()) continue;
      std::map<std::size_t, std::string> turn_roles;
      for (std::size_t i = 0; i < u->spans.size(); ++i)
        if (const auto it = roles.find({t, i}); it != roles.end()) turn_roles[i] = it->second;
      auto tmpl = delexicalize_turn(*u, turn_roles);
      bool ok = true;
      std::set<std::string> slots;
      std::vector<text::TemplatePiece> pieces;
      ok = text::split_template(tmpl.text, pieces);
      for (const auto& p : pieces)
        if (p.is_slot) slots.insert(p.text);
      if (!ok || slots != expected_slots(tmpl.act_signature)) {
        if (warnings)
          warnings->push_back({Severity::warning, "seed " + std::to_string(s) + " turn " + std::to_string(d.turns[t].index),
                               "template '" + tmpl.text + "' does not match its acts; not indexed"});
        continue;
      }
      index.add(std::move(tmpl));
    }
  }
  return index;
}

/// Surface value for a template slot, with the variable it introduces.
struct SlotValue {
  std::string surface;
  std::string var_id;
  std::string entity_type;

  bool operator==(const SlotValue&) const = default;
};

struct Realization {
  std::string text;
  std::vector<EntitySpan> spans;
};

namespace detail {

inline std::set<std::string> slots_of(const std::string& tmpl) {
  std::vector<text::TemplatePiece> pieces;
  text::split_template(tmpl, pieces);
  std::set<std::string> out;
  for (const auto& p : pieces)
    if (p.is_slot) out.insert(p.text);
  return out;
}

inline void fill(const std::string& tmpl, const std::map<std::string, SlotValue>& slots, Realization& out) {
  std::vector<text::TemplatePiece> pieces;
  if (!text::split_template(tmpl, pieces)) throw RealizationError("malformed template '" + tmpl + "'");
  for (const auto& p : pieces) {
    if (!p.is_slot) {
      out.text += p.text;
      continue;
    }
    const auto it = slots.find(p.text);
    if (it == slots.end()) throw RealizationError("no value for slot {" + p.text + "} in '" + tmpl + "'");
    EntitySpan span;
    span.surface = it->second.surface;
    span.var_id = it->second.var_id;
    span.entity_type = it->second.entity_type;
    span.range = {out.text.size(), out.text.size() + span.surface.size()};
    out.text += span.surface;
    out.spans.push_back(std::move(span));
  }
}

/// Fixed fragment for a single user act when no template covers it.
inline std::string canned_user_fragment(const DialogAct& a) {
  const std::string what = text::humanize(a.arg);
  switch (a.name) {
    case ActName::inform: return a.kind == ArgKind::intent ? "I want to " + what : "the " + what + " is {" + a.arg + "}";
    case ActName::affirm: return a.kind == ArgKind::intent ? "yes, I want to " + what : "yes, that " + what + " is right";
    case ActName::deny: return a.kind == ArgKind::intent ? "no, I don't want to " + what : "no, not that " + what;
    case ActName::bye: return "thank you, bye";
    case ActName::repeat: return "sorry, could you repeat that";
    default: return {};
  }
}

}  // namespace detail

/// Lexicalizes user acts. A template indexed under the whole act signature is
/// sampled uniformly; otherwise, when `allow_backoff`, the acts are covered
/// left to right by the longest runs that have templates, falling back to a
/// canned fragment per act, joined with ", and ".
inline Realization realize(std::span<const DialogAct> acts, const std::map<std::string, SlotValue>& slots,
                           const TemplateIndex& index, Rng& rng, bool allow_backoff = true) {
  const auto wanted = expected_slots(std::vector<DialogAct>(acts.begin(), acts.end()));
  auto candidates = [&](std::span<const DialogAct> run) {
    std::vector<const UtteranceTemplateDef*> out;
    const auto need = expected_slots(std::vector<DialogAct>(run.begin(), run.end()));
    if (const auto* bucket = index.find(run))
      for (const auto& t : *bucket)
        if (detail::slots_of(t.text) == need) out.push_back(&t);
    return out;
  };
  for (const auto& name : wanted)
    if (!slots.count(name)) throw RealizationError("no value for slot {" + name + "}");

  Realization out;
  if (auto whole = candidates(acts); !whole.empty()) {
    detail::fill(whole[rng.uniform_index(whole.size())]->text, slots, out);
    return out;
  }
  if (!allow_backoff) throw RealizationError("no template for act signature " + signature_key(acts));

  std::size_t i = 0;
  bool first = true;
  while (i < acts.size()) {
    std::size_t taken = 0;
    for (std::size_t j = acts.size(); j > i; --j) {
      auto run = candidates(acts.subspan(i, j - i));
      if (run.empty()) continue;
      if (!first) out.text += ", and ";
      detail::fill(run[rng.uniform_index(run.size())]->text, slots, out);
      taken = j - i;
      break;
    }
    if (taken == 0) {
      auto frag = detail::canned_user_fragment(acts[i]);
      if (frag.empty()) throw RealizationError("no template or fragment for " + to_string(acts[i]));
      if (first) frag = text::capitalize(std::move(frag));
      else out.text += ", and ";
      detail::fill(frag, slots, out);
      taken = 1;
    }
    first = false;
    i += taken;
  }
  return out;
}

// ---------------------------------------------------------------------------
// System side

/// One piece of a system turn: a named response template or a canned act group.
struct SystemSegment {
  std::string response;  // schema response template; empty for canned
  std::vector<DialogAct> acts;
  std::map<std::string, std::string> values;  // slot/arg -> surface (empty for opaque objects)

  bool operator==(const SystemSegment&) const = default;
};

namespace detail {

inline std::string value_phrase(const SystemSegment& seg, const std::string& arg) {
  const auto it = seg.values.find(arg);
  const std::string what = text::humanize(arg);
  if (it == seg.values.end() || it->second.empty()) return "the " + what + " from before";
  return what + " " + it->second;
}

inline std::string canned_system(const SystemSegment& seg) {
  if (seg.acts.empty()) return {};
  const auto& head = seg.acts.front();
  std::vector<std::string> entities;
  for (const auto& a : seg.acts)
    if (a.kind == ArgKind::entity) entities.push_back(value_phrase(seg, a.arg));
  auto join = [](const std::vector<std::string>& parts) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? ", " : "") + parts[i];
    return out;
  };
  const std::string with = entities.empty() ? "" : " with " + join(entities);
  switch (head.name) {
    case ActName::request: return "What " + text::humanize(head.arg) + " would you like?";
    case ActName::confirm: return "Just to confirm, you want to " + text::humanize(head.arg) + with + "?";
    case ActName::offer:
      if (head.kind == ArgKind::intent) return "Would you like to " + text::humanize(head.arg) + with + "?";
      return "How about " + join(entities) + "?";
    case ActName::failure: return "Sorry, I could not " + text::humanize(head.arg) + " right now.";
    case ActName::bye: return "Goodbye.";
    case ActName::inform: return text::capitalize(join(entities)) + ".";
    default: return {};
  }
}

}  // namespace detail

inline std::string realize_response(const ResponseTemplateDef& resp, const std::map<std::string, std::string>& values,
                                    Rng& rng) {
  const auto& tmpl = resp.templates[rng.uniform_index(resp.templates.size())];
  std::vector<text::TemplatePiece> pieces;
  if (!text::split_template(tmpl, pieces)) throw RealizationError("malformed template '" + tmpl + "'");
  std::string out;
  for (const auto& p : pieces) {
    if (!p.is_slot) {
      out += p.text;
      continue;
    }
    const auto it = values.find(p.text);
    if (it == values.end()) throw RealizationError("no value for {" + p.text + "} in response " + resp.name);
    out += it->second;
  }
  return out;
}

/// Text of a system turn: realized segments joined by a space.
inline std::string realize_system(const std::vector<SystemSegment>& segments, const TemplateIndex& index, Rng& rng) {
  std::string out;
  for (const auto& seg : segments) {
    std::string piece;
    if (!seg.response.empty()) {
      const auto it = index.system_index.find(seg.response);
      if (it == index.system_index.end()) throw RealizationError("unknown response template '" + seg.response + "'");
      piece = realize_response(it->second, seg.values, rng);
    } else {
      piece = detail::canned_system(seg);
    }
    if (piece.empty()) continue;
    if (!out.empty()) out += ' ';
    out += piece;
  }
  return out;
}

}  // namespace dialogsim
