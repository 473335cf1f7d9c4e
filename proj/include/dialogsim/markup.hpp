#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "dialogsim/acts.hpp"
#include "dialogsim/error.hpp"
#include "dialogsim/schema.hpp"
#include "dialogsim/text.hpp"

namespace dialogsim {

/// Half-open byte range into an utterance.
struct CharRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  bool operator==(const CharRange&) const = default;
};

struct EntitySpan {
  std::string surface;
  std::string var_id;
  std::string entity_type;  // resolved during linking; empty when unlinked
  CharRange range;

  bool operator==(const EntitySpan&) const = default;
};

/// `$var` reference or a quoted literal (seed dialogs only).
struct ValueRef {
  std::string var;
  std::optional<std::string> literal;

  static ValueRef ref(std::string v) { return {std::move(v), std::nullopt}; }
  static ValueRef lit(std::string s) { return {{}, std::move(s)}; }
  bool is_var() const noexcept { return !literal.has_value(); }

  bool operator==(const ValueRef&) const = default;
};

struct UserUtterance {
  std::string text;
  std::vector<EntitySpan> spans;
  std::vector<DialogAct> acts;

  bool operator==(const UserUtterance&) const = default;
};

struct ApiCall {
  std::string api;
  std::vector<std::pair<std::string, ValueRef>> bindings;
  std::string return_var;

  const ValueRef* find(std::string_view arg) const {
    for (const auto& [name, ref] : bindings)
      if (name == arg) return &ref;
    return nullptr;
  }

  bool operator==(const ApiCall&) const = default;
};

struct NlgResponse {
  std::string text;
  std::vector<DialogAct> acts;

  bool operator==(const NlgResponse&) const = default;
};

struct Turn {
  std::size_t index = 1;
  Side side = Side::user;
  std::variant<UserUtterance, ApiCall, NlgResponse> payload;

  const UserUtterance* user() const { return std::get_if<UserUtterance>(&payload); }
  const ApiCall* call() const { return std::get_if<ApiCall>(&payload); }
  const NlgResponse* nlg() const { return std::get_if<NlgResponse>(&payload); }
  UserUtterance* user() { return std::get_if<UserUtterance>(&payload); }
  ApiCall* call() { return std::get_if<ApiCall>(&payload); }
  NlgResponse* nlg() { return std::get_if<NlgResponse>(&payload); }

  /// Acts carried by the turn; API calls carry none.
  const std::vector<DialogAct>* acts() const {
    if (const auto* u = user()) return &u->acts;
    if (const auto* n = nlg()) return &n->acts;
    return nullptr;
  }

  bool operator==(const Turn&) const = default;
};

struct Dialog {
  std::vector<Turn> turns;
  std::map<std::string, std::string> metadata;

  bool operator==(const Dialog&) const = default;
};

// ---------------------------------------------------------------------------
// Variable scoping

/// Where a `$var` was introduced: a user span or an API return.
struct VarDefinition {
  std::size_t turn = 0;             // position in Dialog::turns
  std::optional<std::size_t> span;  // span index, nullopt for an API return

  bool operator==(const VarDefinition&) const = default;
};

/// For every call turn, the definition each var binding resolves to
/// (nullopt for literals). Later definitions shadow earlier ones.
/// Throws ReferenceError for a var not introduced in a strictly earlier turn.
inline std::map<std::size_t, std::vector<std::optional<VarDefinition>>> binding_sources(const Dialog& d) {
  std::map<std::string, VarDefinition> scope;
  std::map<std::size_t, std::vector<std::optional<VarDefinition>>> out;
  for (std::size_t t = 0; t < d.turns.size(); ++t) {
    const auto& turn = d.turns[t];
    if (const auto* u = turn.user()) {
      for (std::size_t s = 0; s < u->spans.size(); ++s) scope[u->spans[s].var_id] = {t, s};
    } else if (const auto* c = turn.call()) {
      auto& row = out[t];
      for (const auto& [arg, ref] : c->bindings) {
        if (!ref.is_var()) {
          row.push_back(std::nullopt);
          continue;
        }
        const auto it = scope.find(ref.var);
        if (it == scope.end()) throw ReferenceError(ref.var, turn.index);
        row.push_back(it->second);
      }
      scope[c->return_var] = {t, std::nullopt};
    }
  }
  return out;
}

/// API argument name that first consumes each user span, keyed by (turn, span).
inline std::map<std::pair<std::size_t, std::size_t>, std::string> span_roles(const Dialog& d) {
  std::map<std::pair<std::size_t, std::size_t>, std::string> roles;
  for (const auto& [t, row] : binding_sources(d)) {
    const auto* c = d.turns[t].call();
    for (std::size_t b = 0; b < row.size(); ++b)
      if (row[b] && row[b]->span) roles.try_emplace({row[b]->turn, *row[b]->span}, c->bindings[b].first);
  }
  return roles;
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

inline std::string quote_literal(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + '"';
}

inline std::string annotate(const UserUtterance& u) {
  std::vector<const EntitySpan*> spans;
  for (const auto& s : u.spans) spans.push_back(&s);
  std::sort(spans.begin(), spans.end(), [](auto* a, auto* b) { return a->range.begin < b->range.begin; });
  std::string out;
  std::size_t pos = 0;
  for (const auto* s : spans) {
    out.append(u.text, pos, s->range.begin - pos);
    out += '[' + u.text.substr(s->range.begin, s->range.end - s->range.begin) + '|' + s->var_id + ']';
    pos = s->range.end;
  }
  out.append(u.text, pos, std::string::npos);
  return out;
}

}  // namespace detail

inline std::string serialize_turn(const Turn& turn) {
  std::string out = (turn.side == Side::user ? "U-" : "S-") + std::to_string(turn.index) + ": ";
  if (const auto* u = turn.user()) {
    out += detail::annotate(*u);
    if (!u->acts.empty()) out += " |acts: " + to_string(u->acts);
  } else if (const auto* c = turn.call()) {
    out += "call: " + c->api + '(';
    for (std::size_t i = 0; i < c->bindings.size(); ++i) {
      if (i) out += ',';
      const auto& [arg, ref] = c->bindings[i];
      out += arg + '=' + (ref.is_var() ? '$' + ref.var : detail::quote_literal(*ref.literal));
    }
    out += ") -> " + c->return_var;
  } else if (const auto* n = turn.nlg()) {
    out += "nlg: " + n->text;
    if (!n->acts.empty()) out += " |acts: " + to_string(n->acts);
  }
  return out;
}

/// One turn per line, preceded by `# key: value` metadata lines.
inline std::string serialize_dialog(const Dialog& d) {
  std::string out;
  for (const auto& [k, v] : d.metadata) out += "# " + k + ": " + v + '\n';
  for (const auto& t : d.turns) out += serialize_turn(t) + '\n';
  return out;
}

/// Dialogs separated by one blank line.
inline std::string serialize_corpus(const std::vector<Dialog>& dialogs) {
  std::string out;
  for (std::size_t i = 0; i < dialogs.size(); ++i) {
    if (i) out += '\n';
    out += serialize_dialog(dialogs[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

struct LineCursor {
  std::string_view s;
  std::size_t pos = 0;
  std::size_t line = 0;
  std::size_t col0 = 0;  // column of s[0] in the source line, 1-based

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, line, col0 + pos); }
  bool done() const { return pos >= s.size(); }
  char peek() const { return done() ? '\0' : s[pos]; }
  void skip_ws() {
    while (!done() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
  }
  void expect(char c) {
    skip_ws();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos;
  }
  bool accept(std::string_view tok) {
    skip_ws();
    if (s.substr(pos, tok.size()) != tok) return false;
    pos += tok.size();
    return true;
  }
  std::string ident() {
    skip_ws();
    const auto start = pos;
    if (!text::is_ident_start(peek())) fail("expected an identifier");
    while (!done() && text::is_ident_char(s[pos])) ++pos;
    return std::string(s.substr(start, pos - start));
  }
};

/// Splits a trailing ` |acts: ...` annotation off a turn body.
inline std::pair<std::string_view, std::optional<std::string_view>> split_acts(std::string_view body) {
  const auto at = body.rfind("|acts:");
  if (at == std::string_view::npos) return {body, std::nullopt};
  auto head = body.substr(0, at);
  if (!head.empty() && head.back() == ' ') head.remove_suffix(1);
  return {head, body.substr(at + 6)};
}

inline UserUtterance parse_user_body(std::string_view body, std::size_t line, std::size_t col0) {
  UserUtterance u;
  const auto [head, acts] = split_acts(body);
  for (std::size_t i = 0; i < head.size(); ++i) {
    const char c = head[i];
    if (c == ']' || c == '|') throw ParseError(std::string("unexpected '") + c + "'", line, col0 + i);
    if (c != '[') {
      u.text += c;
      continue;
    }
    const auto bar = head.find('|', i);
    const auto close = head.find(']', i);
    const auto nested = head.find('[', i + 1);
    if (bar == std::string_view::npos || close == std::string_view::npos || bar > close ||
        (nested != std::string_view::npos && nested < close))
      throw ParseError("malformed entity span", line, col0 + i);
    const auto surface = head.substr(i + 1, bar - i - 1);
    const auto var = text::trim(head.substr(bar + 1, close - bar - 1));
    if (surface.empty()) throw ParseError("empty entity span", line, col0 + i);
    if (!text::is_identifier(var)) throw ParseError("span variable must be an identifier", line, col0 + bar + 1);
    EntitySpan span;
    span.surface = std::string(surface);
    span.var_id = std::string(var);
    span.range = {u.text.size(), u.text.size() + surface.size()};
    u.text += surface;
    u.spans.push_back(std::move(span));
    i = close;
  }
  if (acts) u.acts = parse_act_sequence(*acts, Side::user, line, col0 + (acts->data() - body.data()));
  return u;
}

inline ApiCall parse_call_body(std::string_view body, std::size_t line, std::size_t col0) {
  LineCursor cur{body, 0, line, col0};
  ApiCall call;
  call.api = cur.ident();
  cur.expect('(');
  cur.skip_ws();
  if (cur.peek() != ')') {
    while (true) {
      auto arg = cur.ident();
      cur.expect('=');
      cur.skip_ws();
      if (cur.peek() == '$') {
        ++cur.pos;
        if (!text::is_ident_start(cur.peek())) cur.fail("expected a variable after '$'");
        call.bindings.emplace_back(std::move(arg), ValueRef::ref(cur.ident()));
      } else if (cur.peek() == '"') {
        ++cur.pos;
        std::string lit;
        while (true) {
          if (cur.done()) cur.fail("unterminated string literal");
          char c = body[cur.pos++];
          if (c == '"') break;
          if (c == '\\') {
            if (cur.done()) cur.fail("unterminated string literal");
            c = body[cur.pos++];
          }
          lit += c;
        }
        call.bindings.emplace_back(std::move(arg), ValueRef::lit(std::move(lit)));
      } else {
        cur.fail("expected '$var' or a quoted literal");
      }
      cur.skip_ws();
      if (cur.peek() == ',') {
        ++cur.pos;
        continue;
      }
      break;
    }
  }
  cur.expect(')');
  if (!cur.accept("->") && !cur.accept("→")) cur.fail("expected '->' and a return variable");
  call.return_var = cur.ident();
  cur.skip_ws();
  if (!cur.done()) cur.fail("unexpected trailing text");
  return call;
}

/// Resolves entity types and checks references, API names and argument types.
inline void link_dialog(Dialog& d, const SchemaBundle* bundle, const std::vector<std::size_t>& lines) {
  struct Def {
    std::string type;
    std::size_t turn;
    std::optional<std::size_t> span;
  };
  std::map<std::string, std::size_t> scope;  // var -> index into defs
  std::vector<Def> defs;
  for (std::size_t t = 0; t < d.turns.size(); ++t) {
    auto& turn = d.turns[t];
    const auto line = lines[t];
    if (auto* u = turn.user()) {
      for (std::size_t s = 0; s < u->spans.size(); ++s) {
        scope[u->spans[s].var_id] = defs.size();
        defs.push_back({{}, t, s});
      }
      continue;
    }
    auto* c = turn.call();
    if (!c) continue;
    const ApiDef* api = bundle ? bundle->find_api(c->api) : nullptr;
    if (bundle && !api) throw ParseError("unknown API '" + c->api + "'", line);
    std::set<std::string> seen;
    for (const auto& [arg, ref] : c->bindings) {
      if (!seen.insert(arg).second) throw ParseError("argument '" + arg + "' bound twice", line);
      const ArgSpec* spec = api ? api->find_arg(arg) : nullptr;
      if (api && !spec) throw ParseError("API '" + c->api + "' has no argument '" + arg + "'", line);
      if (!ref.is_var()) continue;
      const auto it = scope.find(ref.var);
      if (it == scope.end()) throw ReferenceError(ref.var, line);
      if (!spec) continue;
      auto& def = defs[it->second];
      if (def.type.empty()) {
        def.type = spec->entity_type;
      } else if (def.type != spec->entity_type) {
        throw ParseError("type mismatch: $" + ref.var + " is " + def.type + " but " + c->api + "." + arg +
                             " expects " + spec->entity_type,
                         line);
      }
    }
    scope[c->return_var] = defs.size();
    defs.push_back({api ? api->return_type : std::string{}, t, std::nullopt});
  }
  for (auto& def : defs) {
    if (!def.span) continue;
    auto& span = d.turns[def.turn].user()->spans[*def.span];
    if (def.type.empty() && bundle) {
      std::string prefix = span.var_id;
      while (!prefix.empty() && std::isdigit(static_cast<unsigned char>(prefix.back()))) prefix.pop_back();
      const auto type = bundle->type_for_prefix(prefix);
      if (!type)
        throw ParseError("cannot infer the entity type of span variable '" + span.var_id + "'", lines[def.turn]);
      def.type = *type;
    }
    if (bundle) {
      const auto* et = bundle->find_entity_type(def.type);
      if (et && et->kind == EntityKind::object)
        throw ParseError("object-kind type " + def.type + " cannot be a user-provided value", lines[def.turn]);
    }
    span.entity_type = def.type;
  }
}

}  // namespace detail

/// Parses a corpus of dialogs. With a bundle, API and argument names are
/// checked and span entity types resolved; without one only the line grammar
/// and reference discipline are enforced.
inline std::vector<Dialog> parse_corpus(std::string_view text, const SchemaBundle* bundle) {
  std::vector<Dialog> out;
  Dialog current;
  std::vector<std::size_t> lines;

  auto finish = [&]() {
    if (!current.turns.empty()) {
      detail::link_dialog(current, bundle, lines);
      out.push_back(std::move(current));
    }
    current = Dialog{};
    lines.clear();
  };

  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    if (text::trim(line).empty()) {
      finish();
      if (end == text.size()) break;
      continue;
    }
    if (line.front() == '#') {
      if (!current.turns.empty()) throw ParseError("metadata must precede the turns of a dialog", line_no);
      const auto body = text::trim(line.substr(1));
      const auto colon = body.find(':');
      if (colon != std::string_view::npos)
        current.metadata[std::string(text::trim(body.substr(0, colon)))] =
            std::string(text::trim(body.substr(colon + 1)));
      if (end == text.size()) break;
      continue;
    }

    Turn turn;
    if (line.size() < 2 || (line[0] != 'U' && line[0] != 'S') || line[1] != '-')
      throw ParseError("expected a turn starting with 'U-' or 'S-'", line_no, 1);
    turn.side = line[0] == 'U' ? Side::user : Side::system;
    std::size_t i = 2;
    std::size_t n = 0;
    if (i >= line.size() || !std::isdigit(static_cast<unsigned char>(line[i])))
      throw ParseError("expected a turn number", line_no, i + 1);
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) n = n * 10 + (line[i++] - '0');
    if (i >= line.size() || line[i] != ':') throw ParseError("expected ':' after the turn number", line_no, i + 1);
    ++i;
    while (i < line.size() && line[i] == ' ') ++i;
    turn.index = n;
    const std::size_t expected = current.turns.empty() ? 1 : current.turns.back().index + 1;
    if (n != expected)
      throw ParseError("turn number " + std::to_string(n) + " out of sequence; expected " + std::to_string(expected),
                       line_no, 1);
    if (current.turns.empty() && turn.side != Side::user)
      throw ParseError("a dialog must start with a user turn", line_no, 1);

    const auto body = line.substr(i);
    const auto col = i + 1;
    if (turn.side == Side::user) {
      turn.payload = detail::parse_user_body(body, line_no, col);
    } else if (text::starts_with(body, "call:")) {
      auto rest = body.substr(5);
      std::size_t skip = 5;
      while (!rest.empty() && rest.front() == ' ') {
        rest.remove_prefix(1);
        ++skip;
      }
      turn.payload = detail::parse_call_body(rest, line_no, col + skip);
    } else if (text::starts_with(body, "nlg:")) {
      auto rest = body.substr(4);
      std::size_t skip = 4;
      if (!rest.empty() && rest.front() == ' ') {
        rest.remove_prefix(1);
        ++skip;
      }
      const auto [head, acts] = detail::split_acts(rest);
      NlgResponse nlg;
      nlg.text = std::string(head);
      if (acts) nlg.acts = parse_act_sequence(*acts, Side::system, line_no, col + skip + (acts->data() - rest.data()));
      turn.payload = std::move(nlg);
    } else {
      // Bare `Api(args) -> var` is accepted as a call.
      turn.payload = detail::parse_call_body(body, line_no, col);
    }
    current.turns.push_back(std::move(turn));
    lines.push_back(line_no);
    if (end == text.size()) break;
  }
  finish();
  return out;
}

/// Parses exactly one dialog.
inline Dialog parse_dialog(std::string_view text, const SchemaBundle& bundle) {
  auto dialogs = parse_corpus(text, &bundle);
  if (dialogs.size() != 1)
    throw ParseError("expected exactly one dialog, found " + std::to_string(dialogs.size()), 0);
  return std::move(dialogs.front());
}

inline std::vector<Dialog> load_corpus(const std::filesystem::path& path, const SchemaBundle* bundle) {
  return parse_corpus(detail::read_file(path), bundle);
}

// ---------------------------------------------------------------------------
// Delexicalization

/// Slot name for each span (by span index). The slot is the API argument
/// that consumes the span when `roles` names one, else the lowerCamel entity
/// type. Repeated names are numbered from 2 in text order.
inline std::vector<std::string> span_slots(const UserUtterance& u, const std::map<std::size_t, std::string>& roles = {}) {
  std::vector<std::size_t> order(u.spans.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return u.spans[a].range.begin < u.spans[b].range.begin; });
  std::map<std::string, int> uses;
  std::vector<std::string> out(u.spans.size());
  for (const auto i : order) {
    const auto& span = u.spans[i];
    const auto role = roles.find(i);
    std::string slot = role != roles.end()              ? role->second
                       : !span.entity_type.empty()       ? text::lower_camel(span.entity_type)
                                                         : span.var_id;
    const int n = ++uses[slot];
    if (n > 1) slot += std::to_string(n);
    out[i] = std::move(slot);
  }
  return out;
}

/// Replaces each span with its `{slot}` (see span_slots).
inline UtteranceTemplateDef delexicalize_turn(const UserUtterance& u,
                                              const std::map<std::size_t, std::string>& roles = {}) {
  const auto slots = span_slots(u, roles);
  std::vector<std::size_t> order(u.spans.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return u.spans[a].range.begin < u.spans[b].range.begin; });
  UtteranceTemplateDef out;
  out.origin = TemplateOrigin::auto_extracted;
  out.act_signature = u.acts;
  std::size_t pos = 0;
  for (const auto i : order) {
    const auto& span = u.spans[i];
    out.text.append(u.text, pos, span.range.begin - pos);
    out.text += '{' + slots[i] + '}';
    pos = span.range.end;
  }
  out.text.append(u.text, pos, std::string::npos);
  return out;
}

}  // namespace dialogsim
