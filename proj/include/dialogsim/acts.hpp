#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "dialogsim/error.hpp"
#include "dialogsim/text.hpp"

namespace dialogsim {

enum class Side { user, system };

enum class ActName { inform, affirm, deny, confirm, offer, request, failure, bye, repeat };

enum class ArgKind { none, intent, entity };

inline constexpr std::array<std::string_view, 9> kActNames = {
    "inform", "affirm", "deny", "confirm", "offer", "request", "failure", "bye", "repeat"};

inline std::string_view to_string(ActName n) { return kActNames[static_cast<std::size_t>(n)]; }

inline std::optional<ActName> act_name_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kActNames.size(); ++i)
    if (kActNames[i] == s) return static_cast<ActName>(i);
  return std::nullopt;
}

inline std::string_view to_string(Side s) { return s == Side::user ? "user" : "system"; }

/// A delexicalized dialog act such as `inform(entity:location)`.
///
/// Entity arguments name the API argument the act is about. `role` is an
/// optional `<api>.<arg>` qualifier used when the bare name would resolve to
/// the wrong frame.
struct DialogAct {
  ActName name = ActName::bye;
  Side side = Side::user;
  ArgKind kind = ArgKind::none;
  std::string arg;
  std::string role;

  static DialogAct intent(ActName name, Side side, std::string api) {
    return {name, side, ArgKind::intent, std::move(api), {}};
  }
  static DialogAct entity(ActName name, Side side, std::string arg, std::string role = {}) {
    return {name, side, ArgKind::entity, std::move(arg), std::move(role)};
  }
  static DialogAct bare(ActName name, Side side) { return {name, side, ArgKind::none, {}, {}}; }

  bool operator==(const DialogAct&) const = default;
};

inline std::string to_string(const DialogAct& a) {
  std::string out(to_string(a.name));
  out += '(';
  if (a.kind != ArgKind::none) {
    out += a.kind == ArgKind::intent ? "intent:" : "entity:";
    out += a.arg;
    if (!a.role.empty()) out += '@' + a.role;
  }
  out += ')';
  return out;
}

/// Comma-joined canonical strings, in order.
inline std::string to_string(std::span<const DialogAct> acts) {
  std::string out;
  for (const auto& a : acts) {
    if (!out.empty()) out += ',';
    out += to_string(a);
  }
  return out;
}

/// Empty when `a` is allowed on its side, otherwise the reason it is not.
inline std::string act_violation(const DialogAct& a) {
  const bool intent = a.kind == ArgKind::intent;
  const bool entity = a.kind == ArgKind::entity;
  const bool none = a.kind == ArgKind::none;
  bool ok = false;
  if (a.side == Side::user) {
    switch (a.name) {
      case ActName::inform:
      case ActName::affirm:
      case ActName::deny: ok = intent || entity; break;
      case ActName::bye:
      case ActName::repeat: ok = none; break;
      default: ok = false;
    }
  } else {
    switch (a.name) {
      case ActName::inform:
      case ActName::request: ok = entity; break;
      case ActName::confirm:
      case ActName::offer: ok = intent || entity; break;
      case ActName::failure: ok = intent; break;
      case ActName::bye: ok = none; break;
      default: ok = false;
    }
  }
  if (!ok) return to_string(a) + " is not a valid " + std::string(to_string(a.side)) + " act";
  if (!none && !text::is_identifier(a.arg)) return "act argument '" + a.arg + "' is not an identifier";
  if (!a.role.empty()) {
    const auto dot = a.role.find('.');
    if (!entity || dot == std::string::npos || !text::is_identifier(a.role.substr(0, dot)) ||
        !text::is_identifier(a.role.substr(dot + 1)))
      return "malformed act role '" + a.role + "'";
  }
  return {};
}

/// Parses one act string for the given side. `column` is used in error positions.
inline DialogAct parse_act(std::string_view s, Side side, std::size_t line = 0,
                           std::size_t column = 0) {
  const auto raw = text::trim(s);
  const auto open = raw.find('(');
  if (open == std::string_view::npos || raw.back() != ')')
    throw ParseError("malformed dialog act '" + std::string(raw) + "'", line, column);
  const auto name = act_name_from_string(raw.substr(0, open));
  if (!name) throw ParseError("unknown dialog act '" + std::string(raw.substr(0, open)) + "'", line, column);
  DialogAct act;
  act.name = *name;
  act.side = side;
  const auto inner = raw.substr(open + 1, raw.size() - open - 2);
  if (!inner.empty()) {
    const auto colon = inner.find(':');
    if (colon == std::string_view::npos)
      throw ParseError("dialog act argument needs a kind: '" + std::string(raw) + "'", line, column);
    const auto kind = inner.substr(0, colon);
    if (kind == "intent") {
      act.kind = ArgKind::intent;
    } else if (kind == "entity") {
      act.kind = ArgKind::entity;
    } else {
      throw ParseError("unknown act argument kind '" + std::string(kind) + "'", line, column);
    }
    auto value = inner.substr(colon + 1);
    if (const auto at = value.find('@'); at != std::string_view::npos) {
      act.role = std::string(value.substr(at + 1));
      value = value.substr(0, at);
    }
    act.arg = std::string(value);
  }
  if (auto why = act_violation(act); !why.empty()) throw ParseError(why, line, column);
  return act;
}

/// Parses a comma-separated act sequence. An empty string yields no acts.
inline std::vector<DialogAct> parse_act_sequence(std::string_view s, Side side,
                                                 std::size_t line = 0, std::size_t column = 0) {
  std::vector<DialogAct> acts;
  if (text::trim(s).empty()) return acts;
  std::size_t start = 0;
  int depth = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i < s.size()) {
      if (s[i] == '(') ++depth;
      if (s[i] == ')') --depth;
      if (s[i] != ',' || depth != 0) continue;
    }
    acts.push_back(parse_act(s.substr(start, i - start), side, line, column ? column + start : 0));
    start = i + 1;
  }
  return acts;
}

/// Order-independent key of an act set used to index templates.
/// Roles are dropped so that templates generalize across APIs.
inline std::string signature_key(std::span<const DialogAct> acts) {
  std::vector<DialogAct> sorted(acts.begin(), acts.end());
  for (auto& a : sorted) a.role.clear();
  std::sort(sorted.begin(), sorted.end(), [](const DialogAct& x, const DialogAct& y) {
    auto rank = [](ArgKind k) { return k == ArgKind::intent ? 0 : k == ArgKind::entity ? 1 : 2; };
    return std::tuple(static_cast<int>(x.name), rank(x.kind), x.arg) <
           std::tuple(static_cast<int>(y.name), rank(y.kind), y.arg);
  });
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  return to_string(sorted);
}

inline bool contains_act(std::span<const DialogAct> acts, ActName name) {
  return std::any_of(acts.begin(), acts.end(), [&](const DialogAct& a) { return a.name == name; });
}

}  // namespace dialogsim
