#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "dialogsim/acts.hpp"
#include "dialogsim/error.hpp"
#include "dialogsim/text.hpp"

namespace dialogsim {

using nlohmann::json;

enum class EntityKind { catalog, object, builtin };

inline std::string_view to_string(EntityKind k) {
  switch (k) {
    case EntityKind::catalog: return "catalog";
    case EntityKind::object: return "object";
    case EntityKind::builtin: return "builtin";
  }
  return "catalog";
}

struct EntityType {
  std::string name;
  EntityKind kind = EntityKind::catalog;
  std::vector<std::string> catalog;

  bool operator==(const EntityType&) const = default;
};

struct ArgSpec {
  std::string name;
  std::string entity_type;
  bool required = true;

  bool operator==(const ArgSpec&) const = default;
};

struct ApiDef {
  std::string name;
  std::vector<ArgSpec> args;
  std::string return_name;
  std::string return_type;
  std::string response_template;
  /// Transactional APIs are confirmed with the user before they are called.
  bool confirm_before_call = false;

  const ArgSpec* find_arg(std::string_view arg) const {
    for (const auto& a : args)
      if (a.name == arg) return &a;
    return nullptr;
  }

  bool operator==(const ApiDef&) const = default;
};

struct ResponseTemplateDef {
  std::string name;
  std::vector<ArgSpec> args;
  std::vector<DialogAct> dialog_acts;
  std::vector<std::string> templates;

  bool operator==(const ResponseTemplateDef&) const = default;
};

enum class TemplateOrigin { developer, auto_extracted };

struct UtteranceTemplateDef {
  std::vector<DialogAct> act_signature;
  std::string text;
  TemplateOrigin origin = TemplateOrigin::developer;

  bool operator==(const UtteranceTemplateDef&) const = default;
};

struct DomainSchema {
  std::string domain_name;
  std::vector<EntityType> entity_types;
  std::vector<ApiDef> apis;
  std::vector<ResponseTemplateDef> response_templates;
  std::vector<UtteranceTemplateDef> utterance_templates;

  bool operator==(const DomainSchema&) const = default;
};

/// Shared entity types understood by every domain. Schemas may extend their
/// catalogs by declaring them with kind `builtin`, but may not redefine them.
using BuiltinRegistry = std::vector<EntityType>;

inline const BuiltinRegistry& default_builtins() {
  static const BuiltinRegistry registry = {
      {"Address", EntityKind::builtin,
       {"1 Main Street", "250 Castro Street", "500 El Camino Real", "12 Market Street",
        "80 Oak Avenue"}},
      {"Date", EntityKind::builtin, {"today", "tomorrow", "Friday", "Saturday", "Sunday"}},
      {"Time", EntityKind::builtin,
       {"11 AM", "1 PM", "2 PM", "4 PM", "5:30 PM", "7 PM", "8:15 PM", "9 PM"}},
  };
  return registry;
}

/// Immutable collection of one or more domain schemas plus lookup tables.
class SchemaBundle {
 public:
  SchemaBundle() : SchemaBundle(std::vector<DomainSchema>{}) {}

  explicit SchemaBundle(std::vector<DomainSchema> domains,
                        BuiltinRegistry builtins = default_builtins())
      : domains_(std::move(domains)), builtins_(std::move(builtins)) {
    index();
  }

  const std::vector<DomainSchema>& domains() const noexcept { return domains_; }
  const BuiltinRegistry& builtins() const noexcept { return builtins_; }

  /// Declared types merged with the builtin registry.
  const std::map<std::string, EntityType>& entity_types() const noexcept { return types_; }

  const EntityType* find_entity_type(std::string_view name) const {
    const auto it = types_.find(std::string(name));
    return it == types_.end() ? nullptr : &it->second;
  }

  bool is_builtin_name(std::string_view name) const {
    return std::any_of(builtins_.begin(), builtins_.end(),
                       [&](const EntityType& t) { return t.name == name; });
  }

  const ApiDef* find_api(std::string_view name) const {
    const auto it = apis_.find(std::string(name));
    if (it == apis_.end()) return nullptr;
    return &domains_[it->second.first].apis[it->second.second];
  }

  /// Name of the domain declaring `api`; empty when unknown.
  std::string domain_of(std::string_view api) const {
    const auto it = apis_.find(std::string(api));
    return it == apis_.end() ? std::string{} : domains_[it->second.first].domain_name;
  }

  const ResponseTemplateDef* find_response(std::string_view name) const {
    const auto it = responses_.find(std::string(name));
    if (it == responses_.end()) return nullptr;
    return &domains_[it->second.first].response_templates[it->second.second];
  }

  std::vector<const ApiDef*> all_apis() const {
    std::vector<const ApiDef*> out;
    for (const auto& d : domains_)
      for (const auto& a : d.apis) out.push_back(&a);
    return out;
  }

  std::vector<const ResponseTemplateDef*> all_responses() const {
    std::vector<const ResponseTemplateDef*> out;
    for (const auto& d : domains_)
      for (const auto& r : d.response_templates) out.push_back(&r);
    return out;
  }

  /// Variable-id prefix for user-provided values of `entity_type`, e.g. City -> "c".
  std::string var_prefix(std::string_view entity_type) const {
    const auto it = prefixes_.find(std::string(entity_type));
    return it == prefixes_.end() ? text::lower_camel(entity_type) : it->second;
  }

  /// Inverse of var_prefix; nullopt for an unknown prefix.
  std::optional<std::string> type_for_prefix(std::string_view prefix) const {
    for (const auto& [type, p] : prefixes_)
      if (p == prefix) return type;
    return std::nullopt;
  }

  bool operator==(const SchemaBundle& other) const {
    return domains_ == other.domains_ && builtins_ == other.builtins_;
  }

 private:
  void index() {
    for (const auto& b : builtins_) types_[b.name] = b;
    for (std::size_t d = 0; d < domains_.size(); ++d) {
      const auto& dom = domains_[d];
      for (const auto& t : dom.entity_types) {
        auto& slot = types_[t.name];
        if (t.kind == EntityKind::builtin && is_builtin_name(t.name)) {
          for (const auto& v : t.catalog)
            if (std::find(slot.catalog.begin(), slot.catalog.end(), v) == slot.catalog.end())
              slot.catalog.push_back(v);
        } else if (slot.name.empty() || !is_builtin_name(t.name)) {
          slot = t;
        }
      }
      for (std::size_t i = 0; i < dom.apis.size(); ++i) apis_.try_emplace(dom.apis[i].name, d, i);
      for (std::size_t i = 0; i < dom.response_templates.size(); ++i)
        responses_.try_emplace(dom.response_templates[i].name, d, i);
    }
    assign_prefixes();
  }

  // Builtins first, then the remaining value types by name. Each type takes
  // its lowercase initial when free, else its lowerCamel name.
  void assign_prefixes() {
    std::set<std::string> taken;
    for (const auto& d : domains_)
      for (const auto& a : d.apis) taken.insert(a.return_name);
    std::vector<std::string> order;
    for (const auto& b : builtins_) order.push_back(b.name);
    for (const auto& [name, t] : types_)
      if (t.kind != EntityKind::object && !is_builtin_name(name)) order.push_back(name);
    for (const auto& name : order) {
      std::string p = text::lower_camel(name.substr(0, 1));
      if (taken.count(p)) p = text::lower_camel(name);
      while (taken.count(p)) p += 'x';
      taken.insert(p);
      prefixes_[name] = p;
    }
  }

  std::vector<DomainSchema> domains_;
  BuiltinRegistry builtins_;
  std::map<std::string, EntityType> types_;
  std::map<std::string, std::pair<std::size_t, std::size_t>> apis_;
  std::map<std::string, std::pair<std::size_t, std::size_t>> responses_;
  std::map<std::string, std::string> prefixes_;
};

namespace detail {

inline std::set<std::string> template_slots(const std::string& tmpl, bool& well_formed) {
  std::vector<text::TemplatePiece> pieces;
  well_formed = text::split_template(tmpl, pieces);
  std::set<std::string> slots;
  for (const auto& p : pieces)
    if (p.is_slot) slots.insert(p.text);
  return slots;
}

inline bool has_markup_chars(std::string_view s) {
  return s.find_first_of("[]|\n") != std::string_view::npos;
}

}  // namespace detail

/// Slot names an utterance template must carry: one per value-bearing inform.
inline std::set<std::string> expected_slots(const std::vector<DialogAct>& acts) {
  std::set<std::string> out;
  for (const auto& a : acts)
    if (a.name == ActName::inform && a.kind == ArgKind::entity) out.insert(a.arg);
  return out;
}

/// Checks every bundle invariant. Pure: the result depends only on `bundle`.
inline std::vector<Diagnostic> validate_schema(const SchemaBundle& bundle) {
  std::vector<Diagnostic> out;
  auto error = [&](std::string loc, std::string msg) {
    out.push_back({Severity::error, std::move(loc), std::move(msg)});
  };

  std::set<std::string> type_names, api_names, response_names;
  for (std::size_t d = 0; d < bundle.domains().size(); ++d) {
    const auto& dom = bundle.domains()[d];
    const std::string dloc = "domains[" + std::to_string(d) + "]";
    if (!text::is_identifier(dom.domain_name))
      error(dloc, "domain name '" + dom.domain_name + "' is not an identifier");

    for (std::size_t i = 0; i < dom.entity_types.size(); ++i) {
      const auto& t = dom.entity_types[i];
      const std::string loc = dloc + ".entity_types[" + std::to_string(i) + "]";
      if (!text::is_identifier(t.name)) error(loc, "entity type name '" + t.name + "' is not an identifier");
      if (!type_names.insert(t.name).second) error(loc, "duplicate entity type '" + t.name + "'");
      const bool reserved = bundle.is_builtin_name(t.name);
      if (reserved && t.kind != EntityKind::builtin)
        error(loc, "entity type '" + t.name + "' redefines a builtin type");
      if (!reserved && t.kind == EntityKind::builtin)
        error(loc, "'" + t.name + "' is not a known builtin type");
      if (t.kind == EntityKind::catalog && t.catalog.empty())
        error(loc, "catalog entity type '" + t.name + "' has an empty catalog");
      if (t.kind == EntityKind::object && !t.catalog.empty())
        error(loc, "object entity type '" + t.name + "' cannot have a catalog");
      std::set<std::string> seen;
      for (const auto& v : t.catalog) {
        if (text::trim(v).empty() || text::trim(v).size() != v.size())
          error(loc, "catalog entry '" + v + "' of '" + t.name + "' is empty or padded");
        else if (detail::has_markup_chars(v))
          error(loc, "catalog entry '" + v + "' contains a markup character");
        if (!seen.insert(v).second) error(loc, "duplicate catalog entry '" + v + "' in '" + t.name + "'");
      }
    }
  }

  auto check_args = [&](const std::vector<ArgSpec>& args, const std::string& loc, const std::string& owner) {
    std::set<std::string> names;
    for (std::size_t i = 0; i < args.size(); ++i) {
      const auto& a = args[i];
      const std::string aloc = loc + ".args[" + std::to_string(i) + "]";
      if (!text::is_identifier(a.name)) error(aloc, "argument name '" + a.name + "' is not an identifier");
      if (!names.insert(a.name).second)
        error(aloc, "duplicate argument name '" + a.name + "' in '" + owner + "'");
      if (!bundle.find_entity_type(a.entity_type))
        error(aloc, "unresolved entity type '" + a.entity_type + "' for argument '" + a.name + "'");
    }
  };

  for (std::size_t d = 0; d < bundle.domains().size(); ++d) {
    const auto& dom = bundle.domains()[d];
    const std::string dloc = "domains[" + std::to_string(d) + "]";

    for (std::size_t i = 0; i < dom.response_templates.size(); ++i) {
      const auto& r = dom.response_templates[i];
      const std::string loc = dloc + ".response_templates[" + std::to_string(i) + "]";
      if (!text::is_identifier(r.name)) error(loc, "response template name '" + r.name + "' is not an identifier");
      if (!response_names.insert(r.name).second) error(loc, "duplicate response template '" + r.name + "'");
      check_args(r.args, loc, r.name);
      for (const auto& act : r.dialog_acts) {
        if (act.side != Side::system) error(loc, to_string(act) + " must be a system act");
        if (auto why = act_violation(act); !why.empty()) error(loc, why);
      }
      if (r.templates.empty()) error(loc, "response template '" + r.name + "' has no templates");
      for (const auto& tmpl : r.templates) {
        bool ok = true;
        for (const auto& slot : detail::template_slots(tmpl, ok))
          if (std::none_of(r.args.begin(), r.args.end(), [&](const ArgSpec& a) { return a.name == slot; }))
            error(loc, "template slot {" + slot + "} is not an argument of '" + r.name + "'");
        if (!ok) error(loc, "malformed template '" + tmpl + "'");
        if (detail::has_markup_chars(tmpl)) error(loc, "template '" + tmpl + "' contains a markup character");
      }
    }

    for (std::size_t i = 0; i < dom.apis.size(); ++i) {
      const auto& api = dom.apis[i];
      const std::string loc = dloc + ".apis[" + std::to_string(i) + "]";
      if (!text::is_identifier(api.name)) error(loc, "API name '" + api.name + "' is not an identifier");
      if (!api_names.insert(api.name).second) error(loc, "duplicate API '" + api.name + "'");
      check_args(api.args, loc, api.name);
      if (!text::is_identifier(api.return_name))
        error(loc, "return name '" + api.return_name + "' is not an identifier");
      if (!bundle.find_entity_type(api.return_type))
        error(loc, "unresolved entity type '" + api.return_type + "' for the return of '" + api.name + "'");
      if (!bundle.find_response(api.response_template))
        error(loc, "unresolved response template '" + api.response_template + "' for '" + api.name + "'");
    }

    for (std::size_t i = 0; i < dom.utterance_templates.size(); ++i) {
      const auto& u = dom.utterance_templates[i];
      const std::string loc = dloc + ".utterance_templates[" + std::to_string(i) + "]";
      if (u.act_signature.empty()) error(loc, "utterance template has no acts");
      for (const auto& act : u.act_signature) {
        if (act.side != Side::user) error(loc, to_string(act) + " must be a user act");
        if (auto why = act_violation(act); !why.empty()) error(loc, why);
      }
      bool ok = true;
      const auto slots = detail::template_slots(u.text, ok);
      if (!ok) error(loc, "malformed template '" + u.text + "'");
      if (detail::has_markup_chars(u.text)) error(loc, "template '" + u.text + "' contains a markup character");
      if (slots != expected_slots(u.act_signature))
        error(loc, "slots of '" + u.text + "' do not match the informed entities of " +
                       to_string(u.act_signature));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON reading and writing

namespace detail {

inline const json& field(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key))
    throw SchemaError(path + ": missing field '" + key + "'");
  return obj.at(key);
}

inline std::string string_field(const json& obj, const char* key, const std::string& path) {
  const auto& v = field(obj, key, path);
  if (!v.is_string()) throw SchemaError(path + "." + key + ": expected a string");
  return v.get<std::string>();
}

inline const json& array_field(const json& obj, const char* key, const std::string& path,
                               bool optional = false) {
  static const json empty = json::array();
  if (optional && (!obj.is_object() || !obj.contains(key))) return empty;
  const auto& v = field(obj, key, path);
  if (!v.is_array()) throw SchemaError(path + "." + key + ": expected an array");
  return v;
}

inline std::vector<ArgSpec> args_from_json(const json& arr, const std::string& path) {
  std::vector<ArgSpec> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    ArgSpec a;
    a.name = string_field(arr[i], "name", p);
    a.entity_type = string_field(arr[i], "type", p);
    if (arr[i].contains("required")) {
      if (!arr[i]["required"].is_boolean()) throw SchemaError(p + ".required: expected a boolean");
      a.required = arr[i]["required"].get<bool>();
    }
    out.push_back(std::move(a));
  }
  return out;
}

inline json args_to_json(const std::vector<ArgSpec>& args) {
  json arr = json::array();
  for (const auto& a : args) arr.push_back({{"name", a.name}, {"type", a.entity_type}, {"required", a.required}});
  return arr;
}

inline std::vector<DialogAct> acts_from_json(const json& arr, Side side, const std::string& path) {
  std::vector<DialogAct> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_string()) throw SchemaError(path + "[" + std::to_string(i) + "]: expected an act string");
    try {
      out.push_back(parse_act(arr[i].get<std::string>(), side));
    } catch (const ParseError& e) {
      throw SchemaError(path + "[" + std::to_string(i) + "]: " + e.what());
    }
  }
  return out;
}

inline json acts_to_json(const std::vector<DialogAct>& acts) {
  json arr = json::array();
  for (const auto& a : acts) arr.push_back(to_string(a));
  return arr;
}

inline std::string line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return std::to_string(line) + ":" + std::to_string(col);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

/// Developer utterance templates in the schema's `utterance_templates` shape.
inline std::vector<UtteranceTemplateDef> utterance_templates_from_json(const json& arr, const std::string& path) {
  if (!arr.is_array()) throw SchemaError(path + ": expected an array");
  std::vector<UtteranceTemplateDef> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    UtteranceTemplateDef u;
    u.act_signature = detail::acts_from_json(detail::array_field(arr[i], "acts", p), Side::user, p + ".acts");
    u.text = detail::string_field(arr[i], "template", p);
    u.origin = TemplateOrigin::developer;
    out.push_back(std::move(u));
  }
  return out;
}

inline json utterance_templates_to_json(const std::vector<UtteranceTemplateDef>& templates) {
  json arr = json::array();
  for (const auto& u : templates) arr.push_back({{"acts", detail::acts_to_json(u.act_signature)}, {"template", u.text}});
  return arr;
}

/// Structural conversion only; call validate_schema for the invariants.
inline SchemaBundle schema_from_json(const json& doc) {
  std::vector<DomainSchema> domains;
  const auto& arr = detail::array_field(doc, "domains", "$");
  for (std::size_t d = 0; d < arr.size(); ++d) {
    const auto& jd = arr[d];
    const std::string p = "$.domains[" + std::to_string(d) + "]";
    DomainSchema dom;
    dom.domain_name = detail::string_field(jd, "name", p);

    const auto& types = detail::array_field(jd, "entity_types", p, true);
    for (std::size_t i = 0; i < types.size(); ++i) {
      const std::string tp = p + ".entity_types[" + std::to_string(i) + "]";
      EntityType t;
      t.name = detail::string_field(types[i], "name", tp);
      const auto kind = detail::string_field(types[i], "kind", tp);
      if (kind == "catalog") t.kind = EntityKind::catalog;
      else if (kind == "object") t.kind = EntityKind::object;
      else if (kind == "builtin") t.kind = EntityKind::builtin;
      else throw SchemaError(tp + ".kind: unknown kind '" + kind + "'");
      for (const auto& v : detail::array_field(types[i], "catalog", tp, true)) {
        if (!v.is_string()) throw SchemaError(tp + ".catalog: expected strings");
        t.catalog.push_back(v.get<std::string>());
      }
      dom.entity_types.push_back(std::move(t));
    }

    const auto& apis = detail::array_field(jd, "apis", p, true);
    for (std::size_t i = 0; i < apis.size(); ++i) {
      const std::string ap = p + ".apis[" + std::to_string(i) + "]";
      ApiDef api;
      api.name = detail::string_field(apis[i], "name", ap);
      api.args = detail::args_from_json(detail::array_field(apis[i], "args", ap, true), ap + ".args");
      const auto& ret = detail::field(apis[i], "return", ap);
      api.return_name = detail::string_field(ret, "name", ap + ".return");
      api.return_type = detail::string_field(ret, "type", ap + ".return");
      api.response_template = detail::string_field(apis[i], "response_template", ap);
      if (apis[i].contains("confirm_before_call")) {
        if (!apis[i]["confirm_before_call"].is_boolean())
          throw SchemaError(ap + ".confirm_before_call: expected a boolean");
        api.confirm_before_call = apis[i]["confirm_before_call"].get<bool>();
      }
      dom.apis.push_back(std::move(api));
    }

    const auto& responses = detail::array_field(jd, "response_templates", p, true);
    for (std::size_t i = 0; i < responses.size(); ++i) {
      const std::string rp = p + ".response_templates[" + std::to_string(i) + "]";
      ResponseTemplateDef r;
      r.name = detail::string_field(responses[i], "name", rp);
      r.args = detail::args_from_json(detail::array_field(responses[i], "args", rp, true), rp + ".args");
      r.dialog_acts = detail::acts_from_json(detail::array_field(responses[i], "acts", rp), Side::system, rp + ".acts");
      for (const auto& t : detail::array_field(responses[i], "templates", rp)) {
        if (!t.is_string()) throw SchemaError(rp + ".templates: expected strings");
        r.templates.push_back(t.get<std::string>());
      }
      dom.response_templates.push_back(std::move(r));
    }

    dom.utterance_templates =
        utterance_templates_from_json(detail::array_field(jd, "utterance_templates", p, true), p + ".utterance_templates");
    domains.push_back(std::move(dom));
  }
  return SchemaBundle(std::move(domains));
}

/// Inverse of schema_from_json.
inline json schema_to_json(const SchemaBundle& bundle) {
  json doms = json::array();
  for (const auto& d : bundle.domains()) {
    json types = json::array();
    for (const auto& t : d.entity_types)
      types.push_back({{"name", t.name}, {"kind", std::string(to_string(t.kind))}, {"catalog", t.catalog}});
    json apis = json::array();
    for (const auto& a : d.apis) {
      json ja = {{"name", a.name},
                 {"args", detail::args_to_json(a.args)},
                 {"return", {{"name", a.return_name}, {"type", a.return_type}}},
                 {"response_template", a.response_template}};
      if (a.confirm_before_call) ja["confirm_before_call"] = true;
      apis.push_back(std::move(ja));
    }
    json responses = json::array();
    for (const auto& r : d.response_templates)
      responses.push_back({{"name", r.name},
                           {"args", detail::args_to_json(r.args)},
                           {"acts", detail::acts_to_json(r.dialog_acts)},
                           {"templates", r.templates}});
    doms.push_back({{"name", d.domain_name},
                    {"entity_types", std::move(types)},
                    {"apis", std::move(apis)},
                    {"response_templates", std::move(responses)},
                    {"utterance_templates", utterance_templates_to_json(d.utterance_templates)}});
  }
  return {{"domains", std::move(doms)}};
}

inline std::string serialize_schema(const SchemaBundle& bundle) { return schema_to_json(bundle).dump(2) + "\n"; }

/// Parses and structurally converts a schema document without validating it.
inline SchemaBundle parse_schema_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto lc = detail::line_col(text, e.byte == 0 ? 0 : e.byte - 1);
    const auto colon = lc.find(':');
    throw ParseError(std::string("invalid schema JSON: ") + e.what(), std::stoul(lc.substr(0, colon)),
                     std::stoul(lc.substr(colon + 1)));
  }
  return schema_from_json(doc);
}

/// Parses, converts and validates; throws on the first error diagnostic.
inline SchemaBundle load_schema_text(const std::string& text) {
  auto bundle = parse_schema_text(text);
  for (const auto& d : validate_schema(bundle))
    if (d.severity == Severity::error) throw SchemaError(to_string(d));
  return bundle;
}

inline SchemaBundle load_schema(const std::filesystem::path& path) {
  return load_schema_text(detail::read_file(path));
}

}  // namespace dialogsim
