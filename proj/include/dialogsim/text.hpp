#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

// Small string helpers shared by the parsers and the template engine.
namespace dialogsim::text {

inline bool is_ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) != 0 || c == '_';
}

inline bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

inline bool is_identifier(std::string_view s) {
  if (s.empty() || !is_ident_start(s.front())) return false;
  for (char c : s)
    if (!is_ident_char(c)) return false;
  return true;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

/// "FindMovies" -> "find movies", "timeLowerBound" -> "time lower bound".
inline std::string humanize(std::string_view ident) {
  std::string out;
  for (std::size_t i = 0; i < ident.size(); ++i) {
    const char c = ident[i];
    if (c == '_') {
      if (!out.empty() && out.back() != ' ') out += ' ';
      continue;
    }
    if (std::isupper(static_cast<unsigned char>(c)) && i > 0 && !out.empty() && out.back() != ' ')
      out += ' ';
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

/// "MovieName" -> "movieName".
inline std::string lower_camel(std::string_view ident) {
  std::string out(ident);
  if (!out.empty()) out[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(out[0])));
  return out;
}

inline std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(s.substr(start));
      return parts;
    }
    parts.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

/// One piece of a delexicalized template: literal text or a `{slot}`.
struct TemplatePiece {
  bool is_slot = false;
  std::string text;
};

/// Splits "Book {count} tickets" into literal and slot pieces.
/// Returns false on an unbalanced brace or a non-identifier slot name.
inline bool split_template(std::string_view tmpl, std::vector<TemplatePiece>& pieces) {
  pieces.clear();
  std::string literal;
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    const char c = tmpl[i];
    if (c == '}') return false;
    if (c != '{') {
      literal += c;
      continue;
    }
    const auto close = tmpl.find('}', i);
    if (close == std::string_view::npos) return false;
    const auto name = tmpl.substr(i + 1, close - i - 1);
    if (!is_identifier(name)) return false;
    if (!literal.empty()) pieces.push_back({false, std::move(literal)});
    literal.clear();
    pieces.push_back({true, std::string(name)});
    i = close;
  }
  if (!literal.empty()) pieces.push_back({false, std::move(literal)});
  return true;
}

}  // namespace dialogsim::text
