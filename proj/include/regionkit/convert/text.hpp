#pragma once

#include <array>
#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace regionkit::convert {

/// "first" .. "twentieth", then "21st", "22nd", "111th", ...
inline std::string ordinal_word(std::size_t n) {
  static constexpr std::array<std::string_view, 20> kWords = {
      "first",      "second",     "third",      "fourth",      "fifth",
      "sixth",      "seventh",    "eighth",     "ninth",       "tenth",
      "eleventh",   "twelfth",    "thirteenth", "fourteenth",  "fifteenth",
      "sixteenth",  "seventeenth", "eighteenth", "nineteenth", "twentieth"};
  if (n >= 1 && n <= kWords.size()) return std::string(kWords[n - 1]);
  std::string suffix = "th";
  if (n % 100 < 11 || n % 100 > 13) {
    switch (n % 10) {
      case 1: suffix = "st"; break;
      case 2: suffix = "nd"; break;
      case 3: suffix = "rd"; break;
      default: break;
    }
  }
  return std::to_string(n) + suffix;
}

inline bool is_attached_punct(std::string_view tok) {
  return tok == "." || tok == "," || tok == "?" || tok == "!";
}

/// Joins tokens with single spaces; `.,?!` attach to the previous token.
inline std::string detokenize(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& tok : tokens) {
    if (tok.empty()) continue;
    if (!out.empty() && !is_attached_punct(tok)) out.push_back(' ');
    out += tok;
  }
  return out;
}

inline std::string sentence_case(std::string s) {
  if (!s.empty() && std::islower(static_cast<unsigned char>(s[0]))) {
    s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  }
  return s;
}

inline std::string ensure_terminal_punct(std::string s) {
  while (!s.empty() && s.back() == ' ') s.pop_back();
  if (!s.empty() && s.back() != '.' && s.back() != '?' && s.back() != '!') s.push_back('.');
  return s;
}

}  // namespace regionkit::convert
