#pragma once

// Parsing of chat-completion replies into question/answer turns.
//
// A reply is cut into chunks at separator lines (a line holding only three
// or more '=') and at lines that start with a label. A chunk that begins
// with "Question:" or "Answer:" carries that role; text before the first
// labeled chunk is preamble and ignored.

#include <string>
#include <string_view>
#include <vector>

#include "regionkit/core/error.hpp"
#include "regionkit/core/types.hpp"
#include "regionkit/markup/markup.hpp"
#include "regionkit/promptgen/prompt.hpp"

namespace regionkit::genpipe {

struct ParsedTurn {
  Turn turn;
  markup::RegionPresence question_regions;
  markup::RegionPresence answer_regions;

  bool question_has_malformed_region() const { return question_regions.malformed > 0; }
  bool answer_contains_region() const { return answer_regions.any(); }
};

struct ParsedGeneration {
  std::vector<ParsedTurn> turns;
  // Labeled chunks that could not be paired (a question with no answer,
  // an answer with no question, an empty body).
  std::size_t orphan_chunks = 0;

  std::vector<Turn> plain_turns() const {
    std::vector<Turn> out;
    for (const auto& t : turns) out.push_back(t.turn);
    return out;
  }
};

namespace detail {

inline bool is_separator_line(std::string_view line) {
  line = trim(line);
  return line.size() >= 3 && line.find_first_not_of('=') == std::string_view::npos;
}

enum class ChunkRole { kNone, kQuestion, kAnswer };

struct Chunk {
  ChunkRole role = ChunkRole::kNone;
  std::string body;
};

inline ChunkRole label_at(std::string_view s, const promptgen::ResponseGrammar& g,
                          std::size_t& label_len) {
  if (s.starts_with(g.question_label)) {
    label_len = g.question_label.size();
    return ChunkRole::kQuestion;
  }
  if (s.starts_with(g.answer_label)) {
    label_len = g.answer_label.size();
    return ChunkRole::kAnswer;
  }
  return ChunkRole::kNone;
}

// Splits "Question: Q ====== Answer: A" written on one line: a blank-
// delimited '=' run directly followed by a label is a separator too.
inline std::vector<std::string> split_inline_separators(const std::string& line,
                                                        const promptgen::ResponseGrammar& g) {
  std::vector<std::string> out;
  std::size_t start = 0, pos = 0;
  while ((pos = line.find("===", pos)) != std::string::npos) {
    std::size_t end = pos;
    while (end < line.size() && line[end] == '=') ++end;
    bool blank_before = pos == 0 || line[pos - 1] == ' ' || line[pos - 1] == '\t';
    std::size_t next = end;
    while (next < line.size() && (line[next] == ' ' || line[next] == '\t')) ++next;
    std::size_t unused = 0;
    if (blank_before && next > end &&
        label_at(std::string_view(line).substr(next), g, unused) != ChunkRole::kNone) {
      out.push_back(line.substr(start, pos - start));
      out.push_back("===");
      start = next;
    }
    pos = end;
  }
  out.push_back(line.substr(start));
  return out;
}

inline std::vector<Chunk> chunk_reply(std::string_view raw, const promptgen::ResponseGrammar& g) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= raw.size()) {
    std::size_t nl = raw.find('\n', start);
    std::string line(raw.substr(start, nl == std::string_view::npos ? std::string_view::npos
                                                                    : nl - start));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    for (auto& piece : split_inline_separators(line, g)) lines.push_back(std::move(piece));
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }

  std::vector<Chunk> chunks;
  Chunk current;
  bool open = false;
  auto close = [&] {
    if (open) chunks.push_back(std::move(current));
    current = Chunk{};
    open = false;
  };
  for (const auto& line : lines) {
    if (is_separator_line(line)) {
      close();
      continue;
    }
    std::string_view body = trim(line);
    std::size_t label_len = 0;
    ChunkRole role = label_at(body, g, label_len);
    if (role != ChunkRole::kNone) {
      close();
      current.role = role;
      current.body = std::string(body.substr(label_len));
      open = true;
      continue;
    }
    if (!open) {
      if (body.empty()) continue;
      open = true;
    } else {
      current.body += '\n';
    }
    current.body += line;
  }
  close();
  for (auto& c : chunks) c.body = std::string(trim(c.body));
  return chunks;
}

}  // namespace detail

/// Throws ParseFailure when no question/answer pair can be recovered.
inline ParsedGeneration parse_reply(std::string_view raw, const promptgen::ResponseGrammar& grammar) {
  using detail::ChunkRole;
  ParsedGeneration out;
  const detail::Chunk* pending = nullptr;
  bool seen_label = false;
  auto chunks = detail::chunk_reply(raw, grammar);
  for (const auto& c : chunks) {
    if (c.role == ChunkRole::kNone) {
      if (seen_label) ++out.orphan_chunks;
      continue;
    }
    seen_label = true;
    if (c.role == ChunkRole::kQuestion) {
      if (pending) ++out.orphan_chunks;
      pending = &c;
      continue;
    }
    if (!pending) {
      ++out.orphan_chunks;
      continue;
    }
    if (pending->body.empty() || c.body.empty()) {
      out.orphan_chunks += 2;
    } else {
      out.turns.push_back({{pending->body, c.body},
                           markup::contains_region(pending->body),
                           markup::contains_region(c.body)});
    }
    pending = nullptr;
  }
  if (pending) ++out.orphan_chunks;
  if (out.turns.empty()) throw ParseFailure("no Question/Answer pair found in reply");
  return out;
}

/// Writes turns in the reply grammar; parse_reply inverts it for turn texts
/// that contain no separator lines and no lines starting with a label.
inline std::string format_reply(const std::vector<Turn>& turns,
                                const promptgen::ResponseGrammar& grammar) {
  std::string out;
  for (std::size_t i = 0; i < turns.size(); ++i) {
    if (i > 0) out += "\n" + grammar.separator + "\n";
    out += grammar.question_label + " " + turns[i].question + "\n" + grammar.separator + "\n" +
           grammar.answer_label + " " + turns[i].answer;
  }
  return out;
}

}  // namespace regionkit::genpipe
