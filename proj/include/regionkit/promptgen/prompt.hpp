#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "regionkit/core/random.hpp"
#include "regionkit/core/types.hpp"
#include "regionkit/markup/markup.hpp"
#include "regionkit/promptgen/profile.hpp"

namespace regionkit::promptgen {

enum class Role { kSystem, kUser, kAssistant };

inline std::string_view to_string(Role r) {
  switch (r) {
    case Role::kSystem: return "system";
    case Role::kUser: return "user";
    case Role::kAssistant: return "assistant";
  }
  return "";
}

inline Role role_from_string(std::string_view s) {
  if (s == "system") return Role::kSystem;
  if (s == "user") return Role::kUser;
  if (s == "assistant") return Role::kAssistant;
  throw SchemaError("unknown chat role: " + std::string(s));
}

struct ChatMessage {
  Role role;
  std::string content;

  ChatMessage(Role r, std::string c) : role(r), content(std::move(c)) {
    if (content.empty()) throw ConfigError("chat message content must be non-empty");
  }
  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct RenderedContext {
  std::string text;
};

// ---------------------------------------------------------------------------
// Context rendering

inline std::string render_coords(const Region& r, RegionStyle style) {
  return style == RegionStyle::kTagged ? markup::render_tagged(r)
                                       : markup::render_region(r, markup::CoordStyle::kKeepDecimal);
}

namespace detail {

inline std::vector<std::string> section_lines(const AnnotationBundle& b, const SectionSpec& spec) {
  std::vector<std::string> lines;
  auto coords = [&](const Region& r) { return render_coords(r, spec.style); };
  switch (spec.section) {
    case Section::kCaptions:
      for (const auto& c : b.captions) {
        if (!trim(c).empty()) lines.emplace_back(trim(c));
      }
      break;
    case Section::kDetailedDescription:
      if (b.detailed_description && !trim(*b.detailed_description).empty()) {
        lines.emplace_back(trim(*b.detailed_description));
      }
      break;
    case Section::kRegionDescriptions:
      for (const auto& d : b.region_descriptions) lines.push_back(d.text + ": " + coords(d.region));
      break;
    case Section::kObjects:
      for (const auto& o : b.objects) lines.push_back(o.label + ": " + coords(o.region));
      break;
    case Section::kRelations:
      for (const auto& r : b.relations) {
        lines.push_back("<" + r.subject_label + ": " + coords(r.subject) + "> <" + r.predicate +
                        "> <" + r.object_label + ": " + coords(r.object) + ">");
      }
      break;
    case Section::kAttributes:
      for (const auto& a : b.attributes) {
        std::string attrs;
        for (std::size_t i = 0; i < a.attrs.size(); ++i) {
          if (i > 0) attrs += ", ";
          attrs += a.attrs[i];
        }
        lines.push_back("<" + a.label + ": " + coords(a.region) + "> <" + attrs + ">");
      }
      break;
    case Section::kOcr:
      for (const auto& t : b.ocr_tokens) lines.push_back(t.text + ": " + coords(t.region));
      break;
    case Section::kGroundings:
      for (const auto& g : b.groundings) lines.push_back(g.phrase + ": " + coords(g.region));
      break;
  }
  return lines;
}

}  // namespace detail

/// Renders the profile's sections in canonical order, one line per entry,
/// sections separated by a blank line. Throws ContextError naming the
/// first required section the bundle cannot fill.
inline RenderedContext render_context(const AnnotationBundle& bundle, const TaskProfile& profile) {
  std::vector<SectionSpec> specs = profile.sections;
  std::stable_sort(specs.begin(), specs.end(), [](const SectionSpec& a, const SectionSpec& b) {
    return static_cast<int>(a.section) < static_cast<int>(b.section);
  });
  std::string out;
  for (const auto& spec : specs) {
    auto lines = detail::section_lines(bundle, spec);
    if (lines.empty()) {
      throw ContextError("image " + bundle.image.image_id + " lacks section '" +
                         std::string(to_string(spec.section)) + "' required by task " +
                         std::string(to_string(profile.task)));
    }
    if (!out.empty()) out += "\n\n";
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (i > 0) out += '\n';
      out += lines[i];
    }
  }
  return {out};
}

// ---------------------------------------------------------------------------
// Message assembly

/// Indices of the in-context examples used for one prompt.
inline std::vector<std::size_t> select_examples(const TaskProfile& profile, std::uint64_t seed) {
  const std::size_t pool = profile.examples.size();
  if (!profile.example_sample_count) {
    std::vector<std::size_t> all(pool);
    for (std::size_t i = 0; i < pool; ++i) all[i] = i;
    return all;
  }
  const std::size_t k = *profile.example_sample_count;
  if (k > pool) {
    throw ConfigError(std::string(to_string(profile.task)) + ": example_sample_count " +
                      std::to_string(k) + " exceeds pool size " + std::to_string(pool));
  }
  Rng rng(seed);
  return sample_indices(rng, pool, k);
}

/// system, then (user, assistant) per selected example, then the query.
inline std::vector<ChatMessage> build_messages(const TaskProfile& profile,
                                               const RenderedContext& context,
                                               std::uint64_t seed) {
  profile.validate();
  if (trim(context.text).empty()) throw ContextError("rendered context is empty");
  std::vector<ChatMessage> msgs;
  msgs.emplace_back(Role::kSystem, profile.system_message);
  for (std::size_t idx : select_examples(profile, seed)) {
    msgs.emplace_back(Role::kUser, profile.examples[idx].context);
    msgs.emplace_back(Role::kAssistant, profile.examples[idx].response);
  }
  msgs.emplace_back(Role::kUser, context.text);
  return msgs;
}

/// True iff the roles read system (user assistant)* user.
inline bool has_prompt_shape(const std::vector<ChatMessage>& msgs) {
  if (msgs.size() < 2 || msgs.size() % 2 != 0) return false;
  if (msgs.front().role != Role::kSystem || msgs.back().role != Role::kUser) return false;
  for (std::size_t i = 1; i + 1 < msgs.size(); ++i) {
    Role want = (i % 2 == 1) ? Role::kUser : Role::kAssistant;
    if (msgs[i].role != want) return false;
  }
  return true;
}

inline io::json to_json(const std::vector<ChatMessage>& msgs) {
  io::json arr = io::json::array();
  for (const auto& m : msgs) arr.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return arr;
}

inline std::vector<ChatMessage> messages_from_json(const io::json& arr) {
  std::vector<ChatMessage> out;
  if (!arr.is_array()) throw SchemaError("messages must be an array");
  for (const auto& m : arr) {
    out.emplace_back(role_from_string(io::require_string(m, "role")),
                     io::require_string(m, "content"));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reply grammar

struct ResponseGrammar {
  std::string separator;
  std::string question_label = "Question:";
  std::string answer_label = "Answer:";
  // Upper bound on Q/A pairs; single-turn replies carry exactly one.
  std::size_t max_pairs = 1;
};

inline ResponseGrammar expected_response_grammar(const TaskProfile& profile) {
  if (profile.turn_mode == TurnMode::kSingle && profile.task != TaskId::kGeneral) {
    return {"======", "Question:", "Answer:", 1};
  }
  return {"===", "Question:", "Answer:", std::numeric_limits<std::size_t>::max()};
}

/// Default grammar by task id; throws ConfigError for unknown ids.
inline ResponseGrammar expected_response_grammar(std::string_view task_id) {
  TaskProfile p;
  p.task = task_from_string(task_id);
  p.turn_mode = p.task == TaskId::kGeneral ? TurnMode::kMulti : TurnMode::kSingle;
  return expected_response_grammar(p);
}

}  // namespace regionkit::promptgen
