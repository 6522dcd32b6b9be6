#pragma once

#include <algorithm>
#include <array>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "regionkit/core/error.hpp"
#include "regionkit/core/types.hpp"
#include "regionkit/io/serialize.hpp"

namespace regionkit::promptgen {

enum class TaskId { kSmallObject, kSameCategory, kRelationship, kAttribute, kOcr, kGeneral };

inline constexpr std::array<TaskId, 6> kAllTasks = {
    TaskId::kSmallObject, TaskId::kSameCategory, TaskId::kRelationship,
    TaskId::kAttribute,   TaskId::kOcr,          TaskId::kGeneral};

inline std::string_view to_string(TaskId t) {
  switch (t) {
    case TaskId::kSmallObject: return "small-object";
    case TaskId::kSameCategory: return "same-category";
    case TaskId::kRelationship: return "relationship";
    case TaskId::kAttribute: return "attribute";
    case TaskId::kOcr: return "ocr";
    case TaskId::kGeneral: return "general";
  }
  return "";
}

inline TaskId task_from_string(std::string_view s) {
  for (TaskId t : kAllTasks) {
    if (to_string(t) == s) return t;
  }
  throw ConfigError("unknown task id: " + std::string(s));
}

/// Context sections, declared in emission order.
enum class Section {
  kCaptions,
  kDetailedDescription,
  kRegionDescriptions,
  kObjects,
  kRelations,
  kAttributes,
  kOcr,
  kGroundings,
};

inline std::string_view to_string(Section s) {
  switch (s) {
    case Section::kCaptions: return "captions";
    case Section::kDetailedDescription: return "detailed_description";
    case Section::kRegionDescriptions: return "region_descriptions";
    case Section::kObjects: return "objects";
    case Section::kRelations: return "relations";
    case Section::kAttributes: return "attributes";
    case Section::kOcr: return "ocr";
    case Section::kGroundings: return "groundings";
  }
  return "";
}

inline Section section_from_string(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(Section::kGroundings); ++i) {
    auto sec = static_cast<Section>(i);
    if (to_string(sec) == s) return sec;
  }
  throw ConfigError("unknown context section: " + std::string(s));
}

/// How coordinates are written in a section: "<Region>[...]</Region>" or
/// a bare "[...]".
enum class RegionStyle { kTagged, kBare };

enum class TurnMode { kSingle, kMulti };

struct SectionSpec {
  Section section;
  RegionStyle style = RegionStyle::kTagged;
};

struct InContextExample {
  std::string context;
  std::string response;
};

struct TaskProfile {
  TaskId task = TaskId::kGeneral;
  std::string system_message;
  std::vector<InContextExample> examples;
  std::vector<SectionSpec> sections;
  TurnMode turn_mode = TurnMode::kSingle;
  // When set, this many examples are sampled per prompt; otherwise all are
  // used in file order.
  std::optional<std::size_t> example_sample_count;

  void validate() const {
    if (trim(system_message).empty()) {
      throw ConfigError(std::string(to_string(task)) + ": system message is empty");
    }
    if (examples.empty()) {
      throw ConfigError(std::string(to_string(task)) + ": no in-context examples");
    }
    for (const auto& ex : examples) {
      if (trim(ex.context).empty() || trim(ex.response).empty()) {
        throw ConfigError(std::string(to_string(task)) + ": empty in-context example");
      }
    }
    if (sections.empty()) throw ConfigError(std::string(to_string(task)) + ": no sections");
    if (example_sample_count && *example_sample_count == 0) {
      throw ConfigError(std::string(to_string(task)) + ": example_sample_count must be >= 1");
    }
  }
};

// ---------------------------------------------------------------------------
// On-disk profiles: <dir>/profile.json, <dir>/system.txt, <dir>/examples.json

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

inline TaskProfile profile_from_json(const io::json& settings, std::string system_message,
                                     const io::json& examples) {
  try {
    TaskProfile p;
    p.task = task_from_string(settings.at("task_id").get<std::string>());
    p.system_message = std::move(system_message);
    // A trailing newline in system.txt is a file artifact, not content.
    while (!p.system_message.empty() &&
           (p.system_message.back() == '\n' || p.system_message.back() == '\r')) {
      p.system_message.pop_back();
    }
    std::string mode = settings.value("turn_mode", "single");
    if (mode == "single") {
      p.turn_mode = TurnMode::kSingle;
    } else if (mode == "multi") {
      p.turn_mode = TurnMode::kMulti;
    } else {
      throw ConfigError("turn_mode must be single or multi");
    }
    for (const auto& s : settings.at("sections")) {
      SectionSpec spec{section_from_string(s.at("name").get<std::string>())};
      std::string style = s.value("style", "tagged");
      if (style == "tagged") {
        spec.style = RegionStyle::kTagged;
      } else if (style == "bare") {
        spec.style = RegionStyle::kBare;
      } else {
        throw ConfigError("section style must be tagged or bare");
      }
      p.sections.push_back(spec);
    }
    if (settings.contains("example_sample_count") && !settings["example_sample_count"].is_null()) {
      p.example_sample_count = settings["example_sample_count"].get<std::size_t>();
    }
    for (const auto& e : examples) {
      p.examples.push_back({e.at("context").get<std::string>(), e.at("response").get<std::string>()});
    }
    p.validate();
    return p;
  } catch (const io::json::exception& e) {
    throw ConfigError(std::string("bad profile: ") + e.what());
  }
}

inline TaskProfile load_profile(const std::string& dir) {
  try {
    auto settings = io::json::parse(detail::read_file(dir + "/profile.json"));
    auto examples = io::json::parse(detail::read_file(dir + "/examples.json"));
    return profile_from_json(settings, detail::read_file(dir + "/system.txt"), examples);
  } catch (const io::json::parse_error& e) {
    throw ConfigError("bad profile in " + dir + ": " + e.what());
  }
}

/// Loads `<root>/<task-id>/` for the given task.
inline TaskProfile load_profile(const std::string& root, TaskId task) {
  auto p = load_profile(root + "/" + std::string(to_string(task)));
  if (p.task != task) {
    throw ConfigError("profile in " + root + "/" + std::string(to_string(task)) +
                      " declares task " + std::string(to_string(p.task)));
  }
  return p;
}

}  // namespace regionkit::promptgen
