#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "regionkit/core/error.hpp"
#include "regionkit/core/region.hpp"

namespace regionkit {

struct ImageRef {
  std::string image_id;
  std::string source;
  std::optional<int> width;
  std::optional<int> height;

  void validate() const {
    if (image_id.empty()) throw SchemaError("image_id must be non-empty");
  }
  friend bool operator==(const ImageRef&, const ImageRef&) = default;
};

struct LabeledRegion {
  std::string label;
  Region region;
};

struct RegionDescription {
  std::string text;
  Region region;
};

struct Relation {
  std::string subject_label;
  Region subject;
  std::string predicate;
  std::string object_label;
  Region object;
};

struct AttributeSet {
  std::string label;
  Region region;
  std::vector<std::string> attrs;
};

struct OcrToken {
  std::string text;
  Region region;
};

struct Grounding {
  std::string phrase;
  Region region;
  double confidence = 1.0;
};

/// Everything known about one image in textual form. Regions are valid by
/// construction, so the bundle's only invariant is carried by its members.
struct AnnotationBundle {
  ImageRef image;
  std::vector<std::string> captions;
  std::vector<LabeledRegion> objects;
  std::vector<RegionDescription> region_descriptions;
  std::vector<Relation> relations;
  std::vector<AttributeSet> attributes;
  std::vector<OcrToken> ocr_tokens;
  std::optional<std::string> detailed_description;
  std::vector<Grounding> groundings;
};

struct Turn {
  std::string question;
  std::string answer;
  friend bool operator==(const Turn&, const Turn&) = default;
};

/// Where a record came from and under which configuration.
struct Provenance {
  // conversion-gqa | conversion-vcr | stage1 | task:<task-id> | general
  std::string kind;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string model;
  std::optional<double> temperature;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

inline bool is_valid_provenance_kind(std::string_view kind) {
  return kind == "conversion-gqa" || kind == "conversion-vcr" || kind == "stage1" ||
         kind == "general" || (kind.starts_with("task:") && kind.size() > 5);
}

struct InstructionRecord {
  std::string id;
  ImageRef image;
  std::vector<Turn> turns;
  Provenance provenance;
  // Distinct well-formed regions across all turn texts, first occurrence first.
  std::vector<Region> regions;
};

inline std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n\f\v";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

}  // namespace regionkit
