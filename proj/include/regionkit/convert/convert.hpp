#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "regionkit/convert/text.hpp"
#include "regionkit/core/error.hpp"
#include "regionkit/core/types.hpp"
#include "regionkit/markup/markup.hpp"
#include "regionkit/markup/record.hpp"

namespace regionkit::convert {

/// Provenance fields shared by every record of one conversion run.
struct Stamp {
  std::string config_hash;
  std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// GQA

struct Mention {
  std::size_t begin = 0;  // byte offsets into the question
  std::size_t end = 0;
  Region region;
};

struct GqaRecord {
  std::string id;
  std::string question;
  std::string answer;
  std::vector<Mention> mentions;
};

/// Inserts " in <Region>[...]</Region>" right after every mention and
/// prefixes the image placeholder. The answer is kept verbatim.
inline std::string augment_gqa_question(const GqaRecord& rec) {
  std::vector<Mention> mentions = rec.mentions;
  std::stable_sort(mentions.begin(), mentions.end(),
                   [](const Mention& a, const Mention& b) { return a.begin < b.begin; });
  std::string out = "<Image>\n";
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < mentions.size(); ++i) {
    const auto& m = mentions[i];
    if (m.begin >= m.end || m.end > rec.question.size()) {
      throw ConversionError("mention span [" + std::to_string(m.begin) + ", " +
                            std::to_string(m.end) + ") outside the question");
    }
    if (i > 0 && m.begin < mentions[i - 1].end) {
      throw ConversionError("overlapping mention spans");
    }
    out.append(rec.question, cursor, m.end - cursor);
    out += " in ";
    out += markup::render_tagged(m.region);
    cursor = m.end;
  }
  out.append(rec.question, cursor, std::string::npos);
  return out;
}

inline InstructionRecord convert_gqa(const GqaRecord& rec, const ImageRef& image,
                                     const Stamp& stamp = {}) {
  return make_record(rec.id, image, {{augment_gqa_question(rec), rec.answer}},
                     {"conversion-gqa", stamp.config_hash, stamp.seed, "", std::nullopt});
}

// ---------------------------------------------------------------------------
// VCR

/// A word, or a reference to one or more entries of the object list.
using VcrToken = std::variant<std::string, std::vector<std::size_t>>;

struct VcrObject {
  std::string class_name;
  Region region;
};

struct VcrRecord {
  std::string id;
  std::vector<VcrToken> question;
  std::vector<VcrToken> answer;
  std::vector<VcrToken> rationale;
  std::vector<VcrObject> objects;
};

/// Ordinal of each object within its class, by object-list order (1-based).
inline std::vector<std::size_t> class_ordinals(const std::vector<VcrObject>& objects) {
  std::vector<std::size_t> ord(objects.size());
  for (std::size_t i = 0; i < objects.size(); ++i) {
    std::size_t n = 1;
    for (std::size_t j = 0; j < i; ++j) {
      if (objects[j].class_name == objects[i].class_name) ++n;
    }
    ord[i] = n;
  }
  return ord;
}

inline std::string render_vcr_tokens(const std::vector<VcrToken>& tokens,
                                     const std::vector<VcrObject>& objects,
                                     const std::vector<std::size_t>& ordinals) {
  std::vector<std::string> words;
  for (const auto& tok : tokens) {
    if (const auto* w = std::get_if<std::string>(&tok)) {
      words.push_back(*w);
      continue;
    }
    const auto& refs = std::get<std::vector<std::size_t>>(tok);
    if (refs.empty()) throw ConversionError("empty object reference");
    std::vector<std::string> parts;
    for (std::size_t idx : refs) {
      if (idx >= objects.size()) {
        throw ConversionError("object reference " + std::to_string(idx) +
                              " out of range (" + std::to_string(objects.size()) +
                              " objects)");
      }
      parts.push_back("the " + ordinal_word(ordinals[idx]) + " " + objects[idx].class_name +
                      " in " + markup::render_tagged(objects[idx].region));
    }
    std::string joined;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (i > 0) joined += (i + 1 == parts.size()) ? " and " : ", ";
      joined += parts[i];
    }
    words.push_back(std::move(joined));
  }
  return sentence_case(detokenize(words));
}

inline InstructionRecord convert_vcr(const VcrRecord& rec, const ImageRef& image,
                                     const Stamp& stamp = {}) {
  auto ord = class_ordinals(rec.objects);
  std::string question = "<Image>\n" + render_vcr_tokens(rec.question, rec.objects, ord);
  std::string answer = ensure_terminal_punct(render_vcr_tokens(rec.answer, rec.objects, ord));
  std::string rationale =
      ensure_terminal_punct(render_vcr_tokens(rec.rationale, rec.objects, ord));
  if (!rationale.empty()) answer += " " + rationale;
  return make_record(rec.id, image, {{question, answer}},
                     {"conversion-vcr", stamp.config_hash, stamp.seed, "", std::nullopt});
}

// ---------------------------------------------------------------------------
// Stage-1 alignment records

struct Stage1Record {
  std::string id;
  ImageRef image;
  Region region;
  std::string description;

  void validate() const {
    if (trim(description).empty()) throw SchemaError("stage-1 description must be non-empty");
  }
};

inline InstructionRecord format_stage1(const Stage1Record& rec, const Stamp& stamp = {}) {
  rec.validate();
  return make_record(rec.id, rec.image,
                     {{"<Image>\n" + markup::render_tagged(rec.region), rec.description}},
                     {"stage1", stamp.config_hash, stamp.seed, "", std::nullopt});
}

}  // namespace regionkit::convert
