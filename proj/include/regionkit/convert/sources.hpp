#pragma once

// JSONL source-record readers for the converters, including the adapter
// from raw GQA question annotations (token indices -> scene-graph objects)
// to byte-offset mention spans.

#include <algorithm>
#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "regionkit/convert/convert.hpp"
#include "regionkit/io/serialize.hpp"

namespace regionkit::convert {

using io::json;

namespace detail {

inline std::string record_id(const json& j, std::string_view prefix, std::size_t lineno) {
  for (const char* key : {"id", "question_id", "annot_id"}) {
    if (j.contains(key) && !j[key].is_null()) {
      return j[key].is_string() ? j[key].get<std::string>() : j[key].dump();
    }
  }
  return std::string(prefix) + "-" + std::to_string(lineno);
}

inline ImageRef image_of(const json& j, std::string_view default_source) {
  ImageRef img;
  if (j.contains("image")) {
    img = io::image_from_json(j["image"]);
  } else {
    for (const char* key : {"image_id", "imageId", "img_fn"}) {
      if (j.contains(key)) {
        img.image_id = j[key].is_string() ? j[key].get<std::string>() : j[key].dump();
        break;
      }
    }
    if (j.contains("width")) img.width = j["width"].get<int>();
    if (j.contains("height")) img.height = j["height"].get<int>();
  }
  if (img.source.empty()) img.source = std::string(default_source);
  img.validate();
  return img;
}

}  // namespace detail

struct GqaSource {
  GqaRecord record;
  ImageRef image;
};

/// {"id", "image", "question", "answer",
///  "mentions": [{"start", "end", "region"}]}
inline GqaSource gqa_from_json(const json& j, std::size_t lineno) {
  try {
    GqaSource s;
    s.image = detail::image_of(j, "gqa");
    s.record.id = detail::record_id(j, "gqa", lineno);
    s.record.question = io::require_string(j, "question");
    s.record.answer = io::require_string(j, "answer");
    if (j.contains("mentions")) {
      for (const auto& m : j["mentions"]) {
        s.record.mentions.push_back({m.at("start").get<std::size_t>(),
                                     m.at("end").get<std::size_t>(),
                                     io::region_from_json(io::require(m, "region"), &s.image)});
      }
    }
    return s;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("bad GQA record: ") + e.what());
  } catch (const InvalidRegionError& e) {
    throw SchemaError(std::string("bad GQA record: ") + e.what());
  }
}

/// Byte spans of GQA question tokens: whitespace-separated words with
/// trailing punctuation split off as separate tokens.
inline std::vector<markup::Span> gqa_token_spans(std::string_view q) {
  std::vector<markup::Span> spans;
  std::size_t i = 0;
  while (i < q.size()) {
    while (i < q.size() && std::isspace(static_cast<unsigned char>(q[i]))) ++i;
    if (i >= q.size()) break;
    std::size_t j = i;
    while (j < q.size() && !std::isspace(static_cast<unsigned char>(q[j]))) ++j;
    std::size_t word_end = j;
    std::vector<markup::Span> trailing;
    while (word_end > i && std::string_view(",?.!;:").find(q[word_end - 1]) != std::string_view::npos) {
      trailing.insert(trailing.begin(), {word_end - 1, word_end});
      --word_end;
    }
    if (word_end > i) spans.push_back({i, word_end});
    spans.insert(spans.end(), trailing.begin(), trailing.end());
    i = j;
  }
  return spans;
}

/// Raw GQA adapter. Expects one question joined with its scene graph:
/// {"question_id", "imageId", "width", "height", "question", "answer",
///  "annotations": {"question": {"3": "<obj>", "5:7": "<obj>"}},
///  "objects": {"<obj>": {"x", "y", "w", "h"}}}
/// Token keys "i" or "i:j" (end exclusive) index gqa_token_spans.
inline GqaSource gqa_raw_from_json(const json& j, std::size_t lineno) {
  try {
    GqaSource s;
    s.image = detail::image_of(j, "gqa");
    s.record.id = detail::record_id(j, "gqa", lineno);
    s.record.question = io::require_string(j, "question");
    s.record.answer = io::require_string(j, "answer");
    if (!s.image.width || !s.image.height) throw SchemaError("raw GQA needs width and height");
    auto tokens = gqa_token_spans(s.record.question);
    const json& ann = j.contains("annotations") ? j["annotations"] : json::object();
    if (!ann.contains("question")) return s;
    const json& objects = io::require(j, "objects");
    for (const auto& [key, obj_id] : ann["question"].items()) {
      std::size_t first = 0, last = 0;
      auto colon = key.find(':');
      if (colon == std::string::npos) {
        first = std::stoul(key);
        last = first + 1;
      } else {
        first = std::stoul(key.substr(0, colon));
        last = std::stoul(key.substr(colon + 1));
      }
      if (first >= last || last > tokens.size()) {
        throw SchemaError("annotation token range " + key + " outside the question");
      }
      std::string oid = obj_id.is_string() ? obj_id.get<std::string>() : obj_id.dump();
      if (!objects.contains(oid)) throw SchemaError("unknown scene-graph object " + oid);
      const json& o = objects[oid];
      Region r = normalize({o.at("x").get<double>(), o.at("y").get<double>(),
                            o.at("w").get<double>(), o.at("h").get<double>(),
                            static_cast<double>(*s.image.width),
                            static_cast<double>(*s.image.height)});
      s.record.mentions.push_back({tokens[first].begin, tokens[last - 1].end, r});
    }
    std::sort(s.record.mentions.begin(), s.record.mentions.end(),
              [](const Mention& a, const Mention& b) { return a.begin < b.begin; });
    return s;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("bad raw GQA record: ") + e.what());
  } catch (const std::logic_error& e) {  // stoul
    throw SchemaError(std::string("bad raw GQA record: ") + e.what());
  } catch (const InvalidRegionError& e) {
    throw SchemaError(std::string("bad raw GQA record: ") + e.what());
  } catch (const DegenerateBoxError& e) {
    throw SchemaError(std::string("bad raw GQA record: ") + e.what());
  }
}

struct VcrSource {
  VcrRecord record;
  ImageRef image;
};

namespace detail {

inline std::vector<VcrToken> vcr_tokens(const json& arr) {
  std::vector<VcrToken> out;
  if (!arr.is_array()) throw SchemaError("VCR token list must be an array");
  for (const auto& t : arr) {
    if (t.is_string()) {
      out.emplace_back(t.get<std::string>());
    } else if (t.is_number_integer()) {
      out.emplace_back(std::vector<std::size_t>{t.get<std::size_t>()});
    } else if (t.is_array()) {
      out.emplace_back(t.get<std::vector<std::size_t>>());
    } else {
      throw SchemaError("VCR token must be a word, an index, or a list of indices");
    }
  }
  return out;
}

// "answer" directly, or "answer_choices" + "answer_label".
inline std::vector<VcrToken> vcr_field(const json& j, const std::string& name) {
  if (j.contains(name)) return vcr_tokens(j[name]);
  std::string choices = name + "_choices", label = name + "_label";
  if (j.contains(choices) && j.contains(label)) {
    return vcr_tokens(j[choices].at(j[label].get<std::size_t>()));
  }
  if (name == "rationale") return {};
  throw SchemaError("missing field '" + name + "'");
}

}  // namespace detail

/// Objects as [{"class", "region"}], or VCR-native "objects": [names] with
/// "boxes": [[x1, y1, x2, y2, score?]] in pixels.
inline VcrSource vcr_from_json(const json& j, std::size_t lineno) {
  try {
    VcrSource s;
    s.image = detail::image_of(j, "vcr");
    s.record.id = detail::record_id(j, "vcr", lineno);
    const json& objects = io::require(j, "objects");
    const json* boxes = j.contains("boxes") ? &j["boxes"] : nullptr;
    for (std::size_t i = 0; i < objects.size(); ++i) {
      const json& o = objects[i];
      if (o.is_object()) {
        s.record.objects.push_back(
            {io::require_string(o, "class"), io::region_from_json(io::require(o, "region"), &s.image)});
        continue;
      }
      if (!boxes || i >= boxes->size()) throw SchemaError("object " + std::to_string(i) + " has no box");
      if (!s.image.width || !s.image.height) throw SchemaError("pixel boxes need width and height");
      const json& b = (*boxes)[i];
      double x1 = b.at(0).get<double>(), y1 = b.at(1).get<double>();
      double x2 = b.at(2).get<double>(), y2 = b.at(3).get<double>();
      s.record.objects.push_back(
          {o.get<std::string>(),
           normalize({x1, y1, x2 - x1, y2 - y1, static_cast<double>(*s.image.width),
                      static_cast<double>(*s.image.height)})});
    }
    s.record.question = detail::vcr_tokens(io::require(j, "question"));
    s.record.answer = detail::vcr_field(j, "answer");
    s.record.rationale = detail::vcr_field(j, "rationale");
    return s;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("bad VCR record: ") + e.what());
  } catch (const InvalidRegionError& e) {
    throw SchemaError(std::string("bad VCR record: ") + e.what());
  } catch (const DegenerateBoxError& e) {
    throw SchemaError(std::string("bad VCR record: ") + e.what());
  }
}

/// {"id", "image", "region", "description"}
inline Stage1Record stage1_from_json(const json& j, std::size_t lineno) {
  try {
    Stage1Record r{detail::record_id(j, "stage1", lineno), detail::image_of(j, ""),
                   Region(0, 0, 1, 1), io::require_string(j, "description")};
    r.region = io::region_from_json(io::require(j, "region"), &r.image);
    r.validate();
    return r;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("bad stage-1 record: ") + e.what());
  } catch (const InvalidRegionError& e) {
    throw SchemaError(std::string("bad stage-1 record: ") + e.what());
  } catch (const DegenerateBoxError& e) {
    throw SchemaError(std::string("bad stage-1 record: ") + e.what());
  }
}

}  // namespace regionkit::convert
