#pragma once

#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "regionkit/core/error.hpp"
#include "regionkit/core/region.hpp"
#include "regionkit/core/types.hpp"
#include "regionkit/markup/record.hpp"

namespace regionkit::io {

using nlohmann::json;

inline const json& require(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw SchemaError(std::string("missing field '") + key + "'");
  }
  return j.at(key);
}

inline std::string require_string(const json& j, const char* key) {
  const json& v = require(j, key);
  if (!v.is_string()) throw SchemaError(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

inline std::string optional_string(const json& j, const char* key, std::string fallback = {}) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  if (!j.at(key).is_string()) throw SchemaError(std::string("field '") + key + "' must be a string");
  return j.at(key).get<std::string>();
}

inline std::vector<std::string> string_list(const json& j, const char* key) {
  std::vector<std::string> out;
  if (!j.is_object() || !j.contains(key)) return out;
  const json& arr = j.at(key);
  if (!arr.is_array()) throw SchemaError(std::string("field '") + key + "' must be an array");
  for (const auto& v : arr) {
    if (!v.is_string()) throw SchemaError(std::string("field '") + key + "' must hold strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

// --- ImageRef --------------------------------------------------------------

inline json to_json(const ImageRef& img) {
  json j = {{"image_id", img.image_id}, {"source", img.source}};
  if (img.width) j["width"] = *img.width;
  if (img.height) j["height"] = *img.height;
  return j;
}

inline ImageRef image_from_json(const json& j) {
  ImageRef img;
  if (j.is_string()) {
    img.image_id = j.get<std::string>();
  } else {
    img.image_id = require_string(j, "image_id");
    img.source = optional_string(j, "source");
    if (j.contains("width") && !j["width"].is_null()) img.width = j["width"].get<int>();
    if (j.contains("height") && !j["height"].is_null()) img.height = j["height"].get<int>();
  }
  img.validate();
  return img;
}

// --- Region ----------------------------------------------------------------

inline json to_json(const Region& r) { return json::array({r.x1(), r.y1(), r.x2(), r.y2()}); }

/// Accepts a normalized [x1, y1, x2, y2] array, or {"pixel": [x, y, w, h]}
/// when the image dimensions are known.
inline Region region_from_json(const json& j, const ImageRef* image = nullptr) {
  try {
    if (j.is_array()) {
      if (j.size() != 4) throw SchemaError("region must have 4 numbers");
      for (const auto& v : j) {
        if (!v.is_number()) throw SchemaError("region coordinates must be numbers");
      }
      return Region(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
                    j[3].get<double>());
    }
    if (j.is_object() && j.contains("pixel")) {
      const json& p = j["pixel"];
      if (!p.is_array() || p.size() != 4) throw SchemaError("pixel box must be [x, y, w, h]");
      if (!image || !image->width || !image->height) {
        throw SchemaError("pixel box needs image width and height");
      }
      return normalize({p[0].get<double>(), p[1].get<double>(), p[2].get<double>(),
                        p[3].get<double>(), static_cast<double>(*image->width),
                        static_cast<double>(*image->height)});
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("bad region: ") + e.what());
  } catch (const InvalidRegionError& e) {
    throw SchemaError(std::string("bad region: ") + e.what());
  } catch (const DegenerateBoxError& e) {
    throw SchemaError(std::string("bad region: ") + e.what());
  }
  throw SchemaError("region must be [x1, y1, x2, y2] or {\"pixel\": [x, y, w, h]}");
}

// --- InstructionRecord -----------------------------------------------------

inline json to_json(const Provenance& p) {
  json j = {{"kind", p.kind}, {"config_hash", p.config_hash}, {"seed", p.seed}};
  if (!p.model.empty()) j["model"] = p.model;
  if (p.temperature) j["temperature"] = *p.temperature;
  return j;
}

inline Provenance provenance_from_json(const json& j) {
  Provenance p;
  p.kind = require_string(j, "kind");
  p.config_hash = optional_string(j, "config_hash");
  if (j.contains("seed")) p.seed = j["seed"].get<std::uint64_t>();
  p.model = optional_string(j, "model");
  if (j.contains("temperature")) p.temperature = j["temperature"].get<double>();
  return p;
}

inline json to_json(const InstructionRecord& rec) {
  json turns = json::array();
  for (const auto& t : rec.turns) turns.push_back({{"question", t.question}, {"answer", t.answer}});
  json regions = json::array();
  for (const auto& r : rec.regions) regions.push_back(to_json(r));
  return {{"id", rec.id},
          {"image", to_json(rec.image)},
          {"turns", turns},
          {"provenance", to_json(rec.provenance)},
          {"regions", regions}};
}

/// Rebuilds a record; `regions` is recomputed from the turn texts and must
/// agree with the stored list.
inline InstructionRecord record_from_json(const json& j) {
  try {
    std::vector<Turn> turns;
    for (const auto& t : require(j, "turns")) {
      turns.push_back({require_string(t, "question"), require_string(t, "answer")});
    }
    auto rec = make_record(require_string(j, "id"), image_from_json(require(j, "image")),
                           std::move(turns), provenance_from_json(require(j, "provenance")));
    if (j.contains("regions")) {
      std::vector<Region> stored;
      for (const auto& r : j["regions"]) stored.push_back(region_from_json(r));
      if (stored != rec.regions) throw SchemaError("regions do not match the turn markup");
    }
    return rec;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("bad record: ") + e.what());
  } catch (const InvalidRegionError& e) {
    throw SchemaError(std::string("bad record: ") + e.what());
  }
}

// --- AnnotationBundle ------------------------------------------------------

inline json to_json(const AnnotationBundle& b) {
  json j = {{"image", to_json(b.image)}, {"captions", b.captions}};
  json objects = json::array();
  for (const auto& o : b.objects) objects.push_back({{"label", o.label}, {"region", to_json(o.region)}});
  j["objects"] = objects;
  json descs = json::array();
  for (const auto& d : b.region_descriptions) descs.push_back({{"text", d.text}, {"region", to_json(d.region)}});
  j["region_descriptions"] = descs;
  json rels = json::array();
  for (const auto& r : b.relations) {
    rels.push_back({{"subject_label", r.subject_label},
                    {"subject", to_json(r.subject)},
                    {"predicate", r.predicate},
                    {"object_label", r.object_label},
                    {"object", to_json(r.object)}});
  }
  j["relations"] = rels;
  json attrs = json::array();
  for (const auto& a : b.attributes) {
    attrs.push_back({{"label", a.label}, {"region", to_json(a.region)}, {"attrs", a.attrs}});
  }
  j["attributes"] = attrs;
  json ocr = json::array();
  for (const auto& o : b.ocr_tokens) ocr.push_back({{"text", o.text}, {"region", to_json(o.region)}});
  j["ocr_tokens"] = ocr;
  if (b.detailed_description) j["detailed_description"] = *b.detailed_description;
  json gr = json::array();
  for (const auto& g : b.groundings) {
    gr.push_back({{"phrase", g.phrase}, {"region", to_json(g.region)}, {"confidence", g.confidence}});
  }
  j["groundings"] = gr;
  return j;
}

inline AnnotationBundle bundle_from_json(const json& j) {
  try {
    AnnotationBundle b;
    b.image = image_from_json(require(j, "image"));
    const ImageRef* img = &b.image;
    b.captions = string_list(j, "captions");
    auto each = [&](const char* key, auto&& fn) {
      if (!j.contains(key)) return;
      if (!j[key].is_array()) throw SchemaError(std::string("field '") + key + "' must be an array");
      for (const auto& e : j[key]) fn(e);
    };
    each("objects", [&](const json& e) {
      b.objects.push_back({require_string(e, "label"), region_from_json(require(e, "region"), img)});
    });
    each("region_descriptions", [&](const json& e) {
      b.region_descriptions.push_back(
          {require_string(e, "text"), region_from_json(require(e, "region"), img)});
    });
    each("relations", [&](const json& e) {
      b.relations.push_back({require_string(e, "subject_label"),
                             region_from_json(require(e, "subject"), img),
                             require_string(e, "predicate"), require_string(e, "object_label"),
                             region_from_json(require(e, "object"), img)});
    });
    each("attributes", [&](const json& e) {
      b.attributes.push_back({require_string(e, "label"),
                              region_from_json(require(e, "region"), img),
                              string_list(e, "attrs")});
    });
    each("ocr_tokens", [&](const json& e) {
      b.ocr_tokens.push_back({require_string(e, "text"), region_from_json(require(e, "region"), img)});
    });
    if (j.contains("detailed_description") && !j["detailed_description"].is_null()) {
      b.detailed_description = require_string(j, "detailed_description");
    }
    each("groundings", [&](const json& e) {
      double conf = e.value("confidence", 1.0);
      if (!(conf >= 0.0 && conf <= 1.0)) throw SchemaError("grounding confidence outside [0,1]");
      b.groundings.push_back(
          {require_string(e, "phrase"), region_from_json(require(e, "region"), img), conf});
    });
    return b;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("bad bundle: ") + e.what());
  } catch (const InvalidRegionError& e) {
    throw SchemaError(std::string("bad bundle: ") + e.what());
  }
}

// --- JSONL -----------------------------------------------------------------

/// Calls `fn(line_number, json)` for every non-blank line. A line that is
/// not valid JSON goes to `on_error(line_number, message)`; without an
/// error handler it throws SchemaError.
inline void for_each_jsonl(
    std::istream& in, const std::function<void(std::size_t, const json&)>& fn,
    const std::function<void(std::size_t, const std::string&)>& on_error = {}) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      if (!on_error) throw SchemaError("line " + std::to_string(lineno) + ": " + e.what());
      on_error(lineno, e.what());
      continue;
    }
    fn(lineno, j);
  }
}

inline std::string dump_line(const json& j) {
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

inline void write_jsonl(std::ostream& out, const json& j) { out << dump_line(j) << '\n'; }

}  // namespace regionkit::io
