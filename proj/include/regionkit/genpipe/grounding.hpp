#pragma once

#include <algorithm>
#include <cctype>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "regionkit/core/error.hpp"
#include "regionkit/core/region.hpp"
#include "regionkit/core/types.hpp"
#include "regionkit/io/serialize.hpp"

namespace regionkit::genpipe {

/// Default small-box threshold: a 2% x 2% box.
inline constexpr double kDefaultMinArea = 0.0004;

/// One line of grounding-model output.
struct GrounderEntry {
  std::string phrase;
  std::variant<PixelBox, Region> box;
  double confidence = 1.0;
};

struct GroundingResult {
  std::vector<Grounding> kept;
  std::size_t dropped_small = 0;
  // Phrases not found in the description. They are kept all the same.
  std::vector<std::string> warnings;
};

namespace detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace detail

inline GroundingResult ingest_grounding(std::string_view detailed_description,
                                        const std::vector<GrounderEntry>& entries,
                                        double min_area = kDefaultMinArea) {
  if (!(min_area > 0.0)) throw ConfigError("min_area must be positive");
  GroundingResult out;
  const std::string haystack = detail::lower(detailed_description);
  for (const auto& e : entries) {
    if (!(e.confidence >= 0.0 && e.confidence <= 1.0)) {
      throw SchemaError("grounding confidence outside [0,1] for '" + e.phrase + "'");
    }
    Region r = std::holds_alternative<Region>(e.box) ? std::get<Region>(e.box)
                                                      : normalize(std::get<PixelBox>(e.box));
    if (area(r) < min_area) {
      ++out.dropped_small;
      continue;
    }
    if (haystack.find(detail::lower(e.phrase)) == std::string::npos) {
      out.warnings.push_back("phrase '" + e.phrase + "' not found in the detailed description");
    }
    out.kept.push_back({e.phrase, r, e.confidence});
  }
  return out;
}

/// Replaces the bundle's groundings with the ingested ones.
inline GroundingResult attach_groundings(AnnotationBundle& bundle,
                                         const std::vector<GrounderEntry>& entries,
                                         double min_area = kDefaultMinArea) {
  auto res = ingest_grounding(bundle.detailed_description.value_or(""), entries, min_area);
  bundle.groundings = res.kept;
  return res;
}

/// {"phrase", "region": [x1, y1, x2, y2] | "pixel": [x, y, w, h], "confidence"}
inline GrounderEntry grounder_entry_from_json(const io::json& j, const ImageRef& image) {
  try {
    GrounderEntry e;
    e.phrase = io::require_string(j, "phrase");
    e.confidence = j.value("confidence", 1.0);
    if (j.contains("pixel")) {
      const auto& p = j["pixel"];
      if (!p.is_array() || p.size() != 4) throw SchemaError("pixel box must be [x, y, w, h]");
      if (!image.width || !image.height) throw SchemaError("pixel box needs image width and height");
      e.box = PixelBox{p[0].get<double>(), p[1].get<double>(), p[2].get<double>(),
                       p[3].get<double>(), static_cast<double>(*image.width),
                       static_cast<double>(*image.height)};
    } else {
      e.box = io::region_from_json(io::require(j, "region"), &image);
    }
    return e;
  } catch (const io::json::exception& e) {
    throw SchemaError(std::string("bad grounding entry: ") + e.what());
  }
}

}  // namespace regionkit::genpipe
