#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "regionkit/core/types.hpp"
#include "regionkit/markup/markup.hpp"

namespace regionkit {

/// Distinct well-formed regions across the turns, in order of first
/// appearance (question before answer within a turn).
inline std::vector<Region> regions_in_turns(const std::vector<Turn>& turns) {
  std::vector<Region> out;
  auto collect = [&](const std::string& text) {
    for (const auto& r : markup::scan_marked(text).text.regions()) {
      if (std::find(out.begin(), out.end(), r) == out.end()) out.push_back(r);
    }
  };
  for (const auto& t : turns) {
    collect(t.question);
    collect(t.answer);
  }
  return out;
}

/// Builds a record and enforces its invariants.
inline InstructionRecord make_record(std::string id, ImageRef image, std::vector<Turn> turns,
                                     Provenance provenance) {
  image.validate();
  if (id.empty()) throw SchemaError("record id must be non-empty");
  if (turns.empty()) throw SchemaError("record must have at least one turn");
  for (const auto& t : turns) {
    if (trim(t.question).empty() || trim(t.answer).empty()) {
      throw SchemaError("record " + id + " has an empty question or answer");
    }
  }
  if (!is_valid_provenance_kind(provenance.kind)) {
    throw SchemaError("unknown provenance kind: " + provenance.kind);
  }
  InstructionRecord rec;
  rec.id = std::move(id);
  rec.image = std::move(image);
  rec.regions = regions_in_turns(turns);
  rec.turns = std::move(turns);
  rec.provenance = std::move(provenance);
  return rec;
}

}  // namespace regionkit
