#pragma once

// Fixture access and test doubles shared by the test binaries.

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "regionkit/core/hash.hpp"
#include "regionkit/genpipe/client.hpp"
#include "regionkit/io/serialize.hpp"
#include "regionkit/markup/markup.hpp"
#include "regionkit/promptgen/profile.hpp"

namespace testsupport {

inline std::string fixture(const std::string& name) { return std::string(REGIONKIT_FIXTURE_DIR) + "/" + name; }

inline std::string profile_root() { return REGIONKIT_PROFILE_DIR; }

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<regionkit::io::json> read_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::vector<regionkit::io::json> out;
  regionkit::io::for_each_jsonl(in, [&](std::size_t, const regionkit::io::json& j) { out.push_back(j); });
  return out;
}

/// General profile with a pool of `pool` numbered examples, `k` sampled.
inline regionkit::promptgen::TaskProfile sampled_profile(std::size_t pool, std::size_t k) {
  regionkit::promptgen::TaskProfile p;
  p.task = regionkit::promptgen::TaskId::kGeneral;
  p.turn_mode = regionkit::promptgen::TurnMode::kMulti;
  p.system_message = "You write questions about image regions.";
  p.sections = {{regionkit::promptgen::Section::kCaptions},
                {regionkit::promptgen::Section::kDetailedDescription},
                {regionkit::promptgen::Section::kGroundings}};
  p.example_sample_count = k;
  for (std::size_t i = 0; i < pool; ++i) {
    p.examples.push_back({"context " + std::to_string(i), "response " + std::to_string(i)});
  }
  return p;
}

inline std::string completion_body(const std::string& content) {
  return regionkit::io::dump_line(
      {{"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", content}}}}}}});
}

/// Scripted chat service: builds a reply from the last user message. The
/// kind of reply (clean, region in answer, no region at all) is chosen by
/// a hash of the request, so a run mixes accepted and rejected entries.
inline regionkit::genpipe::HttpResult scripted_reply(const std::string& body) {
  auto req = regionkit::io::json::parse(body);
  std::string context = req["messages"].back()["content"].get<std::string>();
  std::string region = "<Region>[0.1, 0.2, 0.3, 0.4]</Region>";
  auto scan = regionkit::markup::scan_marked(context);
  for (const auto& seg : scan.text.segments) {
    if (seg.kind == regionkit::markup::SegmentKind::kRegionPlaceholder) {
      region = std::string(scan.text.text_of(seg));
      break;
    }
  }
  std::string reply;
  switch (regionkit::hash64("reply\x1f" + context) % 3) {
    case 0:
      reply = "Question:\nWhat is shown in " + region + "?\n===\nAnswer:\nAn object seen in the photo.\n===\n"
              "Question:\nWhat is the overall mood?\n===\nAnswer:\nCalm.";
      break;
    case 1:
      reply = "Question:\nWhere is the main object?\n===\nAnswer:\nIt is at " + region + ".";
      break;
    default:
      reply = "Question:\nDescribe " + region + ".\n===\nAnswer:\nIt takes up part of the frame.";
      break;
  }
  return {200, completion_body(reply)};
}

}  // namespace testsupport
