#pragma once

// File-level pipeline stages: bundles -> prompts -> generations -> records.
// Every stage reads and writes JSONL and is a pure function of its inputs
// and options, apart from the network calls in generate.

#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "regionkit/core/hash.hpp"
#include "regionkit/core/random.hpp"
#include "regionkit/genpipe/client.hpp"
#include "regionkit/genpipe/filter.hpp"
#include "regionkit/genpipe/grounding.hpp"
#include "regionkit/io/serialize.hpp"
#include "regionkit/markup/record.hpp"
#include "regionkit/promptgen/profile.hpp"
#include "regionkit/promptgen/prompt.hpp"

namespace regionkit::genpipe {

using io::json;

inline json profile_to_json(const promptgen::TaskProfile& p) {
  json sections = json::array();
  for (const auto& s : p.sections) {
    sections.push_back({{"name", promptgen::to_string(s.section)},
                        {"style", s.style == promptgen::RegionStyle::kTagged ? "tagged" : "bare"}});
  }
  json examples = json::array();
  for (const auto& e : p.examples) examples.push_back({{"context", e.context}, {"response", e.response}});
  json j = {{"task_id", promptgen::to_string(p.task)},
            {"turn_mode", p.turn_mode == promptgen::TurnMode::kSingle ? "single" : "multi"},
            {"sections", sections},
            {"system", p.system_message},
            {"examples", examples}};
  if (p.example_sample_count) j["example_sample_count"] = *p.example_sample_count;
  return j;
}

inline std::string config_hash(const json& config) { return content_hash(io::dump_line(config)); }

inline std::string provenance_kind(promptgen::TaskId task) {
  return task == promptgen::TaskId::kGeneral ? "general"
                                             : "task:" + std::string(promptgen::to_string(task));
}

// ---------------------------------------------------------------------------
// build-prompts

struct PromptJob {
  std::string id;
  ImageRef image;
  promptgen::TaskId task = promptgen::TaskId::kGeneral;
  promptgen::TurnMode turn_mode = promptgen::TurnMode::kSingle;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<promptgen::ChatMessage> messages;
};

inline json to_json(const PromptJob& p) {
  return {{"id", p.id},
          {"image", io::to_json(p.image)},
          {"task", promptgen::to_string(p.task)},
          {"turn_mode", p.turn_mode == promptgen::TurnMode::kSingle ? "single" : "multi"},
          {"seed", p.seed},
          {"config_hash", p.config_hash},
          {"messages", promptgen::to_json(p.messages)}};
}

inline PromptJob prompt_job_from_json(const json& j) {
  try {
    PromptJob p;
    p.id = io::require_string(j, "id");
    p.image = io::image_from_json(io::require(j, "image"));
    p.task = promptgen::task_from_string(io::require_string(j, "task"));
    p.turn_mode = io::optional_string(j, "turn_mode", "single") == "multi"
                      ? promptgen::TurnMode::kMulti
                      : promptgen::TurnMode::kSingle;
    p.seed = j.value("seed", std::uint64_t{0});
    p.config_hash = io::optional_string(j, "config_hash");
    p.messages = promptgen::messages_from_json(io::require(j, "messages"));
    return p;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("bad prompt job: ") + e.what());
  } catch (const ConfigError& e) {
    throw SchemaError(std::string("bad prompt job: ") + e.what());
  }
}

struct PromptOptions {
  std::uint64_t seed = 0;
  double min_area = kDefaultMinArea;
};

struct PromptStats {
  std::size_t bundles = 0;
  std::size_t written = 0;
  std::size_t skipped = 0;  // bundles lacking a required section
  std::size_t groundings_dropped = 0;
};

/// Per-image in-context sampling uses a seed derived from the run seed and
/// the image id, so one image's prompt does not depend on the others.
inline PromptJob build_prompt(const AnnotationBundle& bundle, const promptgen::TaskProfile& profile,
                              std::uint64_t seed, const std::string& cfg_hash) {
  auto ctx = promptgen::render_context(bundle, profile);
  PromptJob job;
  job.id = bundle.image.image_id + ":" + std::string(promptgen::to_string(profile.task));
  job.image = bundle.image;
  job.task = profile.task;
  job.turn_mode = profile.turn_mode;
  job.seed = seed;
  job.config_hash = cfg_hash;
  job.messages = promptgen::build_messages(profile, ctx, derive_seed(seed, bundle.image.image_id));
  return job;
}

/// `groundings` (optional) holds {"image_id", "groundings": [...]} lines
/// that replace the bundles' groundings after small-box filtering.
/// Schema errors abort with the line number; bundles that cannot fill the
/// profile's sections are skipped and reported on `diag`.
inline PromptStats build_prompts(std::istream& bundles, std::istream* groundings,
                                 const promptgen::TaskProfile& profile, const PromptOptions& opt,
                                 std::ostream& out, std::ostream& diag) {
  if (!(opt.min_area > 0.0)) throw ConfigError("min_area must be positive");
  std::unordered_map<std::string, json> grounding_lines;
  if (groundings) {
    io::for_each_jsonl(*groundings, [&](std::size_t lineno, const json& j) {
      try {
        grounding_lines[io::require_string(j, "image_id")] = j;
      } catch (const SchemaError& e) {
        throw SchemaError("groundings line " + std::to_string(lineno) + ": " + e.what());
      }
    });
  }
  const std::string cfg = config_hash({{"stage", "build-prompts"},
                                       {"profile", profile_to_json(profile)},
                                       {"seed", opt.seed},
                                       {"min_area", opt.min_area},
                                       {"groundings", groundings != nullptr}});
  PromptStats stats;
  io::for_each_jsonl(bundles, [&](std::size_t lineno, const json& j) {
    ++stats.bundles;
    AnnotationBundle b;
    try {
      b = io::bundle_from_json(j);
      if (auto it = grounding_lines.find(b.image.image_id); it != grounding_lines.end()) {
        std::vector<GrounderEntry> entries;
        for (const auto& e : io::require(it->second, "groundings")) {
          entries.push_back(grounder_entry_from_json(e, b.image));
        }
        auto res = attach_groundings(b, entries, opt.min_area);
        stats.groundings_dropped += res.dropped_small;
        for (const auto& w : res.warnings) diag << b.image.image_id << ": warning: " << w << '\n';
      }
    } catch (const Error& e) {
      throw SchemaError("bundles line " + std::to_string(lineno) + ": " + e.what());
    }
    try {
      io::write_jsonl(out, to_json(build_prompt(b, profile, opt.seed, cfg)));
      ++stats.written;
    } catch (const ContextError& e) {
      ++stats.skipped;
      diag << "bundles line " << lineno << ": skipped: " << e.what() << '\n';
    }
  });
  return stats;
}

// ---------------------------------------------------------------------------
// generate

struct GenerateOptions {
  std::string model = std::string(kDefaultModel);
  double temperature = kDefaultTemperature;
  std::size_t max_attempts = 3;
  std::size_t concurrency = 4;
};

struct GenerateStats {
  std::size_t prompts = 0;
  std::size_t replies = 0;
  std::size_t failures = 0;
  std::size_t replayed = 0;
};

/// One line per prompt, in prompt order: the raw reply, or the error that
/// prevented one.
inline GenerateStats generate(std::istream& prompts, ChatClient& client, const GenerateOptions& opt,
                              std::ostream& out) {
  std::vector<PromptJob> jobs;
  io::for_each_jsonl(prompts, [&](std::size_t lineno, const json& j) {
    try {
      jobs.push_back(prompt_job_from_json(j));
    } catch (const SchemaError& e) {
      throw SchemaError("prompts line " + std::to_string(lineno) + ": " + e.what());
    }
  });
  std::vector<GenerationRequest> requests;
  for (const auto& job : jobs) {
    requests.push_back(make_request(job.messages, opt.model, opt.temperature, opt.max_attempts));
  }
  auto outcomes = run_batch(client, requests, opt.concurrency);
  GenerateStats stats;
  stats.prompts = jobs.size();
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto& job = jobs[i];
    json line = {{"id", job.id},
                 {"image", io::to_json(job.image)},
                 {"task", promptgen::to_string(job.task)},
                 {"turn_mode", job.turn_mode == promptgen::TurnMode::kSingle ? "single" : "multi"},
                 {"seed", job.seed},
                 {"config_hash", config_hash({{"prompts", job.config_hash},
                                              {"model", opt.model},
                                              {"temperature", opt.temperature}})},
                 {"request_id", requests[i].request_id},
                 {"model", opt.model},
                 {"temperature", opt.temperature}};
    if (outcomes[i].reply) {
      line["reply"] = *outcomes[i].reply;
      ++stats.replies;
    } else {
      line["reply"] = nullptr;
      line["error"] = outcomes[i].error;
      ++stats.failures;
    }
    io::write_jsonl(out, line);
  }
  stats.replayed = client.replayed();
  return stats;
}

// ---------------------------------------------------------------------------
// filter

/// Accepted entries become InstructionRecords on `accepted`; rejected ones
/// are listed as {"id", "reason"} on `rejected` when given.
inline FilterReport filter_generations(std::istream& generations, const FilterOptions& opts,
                                       std::ostream& accepted, std::ostream* rejected) {
  FilterReport report;
  io::for_each_jsonl(generations, [&](std::size_t lineno, const json& j) {
    std::string id, task_s, reply;
    ImageRef image;
    Provenance prov;
    bool single = true;
    bool has_reply = false;
    try {
      id = io::require_string(j, "id");
      image = io::image_from_json(io::require(j, "image"));
      task_s = io::require_string(j, "task");
      auto task = promptgen::task_from_string(task_s);
      single = io::optional_string(j, "turn_mode", "single") == "single";
      has_reply = j.contains("reply") && j["reply"].is_string();
      if (has_reply) reply = j["reply"].get<std::string>();
      prov.kind = provenance_kind(task);
      prov.config_hash = io::optional_string(j, "config_hash");
      prov.seed = j.value("seed", std::uint64_t{0});
      prov.model = io::optional_string(j, "model");
      if (j.contains("temperature")) prov.temperature = j["temperature"].get<double>();
    } catch (const json::exception& e) {
      throw SchemaError("generations line " + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw SchemaError("generations line " + std::to_string(lineno) + ": " + e.what());
    }

    FilterVerdict verdict = RejectReason::kParseFailure;
    ParsedGeneration parsed;
    if (has_reply) {
      auto grammar = promptgen::expected_response_grammar(task_s);
      verdict = classify_reply(reply, grammar, single, opts, &parsed);
    }
    report.add(verdict);
    if (verdict) {
      if (rejected) io::write_jsonl(*rejected, {{"id", id}, {"reason", to_string(*verdict)}});
      return;
    }
    auto turns = parsed.plain_turns();
    // Same layout as converted records: the image placeholder leads the first question.
    if (turns.front().question.find(markup::kImageTag) == std::string::npos) {
      turns.front().question = std::string(markup::kImageTag) + "\n" + turns.front().question;
    }
    io::write_jsonl(accepted, io::to_json(make_record(id, image, std::move(turns), prov)));
  });
  report.check_reconciles();
  return report;
}

// ---------------------------------------------------------------------------
// stats

struct CorpusStats {
  std::size_t records = 0;
  std::size_t turns = 0;
  std::map<std::string, std::size_t> by_provenance;
  // Number of well-formed regions in a question -> number of questions.
  std::map<std::size_t, std::size_t> regions_per_question;
  std::map<std::string, std::size_t> rejection_reasons;

  json to_json() const {
    json rpq = json::object();
    for (const auto& [k, v] : regions_per_question) rpq[std::to_string(k)] = v;
    return {{"records", records},
            {"turns", turns},
            {"by_provenance", by_provenance},
            {"regions_per_question", rpq},
            {"rejection_reasons", rejection_reasons}};
  }
};

inline CorpusStats compute_stats(std::istream& records, std::istream* rejected = nullptr) {
  CorpusStats s;
  io::for_each_jsonl(records, [&](std::size_t lineno, const json& j) {
    InstructionRecord rec;
    try {
      rec = io::record_from_json(j);
    } catch (const Error& e) {
      throw SchemaError("records line " + std::to_string(lineno) + ": " + e.what());
    }
    ++s.records;
    s.turns += rec.turns.size();
    ++s.by_provenance[rec.provenance.kind];
    for (const auto& t : rec.turns) ++s.regions_per_question[markup::contains_region(t.question).well_formed];
  });
  if (rejected) {
    for (auto r : kAllRejectReasons) s.rejection_reasons[std::string(to_string(r))] = 0;
    io::for_each_jsonl(*rejected, [&](std::size_t lineno, const json& j) {
      try {
        ++s.rejection_reasons[std::string(to_string(reject_reason_from_string(io::require_string(j, "reason"))))];
      } catch (const SchemaError& e) {
        throw SchemaError("rejected line " + std::to_string(lineno) + ": " + e.what());
      }
    });
  }
  return s;
}

}  // namespace regionkit::genpipe
