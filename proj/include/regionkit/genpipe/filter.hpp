#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "regionkit/core/error.hpp"
#include "regionkit/genpipe/reply.hpp"
#include "regionkit/io/serialize.hpp"

namespace regionkit::genpipe {

enum class RejectReason {
  kAnswerContainsRegion,
  kMalformedRegion,
  kNoRegionInQuestions,
  kParseFailure,
};

inline constexpr std::array<RejectReason, 4> kAllRejectReasons = {
    RejectReason::kAnswerContainsRegion, RejectReason::kMalformedRegion,
    RejectReason::kNoRegionInQuestions, RejectReason::kParseFailure};

inline std::string_view to_string(RejectReason r) {
  switch (r) {
    case RejectReason::kAnswerContainsRegion: return "answer-contains-region";
    case RejectReason::kMalformedRegion: return "malformed-region";
    case RejectReason::kNoRegionInQuestions: return "no-region-in-questions";
    case RejectReason::kParseFailure: return "parse-failure";
  }
  return "";
}

inline RejectReason reject_reason_from_string(std::string_view s) {
  for (auto r : kAllRejectReasons) {
    if (to_string(r) == s) return r;
  }
  throw SchemaError("unknown reject reason: " + std::string(s));
}

/// nullopt means accepted.
using FilterVerdict = std::optional<RejectReason>;

struct FilterOptions {
  // Also reject single-turn entries whose question has no region.
  bool strict_single_turn = false;
};

// When several rules fire, the reported reason is the first in this order:
// answer-contains-region, malformed-region, no-region-in-questions.

inline FilterVerdict filter_single(const ParsedGeneration& p, const FilterOptions& opts = {}) {
  if (p.turns.size() != 1) {
    throw Error("filter_single needs exactly one turn, got " + std::to_string(p.turns.size()));
  }
  const auto& t = p.turns.front();
  if (t.answer_contains_region()) return RejectReason::kAnswerContainsRegion;
  if (t.question_has_malformed_region()) return RejectReason::kMalformedRegion;
  if (opts.strict_single_turn && t.question_regions.well_formed == 0) {
    return RejectReason::kNoRegionInQuestions;
  }
  return std::nullopt;
}

inline FilterVerdict filter_multi(const ParsedGeneration& p) {
  if (p.turns.empty()) throw Error("filter_multi needs at least one turn");
  bool any_question_region = false;
  for (const auto& t : p.turns) {
    if (t.answer_contains_region()) return RejectReason::kAnswerContainsRegion;
  }
  for (const auto& t : p.turns) {
    if (t.question_has_malformed_region()) return RejectReason::kMalformedRegion;
    any_question_region = any_question_region || t.question_regions.well_formed > 0;
  }
  if (!any_question_region) return RejectReason::kNoRegionInQuestions;
  return std::nullopt;
}

/// Parses and filters one raw reply. A single-turn profile whose reply
/// yields more or fewer than one pair is a parse failure.
inline FilterVerdict classify_reply(std::string_view raw, const promptgen::ResponseGrammar& grammar,
                                    bool single_turn, const FilterOptions& opts,
                                    ParsedGeneration* parsed_out = nullptr) {
  ParsedGeneration parsed;
  try {
    parsed = parse_reply(raw, grammar);
  } catch (const ParseFailure&) {
    return RejectReason::kParseFailure;
  }
  if (single_turn && parsed.turns.size() != 1) return RejectReason::kParseFailure;
  FilterVerdict v = single_turn ? filter_single(parsed, opts) : filter_multi(parsed);
  if (parsed_out) *parsed_out = std::move(parsed);
  return v;
}

struct FilterReport {
  std::size_t total = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::array<std::size_t, kAllRejectReasons.size()> reasons{};

  void add(const FilterVerdict& v) {
    ++total;
    if (v) {
      ++rejected;
      ++reasons[static_cast<std::size_t>(*v)];
    } else {
      ++accepted;
    }
  }

  std::size_t count(RejectReason r) const { return reasons[static_cast<std::size_t>(r)]; }

  /// Throws if the counters disagree with each other.
  void check_reconciles() const {
    std::size_t sum = 0;
    for (auto n : reasons) sum += n;
    if (accepted + rejected != total || sum != rejected) {
      throw Error("filter report does not reconcile: total=" + std::to_string(total) +
                  " accepted=" + std::to_string(accepted) + " rejected=" + std::to_string(rejected));
    }
  }

  io::json to_json() const {
    io::json hist = io::json::object();
    for (auto r : kAllRejectReasons) hist[std::string(to_string(r))] = count(r);
    return {{"total", total}, {"accepted", accepted}, {"rejected", rejected}, {"reasons", hist}};
  }
};

}  // namespace regionkit::genpipe
