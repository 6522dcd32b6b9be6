#pragma once

// Bookkeeping for human quality ratings of generated entries: format
// correctness, then good/bad for the question and the answer.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "regionkit/core/error.hpp"
#include "regionkit/io/serialize.hpp"

namespace regionkit::evalkit {

enum class Quality { kGood, kBad };

inline Quality quality_from_string(std::string_view s) {
  if (s == "good") return Quality::kGood;
  if (s == "bad") return Quality::kBad;
  throw SchemaError("rating must be good or bad, got '" + std::string(s) + "'");
}

struct QualityRating {
  bool format_ok = false;
  std::optional<Quality> question;  // only when format_ok
  std::optional<Quality> answer;    // only when format_ok
};

struct RatingSummary {
  std::string config;
  std::size_t entries = 0;
  std::size_t format_errors = 0;
  std::size_t question_good = 0;
  std::size_t question_bad = 0;
  std::size_t answer_good = 0;
  std::size_t answer_bad = 0;

  /// Error rate in whole percent, ties to even.
  std::int64_t error_rate_percent() const {
    if (entries == 0) return 0;
    auto num = static_cast<std::int64_t>(format_errors) * 100;
    auto den = static_cast<std::int64_t>(entries);
    std::int64_t q = num / den, r = num % den;
    if (2 * r > den || (2 * r == den && q % 2 == 1)) ++q;
    return q;
  }

  bool has_qa_counts() const { return question_good + question_bad + answer_good + answer_bad > 0; }

  std::string format_cell() const { return std::to_string(error_rate_percent()) + "%"; }
  std::string question_cell() const {
    return has_qa_counts() ? std::to_string(question_good) + " / " + std::to_string(question_bad) : "-";
  }
  std::string answer_cell() const {
    return has_qa_counts() ? std::to_string(answer_good) + " / " + std::to_string(answer_bad) : "-";
  }

  /// "0% | 22 / 8 | 18 / 12"
  std::string row() const { return format_cell() + " | " + question_cell() + " | " + answer_cell(); }

  io::json to_json() const {
    io::json j = {{"config", config},
                  {"entries", entries},
                  {"format_errors", format_errors},
                  {"format_error_rate_percent", error_rate_percent()}};
    if (has_qa_counts()) {
      j["question"] = {{"good", question_good}, {"bad", question_bad}};
      j["answer"] = {{"good", answer_good}, {"bad", answer_bad}};
    }
    return j;
  }
};

/// Ratings keyed by entry id, grouped by the configuration that produced
/// each entry. Re-rating an entry replaces the earlier rating.
class RatingBook {
 public:
  void register_entry(const std::string& entry_id, const std::string& config) {
    auto [it, inserted] = config_of_.emplace(entry_id, config);
    if (!inserted && it->second != config) {
      throw SchemaError("entry " + entry_id + " registered under two configurations");
    }
    if (inserted && std::find(configs_.begin(), configs_.end(), config) == configs_.end()) {
      configs_.push_back(config);
    }
  }

  void rate(const std::string& entry_id, const QualityRating& rating) {
    if (!config_of_.count(entry_id)) throw EvaluationError("rating for unknown entry " + entry_id);
    if (!rating.format_ok && (rating.question || rating.answer)) {
      throw SchemaError("entry " + entry_id + ": question/answer ratings need a correct format");
    }
    ratings_[entry_id] = rating;
  }

  /// One summary per configuration, in registration order.
  std::vector<RatingSummary> summarize() const {
    std::vector<RatingSummary> out;
    for (const auto& cfg : configs_) {
      RatingSummary s;
      s.config = cfg;
      for (const auto& [id, rating] : ratings_) {
        if (config_of_.at(id) != cfg) continue;
        ++s.entries;
        if (!rating.format_ok) {
          ++s.format_errors;
          continue;
        }
        if (rating.question) ++(*rating.question == Quality::kGood ? s.question_good : s.question_bad);
        if (rating.answer) ++(*rating.answer == Quality::kGood ? s.answer_good : s.answer_bad);
      }
      out.push_back(s);
    }
    return out;
  }

 private:
  std::map<std::string, std::string> config_of_;
  std::vector<std::string> configs_;
  std::map<std::string, QualityRating> ratings_;
};

/// Metric rows by configuration columns, padded to aligned columns.
inline std::string format_rating_table(const std::vector<RatingSummary>& summaries) {
  std::vector<std::vector<std::string>> rows = {{""}, {"Format (Error Rate)"},
                                                {"Question (Good / Bad)"}, {"Answer (Good / Bad)"}};
  for (const auto& s : summaries) {
    rows[0].push_back(s.config);
    rows[1].push_back(s.format_cell());
    rows[2].push_back(s.question_cell());
    rows[3].push_back(s.answer_cell());
  }
  std::vector<std::size_t> width(rows[0].size(), 0);
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  std::string out;
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (c > 0) line += " | ";
      line += r[c] + std::string(width[c] - r[c].size(), ' ');
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  return out;
}

}  // namespace regionkit::evalkit
