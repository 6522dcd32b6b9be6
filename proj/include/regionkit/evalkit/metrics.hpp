#pragma once

#include <cctype>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "regionkit/core/error.hpp"
#include "regionkit/evalkit/embedding.hpp"
#include "regionkit/io/serialize.hpp"

namespace regionkit::evalkit {

/// Exact-match share of predictions equal to gold.
inline double accuracy(const std::vector<std::string>& predictions,
                       const std::vector<std::string>& gold) {
  if (predictions.size() != gold.size()) {
    throw EvaluationError("prediction/gold length mismatch: " + std::to_string(predictions.size()) +
                          " vs " + std::to_string(gold.size()));
  }
  if (gold.empty()) throw EvaluationError("accuracy over an empty list");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hits += predictions[i] == gold[i];
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}

enum class YesNo { kYes, kNo };

inline std::string_view to_string(YesNo v) { return v == YesNo::kYes ? "yes" : "no"; }

/// The leading word decides when it is "yes" or "no"; otherwise "yes"
/// anywhere without "no"/"not" reads as yes, and anything else as no.
inline YesNo classify_yes_no(std::string_view answer) {
  auto words = word_tokens(answer);
  if (!words.empty()) {
    if (words.front() == "yes") return YesNo::kYes;
    if (words.front() == "no") return YesNo::kNo;
  }
  bool yes = false, neg = false;
  for (const auto& w : words) {
    yes = yes || w == "yes";
    neg = neg || w == "no" || w == "not";
  }
  return yes && !neg ? YesNo::kYes : YesNo::kNo;
}

/// Positive class is "yes".
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }

  void add(YesNo predicted, YesNo gold) {
    if (predicted == YesNo::kYes) {
      ++(gold == YesNo::kYes ? tp : fp);
    } else {
      ++(gold == YesNo::kYes ? fn : tn);
    }
  }
};

/// All values are percentages. A metric whose denominator is zero is
/// reported as 0 and flagged.
struct PopeMetrics {
  double accuracy = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  double yes_ratio = 0;
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;

  io::json to_json() const {
    return {{"accuracy", accuracy},
            {"precision", precision},
            {"recall", recall},
            {"f1", f1},
            {"yes_ratio", yes_ratio},
            {"precision_undefined", precision_undefined},
            {"recall_undefined", recall_undefined},
            {"f1_undefined", f1_undefined}};
  }
};

inline PopeMetrics pope_metrics(const ConfusionCounts& c) {
  const double all = static_cast<double>(c.total());
  if (c.total() == 0) throw EvaluationError("confusion counts are all zero");
  PopeMetrics m;
  m.accuracy = 100.0 * static_cast<double>(c.tp + c.tn) / all;
  m.yes_ratio = 100.0 * static_cast<double>(c.tp + c.fp) / all;
  double p = 0, r = 0;
  if (c.tp + c.fp == 0) {
    m.precision_undefined = true;
  } else {
    p = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  }
  if (c.tp + c.fn == 0) {
    m.recall_undefined = true;
  } else {
    r = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  }
  if (m.precision_undefined || m.recall_undefined || p + r == 0) {
    m.f1_undefined = true;
  } else {
    m.f1 = 100.0 * 2 * p * r / (p + r);
  }
  m.precision = 100.0 * p;
  m.recall = 100.0 * r;
  return m;
}

}  // namespace regionkit::evalkit
