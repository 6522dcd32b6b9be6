#pragma once

// File-level evaluation runs: JSONL in, JSON summary and aligned text
// table out.

#include <cstdio>
#include <istream>
#include <set>
#include <string>
#include <vector>

#include "regionkit/evalkit/embedding.hpp"
#include "regionkit/evalkit/metrics.hpp"
#include "regionkit/evalkit/ranking.hpp"
#include "regionkit/evalkit/ratings.hpp"
#include "regionkit/io/serialize.hpp"

namespace regionkit::evalkit {

inline std::string format_table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows) {
    if (r.size() > width.size()) width.resize(r.size(), 0);
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  std::string out;
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (c > 0) line += "  ";
      line += r[c] + std::string(width[c] - r[c].size(), ' ');
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  return out;
}

inline std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

struct Report {
  io::json json;
  std::string table;
};

namespace detail {

template <typename Fn>
void each_line(std::istream& in, const char* what, Fn&& fn) {
  io::for_each_jsonl(in, [&](std::size_t lineno, const io::json& j) {
    try {
      fn(j);
    } catch (const io::json::exception& e) {
      throw SchemaError(std::string(what) + " line " + std::to_string(lineno) + ": " + e.what());
    } catch (const SchemaError& e) {
      throw SchemaError(std::string(what) + " line " + std::to_string(lineno) + ": " + e.what());
    }
  });
}

}  // namespace detail

struct RecognitionItem {
  std::string id;
  std::string output;
  std::vector<std::string> candidates;
  std::string gold;
};

inline std::vector<RecognitionItem> read_recognition(std::istream& in) {
  std::vector<RecognitionItem> items;
  detail::each_line(in, "recognition", [&](const io::json& j) {
    RecognitionItem it{io::require_string(j, "id"), io::require_string(j, "output"),
                       io::string_list(j, "candidates"), io::require_string(j, "gold")};
    if (it.candidates.empty()) throw SchemaError("candidates must be non-empty");
    items.push_back(std::move(it));
  });
  return items;
}

/// Bag-of-words provider whose vocabulary is every word of every
/// reference phrase "an image of a <label>" in the item set.
inline BagOfWordsProvider reference_vocabulary_provider(const std::vector<RecognitionItem>& items) {
  std::vector<std::string> phrases;
  for (const auto& it : items) {
    for (const auto& c : it.candidates) phrases.push_back(std::string(kReferencePrefix) + c);
  }
  return BagOfWordsProvider(phrases);
}

inline Report evaluate_recognition(const std::vector<RecognitionItem>& items, EmbeddingProvider& provider) {
  if (items.empty()) throw EvaluationError("no recognition items");
  std::vector<std::string> pred, gold;
  io::json per_item = io::json::array();
  std::vector<std::vector<std::string>> rows = {{"id", "prediction", "gold"}};
  for (const auto& it : items) {
    auto m = match_category_scored(it.output, it.candidates, provider);
    pred.push_back(m.label);
    gold.push_back(it.gold);
    per_item.push_back({{"id", it.id}, {"prediction", m.label}, {"gold", it.gold},
                        {"similarities", m.similarities}});
    rows.push_back({it.id, m.label, it.gold});
  }
  double acc = accuracy(pred, gold);
  rows.push_back({"accuracy", fixed2(100.0 * acc)});
  return {{{"kind", "recognition"}, {"accuracy", acc}, {"items", per_item}}, format_table(rows)};
}

/// {"id", "prediction", "gold"} per line; exact match.
inline Report evaluate_vqa(std::istream& in) {
  std::vector<std::string> pred, gold;
  detail::each_line(in, "vqa", [&](const io::json& j) {
    pred.push_back(io::require_string(j, "prediction"));
    gold.push_back(io::require_string(j, "gold"));
  });
  double acc = accuracy(pred, gold);
  return {{{"kind", "vqa"}, {"accuracy", acc}, {"items", gold.size()}},
          format_table({{"items", "accuracy"}, {std::to_string(gold.size()), fixed2(100.0 * acc)}})};
}

/// {"id", "answer", "label": "yes" | "no"} per line.
inline Report evaluate_pope(std::istream& in) {
  ConfusionCounts c;
  detail::each_line(in, "pope", [&](const io::json& j) {
    std::string label = io::require_string(j, "label");
    if (label != "yes" && label != "no") throw SchemaError("label must be yes or no");
    c.add(classify_yes_no(io::require_string(j, "answer")), label == "yes" ? YesNo::kYes : YesNo::kNo);
  });
  auto m = pope_metrics(c);
  auto flag = [](double v, bool undefined) { return fixed2(v) + (undefined ? "*" : ""); };
  std::string table = format_table({{"Accuracy", "Precision", "Recall", "F1-Score", "Yes"},
                                    {fixed2(m.accuracy), flag(m.precision, m.precision_undefined),
                                     flag(m.recall, m.recall_undefined), flag(m.f1, m.f1_undefined),
                                     fixed2(m.yes_ratio)}});
  if (m.precision_undefined || m.recall_undefined || m.f1_undefined) {
    table += "* undefined (zero denominator), reported as 0\n";
  }
  io::json j = m.to_json();
  j["kind"] = "pope";
  j["counts"] = {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}};
  return {j, table};
}

inline std::vector<RankingRecord> read_rankings(std::istream& in) {
  std::vector<RankingRecord> out;
  detail::each_line(in, "rankings", [&](const io::json& j) { out.push_back(ranking_from_json(j)); });
  return out;
}

inline std::vector<FineEvalItem> read_items(std::istream& in) {
  std::vector<FineEvalItem> out;
  detail::each_line(in, "items", [&](const io::json& j) { out.push_back(fine_eval_item_from_json(j)); });
  return out;
}

/// Win rate for each model (or only `model` when non-empty), with the
/// category breakdown when items are given.
inline Report evaluate_winrate(const std::vector<RankingRecord>& rankings,
                               const std::vector<FineEvalItem>* items, const std::string& model = "",
                               const Rational& tie_credit = Rational(1, 2)) {
  if (rankings.empty()) throw EvaluationError("no rankings");
  std::vector<std::string> models = model.empty() ? ranked_models(rankings) : std::vector<std::string>{model};
  std::set<std::string> categories;
  std::vector<WinRate> rates;
  for (const auto& m : models) {
    WinRateOptions opts{tie_credit, items ? GroupBy::kCategory : GroupBy::kNone};
    rates.push_back(win_rate(rankings_involving(rankings, m), m, items, opts));
    for (const auto& [g, _] : rates.back().groups) categories.insert(g);
  }
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header = {"model", "items", "win rate"};
  for (const auto& c : categories) header.push_back(c);
  rows.push_back(header);
  io::json arr = io::json::array();
  for (const auto& r : rates) {
    std::vector<std::string> row = {r.model, std::to_string(r.items), fixed2(100.0 * to_double(r.overall))};
    for (const auto& c : categories) {
      auto it = r.groups.find(c);
      row.push_back(it == r.groups.end() ? "-" : fixed2(100.0 * to_double(it->second.rate)));
    }
    rows.push_back(row);
    arr.push_back(r.to_json());
  }
  return {{{"kind", "winrate"}, {"models", arr}}, format_table(rows)};
}

/// {"entry_id", "config", "format_ok", "question"?, "answer"?} per line.
inline Report evaluate_quality(std::istream& in) {
  RatingBook book;
  detail::each_line(in, "ratings", [&](const io::json& j) {
    std::string id = io::require_string(j, "entry_id");
    book.register_entry(id, io::require_string(j, "config"));
    QualityRating r;
    r.format_ok = io::require(j, "format_ok").get<bool>();
    if (j.contains("question") && !j["question"].is_null()) {
      r.question = quality_from_string(io::require_string(j, "question"));
    }
    if (j.contains("answer") && !j["answer"].is_null()) {
      r.answer = quality_from_string(io::require_string(j, "answer"));
    }
    book.rate(id, r);
  });
  auto summaries = book.summarize();
  io::json arr = io::json::array();
  for (const auto& s : summaries) {
    auto j = s.to_json();
    j["row"] = s.row();
    arr.push_back(j);
  }
  return {{{"kind", "quality"}, {"configs", arr}}, format_rating_table(summaries)};
}

}  // namespace regionkit::evalkit
