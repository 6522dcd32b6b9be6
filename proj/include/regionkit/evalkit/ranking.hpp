#pragma once

// Pairwise human rankings: items, blind display order, and win rates.

#include <boost/rational.hpp>

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "regionkit/core/error.hpp"
#include "regionkit/core/hash.hpp"
#include "regionkit/core/types.hpp"
#include "regionkit/io/serialize.hpp"

namespace regionkit::evalkit {

using io::json;

inline constexpr std::string_view kCategories[] = {"object-recognition", "attribute-description",
                                                   "reasoning", "others"};
inline constexpr std::string_view kAttributeSubtags[] = {"color", "count", "location", "other"};

struct FineEvalItem {
  std::string item_id;
  ImageRef image;
  std::string question;  // with region markup
  std::string category;
  std::optional<std::string> attribute_subtag;
  std::map<std::string, std::string> responses;  // model id -> response

  void validate() const {
    if (item_id.empty()) throw SchemaError("item_id must be non-empty");
    if (std::find(std::begin(kCategories), std::end(kCategories), category) == std::end(kCategories)) {
      throw SchemaError("item " + item_id + ": unknown category '" + category + "'");
    }
    if (attribute_subtag) {
      if (category != "attribute-description") {
        throw SchemaError("item " + item_id + ": attribute_subtag only applies to attribute-description");
      }
      if (std::find(std::begin(kAttributeSubtags), std::end(kAttributeSubtags), *attribute_subtag) ==
          std::end(kAttributeSubtags)) {
        throw SchemaError("item " + item_id + ": unknown attribute_subtag '" + *attribute_subtag + "'");
      }
    }
    if (responses.size() < 2) throw SchemaError("item " + item_id + ": needs at least 2 responses");
  }
};

inline FineEvalItem fine_eval_item_from_json(const json& j) {
  try {
    FineEvalItem it;
    it.item_id = io::require_string(j, "item_id");
    it.image = io::image_from_json(io::require(j, "image"));
    it.question = io::require_string(j, "question");
    it.category = io::require_string(j, "category");
    if (j.contains("attribute_subtag") && !j["attribute_subtag"].is_null()) {
      it.attribute_subtag = io::require_string(j, "attribute_subtag");
    }
    it.responses = io::require(j, "responses").get<std::map<std::string, std::string>>();
    it.validate();
    return it;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("bad FineEval item: ") + e.what());
  }
}

enum class Verdict { kFirstBetter, kSecondBetter, kTie };

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::kFirstBetter: return "first-better";
    case Verdict::kSecondBetter: return "second-better";
    case Verdict::kTie: return "tie";
  }
  return "";
}

inline Verdict verdict_from_string(std::string_view s) {
  if (s == "first-better") return Verdict::kFirstBetter;
  if (s == "second-better") return Verdict::kSecondBetter;
  if (s == "tie") return Verdict::kTie;
  throw SchemaError("verdict must be first-better, second-better or tie, got '" + std::string(s) + "'");
}

using ModelPair = std::pair<std::string, std::string>;

/// The pair in a canonical order, so (a, b) and (b, a) name the same
/// comparison.
inline ModelPair canonical_pair(const ModelPair& p) {
  return p.first <= p.second ? p : ModelPair{p.second, p.first};
}

/// Which model of the pair is shown first. A pure function of (seed, item,
/// pair); the pair's own order does not matter.
inline std::string assign_display_order(std::string_view item_id, const ModelPair& pair,
                                        std::uint64_t seed) {
  ModelPair c = canonical_pair(pair);
  std::string key = std::to_string(seed) + '\x1f' + std::string(item_id) + '\x1f' + c.first +
                    '\x1f' + c.second;
  return (sha256(key)[0] & 1) ? c.second : c.first;
}

struct RankingRecord {
  std::string item_id;
  std::string evaluator_id;
  ModelPair pair;  // (model_a, model_b)
  std::string displayed_first;
  Verdict verdict = Verdict::kTie;

  void validate() const {
    if (pair.first == pair.second) throw SchemaError("ranking pair must name two different models");
    if (displayed_first != pair.first && displayed_first != pair.second) {
      throw SchemaError("displayed_first must be one of the pair");
    }
  }

  const std::string& displayed_second() const {
    return displayed_first == pair.first ? pair.second : pair.first;
  }

  /// Model id the verdict favours, or nullopt for a tie.
  std::optional<std::string> winner() const {
    switch (verdict) {
      case Verdict::kFirstBetter: return displayed_first;
      case Verdict::kSecondBetter: return displayed_second();
      case Verdict::kTie: return std::nullopt;
    }
    return std::nullopt;
  }

  bool involves(std::string_view model) const { return pair.first == model || pair.second == model; }
};

inline json to_json(const RankingRecord& r) {
  return {{"item_id", r.item_id},
          {"evaluator_id", r.evaluator_id},
          {"pair", {r.pair.first, r.pair.second}},
          {"displayed_first", r.displayed_first},
          {"verdict", to_string(r.verdict)}};
}

inline RankingRecord ranking_from_json(const json& j) {
  try {
    RankingRecord r;
    r.item_id = io::require_string(j, "item_id");
    r.evaluator_id = io::require_string(j, "evaluator_id");
    const auto& p = io::require(j, "pair");
    if (!p.is_array() || p.size() != 2) throw SchemaError("pair must be [model_a, model_b]");
    r.pair = {p[0].get<std::string>(), p[1].get<std::string>()};
    r.displayed_first = io::require_string(j, "displayed_first");
    r.verdict = verdict_from_string(io::require_string(j, "verdict"));
    r.validate();
    return r;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("bad ranking record: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Win rate

using Rational = boost::rational<std::int64_t>;

inline double to_double(const Rational& r) {
  return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

enum class GroupBy { kNone, kCategory, kAttributeSubtag };

struct WinRateOptions {
  Rational tie_credit{1, 2};
  GroupBy group_by = GroupBy::kNone;
};

struct GroupRate {
  Rational rate{0};
  std::size_t items = 0;
};

struct WinRate {
  std::string model;
  Rational overall{0};
  std::size_t items = 0;
  std::size_t verdicts = 0;
  std::map<std::string, GroupRate> groups;
  // Items listed in the item set that have no verdict for this model.
  std::vector<std::string> excluded_items;

  json to_json() const {
    json g = json::object();
    for (const auto& [k, v] : groups) g[k] = {{"win_rate", to_double(v.rate)}, {"items", v.items}};
    return {{"model", model},
            {"win_rate", to_double(overall)},
            {"win_rate_exact", std::to_string(overall.numerator()) + "/" +
                                   std::to_string(overall.denominator())},
            {"items", items},
            {"verdicts", verdicts},
            {"groups", g},
            {"excluded_items", excluded_items}};
  }
};

/// Per item: (verdicts favouring `model` + tie_credit * ties) / verdicts;
/// the overall rate is the mean over items. Every ranking must involve
/// `model`. `items` supplies categories for grouping and the item list
/// used to report items with no verdicts.
inline WinRate win_rate(const std::vector<RankingRecord>& rankings, const std::string& model,
                        const std::vector<FineEvalItem>* items = nullptr,
                        const WinRateOptions& opts = {}) {
  struct Tally {
    Rational credit{0};
    std::int64_t n = 0;
  };
  std::map<std::string, Tally> per_item;
  for (const auto& r : rankings) {
    if (!r.involves(model)) {
      throw EvaluationError("ranking for item " + r.item_id + " does not involve model " + model);
    }
    auto& t = per_item[r.item_id];
    auto w = r.winner();
    if (!w) {
      t.credit += opts.tie_credit;
    } else if (*w == model) {
      t.credit += 1;
    }
    ++t.n;
  }

  std::map<std::string, const FineEvalItem*> item_index;
  if (items) {
    for (const auto& it : *items) item_index[it.item_id] = &it;
  }
  auto group_of = [&](const std::string& item_id) -> std::string {
    auto it = item_index.find(item_id);
    if (it == item_index.end()) throw EvaluationError("no category known for item " + item_id);
    if (opts.group_by == GroupBy::kCategory) return it->second->category;
    return it->second->attribute_subtag.value_or("");
  };

  WinRate out;
  out.model = model;
  std::map<std::string, std::pair<Rational, std::size_t>> group_sums;
  Rational sum{0};
  for (const auto& [item_id, t] : per_item) {
    Rational share = t.credit / t.n;
    sum += share;
    out.verdicts += static_cast<std::size_t>(t.n);
    if (opts.group_by != GroupBy::kNone) {
      std::string g = group_of(item_id);
      if (!g.empty()) {
        group_sums[g].first += share;
        ++group_sums[g].second;
      }
    }
  }
  out.items = per_item.size();
  if (items) {
    for (const auto& it : *items) {
      if (!per_item.count(it.item_id)) out.excluded_items.push_back(it.item_id);
    }
  }
  if (out.items == 0) throw EvaluationError("no verdicts for model " + model);
  out.overall = sum / static_cast<std::int64_t>(out.items);
  for (const auto& [g, s] : group_sums) {
    out.groups[g] = {s.first / static_cast<std::int64_t>(s.second), s.second};
  }
  return out;
}

/// Rankings restricted to those involving `model`.
inline std::vector<RankingRecord> rankings_involving(const std::vector<RankingRecord>& rankings,
                                                     const std::string& model) {
  std::vector<RankingRecord> out;
  for (const auto& r : rankings) {
    if (r.involves(model)) out.push_back(r);
  }
  return out;
}

/// Every model that appears in any ranking, sorted.
inline std::vector<std::string> ranked_models(const std::vector<RankingRecord>& rankings) {
  std::set<std::string> s;
  for (const auto& r : rankings) {
    s.insert(r.pair.first);
    s.insert(r.pair.second);
  }
  return {s.begin(), s.end()};
}

}  // namespace regionkit::evalkit
