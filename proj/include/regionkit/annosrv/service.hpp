#pragma once

// Blind pairwise-ranking workflow: per-evaluator task queues, opaque task
// tokens, verdict resolution back to model ids, and win-rate results.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "regionkit/annosrv/store.hpp"
#include "regionkit/core/hash.hpp"
#include "regionkit/core/random.hpp"
#include "regionkit/evalkit/ranking.hpp"
#include "regionkit/io/serialize.hpp"
#include "regionkit/markup/markup.hpp"

namespace regionkit::annosrv {

using evalkit::FineEvalItem;
using evalkit::ModelPair;
using io::json;

struct ServiceConfig {
  std::uint64_t seed = 0;
  std::string image_base_url;
  std::vector<std::string> evaluators;
  // Pairs to compare. When empty, every pair of models that answered an
  // item is compared on that item.
  std::vector<ModelPair> pairs;
};

/// Question text for display: each region placeholder becomes
/// "[REGION-k]" (k from 1) and its box is listed separately.
struct DisplayQuestion {
  std::string text;
  json regions = json::array();
};

inline DisplayQuestion display_question(const std::string& question) {
  DisplayQuestion d;
  auto scan = markup::scan_marked(question);
  std::size_t k = 0;
  for (const auto& seg : scan.text.segments) {
    if (seg.kind == markup::SegmentKind::kRegionPlaceholder) {
      ++k;
      d.text += "[REGION-" + std::to_string(k) + "]";
      d.regions.push_back({{"index", k}, {"box", io::to_json(*seg.region)}});
    } else if (seg.kind == markup::SegmentKind::kImagePlaceholder) {
      continue;
    } else {
      d.text += scan.text.text_of(seg);
    }
  }
  d.text = std::string(trim(d.text));
  return d;
}

class AnnotationService {
 public:
  AnnotationService(std::vector<FineEvalItem> items, ServiceConfig config, RankingStore& store)
      : items_(std::move(items)), config_(std::move(config)), store_(store) {
    for (std::size_t i = 0; i < items_.size(); ++i) {
      items_[i].validate();
      if (!item_index_.emplace(items_[i].item_id, i).second) {
        throw SchemaError("duplicate item id " + items_[i].item_id);
      }
    }
    for (std::size_t i = 0; i < items_.size(); ++i) {
      for (const auto& pair : pairs_for(items_[i])) comparisons_.push_back({i, pair});
    }
    for (const auto& ev : config_.evaluators) {
      if (ev.empty()) throw ConfigError("evaluator id must be non-empty");
      std::vector<std::size_t> order(comparisons_.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      Rng rng(derive_seed(config_.seed, "queue\x1f" + ev));
      shuffle_in_place(rng, order);
      queues_[ev] = std::move(order);
      for (std::size_t c = 0; c < comparisons_.size(); ++c) tokens_[token_for(ev, c)] = {ev, c};
    }
  }

  bool is_registered(const std::string& evaluator) const { return queues_.count(evaluator) > 0; }
  std::size_t tasks_per_evaluator() const { return comparisons_.size(); }
  const std::vector<FineEvalItem>& items() const { return items_; }

  /// The evaluator's next unranked comparison, or nullopt when done. The
  /// same task comes back until a verdict for it is stored.
  std::optional<json> next_task(const std::string& evaluator) const {
    auto q = queues_.find(evaluator);
    if (q == queues_.end()) throw NotFoundError("unknown evaluator " + evaluator);
    std::size_t done = 0;
    std::optional<std::size_t> next;
    for (std::size_t c : q->second) {
      const auto& cmp = comparisons_[c];
      if (store_.contains(ranking_key(items_[cmp.item].item_id, evaluator, cmp.pair))) {
        ++done;
      } else if (!next) {
        next = c;
      }
    }
    if (!next) return std::nullopt;
    const auto& cmp = comparisons_[*next];
    const auto& item = items_[cmp.item];
    std::string first = evalkit::assign_display_order(item.item_id, cmp.pair, config_.seed);
    std::string second = first == cmp.pair.first ? cmp.pair.second : cmp.pair.first;
    auto dq = display_question(item.question);
    return json{{"task_token", token_for(evaluator, *next)},
                {"item_id", item.item_id},
                {"question", dq.text},
                {"regions", dq.regions},
                {"image_url", image_url(item.image)},
                {"response_first", item.responses.at(first)},
                {"response_second", item.responses.at(second)},
                {"progress", {{"completed", done}, {"total", comparisons_.size()}}}};
  }

  /// Resolves the verdict through the displayed order and stores it.
  /// Resubmitting a token replaces the earlier verdict.
  RankingRecord submit_verdict(const std::string& task_token, const std::string& verdict) {
    auto it = tokens_.find(task_token);
    if (it == tokens_.end()) throw NotFoundError("unknown task token");
    auto v = evalkit::verdict_from_string(verdict);
    const auto& [evaluator, c] = it->second;
    const auto& cmp = comparisons_[c];
    const auto& item = items_[cmp.item];
    RankingRecord r;
    r.item_id = item.item_id;
    r.evaluator_id = evaluator;
    r.pair = cmp.pair;
    r.displayed_first = evalkit::assign_display_order(item.item_id, cmp.pair, config_.seed);
    r.verdict = v;
    return store_.put(std::move(r));
  }

  /// Win rates per model (overall, by category, by attribute subtag) and
  /// completion counts per evaluator.
  json results() const {
    auto snap = store_.snapshot();
    if (snap->empty()) throw EvaluationError("no rankings stored yet");
    return summarize(*snap, items_, config_.evaluators, comparisons_.size());
  }

  static json summarize(const std::vector<RankingRecord>& rankings,
                        const std::vector<FineEvalItem>& items,
                        const std::vector<std::string>& evaluators, std::size_t tasks_each) {
    json models = json::array();
    for (const auto& m : evalkit::ranked_models(rankings)) {
      auto mine = evalkit::rankings_involving(rankings, m);
      auto overall = evalkit::win_rate(mine, m, &items, {{1, 2}, evalkit::GroupBy::kCategory});
      auto by_subtag = evalkit::win_rate(mine, m, &items, {{1, 2}, evalkit::GroupBy::kAttributeSubtag});
      json entry = overall.to_json();
      entry["by_category"] = entry["groups"];
      entry.erase("groups");
      entry["by_attribute_subtag"] = by_subtag.to_json()["groups"];
      models.push_back(entry);
    }
    json per_eval = json::object();
    for (const auto& ev : evaluators) per_eval[ev] = {{"completed", 0}, {"total", tasks_each}};
    for (const auto& r : rankings) {
      if (!per_eval.contains(r.evaluator_id)) per_eval[r.evaluator_id] = {{"completed", 0}, {"total", tasks_each}};
      per_eval[r.evaluator_id]["completed"] = per_eval[r.evaluator_id]["completed"].get<std::size_t>() + 1;
    }
    return {{"rankings", rankings.size()}, {"models", models}, {"evaluators", per_eval}};
  }

 private:
  struct Comparison {
    std::size_t item;
    ModelPair pair;
  };

  std::vector<ModelPair> pairs_for(const FineEvalItem& item) const {
    std::vector<ModelPair> out;
    if (!config_.pairs.empty()) {
      for (const auto& p : config_.pairs) {
        if (item.responses.count(p.first) && item.responses.count(p.second)) out.push_back(p);
      }
      return out;
    }
    std::vector<std::string> models;
    for (const auto& [m, _] : item.responses) models.push_back(m);
    for (std::size_t a = 0; a < models.size(); ++a) {
      for (std::size_t b = a + 1; b < models.size(); ++b) out.push_back({models[a], models[b]});
    }
    return out;
  }

  std::string token_for(const std::string& evaluator, std::size_t c) const {
    const auto& cmp = comparisons_[c];
    return content_hash("task\x1f" + std::to_string(config_.seed) + '\x1f' + evaluator + '\x1f' +
                        ranking_key(items_[cmp.item].item_id, evaluator, cmp.pair));
  }

  std::string image_url(const ImageRef& img) const {
    if (config_.image_base_url.empty()) return img.image_id;
    std::string base = config_.image_base_url;
    if (base.back() != '/') base += '/';
    return base + img.image_id;
  }

  std::vector<FineEvalItem> items_;
  ServiceConfig config_;
  RankingStore& store_;
  std::map<std::string, std::size_t> item_index_;
  std::vector<Comparison> comparisons_;
  std::map<std::string, std::vector<std::size_t>> queues_;
  std::map<std::string, std::pair<std::string, std::size_t>> tokens_;
};

}  // namespace regionkit::annosrv
