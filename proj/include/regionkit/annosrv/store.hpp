#pragma once

#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "regionkit/core/error.hpp"
#include "regionkit/evalkit/ranking.hpp"
#include "regionkit/io/serialize.hpp"

namespace regionkit::annosrv {

using evalkit::RankingRecord;

/// Identity of a ranking: one verdict per (item, evaluator, pair).
inline std::string ranking_key(const std::string& item_id, const std::string& evaluator_id,
                               const evalkit::ModelPair& pair) {
  auto p = evalkit::canonical_pair(pair);
  return item_id + '\x1f' + evaluator_id + '\x1f' + p.first + '\x1f' + p.second;
}

inline std::string ranking_key(const RankingRecord& r) {
  return ranking_key(r.item_id, r.evaluator_id, r.pair);
}

/// Append-only JSONL store with last-write-wins per ranking key. Writes
/// go through one mutex; readers take an immutable snapshot.
class RankingStore {
 public:
  /// In-memory only.
  RankingStore() : snapshot_(std::make_shared<const std::vector<RankingRecord>>()) {}

  /// Replays `path` if it exists, then appends to it. A torn final line
  /// from a crash is ignored.
  explicit RankingStore(const std::string& path) : RankingStore() {
    {
      std::ifstream in(path);
      if (in) {
        std::vector<RankingRecord> loaded;
        io::for_each_jsonl(
            in, [&](std::size_t, const io::json& j) { loaded.push_back(evalkit::ranking_from_json(j)); },
            [&](std::size_t, const std::string&) { ++torn_lines_; });
        for (auto& r : loaded) apply(std::move(r));
        publish();
      }
    }
    out_.open(path, std::ios::app);
    if (!out_) throw ConfigError("cannot open ranking store " + path);
  }

  std::size_t torn_lines() const { return torn_lines_; }

  RankingRecord put(RankingRecord r) {
    r.validate();
    std::lock_guard<std::mutex> lock(write_mu_);
    if (out_.is_open()) {
      io::write_jsonl(out_, evalkit::to_json(r));
      out_.flush();
      if (!out_) throw Error("failed to append to ranking store");
    }
    apply(r);
    publish();
    return r;
  }

  /// Current records, one per key, in order of first submission.
  std::shared_ptr<const std::vector<RankingRecord>> snapshot() const {
    std::shared_lock<std::shared_mutex> lock(snap_mu_);
    return snapshot_;
  }

  bool contains(const std::string& key) const {
    std::shared_lock<std::shared_mutex> lock(snap_mu_);
    return keys_.count(key) > 0;
  }

 private:
  // Caller holds write_mu_ (or is the constructor).
  void apply(RankingRecord r) {
    auto key = ranking_key(r);
    auto it = index_.find(key);
    if (it == index_.end()) {
      index_.emplace(key, records_.size());
      records_.push_back(std::move(r));
    } else {
      records_[it->second] = std::move(r);
    }
  }

  void publish() {
    auto snap = std::make_shared<const std::vector<RankingRecord>>(records_);
    std::map<std::string, std::size_t> keys = index_;
    std::unique_lock<std::shared_mutex> lock(snap_mu_);
    snapshot_ = std::move(snap);
    keys_ = std::move(keys);
  }

  std::mutex write_mu_;
  std::ofstream out_;
  std::vector<RankingRecord> records_;
  std::map<std::string, std::size_t> index_;
  std::size_t torn_lines_ = 0;

  mutable std::shared_mutex snap_mu_;
  std::shared_ptr<const std::vector<RankingRecord>> snapshot_;
  std::map<std::string, std::size_t> keys_;
};

}  // namespace regionkit::annosrv
