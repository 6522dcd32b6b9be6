#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "regionkit/genpipe/client.hpp"
#include "regionkit/genpipe/filter.hpp"
#include "regionkit/genpipe/grounding.hpp"
#include "regionkit/genpipe/pipeline.hpp"
#include "regionkit/genpipe/reply.hpp"
#include "regionkit/promptgen/profile.hpp"
#include "regionkit/promptgen/prompt.hpp"
#include "support.hpp"

namespace rk = regionkit;
namespace pg = regionkit::promptgen;
namespace gp = regionkit::genpipe;
using rk::Region;
using rk::io::json;
using testsupport::fixture;

namespace {

std::vector<rk::AnnotationBundle> fixture_bundles() {
  std::vector<rk::AnnotationBundle> out;
  for (const auto& j : testsupport::read_jsonl(fixture("bundles3.jsonl"))) out.push_back(rk::io::bundle_from_json(j));
  return out;
}

gp::ClientOptions no_sleep(std::vector<std::chrono::milliseconds>* slept = nullptr) {
  gp::ClientOptions o;
  o.sleep = [slept](std::chrono::milliseconds d) {
    if (slept) slept->push_back(d);
  };
  return o;
}

std::vector<pg::ChatMessage> tiny_prompt(const std::string& q = "caption") {
  return {{pg::Role::kSystem, "sys"}, {pg::Role::kUser, q}};
}

std::vector<json> log_events(const std::string& log, const std::string& event) {
  std::istringstream in(log);
  std::vector<json> out;
  rk::io::for_each_jsonl(in, [&](std::size_t, const json& j) {
    if (j["event"] == event) out.push_back(j);
  });
  return out;
}

// Random turn text without separator runs or label-leading lines.
std::string random_turn_text(std::mt19937_64& g) {
  static const std::vector<std::string> words = {"what", "is", "the", "dog", "in", "doing", "near",
                                                 "Question", "Answer", "colour", "2", "x,", "(a)"};
  std::uniform_int_distribution<int> n(1, 12), w(0, static_cast<int>(words.size()) - 1), coin(0, 5);
  std::uniform_int_distribution<int> milli(0, 1000);
  std::string out;
  int count = n(g);
  for (int i = 0; i < count; ++i) {
    if (i > 0) out += coin(g) == 0 ? "\n" : " ";
    if (coin(g) == 1) {
      int a = milli(g), b = milli(g), c = milli(g), d = milli(g);
      if (a == b) b = (a + 1) % 1001;
      if (c == d) d = (c + 1) % 1001;
      out += rk::markup::render_tagged(Region(std::min(a, b) / 1000.0, std::min(c, d) / 1000.0,
                                              std::max(a, b) / 1000.0, std::max(c, d) / 1000.0));
    } else {
      out += words[static_cast<std::size_t>(w(g))];
    }
  }
  // A line may not start with a label, or it would open a new chunk.
  std::string fixed;
  std::istringstream lines(out);
  std::string line;
  bool first = true;
  while (std::getline(lines, line)) {
    if (!first) fixed += "\n";
    if (line.rfind("Question:", 0) == 0 || line.rfind("Answer:", 0) == 0) line = "so " + line;
    fixed += line;
    first = false;
  }
  return fixed;
}

}  // namespace

// --- profiles and context rendering ----------------------------------------

TEST(Profiles, AllSixLoadAndBuildPromptShape) {
  auto bundle = fixture_bundles().front();
  bundle.groundings = {{"Two cats", Region(0.011, 0.043, 0.996, 0.997), 0.9}};
  for (auto task : pg::kAllTasks) {
    auto profile = pg::load_profile(testsupport::profile_root(), task);
    EXPECT_EQ(profile.task, task);
    auto msgs = pg::build_messages(profile, pg::render_context(bundle, profile), 11);
    EXPECT_TRUE(pg::has_prompt_shape(msgs)) << pg::to_string(task);
    std::size_t used = profile.example_sample_count.value_or(profile.examples.size());
    EXPECT_EQ(msgs.size(), 2 + 2 * used);
    EXPECT_EQ(msgs.front().content, profile.system_message);
  }
}

TEST(Profiles, TurnModes) {
  for (auto task : pg::kAllTasks) {
    auto p = pg::load_profile(testsupport::profile_root(), task);
    EXPECT_EQ(p.turn_mode, task == pg::TaskId::kGeneral ? pg::TurnMode::kMulti : pg::TurnMode::kSingle);
  }
}

TEST(Profiles, MismatchedDirectoryRejected) {
  auto p = pg::load_profile(testsupport::profile_root() + "/ocr");
  EXPECT_EQ(p.task, pg::TaskId::kOcr);
  EXPECT_THROW(pg::load_profile("/nonexistent-profile-root", pg::TaskId::kOcr), rk::ConfigError);
}

TEST(Context, SmallObjectTaggedObjects) {
  auto b = fixture_bundles().front();
  auto p = pg::load_profile(testsupport::profile_root(), pg::TaskId::kSmallObject);
  std::string expected =
      "Two cats sleep on a pink couch.\n"
      "A pair of cats lying next to remote controls.\n"
      "Cats napping on a blanket.\n"
      "Two cats with two remotes on a sofa.\n"
      "A couch with cats and remotes.\n"
      "\n"
      "cat: <Region>[0.011, 0.156, 0.505, 0.997]</Region>\n"
      "cat: <Region>[0.54, 0.043, 0.996, 0.785]</Region>\n"
      "remote: <Region>[0.062, 0.15, 0.277, 0.25]</Region>\n"
      "couch: <Region>[0.001, 0.002, 0.999, 0.996]</Region>";
  EXPECT_EQ(pg::render_context(b, p).text, expected);
}

TEST(Context, RelationshipAndAttributeBare) {
  auto b = fixture_bundles().front();
  auto rel = pg::render_context(b, pg::load_profile(testsupport::profile_root(), pg::TaskId::kRelationship)).text;
  EXPECT_EQ(rel,
            "a sleeping tabby cat: [0.54, 0.043, 0.996, 0.785]\n"
            "a gray remote: [0.062, 0.15, 0.276, 0.25]\n"
            "\n"
            "<cat: [0.011, 0.156, 0.505, 0.997]> <lying on> <couch: [0.001, 0.002, 0.999, 0.996]>");
  auto attr = pg::render_context(b, pg::load_profile(testsupport::profile_root(), pg::TaskId::kAttribute)).text;
  EXPECT_NE(attr.find("<cat: [0.54, 0.043, 0.996, 0.785]> <striped, sleepy>"), std::string::npos);
  EXPECT_EQ(attr.find("<Region>"), std::string::npos);
}

TEST(Context, BareStyleKeepsDecimalForIntegralCoordinates) {
  auto b = fixture_bundles()[1];
  auto rel = pg::render_context(b, pg::load_profile(testsupport::profile_root(), pg::TaskId::kRelationship)).text;
  EXPECT_NE(rel.find("<pole: [0.45, 0.6, 0.52, 1.0]>"), std::string::npos) << rel;
}

TEST(Context, OcrCaptionsThenTokens) {
  auto b = fixture_bundles().front();
  auto ocr = pg::render_context(b, pg::load_profile(testsupport::profile_root(), pg::TaskId::kOcr)).text;
  EXPECT_EQ(ocr,
            "Two cats sleep on a pink couch.\n"
            "A pair of cats lying next to remote controls.\n"
            "Cats napping on a blanket.\n"
            "Two cats with two remotes on a sofa.\n"
            "A couch with cats and remotes.\n"
            "\n"
            "SONY: [0.1, 0.18, 0.14, 0.2]");
}

TEST(Context, MissingSectionNamesIt) {
  rk::AnnotationBundle b;
  b.image.image_id = "bare";
  b.captions = {"A cat."};
  auto p = pg::load_profile(testsupport::profile_root(), pg::TaskId::kOcr);
  try {
    pg::render_context(b, p);
    FAIL() << "expected ContextError";
  } catch (const rk::ContextError& e) {
    EXPECT_NE(std::string(e.what()).find("ocr"), std::string::npos);
  }
}

// --- message assembly -------------------------------------------------------

TEST(Messages, TaskProfilesUseAllExamplesInOrder) {
  auto p = testsupport::sampled_profile(4, 1);
  p.example_sample_count.reset();
  auto msgs = pg::build_messages(p, {"ctx"}, 99);
  ASSERT_EQ(msgs.size(), 10u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(msgs[1 + 2 * i].content, "context " + std::to_string(i));
    EXPECT_EQ(msgs[2 + 2 * i].content, "response " + std::to_string(i));
  }
  EXPECT_EQ(msgs.back().content, "ctx");
}

TEST(Messages, SampledExamplesAreDeterministicPerSeed) {
  auto p = testsupport::sampled_profile(10, 3);
  auto a = pg::build_messages(p, {"ctx"}, 1234);
  for (int run = 0; run < 5; ++run) EXPECT_EQ(pg::build_messages(p, {"ctx"}, 1234), a);
  EXPECT_EQ(a.size(), 8u);
  EXPECT_TRUE(pg::has_prompt_shape(a));
  std::set<std::string> distinct;
  for (std::size_t i = 1; i + 1 < a.size(); i += 2) distinct.insert(a[i].content);
  EXPECT_EQ(distinct.size(), 3u);
}

TEST(Messages, SamplingUniformWithinThreeSigma) {
  const std::size_t pool = 10, k = 3, trials = 10000;
  auto p = testsupport::sampled_profile(pool, k);
  std::vector<std::size_t> hits(pool, 0);
  for (std::size_t t = 0; t < trials; ++t) {
    for (auto i : pg::select_examples(p, rk::derive_seed(42, "image-" + std::to_string(t)))) ++hits[i];
  }
  // Each index is included with probability k/pool per trial.
  double prob = double(k) / pool;
  double mean = trials * prob, sigma = std::sqrt(trials * prob * (1 - prob));
  for (std::size_t i = 0; i < pool; ++i) {
    EXPECT_LE(std::abs(double(hits[i]) - mean), 3 * sigma) << "index " << i << " hits " << hits[i];
  }
}

TEST(Messages, SampleCountAbovePoolIsConfigError) {
  auto p = testsupport::sampled_profile(2, 3);
  EXPECT_THROW(pg::build_messages(p, {"ctx"}, 0), rk::ConfigError);
}

TEST(Messages, EmptyContextRejected) {
  EXPECT_THROW(pg::build_messages(testsupport::sampled_profile(3, 1), {"  \n"}, 0), rk::ContextError);
}

TEST(Messages, ShapeCheck) {
  using pg::Role;
  auto mk = [](std::vector<Role> rs) {
    std::vector<pg::ChatMessage> m;
    for (auto r : rs) m.emplace_back(r, "x");
    return m;
  };
  EXPECT_TRUE(pg::has_prompt_shape(mk({Role::kSystem, Role::kUser})));
  EXPECT_TRUE(pg::has_prompt_shape(mk({Role::kSystem, Role::kUser, Role::kAssistant, Role::kUser})));
  EXPECT_FALSE(pg::has_prompt_shape(mk({Role::kUser})));
  EXPECT_FALSE(pg::has_prompt_shape(mk({Role::kSystem, Role::kAssistant})));
  EXPECT_FALSE(pg::has_prompt_shape(mk({Role::kSystem, Role::kUser, Role::kUser, Role::kUser})));
  EXPECT_FALSE(pg::has_prompt_shape(mk({Role::kSystem, Role::kUser, Role::kAssistant})));
}

TEST(Grammar, SeparatorsByTask) {
  EXPECT_EQ(pg::expected_response_grammar("small-object").separator, "======");
  EXPECT_EQ(pg::expected_response_grammar("ocr").max_pairs, 1u);
  EXPECT_EQ(pg::expected_response_grammar("general").separator, "===");
  EXPECT_THROW(pg::expected_response_grammar("captioning"), rk::ConfigError);
}

// --- reply parsing ----------------------------------------------------------

TEST(Reply, SingleTurnWithSixEquals) {
  auto g = pg::expected_response_grammar("small-object");
  auto p = gp::parse_reply(
      "Question: If the object in <Region>[0.39, 0.335, 0.445, 0.395]</Region> falls, will it break?\n"
      "======\n"
      "Answer: Most likely, since it is a glass vase.",
      g);
  ASSERT_EQ(p.turns.size(), 1u);
  EXPECT_EQ(p.turns[0].turn.answer, "Most likely, since it is a glass vase.");
  EXPECT_EQ(p.turns[0].question_regions.well_formed, 1u);
  EXPECT_FALSE(p.turns[0].answer_contains_region());
  EXPECT_EQ(p.orphan_chunks, 0u);
}

TEST(Reply, ShippedGeneralExampleParsesToThreeTurns) {
  auto p = pg::load_profile(testsupport::profile_root(), pg::TaskId::kGeneral);
  auto parsed = gp::parse_reply(p.examples.front().response, pg::expected_response_grammar(p));
  ASSERT_EQ(parsed.turns.size(), 3u);
  for (const auto& t : parsed.turns) {
    EXPECT_EQ(t.question_regions.well_formed, 1u);
    EXPECT_FALSE(t.answer_contains_region());
  }
  EXPECT_EQ(gp::filter_multi(parsed), std::nullopt);
}

TEST(Reply, ShippedTaskExamplesPassTheFilter) {
  for (auto task : pg::kAllTasks) {
    auto p = pg::load_profile(testsupport::profile_root(), task);
    for (const auto& ex : p.examples) {
      auto v = gp::classify_reply(ex.response, pg::expected_response_grammar(p), p.turn_mode == pg::TurnMode::kSingle,
                                  {});
      EXPECT_EQ(v, std::nullopt) << pg::to_string(task) << ": " << gp::to_string(*v);
    }
  }
}

TEST(Reply, InlineSeparatorAndPreamble) {
  auto g = pg::expected_response_grammar("ocr");
  auto p = gp::parse_reply("Here you go.\nQuestion: How many letters? ====== Answer: Four.", g);
  ASSERT_EQ(p.turns.size(), 1u);
  EXPECT_EQ(p.turns[0].turn.question, "How many letters?");
  EXPECT_EQ(p.turns[0].turn.answer, "Four.");
}

TEST(Reply, OrphansCountedAndNoPairsFails) {
  auto g = pg::expected_response_grammar("general");
  auto p = gp::parse_reply("Question:\nA?\n===\nAnswer:\nB.\n===\nQuestion:\nDangling?", g);
  EXPECT_EQ(p.turns.size(), 1u);
  EXPECT_EQ(p.orphan_chunks, 1u);
  EXPECT_THROW(gp::parse_reply("no labels here", g), rk::ParseFailure);
  EXPECT_THROW(gp::parse_reply("Answer: only an answer", g), rk::ParseFailure);
  EXPECT_THROW(gp::parse_reply("", g), rk::ParseFailure);
}

TEST(Reply, FormatParseRoundTrip) {
  std::mt19937_64 g(7);
  std::uniform_int_distribution<int> nturns(1, 5);
  for (const char* task : {"general", "attribute"}) {
    auto grammar = pg::expected_response_grammar(task);
    for (int trial = 0; trial < 5000; ++trial) {
      std::vector<rk::Turn> turns(static_cast<std::size_t>(nturns(g)));
      for (auto& t : turns) t = {random_turn_text(g), random_turn_text(g)};
      auto raw = gp::format_reply(turns, grammar);
      auto parsed = gp::parse_reply(raw, grammar);
      ASSERT_EQ(parsed.plain_turns(), turns) << raw;
      ASSERT_EQ(parsed.orphan_chunks, 0u);
    }
  }
}

// --- filter -----------------------------------------------------------------

TEST(Filter, SingleTurnRules) {
  auto g = pg::expected_response_grammar("small-object");
  auto cls = [&](const std::string& raw, gp::FilterOptions o = {}) { return gp::classify_reply(raw, g, true, o); };
  EXPECT_EQ(cls("Question: What is in <Region>[0.1, 0.1, 0.2, 0.2]</Region>?\n======\nAnswer: A cup."), std::nullopt);
  EXPECT_EQ(cls("Question: What is here?\n======\nAnswer: A cup in <Region>[0.1, 0.1, 0.2, 0.2]</Region>."),
            gp::RejectReason::kAnswerContainsRegion);
  EXPECT_EQ(cls("Question: What is in <Region>[0.1, 0.1]</Region>?\n======\nAnswer: A cup."),
            gp::RejectReason::kMalformedRegion);
  EXPECT_EQ(cls("Question: What is here?\n======\nAnswer: A cup."), std::nullopt);
  EXPECT_EQ(cls("Question: What is here?\n======\nAnswer: A cup.", {true}), gp::RejectReason::kNoRegionInQuestions);
  EXPECT_EQ(cls("Question: A?\n======\nAnswer: B.\n======\nQuestion: C?\n======\nAnswer: D."),
            gp::RejectReason::kParseFailure);
}

TEST(Filter, PrecedenceWhenRulesOverlap) {
  auto g = pg::expected_response_grammar("general");
  // Malformed question region and a region in an answer: the answer rule wins.
  EXPECT_EQ(gp::classify_reply("Question:\nIn <Region>[1]</Region>?\n===\nAnswer:\nAt <Region>[0.1, 0.1, 0.2, 0.2]</Region>.",
                               g, false, {}),
            gp::RejectReason::kAnswerContainsRegion);
  // Malformed region and otherwise no region in any question: malformed wins.
  EXPECT_EQ(gp::classify_reply("Question:\nIn <Region>[1]</Region>?\n===\nAnswer:\nYes.", g, false, {}),
            gp::RejectReason::kMalformedRegion);
}

TEST(Filter, FilterSingleNeedsOneTurn) {
  gp::ParsedGeneration empty;
  EXPECT_THROW(gp::filter_single(empty), rk::Error);
}

TEST(Filter, HandLabeledCorpusAgreesExactly) {
  std::ifstream in(fixture("filter30.jsonl"));
  std::ostringstream accepted, rejected;
  auto report = gp::filter_generations(in, {}, accepted, &rejected);
  std::map<std::string, std::string> got;
  {
    std::istringstream a(accepted.str()), r(rejected.str());
    rk::io::for_each_jsonl(a, [&](std::size_t, const json& j) { got[j["id"]] = "accept"; });
    rk::io::for_each_jsonl(r, [&](std::size_t, const json& j) { got[j["id"]] = j["reason"]; });
  }
  std::map<std::string, std::size_t> expected_counts;
  auto labels = testsupport::read_jsonl(fixture("filter30.labels.jsonl"));
  ASSERT_EQ(labels.size(), 30u);
  for (const auto& l : labels) {
    EXPECT_EQ(got[l["id"]], l["expected"].get<std::string>()) << l["id"];
    ++expected_counts[l["expected"]];
  }
  EXPECT_EQ(report.total, 30u);
  EXPECT_EQ(report.accepted, expected_counts["accept"]);
  for (auto r : gp::kAllRejectReasons) EXPECT_EQ(report.count(r), expected_counts[std::string(gp::to_string(r))]);
  EXPECT_NO_THROW(report.check_reconciles());
}

TEST(Filter, AcceptedRecordsCarryProvenanceAndImageTag) {
  std::ifstream in(fixture("filter30.jsonl"));
  std::ostringstream accepted;
  gp::filter_generations(in, {}, accepted, nullptr);
  std::istringstream a(accepted.str());
  rk::io::for_each_jsonl(a, [&](std::size_t, const json& j) {
    auto rec = rk::io::record_from_json(j);
    EXPECT_FALSE(rec.provenance.kind.empty());
    EXPECT_EQ(rec.provenance.config_hash, "fixture");
    EXPECT_EQ(rec.provenance.model, "chat-model");
    EXPECT_EQ(rec.turns.front().question.rfind("<Image>\n", 0), 0u);
    for (std::size_t t = 1; t < rec.turns.size(); ++t) {
      EXPECT_EQ(rec.turns[t].question.find("<Image>"), std::string::npos);
    }
  });
}

TEST(Filter, ReportReconcilesUnderRandomVerdicts) {
  std::mt19937_64 g(3);
  std::uniform_int_distribution<int> pick(-1, 3);
  for (int trial = 0; trial < 1000; ++trial) {
    gp::FilterReport rep;
    for (int i = 0; i < 20; ++i) {
      int k = pick(g);
      rep.add(k < 0 ? gp::FilterVerdict{} : gp::FilterVerdict{static_cast<gp::RejectReason>(k)});
    }
    EXPECT_NO_THROW(rep.check_reconciles());
    EXPECT_EQ(rep.total, 20u);
  }
}

TEST(Filter, ReasonNamesRoundTrip) {
  for (auto r : gp::kAllRejectReasons) EXPECT_EQ(gp::reject_reason_from_string(gp::to_string(r)), r);
  EXPECT_THROW(gp::reject_reason_from_string("too-long"), rk::SchemaError);
}

// --- grounding ingestion ----------------------------------------------------

TEST(Grounding, SmallBoxesDroppedAndUnknownPhrasesWarned) {
  std::vector<gp::GrounderEntry> entries = {
      {"Two cats", Region(0.0, 0.0, 0.5, 0.5), 0.9},
      {"a speck", Region(0.5, 0.5, 0.51, 0.51), 0.5},
      {"a dragon", Region(0.2, 0.2, 0.4, 0.4), 0.3},
  };
  auto res = gp::ingest_grounding("Two cats sleep on a couch.", entries);
  EXPECT_EQ(res.dropped_small, 1u);
  ASSERT_EQ(res.kept.size(), 2u);
  EXPECT_EQ(res.kept[0].phrase, "Two cats");
  ASSERT_EQ(res.warnings.size(), 1u);
  EXPECT_NE(res.warnings[0].find("a dragon"), std::string::npos);
}

TEST(Grounding, ThresholdAndPixelInput) {
  // 64x48 px on 640x480 is a 0.1 x 0.1 box: kept at the default threshold,
  // dropped at 0.02.
  std::vector<gp::GrounderEntry> entries = {{"sign", rk::PixelBox{200, 40, 64, 48, 640, 480}, 1.0}};
  EXPECT_EQ(gp::ingest_grounding("a sign", entries).kept.size(), 1u);
  EXPECT_EQ(gp::ingest_grounding("a sign", entries, 0.02).dropped_small, 1u);
  EXPECT_THROW(gp::ingest_grounding("a sign", entries, 0.0), rk::ConfigError);
  EXPECT_THROW(gp::ingest_grounding("a sign", {{"x", Region(0, 0, 1, 1), 1.5}}), rk::SchemaError);
}

TEST(Grounding, KeptBoxesNeverBelowThreshold) {
  std::mt19937_64 g(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<gp::GrounderEntry> entries;
    for (int i = 0; i < 8; ++i) {
      double a = u(g), b = u(g), c = u(g), d = u(g);
      if (a == b || c == d) continue;
      entries.push_back({"p", Region(std::min(a, b), std::min(c, d), std::max(a, b), std::max(c, d)), 1.0});
    }
    double min_area = 0.001 + u(g) * 0.1;
    auto res = gp::ingest_grounding("p", entries, min_area);
    EXPECT_EQ(res.kept.size() + res.dropped_small, entries.size());
    for (const auto& k : res.kept) EXPECT_GE(rk::area(k.region), min_area);
  }
}

TEST(Grounding, EntryFromJson) {
  rk::ImageRef img{"i", "coco", 640, 480};
  auto e = gp::grounder_entry_from_json(json::parse(R"({"phrase":"x","pixel":[0,0,320,240]})"), img);
  EXPECT_EQ(rk::normalize(std::get<rk::PixelBox>(e.box)), Region(0, 0, 0.5, 0.5));
  auto r = gp::grounder_entry_from_json(json::parse(R"({"phrase":"x","region":[0.1,0.1,0.2,0.2],"confidence":0.4})"), img);
  EXPECT_EQ(std::get<Region>(r.box), Region(0.1, 0.1, 0.2, 0.2));
  EXPECT_DOUBLE_EQ(r.confidence, 0.4);
  EXPECT_THROW(gp::grounder_entry_from_json(json::parse(R"({"phrase":"x"})"), img), rk::SchemaError);
}

// --- chat client ------------------------------------------------------------

TEST(Client, EchoStubReturnsContentAndLogs) {
  std::ostringstream log_out;
  gp::RequestLog log(log_out);
  gp::ChatClient client(
      [](const std::string& body) {
        auto j = json::parse(body);
        return gp::HttpResult{200, testsupport::completion_body(j["messages"].back()["content"])};
      },
      no_sleep(), &log);
  auto req = gp::make_request(tiny_prompt("hello"));
  EXPECT_EQ(client.generate(req), "hello");
  EXPECT_EQ(log_events(log_out.str(), "request").size(), 1u);
  EXPECT_EQ(log_events(log_out.str(), "attempt").size(), 1u);
  auto replies = log_events(log_out.str(), "reply");
  ASSERT_EQ(replies.size(), 1u);
  EXPECT_EQ(replies[0]["request_id"], req.request_id);
  EXPECT_TRUE(replies[0].contains("time"));
}

TEST(Client, RetriesThenSucceeds) {
  std::ostringstream log_out;
  gp::RequestLog log(log_out);
  std::vector<std::chrono::milliseconds> slept;
  int calls = 0;
  gp::ChatClient client(
      [&](const std::string&) -> gp::HttpResult {
        if (++calls <= 2) throw rk::TransportError("connection reset");
        return {200, testsupport::completion_body("ok")};
      },
      no_sleep(&slept), &log);
  EXPECT_EQ(client.generate(gp::make_request(tiny_prompt(), "m", 0.7, 3)), "ok");
  EXPECT_EQ(calls, 3);
  EXPECT_EQ(log_events(log_out.str(), "attempt").size(), 3u);
  ASSERT_EQ(slept.size(), 2u);
  EXPECT_EQ(slept[0], std::chrono::milliseconds(500));
  EXPECT_EQ(slept[1], std::chrono::milliseconds(1000));
}

TEST(Client, ExhaustedRetriesRaiseTransportError) {
  int calls = 0;
  gp::ChatClient client(
      [&](const std::string&) {
        ++calls;
        return gp::HttpResult{503, "busy"};
      },
      no_sleep());
  EXPECT_THROW(client.generate(gp::make_request(tiny_prompt(), "m", 0.7, 2)), rk::TransportError);
  EXPECT_EQ(calls, 2);
}

TEST(Client, RateLimitIsRetried) {
  int calls = 0;
  gp::ChatClient client(
      [&](const std::string&) {
        return ++calls == 1 ? gp::HttpResult{429, "slow down"} : gp::HttpResult{200, testsupport::completion_body("ok")};
      },
      no_sleep());
  EXPECT_EQ(client.generate(gp::make_request(tiny_prompt())), "ok");
  EXPECT_EQ(calls, 2);
}

TEST(Client, NonRetryableStatusIsServiceError) {
  int calls = 0;
  gp::ChatClient client(
      [&](const std::string&) {
        ++calls;
        return gp::HttpResult{401, "bad key"};
      },
      no_sleep());
  try {
    client.generate(gp::make_request(tiny_prompt(), "m", 0.7, 5));
    FAIL() << "expected ServiceError";
  } catch (const rk::ServiceError& e) {
    EXPECT_EQ(e.status(), 401);
  }
  EXPECT_EQ(calls, 1);
}

TEST(Client, MalformedCompletionBodyIsServiceError) {
  gp::ChatClient client([](const std::string&) { return gp::HttpResult{200, "{\"choices\": []}"}; }, no_sleep());
  EXPECT_THROW(client.generate(gp::make_request(tiny_prompt())), rk::ServiceError);
}

TEST(Client, BackoffCapped) {
  std::vector<std::chrono::milliseconds> slept;
  auto opts = no_sleep(&slept);
  opts.base_delay = std::chrono::milliseconds(100);
  opts.max_delay = std::chrono::milliseconds(300);
  gp::ChatClient client([](const std::string&) { return gp::HttpResult{500, ""}; }, opts);
  EXPECT_THROW(client.generate(gp::make_request(tiny_prompt(), "m", 0.7, 5)), rk::TransportError);
  std::vector<std::chrono::milliseconds> want = {std::chrono::milliseconds(100), std::chrono::milliseconds(200),
                                                 std::chrono::milliseconds(300), std::chrono::milliseconds(300)};
  EXPECT_EQ(slept, want);
}

TEST(Client, RequestIdIsContentHash) {
  auto a = gp::make_request(tiny_prompt("x"));
  EXPECT_EQ(a.request_id, gp::make_request(tiny_prompt("x")).request_id);
  EXPECT_NE(a.request_id, gp::make_request(tiny_prompt("y")).request_id);
  EXPECT_NE(a.request_id, gp::make_request(tiny_prompt("x"), "chat-model", 0.2).request_id);
  EXPECT_EQ(a.request_id, rk::content_hash(rk::io::dump_line(a.body())));
  EXPECT_THROW(gp::make_request({{pg::Role::kUser, "no system"}}), rk::ConfigError);
  EXPECT_THROW(gp::make_request(tiny_prompt(), "m", 0.7, 0), rk::ConfigError);
}

TEST(Client, CompletedRepliesSkipTransportAndTornLines) {
  std::string log =
      R"({"event":"request","request_id":"a"})" "\n"
      R"({"event":"reply","request_id":"a","content":"first"})" "\n"
      R"({"event":"failure","request_id":"b","error":"x"})" "\n"
      R"({"event":"reply","request_id":"c","cont)";
  std::istringstream in(log);
  auto done = gp::load_completed_replies(in);
  ASSERT_EQ(done.size(), 1u);
  EXPECT_EQ(done["a"], "first");

  auto req = gp::make_request(tiny_prompt());
  gp::ChatClient client([](const std::string&) -> gp::HttpResult { throw rk::TransportError("offline"); },
                        no_sleep());
  client.set_completed({{req.request_id, "cached"}});
  EXPECT_EQ(client.generate(req), "cached");
  EXPECT_EQ(client.replayed(), 1u);
}

TEST(Client, BatchKeepsInputOrderUnderConcurrency) {
  std::atomic<int> in_flight{0}, peak{0};
  gp::ChatClient client(
      [&](const std::string& body) {
        int now = ++in_flight;
        int prev = peak.load();
        while (now > prev && !peak.compare_exchange_weak(prev, now)) {
        }
        auto j = json::parse(body);
        std::string q = j["messages"].back()["content"];
        std::this_thread::sleep_for(std::chrono::microseconds(200 * (7 - q.size() % 7)));
        --in_flight;
        if (q == "q13") return gp::HttpResult{400, "rejected"};
        return gp::HttpResult{200, testsupport::completion_body("re:" + q)};
      },
      no_sleep());
  std::vector<gp::GenerationRequest> reqs;
  for (int i = 0; i < 40; ++i) reqs.push_back(gp::make_request(tiny_prompt("q" + std::to_string(i))));
  auto out = gp::run_batch(client, reqs, 4);
  ASSERT_EQ(out.size(), 40u);
  for (int i = 0; i < 40; ++i) {
    if (i == 13) {
      EXPECT_FALSE(out[13].reply);
      EXPECT_FALSE(out[13].error.empty());
    } else {
      EXPECT_EQ(out[static_cast<std::size_t>(i)].reply.value_or(""), "re:q" + std::to_string(i));
    }
  }
  EXPECT_LE(peak.load(), 4);
}

// --- pipeline stages --------------------------------------------------------

TEST(Pipeline, BuildPromptsDeterministicWithGroundings) {
  auto profile = pg::load_profile(testsupport::profile_root(), pg::TaskId::kGeneral);
  auto run = [&](std::uint64_t seed) {
    std::ifstream b(fixture("bundles3.jsonl")), g(fixture("groundings3.jsonl"));
    std::ostringstream out, diag;
    auto stats = gp::build_prompts(b, &g, profile, {seed, gp::kDefaultMinArea}, out, diag);
    EXPECT_EQ(stats.bundles, 3u);
    EXPECT_EQ(stats.written, 3u);
    EXPECT_EQ(stats.groundings_dropped, 1u);
    return out.str();
  };
  auto a = run(5);
  EXPECT_EQ(a, run(5));
  std::istringstream in(a);
  std::size_t n = 0;
  rk::io::for_each_jsonl(in, [&](std::size_t, const json& j) {
    auto job = gp::prompt_job_from_json(j);
    EXPECT_TRUE(pg::has_prompt_shape(job.messages));
    EXPECT_EQ(job.seed, 5u);
    EXPECT_EQ(job.messages.back().content.find("a speck"), std::string::npos);
    ++n;
  });
  EXPECT_EQ(n, 3u);
}

TEST(Pipeline, BundlesMissingSectionsAreSkipped) {
  auto profile = pg::load_profile(testsupport::profile_root(), pg::TaskId::kGeneral);
  std::istringstream b(R"({"image":{"image_id":"x"},"captions":["A cat."]})" "\n");
  std::ostringstream out, diag;
  auto stats = gp::build_prompts(b, nullptr, profile, {}, out, diag);
  EXPECT_EQ(stats.skipped, 1u);
  EXPECT_EQ(stats.written, 0u);
  EXPECT_NE(diag.str().find("x"), std::string::npos);
}

TEST(Pipeline, SchemaErrorsCarryLineNumbers) {
  auto profile = pg::load_profile(testsupport::profile_root(), pg::TaskId::kGeneral);
  std::istringstream b("\n{\"captions\": []}\n");
  std::ostringstream out, diag;
  try {
    gp::build_prompts(b, nullptr, profile, {}, out, diag);
    FAIL() << "expected SchemaError";
  } catch (const rk::SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(Pipeline, ReplayedRunFiltersToIdenticalBytes) {
  auto profile = pg::load_profile(testsupport::profile_root(), pg::TaskId::kGeneral);
  std::string prompts;
  {
    std::ifstream b(fixture("bundles3.jsonl")), g(fixture("groundings3.jsonl"));
    std::ostringstream out, diag;
    gp::build_prompts(b, &g, profile, {9, gp::kDefaultMinArea}, out, diag);
    prompts = out.str();
  }
  auto generate_and_filter = [&](gp::ChatClient& client) {
    std::istringstream in(prompts);
    std::ostringstream gens;
    gp::generate(in, client, {}, gens);
    std::istringstream gin(gens.str());
    std::ostringstream accepted;
    gp::filter_generations(gin, {}, accepted, nullptr);
    return accepted.str();
  };

  std::ostringstream log_out;
  gp::RequestLog log(log_out);
  gp::ChatClient live(testsupport::scripted_reply, no_sleep(), &log);
  auto first = generate_and_filter(live);
  EXPECT_FALSE(first.empty());

  std::istringstream recorded(log_out.str());
  gp::ChatClient offline([](const std::string&) -> gp::HttpResult { throw rk::TransportError("offline"); },
                         no_sleep());
  offline.set_completed(gp::load_completed_replies(recorded));
  EXPECT_EQ(generate_and_filter(offline), first);
  EXPECT_EQ(offline.replayed(), 3u);
}

TEST(Pipeline, FailedGenerationsCountAsParseFailures) {
  std::istringstream prompts(testsupport::slurp(fixture("bundles3.jsonl")));
  auto profile = pg::load_profile(testsupport::profile_root(), pg::TaskId::kGeneral);
  std::ostringstream jobs, diag;
  std::ifstream g(fixture("groundings3.jsonl"));
  gp::build_prompts(prompts, &g, profile, {}, jobs, diag);
  gp::ChatClient down([](const std::string&) { return gp::HttpResult{503, ""}; }, no_sleep());
  std::istringstream jin(jobs.str());
  std::ostringstream gens;
  auto stats = gp::generate(jin, down, {std::string(gp::kDefaultModel), 0.7, 1, 2}, gens);
  EXPECT_EQ(stats.failures, 3u);
  std::istringstream gin(gens.str());
  std::ostringstream accepted;
  auto report = gp::filter_generations(gin, {}, accepted, nullptr);
  EXPECT_EQ(report.count(gp::RejectReason::kParseFailure), 3u);
  EXPECT_TRUE(accepted.str().empty());
}

TEST(Pipeline, StatsOverConvertedFixture) {
  std::ifstream in(fixture("gqa10.expected.jsonl"));
  auto s = gp::compute_stats(in);
  EXPECT_EQ(s.records, 10u);
  EXPECT_EQ(s.turns, 10u);
  EXPECT_EQ(s.by_provenance["conversion-gqa"], 10u);
  // Question mentions per record in the fixture: 1,2,1,0,1,1,1,1,2,1.
  std::map<std::size_t, std::size_t> want = {{0, 1}, {1, 7}, {2, 2}};
  EXPECT_EQ(s.regions_per_question, want);
}

TEST(Pipeline, StatsCountRejections) {
  std::ifstream recs(fixture("vcr10.expected.jsonl"));
  std::istringstream rej(R"({"id":"a","reason":"malformed-region"})" "\n" R"({"id":"b","reason":"malformed-region"})" "\n");
  auto s = gp::compute_stats(recs, &rej);
  EXPECT_EQ(s.records, 10u);
  EXPECT_EQ(s.rejection_reasons["malformed-region"], 2u);
  EXPECT_EQ(s.rejection_reasons["parse-failure"], 0u);
}
