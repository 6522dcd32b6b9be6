// regionkit: command-line entry point.
//
// Exit codes: 0 success, 1 fatal error, 2 schema error in an input file.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "regionkit/annosrv/http.hpp"
#include "regionkit/annosrv/service.hpp"
#include "regionkit/annosrv/store.hpp"
#include "regionkit/convert/convert.hpp"
#include "regionkit/convert/sources.hpp"
#include "regionkit/evalkit/reports.hpp"
#include "regionkit/genpipe/client.hpp"
#include "regionkit/genpipe/http_transport.hpp"
#include "regionkit/genpipe/pipeline.hpp"
#include "regionkit/promptgen/profile.hpp"

namespace rk = regionkit;
using rk::io::json;

namespace {

constexpr int kExitFatal = 1;
constexpr int kExitSchema = 2;

constexpr const char* kCredentialEnv = "REGIONKIT_API_KEY";
constexpr const char* kEndpointEnv = "REGIONKIT_ENDPOINT";
constexpr const char* kAccessTokenEnv = "REGIONKIT_ACCESS_TOKEN";
constexpr const char* kDefaultEndpoint = "http://127.0.0.1:8000/v1/chat/completions";

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw rk::ConfigError("cannot read " + path);
  return in;
}

std::ofstream open_out(const std::string& path, bool append = false) {
  std::ofstream out(path, std::ios::binary | (append ? std::ios::app : std::ios::trunc));
  if (!out) throw rk::ConfigError("cannot write " + path);
  return out;
}

void write_file(const std::string& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

// ---------------------------------------------------------------------------

struct ConvertArgs {
  std::string source;
  std::string in;
  std::string out;
  std::string errors;
  std::uint64_t seed = 0;
};

int run_convert(const ConvertArgs& a) {
  auto in = open_in(a.in);
  auto out = open_out(a.out);
  std::ofstream err_file;
  if (!a.errors.empty()) err_file = open_out(a.errors);
  std::ostream& err = a.errors.empty() ? std::cerr : err_file;

  rk::convert::Stamp stamp{rk::genpipe::config_hash({{"stage", "convert"}, {"source", a.source}, {"seed", a.seed}}),
                           a.seed};
  std::size_t lines = 0, written = 0, failed = 0;
  auto fail = [&](std::size_t lineno, const std::string& msg) {
    ++failed;
    err << a.in << ":" << lineno << ": " << msg << '\n';
  };
  rk::io::for_each_jsonl(
      in,
      [&](std::size_t lineno, const json& j) {
        ++lines;
        try {
          rk::InstructionRecord rec;
          if (a.source == "gqa" || a.source == "gqa-raw") {
            auto s = a.source == "gqa" ? rk::convert::gqa_from_json(j, lineno)
                                       : rk::convert::gqa_raw_from_json(j, lineno);
            rec = rk::convert::convert_gqa(s.record, s.image, stamp);
          } else if (a.source == "vcr") {
            auto s = rk::convert::vcr_from_json(j, lineno);
            rec = rk::convert::convert_vcr(s.record, s.image, stamp);
          } else {
            rec = rk::convert::format_stage1(rk::convert::stage1_from_json(j, lineno), stamp);
          }
          rk::io::write_jsonl(out, rk::io::to_json(rec));
          ++written;
        } catch (const rk::Error& e) {
          fail(lineno, e.what());
        }
      },
      [&](std::size_t lineno, const std::string& msg) {
        ++lines;
        fail(lineno, "invalid JSON: " + msg);
      });
  std::cerr << "convert " << a.source << ": " << lines << " lines, " << written << " records, " << failed
            << " errors\n";
  // Tolerate isolated bad lines: fail when errors exceed 1% of the input,
  // with a floor of one line.
  std::size_t allowed = std::max<std::size_t>(1, lines / 100);
  return failed > allowed ? kExitSchema : 0;
}

// ---------------------------------------------------------------------------

struct PromptArgs {
  std::string bundles;
  std::string profile_root;
  std::string task;
  std::string groundings;
  std::string out;
  double min_area = rk::genpipe::kDefaultMinArea;
  std::uint64_t seed = 0;
};

int run_build_prompts(const PromptArgs& a) {
  auto profile = rk::promptgen::load_profile(a.profile_root, rk::promptgen::task_from_string(a.task));
  auto in = open_in(a.bundles);
  std::optional<std::ifstream> gin;
  if (!a.groundings.empty()) gin = open_in(a.groundings);
  auto out = open_out(a.out);
  auto stats = rk::genpipe::build_prompts(in, gin ? &*gin : nullptr, profile, {a.seed, a.min_area}, out,
                                          std::cerr);
  std::cerr << "build-prompts " << a.task << ": " << stats.bundles << " bundles, " << stats.written
            << " prompts, " << stats.skipped << " skipped, " << stats.groundings_dropped
            << " small groundings dropped\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string prompts;
  std::string out;
  std::string log;
  std::string endpoint;
  rk::genpipe::GenerateOptions opts;
  bool replay_only = false;
};

int run_generate(const GenerateArgs& a) {
  std::unordered_map<std::string, std::string> completed;
  {
    std::ifstream prev(a.log);
    if (prev) completed = rk::genpipe::load_completed_replies(prev);
  }
  auto log_out = open_out(a.log, true);
  rk::genpipe::RequestLog log(log_out);
  rk::genpipe::Transport transport;
  if (a.replay_only) {
    transport = [](const std::string&) -> rk::genpipe::HttpResult {
      throw rk::TransportError("replay-only run: request not in the log");
    };
  } else {
    std::string endpoint = a.endpoint.empty() ? env_or(kEndpointEnv, kDefaultEndpoint) : a.endpoint;
    transport = rk::genpipe::http_transport(endpoint, env_or(kCredentialEnv, ""));
  }
  rk::genpipe::ClientOptions copts;
  if (a.replay_only) copts.base_delay = std::chrono::milliseconds(0);
  rk::genpipe::ChatClient client(transport, copts, &log);
  client.set_completed(std::move(completed));
  auto in = open_in(a.prompts);
  auto out = open_out(a.out);
  auto opts = a.opts;
  if (a.replay_only) opts.max_attempts = 1;
  auto stats = rk::genpipe::generate(in, client, opts, out);
  std::cerr << "generate: " << stats.prompts << " prompts, " << stats.replies << " replies ("
            << stats.replayed << " from the log), " << stats.failures << " failures\n";
  return stats.failures > 0 ? kExitFatal : 0;
}

// ---------------------------------------------------------------------------

struct FilterArgs {
  std::string in;
  std::string out;
  std::string rejected;
  std::string report;
  bool strict = false;
};

int run_filter(const FilterArgs& a) {
  auto in = open_in(a.in);
  auto out = open_out(a.out);
  std::optional<std::ofstream> rej;
  if (!a.rejected.empty()) rej = open_out(a.rejected);
  auto report = rk::genpipe::filter_generations(in, {a.strict}, out, rej ? &*rej : nullptr);
  std::string doc = report.to_json().dump(2) + "\n";
  if (a.report.empty()) {
    std::cout << doc;
  } else {
    write_file(a.report, doc);
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct StatsArgs {
  std::string in;
  std::string rejected;
  std::string out;
};

int run_stats(const StatsArgs& a) {
  auto in = open_in(a.in);
  std::optional<std::ifstream> rej;
  if (!a.rejected.empty()) rej = open_in(a.rejected);
  auto s = rk::genpipe::compute_stats(in, rej ? &*rej : nullptr);
  std::string doc = s.to_json().dump(2) + "\n";
  if (a.out.empty()) {
    std::cout << doc;
  } else {
    write_file(a.out, doc);
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string kind;
  std::string in;
  std::string items;
  std::string model;
  std::string provider = "bow";
  std::string embed_endpoint;
  std::string embed_model = "embedding-model";
  std::string json_out;
  std::string table_out;
};

int run_eval(const EvalArgs& a) {
  auto in = open_in(a.in);
  rk::evalkit::Report report;
  if (a.kind == "recognition") {
    auto items = rk::evalkit::read_recognition(in);
    std::unique_ptr<rk::evalkit::EmbeddingProvider> provider;
    if (a.provider == "bow") {
      provider = std::make_unique<rk::evalkit::BagOfWordsProvider>(
          rk::evalkit::reference_vocabulary_provider(items));
    } else {
      if (a.embed_endpoint.empty()) throw rk::ConfigError("--embed-endpoint is required for the remote provider");
      provider = std::make_unique<rk::evalkit::RemoteEmbeddingProvider>(
          rk::genpipe::http_transport(a.embed_endpoint, env_or(kCredentialEnv, "")), a.embed_model);
    }
    report = rk::evalkit::evaluate_recognition(items, *provider);
  } else if (a.kind == "vqa") {
    report = rk::evalkit::evaluate_vqa(in);
  } else if (a.kind == "pope") {
    report = rk::evalkit::evaluate_pope(in);
  } else if (a.kind == "winrate") {
    auto rankings = rk::evalkit::read_rankings(in);
    std::vector<rk::evalkit::FineEvalItem> items;
    if (!a.items.empty()) {
      auto iin = open_in(a.items);
      items = rk::evalkit::read_items(iin);
    }
    report = rk::evalkit::evaluate_winrate(rankings, a.items.empty() ? nullptr : &items, a.model);
  } else {
    report = rk::evalkit::evaluate_quality(in);
  }
  if (!a.json_out.empty()) write_file(a.json_out, report.json.dump(2) + "\n");
  if (!a.table_out.empty()) {
    write_file(a.table_out, report.table);
  } else {
    std::cout << report.table;
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct ServeArgs {
  std::string items;
  std::string data_dir = ".";
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string static_dir;
  std::vector<std::string> evaluators;
  std::string image_base_url;
  std::uint64_t seed = 0;
};

int run_serve(const ServeArgs& a) {
  auto in = open_in(a.items);
  auto items = rk::evalkit::read_items(in);
  rk::annosrv::RankingStore store(a.data_dir + "/rankings.jsonl");
  rk::annosrv::AnnotationService service(items, {a.seed, a.image_base_url, a.evaluators, {}}, store);
  httplib::Server server;
  rk::annosrv::ServerOptions opts{a.static_dir, std::nullopt};
  if (const char* tok = std::getenv(kAccessTokenEnv); tok && *tok) opts.access_token = tok;
  rk::annosrv::install_routes(server, service, opts);
  std::cerr << "serving " << items.size() << " items, " << service.tasks_per_evaluator()
            << " tasks per evaluator on " << a.host << ":" << a.port << "\n";
  if (!server.listen(a.host, a.port)) throw rk::ConfigError("cannot bind " + a.host + ":" + std::to_string(a.port));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Region-level instruction data toolkit"};
  app.require_subcommand(1);

  ConvertArgs conv;
  auto* c = app.add_subcommand("convert", "Convert source-dataset JSONL to instruction records");
  c->add_option("source", conv.source, "Source format")
      ->required()
      ->check(CLI::IsMember({"gqa", "gqa-raw", "vcr", "stage1"}));
  c->add_option("--in", conv.in, "Input JSONL")->required();
  c->add_option("--out", conv.out, "Output records JSONL")->required();
  c->add_option("--errors", conv.errors, "Per-line error report (default stderr)");
  c->add_option("--seed", conv.seed, "Seed recorded in provenance");

  PromptArgs pr;
  auto* p = app.add_subcommand("build-prompts", "Assemble chat prompts from annotation bundles");
  p->add_option("--bundles", pr.bundles, "Annotation bundles JSONL")->required();
  p->add_option("--profiles", pr.profile_root, "Directory holding one subdirectory per task")->required();
  p->add_option("--task", pr.task, "Task id")->required();
  p->add_option("--groundings", pr.groundings, "Grounding-model output JSONL");
  p->add_option("--min-area", pr.min_area, "Drop groundings smaller than this area fraction");
  p->add_option("--seed", pr.seed, "Sampling seed");
  p->add_option("--out", pr.out, "Prompt jobs JSONL")->required();

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Send prompts to the chat-completion service");
  g->add_option("--prompts", gen.prompts, "Prompt jobs JSONL")->required();
  g->add_option("--out", gen.out, "Generations JSONL")->required();
  g->add_option("--log", gen.log, "Append-only request log; completed replies are reused")->required();
  g->add_option("--endpoint", gen.endpoint, std::string("Chat endpoint URL (default $") + kEndpointEnv + ")");
  g->add_option("--model", gen.opts.model, "Model name");
  g->add_option("--temperature", gen.opts.temperature, "Sampling temperature");
  g->add_option("--concurrency", gen.opts.concurrency, "Requests in flight")->check(CLI::PositiveNumber);
  g->add_option("--max-attempts", gen.opts.max_attempts, "Attempts per request")->check(CLI::PositiveNumber);
  g->add_flag("--replay-only", gen.replay_only, "Use only replies already in the log");

  FilterArgs fil;
  auto* f = app.add_subcommand("filter", "Parse and filter generations into instruction records");
  f->add_option("--in", fil.in, "Generations JSONL")->required();
  f->add_option("--out", fil.out, "Accepted records JSONL")->required();
  f->add_option("--rejected", fil.rejected, "Rejected entries JSONL");
  f->add_option("--report", fil.report, "Filter report JSON (default stdout)");
  f->add_flag("--strict", fil.strict, "Reject single-turn questions without a region");

  StatsArgs st;
  auto* s = app.add_subcommand("stats", "Corpus statistics");
  s->add_option("--in", st.in, "Records JSONL")->required();
  s->add_option("--rejected", st.rejected, "Rejected entries JSONL from filter");
  s->add_option("--out", st.out, "Stats JSON (default stdout)");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluation metrics");
  e->add_option("kind", ev.kind, "Evaluation kind")
      ->required()
      ->check(CLI::IsMember({"recognition", "vqa", "pope", "winrate", "quality"}));
  e->add_option("--in", ev.in, "Input JSONL")->required();
  e->add_option("--items", ev.items, "FineEval items JSONL (winrate breakdown)");
  e->add_option("--model", ev.model, "Only this model (winrate)");
  e->add_option("--provider", ev.provider, "Embedding provider")->check(CLI::IsMember({"bow", "remote"}));
  e->add_option("--embed-endpoint", ev.embed_endpoint, "Embedding service URL (remote provider)");
  e->add_option("--embed-model", ev.embed_model, "Embedding model name (remote provider)");
  e->add_option("--json", ev.json_out, "Summary JSON output");
  e->add_option("--table", ev.table_out, "Text table output (default stdout)");

  ServeArgs sv;
  auto* v = app.add_subcommand("serve", "Run the pairwise ranking service");
  v->add_option("--items", sv.items, "FineEval items JSONL")->required();
  v->add_option("--data-dir", sv.data_dir, "Directory for rankings.jsonl");
  v->add_option("--host", sv.host, "Bind address");
  v->add_option("--port", sv.port, "Port");
  v->add_option("--static", sv.static_dir, "UI bundle directory");
  v->add_option("--evaluators", sv.evaluators, "Evaluator ids")->required()->delimiter(',');
  v->add_option("--image-base-url", sv.image_base_url, "Prefix for image locators");
  v->add_option("--seed", sv.seed, "Shuffle and display-order seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    int code = app.exit(err);
    return code == 0 ? 0 : kExitFatal;
  }

  try {
    if (*c) return run_convert(conv);
    if (*p) return run_build_prompts(pr);
    if (*g) return run_generate(gen);
    if (*f) return run_filter(fil);
    if (*s) return run_stats(st);
    if (*e) return run_eval(ev);
    if (*v) return run_serve(sv);
  } catch (const rk::SchemaError& err) {
    std::cerr << "schema error: " << err.what() << '\n';
    return kExitSchema;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitFatal;
  }
  return kExitFatal;
}
