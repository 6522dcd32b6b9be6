#pragma once

// HTTP+JSON front end for AnnotationService.
//
//   GET  /api/health
//   GET  /api/tasks/next?evaluator=ID
//   POST /api/verdicts          {"task_token", "verdict"}
//   GET  /api/results
//   GET  /*                     static UI bundle, when a directory is set
//
// With an access token configured, /api/* except health needs either
// "Authorization: Bearer <token>" or "X-Access-Token: <token>".

#include <httplib.h>

#include <functional>
#include <optional>
#include <string>

#include "regionkit/annosrv/service.hpp"

namespace regionkit::annosrv {

struct ServerOptions {
  std::string static_dir;
  std::optional<std::string> access_token;
};

namespace detail {

inline void send_json(httplib::Response& res, int status, const io::json& body) {
  res.status = status;
  res.set_content(io::dump_line(body), "application/json");
}

inline bool authorized(const httplib::Request& req, const ServerOptions& opts) {
  if (!opts.access_token || opts.access_token->empty()) return true;
  if (req.get_header_value("X-Access-Token") == *opts.access_token) return true;
  return req.get_header_value("Authorization") == "Bearer " + *opts.access_token;
}

// Runs `fn`, mapping library errors to HTTP statuses.
inline void guarded(const httplib::Request& req, httplib::Response& res, const ServerOptions& opts,
                    const std::function<void()>& fn) {
  if (!authorized(req, opts)) {
    send_json(res, 401, {{"error", "missing or wrong access token"}});
    return;
  }
  try {
    fn();
  } catch (const NotFoundError& e) {
    send_json(res, 404, {{"error", e.what()}});
  } catch (const SchemaError& e) {
    send_json(res, 400, {{"error", e.what()}});
  } catch (const io::json::exception& e) {
    send_json(res, 400, {{"error", std::string("bad JSON: ") + e.what()}});
  } catch (const EvaluationError& e) {
    send_json(res, 409, {{"error", e.what()}});
  } catch (const std::exception& e) {
    send_json(res, 500, {{"error", e.what()}});
  }
}

}  // namespace detail

inline void install_routes(httplib::Server& server, AnnotationService& service,
                           const ServerOptions& opts) {
  server.Get("/api/health", [](const httplib::Request&, httplib::Response& res) {
    detail::send_json(res, 200, {{"status", "ok"}});
  });

  server.Get("/api/tasks/next", [&service, opts](const httplib::Request& req, httplib::Response& res) {
    detail::guarded(req, res, opts, [&] {
      if (!req.has_param("evaluator")) throw SchemaError("missing evaluator parameter");
      auto task = service.next_task(req.get_param_value("evaluator"));
      if (task) {
        detail::send_json(res, 200, {{"done", false}, {"task", *task}});
      } else {
        detail::send_json(res, 200, {{"done", true}, {"total", service.tasks_per_evaluator()}});
      }
    });
  });

  server.Post("/api/verdicts", [&service, opts](const httplib::Request& req, httplib::Response& res) {
    detail::guarded(req, res, opts, [&] {
      auto body = io::json::parse(req.body);
      auto rec = service.submit_verdict(io::require_string(body, "task_token"),
                                        io::require_string(body, "verdict"));
      // Echo only what the evaluator already saw; never the model ids.
      detail::send_json(res, 200, {{"status", "stored"},
                                   {"item_id", rec.item_id},
                                   {"verdict", evalkit::to_string(rec.verdict)}});
    });
  });

  server.Get("/api/results", [&service, opts](const httplib::Request& req, httplib::Response& res) {
    detail::guarded(req, res, opts, [&] { detail::send_json(res, 200, service.results()); });
  });

  if (!opts.static_dir.empty() && !server.set_mount_point("/", opts.static_dir)) {
    throw ConfigError("static directory not found: " + opts.static_dir);
  }
}

}  // namespace regionkit::annosrv
