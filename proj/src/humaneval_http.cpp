#include "advtext/humaneval_http.hpp"

#include <httplib.h>

#include "advtext/errors.hpp"

namespace advtext::humaneval {

using nlohmann::json;

namespace {

void send(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send(res, status, json{{"error", message}});
}

json parse_body(const httplib::Request& req) {
  try {
    json body = json::parse(req.body);
    if (!body.is_object()) throw ContractError("request body must be a JSON object");
    return body;
  } catch (const json::parse_error&) {
    throw ContractError("request body is not valid JSON");
  }
}

std::map<std::string, Answers> parse_answers(const json& body) {
  if (!body.contains("answers") || !body.at("answers").is_array()) throw ContractError("answers array missing");
  std::map<std::string, Answers> out;
  for (const json& entry : body.at("answers")) {
    if (!entry.is_object() || !entry.contains("item_id") || !entry.at("item_id").is_string()) {
      throw ContractError("every answer needs an item_id");
    }
    const std::string id = entry.at("item_id").get<std::string>();
    if (!out.emplace(id, answers_from_json(entry)).second) throw ContractError("duplicate answer for '" + id + "'");
  }
  return out;
}

json items_view(const std::vector<AnnotationItem>& items) {
  json out = json::array();
  for (const AnnotationItem& item : items) out.push_back(public_view(item));
  return out;
}

json session_view(const WorkerSession& s) {
  json j{{"worker_id", s.worker_id},
         {"locale", s.locale},
         {"state", to_string(s.state)},
         {"pages_submitted", s.pages_submitted}};
  j["quiz_score"] = s.quiz_score ? json(*s.quiz_score) : json(nullptr);
  return j;
}

std::string worker(const httplib::Request& req) { return req.path_params.at("worker"); }

void authorize(const Service& service, const httplib::Request& req) {
  if (!req.has_header("X-Session-Token")) throw RejectedError("missing X-Session-Token header");
  service.check_token(worker(req), req.get_header_value("X-Session-Token"));
}

}  // namespace

void mount(httplib::Server& server, Service& service) {
  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const NotFoundError& e) {
      send_error(res, 404, e.what());
    } catch (const RejectedError& e) {
      send_error(res, 403, e.what());
    } catch (const ConflictError& e) {
      send_error(res, 409, e.what());
    } catch (const CapacityError& e) {
      send_error(res, 503, e.what());
    } catch (const ContractError& e) {
      send_error(res, 400, e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  });

  server.Post("/api/sessions", [&service](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    if (!body.contains("worker_id") || !body.at("worker_id").is_string() || !body.contains("locale") ||
        !body.at("locale").is_string()) {
      throw ContractError("worker_id and locale are required");
    }
    const std::string id = body.at("worker_id").get<std::string>();
    const WorkerSession s = service.start_session(id, body.at("locale").get<std::string>());
    json out = session_view(s);
    out["token"] = s.token;
    out["quiz"] = items_view(service.quiz(id));
    send(res, 201, out);
  });

  server.Get("/api/sessions/:worker", [&service](const httplib::Request& req, httplib::Response& res) {
    authorize(service, req);
    send(res, 200, session_view(service.session(worker(req))));
  });

  server.Get("/api/sessions/:worker/quiz", [&service](const httplib::Request& req, httplib::Response& res) {
    authorize(service, req);
    send(res, 200, json{{"items", items_view(service.quiz(worker(req)))}});
  });

  server.Post("/api/sessions/:worker/quiz", [&service](const httplib::Request& req, httplib::Response& res) {
    authorize(service, req);
    service.submit_quiz(worker(req), parse_answers(parse_body(req)));
    send(res, 200, session_view(service.session(worker(req))));
  });

  server.Get("/api/sessions/:worker/page", [&service](const httplib::Request& req, httplib::Response& res) {
    authorize(service, req);
    const std::vector<AnnotationItem> page = service.next_page(worker(req));
    const WorkerSession s = service.session(worker(req));
    json out{{"state", to_string(s.state)}, {"items", items_view(page)}};
    out["page"] = page.empty() ? json(nullptr) : json(s.pages_served - 1);
    send(res, 200, out);
  });

  server.Post("/api/sessions/:worker/page", [&service](const httplib::Request& req, httplib::Response& res) {
    authorize(service, req);
    const json body = parse_body(req);
    std::optional<std::size_t> index;
    if (body.contains("page") && !body.at("page").is_null()) {
      if (!body.at("page").is_number_unsigned()) throw ContractError("page must be a non-negative integer");
      index = body.at("page").get<std::size_t>();
    }
    service.submit_page(worker(req), parse_answers(body), index);
    send(res, 200, session_view(service.session(worker(req))));
  });

  server.Get("/api/options", [](const httplib::Request&, httplib::Response& res) {
    send(res, 200,
         json{{"q1", paraphrase_options()}, {"q2", naturalness_options()}, {"q3", sentiment_options()}});
  });

  server.Get("/api/admin/aggregate", [&service](const httplib::Request& req, httplib::Response& res) {
    const std::string& expected = service.config().admin_token;
    if (expected.empty()) return send_error(res, 403, "admin access is disabled");
    if (req.get_header_value("X-Admin-Token") != expected) return send_error(res, 401, "invalid admin token");
    send(res, 200, to_json(service.aggregate()));
  });

  const std::filesystem::path& assets = service.config().static_dir;
  if (!assets.empty()) {
    if (!server.set_mount_point("/", assets.string())) {
      throw FormatError("static directory " + assets.string() + " does not exist");
    }
  }
}

void serve(Service& service) {
  httplib::Server server;
  mount(server, service);
  if (!server.listen(service.config().host, service.config().port)) {
    throw std::runtime_error("cannot listen on " + service.config().host + ":" +
                             std::to_string(service.config().port));
  }
}

}  // namespace advtext::humaneval
