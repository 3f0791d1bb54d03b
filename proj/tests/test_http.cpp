#include <doctest.h>
#include <httplib.h>

#include <fstream>
#include <thread>

#include "advtext/errors.hpp"
#include "advtext/humaneval_http.hpp"
#include "humaneval_fixture.hpp"
#include "support.hpp"

using namespace advtext;
using namespace advtext::humaneval;
using nlohmann::json;

namespace {

// Serves a Service on an ephemeral loopback port for the lifetime of the object.
class Running {
 public:
  explicit Running(ServiceConfig config) : service_(test::annotated_items(), config, {}) {
    mount(server_, service_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    REQUIRE(port_ > 0);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~Running() {
    server_.stop();
    thread_.join();
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_connection_timeout(5);
    return c;
  }
  Service& service() { return service_; }

 private:
  Service service_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

json body_of(const httplib::Result& r) {
  REQUIRE(r);
  return json::parse(r->body);
}

json answers_json(const std::map<std::string, Answers>& answers) {
  json out = json::array();
  for (const auto& [id, a] : answers) {
    json entry = to_json(a);
    entry["item_id"] = id;
    out.push_back(entry);
  }
  return out;
}

// Looks up the full items behind a public listing.
std::vector<AnnotationItem> resolve(Service& svc, const json& listing) {
  std::vector<AnnotationItem> out;
  for (const json& view : listing) out.push_back(svc.item(view.at("id").get<std::string>()));
  return out;
}

httplib::Headers session_headers(const std::string& token) { return {{"X-Session-Token", token}}; }

}  // namespace

TEST_CASE("a worker session over HTTP") {
  ServiceConfig config;
  config.admin_token = "admin";
  Running run(config);
  auto cli = run.client();

  auto r = cli.Post("/api/sessions", json{{"worker_id", "w1"}, {"locale", "US"}}.dump(), "application/json");
  REQUIRE(r);
  CHECK(r->status == 201);
  const json started = json::parse(r->body);
  const std::string token = started.at("token");
  CHECK(started.at("state") == "quiz");
  REQUIRE(started.at("quiz").size() == 10);
  for (const json& view : started.at("quiz")) {
    CHECK_FALSE(view.contains("is_control"));
    CHECK_FALSE(view.contains("gold_answers"));
  }

  r = cli.Post("/api/sessions", json{{"worker_id", "w1"}, {"locale", "US"}}.dump(), "application/json");
  CHECK(r->status == 409);
  r = cli.Post("/api/sessions", json{{"worker_id", "w2"}, {"locale", "FR"}}.dump(), "application/json");
  CHECK(r->status == 403);
  r = cli.Post("/api/sessions", "not json", "application/json");
  CHECK(r->status == 400);
  r = cli.Post("/api/sessions", json{{"worker_id", "w2"}}.dump(), "application/json");
  CHECK(r->status == 400);

  CHECK(cli.Get("/api/sessions/w1")->status == 403);
  CHECK(cli.Get("/api/sessions/w1", session_headers("wrong"))->status == 403);
  CHECK(cli.Get("/api/sessions/nobody", session_headers(token))->status == 404);
  const auto headers = session_headers(token);
  CHECK(body_of(cli.Get("/api/sessions/w1", headers)).at("state") == "quiz");
  CHECK(body_of(cli.Get("/api/sessions/w1/quiz", headers)).at("items") == started.at("quiz"));
  CHECK(cli.Get("/api/sessions/w1/page", headers)->status == 409);

  const auto quiz = resolve(run.service(), started.at("quiz"));
  r = cli.Post("/api/sessions/w1/quiz", headers, json{{"answers", json::array()}}.dump(), "application/json");
  CHECK(r->status == 400);
  r = cli.Post("/api/sessions/w1/quiz", headers, json{{"answers", answers_json(test::answer_all(quiz, 1))}}.dump(),
               "application/json");
  REQUIRE(r->status == 200);
  CHECK(json::parse(r->body).at("state") == "active");
  CHECK(json::parse(r->body).at("quiz_score") == doctest::Approx(0.9));
  r = cli.Post("/api/sessions/w1/quiz", headers, json{{"answers", answers_json(test::answer_all(quiz))}}.dump(),
               "application/json");
  CHECK(r->status == 409);

  const json page = body_of(cli.Get("/api/sessions/w1/page", headers));
  CHECK(page.at("page") == 0);
  REQUIRE(page.at("items").size() == 10);
  CHECK(body_of(cli.Get("/api/sessions/w1/page", headers)) == page);
  const auto items = resolve(run.service(), page.at("items"));
  const json submission{{"page", 0}, {"answers", answers_json(test::answer_page(items, true))}};
  r = cli.Post("/api/sessions/w1/page", headers, submission.dump(), "application/json");
  REQUIRE(r->status == 200);
  CHECK(json::parse(r->body).at("pages_submitted") == 1);
  // retried submission is acknowledged without effect
  r = cli.Post("/api/sessions/w1/page", headers, submission.dump(), "application/json");
  CHECK(r->status == 200);
  CHECK(json::parse(r->body).at("pages_submitted") == 1);
  r = cli.Post("/api/sessions/w1/page", headers, json{{"page", -1}, {"answers", json::array()}}.dump(),
               "application/json");
  CHECK(r->status == 400);

  const json options = body_of(cli.Get("/api/options"));
  CHECK(options.at("q1") == json{"Yes", "Somewhat yes", "No"});
  CHECK(options.at("q3") == json{"Positive", "Negative", "Cannot tell"});

  CHECK(cli.Get("/api/admin/aggregate")->status == 401);
  CHECK(cli.Get("/api/admin/aggregate", {{"X-Admin-Token", "nope"}})->status == 401);
  r = cli.Get("/api/admin/aggregate", {{"X-Admin-Token", "admin"}});
  REQUIRE(r->status == 200);
  CHECK(json::parse(r->body) == to_json(run.service().aggregate()));
  CHECK(json::parse(r->body).at("cells").size() >= 1);
}

TEST_CASE("admin routes are closed without a token") {
  Running run(ServiceConfig{});
  auto cli = run.client();
  CHECK(cli.Get("/api/admin/aggregate", {{"X-Admin-Token", ""}})->status == 403);
}

TEST_CASE("capacity is reported as unavailable") {
  ServiceConfig config;
  config.quiz_size = 31;
  Running run(config);
  auto cli = run.client();
  const auto r = cli.Post("/api/sessions", json{{"worker_id", "w"}, {"locale", "UK"}}.dump(), "application/json");
  CHECK(r->status == 503);
}

TEST_CASE("static assets are served from the configured directory") {
  const auto dir = test::temp_dir("humaneval-static");
  std::ofstream(dir / "index.html") << "<html>annotate</html>";
  ServiceConfig config;
  config.static_dir = dir;
  {
    Running run(config);
    auto cli = run.client();
    const auto r = cli.Get("/index.html");
    REQUIRE(r);
    CHECK(r->status == 200);
    CHECK(r->body == "<html>annotate</html>");
    CHECK(cli.Get("/")->body == "<html>annotate</html>");
    CHECK(cli.Get("/missing.js")->status == 404);
    CHECK(cli.Get("/api/options")->status == 200);
  }
  config.static_dir = dir / "absent";
  Service svc(test::annotated_items(), config, {});
  httplib::Server server;
  CHECK_THROWS_AS(mount(server, svc), FormatError);
  std::filesystem::remove_all(dir);
}
