#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "poivre/vlm_client.hpp"

using namespace poivre;
using nlohmann::json;

namespace {

/// In-process chat-completions stub. The handler decides status and body
/// per request; every request body is kept for inspection.
class StubServer {
 public:
  using Handler = std::function<std::pair<int, std::string>(int request_index, const json&)>;

  explicit StubServer(Handler handler) : handler_(std::move(handler)) {
    server_.Post("/v1/chat/completions",
                 [this](const httplib::Request& req, httplib::Response& res) {
                   const int index = count_++;
                   json body = json::parse(req.body);
                   {
                     std::lock_guard<std::mutex> lock(mutex_);
                     requests_.push_back(body);
                     auth_headers_.push_back(req.get_header_value("Authorization"));
                   }
                   const auto [status, reply] = handler_(index, body);
                   res.status = status;
                   res.set_content(reply, "application/json");
                 });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int request_count() const { return count_.load(); }
  json request(size_t i) {
    std::lock_guard<std::mutex> lock(mutex_);
    return requests_.at(i);
  }
  std::string auth_header(size_t i) {
    std::lock_guard<std::mutex> lock(mutex_);
    return auth_headers_.at(i);
  }

 private:
  httplib::Server server_;
  Handler handler_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> count_{0};
  std::mutex mutex_;
  std::vector<json> requests_;
  std::vector<std::string> auth_headers_;
};

std::string chat_reply(const std::string& content) {
  json j;
  j["choices"] = json::array({{{"message", {{"role", "assistant"}, {"content", content}}}}});
  return j.dump();
}

EndpointConfig config_for(const StubServer& server) {
  EndpointConfig cfg;
  cfg.base_url = server.url();
  cfg.model = "stub-model";
  cfg.timeout_seconds = 5.0;
  return cfg;
}

}  // namespace

TEST_CASE("prompt templates substitute query and turn") {
  const PromptTemplate t = PromptTemplate::by_id("default");
  const std::string p1 = t.render("the red mug", 1);
  CHECK(p1.find("the red mug") != std::string::npos);
  CHECK(p1.find("{query}") == std::string::npos);
  CHECK(p1.find("JSON array") != std::string::npos);
  const std::string p2 = t.render("the red mug", 3);
  CHECK(p2.find("refinement round 3") != std::string::npos);
  CHECK(p2 != p1);
  CHECK_THROWS_AS(PromptTemplate::by_id("no-such-template"), InvalidInput);
}

TEST_CASE("remote_act round trip: request shape and parsed answer") {
  StubServer server([](int, const json&) {
    return std::make_pair(200, chat_reply(R"([{"x": 41.5, "y": 73}])"));
  });
  ::setenv("POIVRE_API_KEY", "sk-unit-test", 1);
  EndpointConfig cfg = config_for(server);

  Raster img(24, 24, {7, 8, 9});
  img.set(3, 4, {200, 100, 50});
  const auto points =
      remote_act(cfg, PromptTemplate::by_id("default"), {img}, "the blue cup", 1);
  REQUIRE(points.size() == 1);
  CHECK(points[0] == Point(41.5, 73));

  REQUIRE(server.request_count() == 1);
  const json req = server.request(0);
  CHECK(req["model"] == "stub-model");
  CHECK(req["temperature"] == 0.0);
  CHECK(server.auth_header(0) == "Bearer sk-unit-test");

  // the text part carries the rendered prompt, the image part decodes back
  // to the exact raster that was sent
  const json& content = req["messages"][0]["content"];
  REQUIRE(content.size() == 2);
  const std::string text = content[0]["text"].get<std::string>();
  CHECK(text.find("the blue cup") != std::string::npos);
  const std::string uri = content[1]["image_url"]["url"].get<std::string>();
  const std::string prefix = "data:image/png;base64,";
  REQUIRE(uri.rfind(prefix, 0) == 0);
  const Raster decoded = decode_png(base64_decode(uri.substr(prefix.size())));
  CHECK(decoded == img);
  ::unsetenv("POIVRE_API_KEY");
}

TEST_CASE("only the latest image in the history is transmitted") {
  StubServer server([](int, const json&) {
    return std::make_pair(200, chat_reply(R"([{"x": 1, "y": 2}])"));
  });
  const Raster first(16, 16, {1, 1, 1});
  const Raster latest(16, 16, {2, 2, 2});
  remote_act(config_for(server), PromptTemplate::by_id("default"), {first, latest}, "q", 2);
  const std::string uri =
      server.request(0)["messages"][0]["content"][1]["image_url"]["url"].get<std::string>();
  const Raster decoded = decode_png(base64_decode(uri.substr(uri.find(',') + 1)));
  CHECK(decoded == latest);
}

TEST_CASE("transient 500s are retried until success") {
  StubServer server([](int index, const json&) {
    if (index < 2) return std::make_pair(500, std::string("{\"error\": \"overloaded\"}"));
    return std::make_pair(200, chat_reply(R"([{"x": 10, "y": 20}])"));
  });
  EndpointConfig cfg = config_for(server);
  cfg.max_retries = 3;
  const auto points = remote_act(cfg, PromptTemplate::by_id("default"),
                                 {Raster(8, 8)}, "q", 1);
  CHECK(points[0] == Point(10, 20));
  CHECK(server.request_count() == 3);
}

TEST_CASE("persistent failure exhausts retries and raises EndpointError") {
  StubServer server([](int, const json&) {
    return std::make_pair(503, std::string("{}"));
  });
  EndpointConfig cfg = config_for(server);
  cfg.max_retries = 2;
  CHECK_THROWS_AS(remote_act(cfg, PromptTemplate::by_id("default"), {Raster(8, 8)}, "q", 1),
                  EndpointError);
  CHECK(server.request_count() == 3);  // 1 + max_retries
}

TEST_CASE("unreachable endpoint raises EndpointError without a server") {
  EndpointConfig cfg;
  cfg.base_url = "http://127.0.0.1:1";  // nothing listens there
  cfg.timeout_seconds = 0.5;
  cfg.max_retries = 0;
  CHECK_THROWS_AS(remote_act(cfg, PromptTemplate::by_id("default"), {Raster(8, 8)}, "q", 1),
                  EndpointError);
}

TEST_CASE("prose answers fall back to coordinate-pair extraction") {
  StubServer server([](int, const json&) {
    return std::make_pair(200, chat_reply("The object sits at roughly (62, 31)."));
  });
  const auto points = remote_act(config_for(server), PromptTemplate::by_id("default"),
                                 {Raster(8, 8)}, "q", 1);
  REQUIRE(points.size() == 1);
  CHECK(points[0] == Point(62, 31));
}

TEST_CASE("answers with no coordinates raise ParseError after retries") {
  StubServer server([](int, const json&) {
    return std::make_pair(200, chat_reply("I cannot locate the object."));
  });
  EndpointConfig cfg = config_for(server);
  cfg.max_retries = 1;
  CHECK_THROWS_AS(remote_act(cfg, PromptTemplate::by_id("default"), {Raster(8, 8)}, "q", 1),
                  ParseError);
  CHECK(server.request_count() == 2);
}

TEST_CASE("malformed chat payloads are retried then surfaced as EndpointError") {
  StubServer server([](int, const json&) {
    return std::make_pair(200, std::string("{\"choices\": []}"));
  });
  EndpointConfig cfg = config_for(server);
  cfg.max_retries = 1;
  CHECK_THROWS_AS(remote_act(cfg, PromptTemplate::by_id("default"), {Raster(8, 8)}, "q", 1),
                  EndpointError);
}

TEST_CASE("transcript logs one line per attempt") {
  StubServer server([](int index, const json&) {
    if (index == 0) return std::make_pair(500, std::string("{}"));
    return std::make_pair(200, chat_reply(R"([{"x": 5, "y": 6}])"));
  });
  const auto path = std::filesystem::temp_directory_path() / "poivre_transcript.jsonl";
  std::filesystem::remove(path);
  EndpointConfig cfg = config_for(server);
  cfg.max_retries = 2;
  cfg.transcript_path = path.string();
  remote_act(cfg, PromptTemplate::by_id("default"), {Raster(8, 8)}, "q", 1);

  std::ifstream in(path);
  std::vector<json> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(json::parse(line));
  }
  REQUIRE(lines.size() == 2);
  CHECK(lines[0]["status"] == 500);
  CHECK(lines[0].contains("error"));
  CHECK(lines[1]["status"] == 200);
  CHECK_FALSE(lines[1].contains("error"));
  CHECK(lines[0]["attempt"] == 1);
  CHECK(lines[1]["attempt"] == 2);
  std::filesystem::remove(path);
}

TEST_CASE("RemoteVlmPolicy drives a full rollout against the stub") {
  // Reply depends on the request index so the two turns give different points.
  StubServer server([](int index, const json&) {
    const std::string reply = index == 0 ? R"([{"x": 30, "y": 30}])" : R"([{"x": 60, "y": 40}])";
    return std::make_pair(200, chat_reply(reply));
  });
  EndpointConfig cfg = config_for(server);
  RemoteVlmPolicy policy(cfg);

  PointingTask task;
  task.id = "remote-1";
  task.image.raster = std::make_shared<Raster>(32, 32);
  task.query = "the knob";
  task.targets.push_back(TargetRegion::disc(Point(60, 40), 5.0));

  RolloutConfig rollout;
  const Trajectory traj = run_poivre(policy, task, rollout);
  REQUIRE(traj.turns() == 2);
  CHECK(traj.points[0] == std::vector<Point>{Point(30, 30)});
  CHECK(traj.points[1] == std::vector<Point>{Point(60, 40)});
  CHECK(traj.distances[1] == 0.0);
  CHECK(traj.per_turn_logprob.empty());

  // the second request's prompt is the refinement template
  const std::string text2 =
      server.request(1)["messages"][0]["content"][0]["text"].get<std::string>();
  CHECK(text2.find("refinement round 2") != std::string::npos);

  EndpointConfig bad;
  CHECK_THROWS_AS(RemoteVlmPolicy{bad}, InvalidInput);
}
