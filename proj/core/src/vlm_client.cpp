#include "poivre/vlm_client.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include <httplib.h>
#include <json.hpp>

namespace poivre {

using nlohmann::json;

namespace {

constexpr const char* kCoordInstruction =
    "Answer with a JSON array of points, e.g. [{\"x\": 12.5, \"y\": 70.0}]. "
    "Coordinates are normalized to [0, 100] with (0, 0) at the top-left corner.";

std::string replace_all_copy(std::string text, const std::string& from, const std::string& to) {
  size_t pos = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos += to.size();
  }
  return text;
}

}  // namespace

PromptTemplate PromptTemplate::by_id(const std::string& id) {
  if (id == "default" || id.empty()) {
    PromptTemplate t;
    t.first_turn = std::string("Point to the following target in the image: {query}. ") +
                   kCoordInstruction;
    t.refinement_turn =
        std::string("This is refinement round {turn}. The brown dot(s) on the image mark "
                    "your previous estimate for: {query}. If the marker is off target, "
                    "answer with corrected coordinates; otherwise repeat it. ") +
        kCoordInstruction;
    return t;
  }
  throw InvalidInput("unknown prompt template id: " + id);
}

std::string PromptTemplate::render(const std::string& query, int turn) const {
  std::string text = turn <= 1 ? first_turn : refinement_turn;
  text = replace_all_copy(text, "{query}", query);
  text = replace_all_copy(text, "{turn}", std::to_string(turn));
  if (text.empty()) throw InvalidInput("rendered prompt is empty");
  return text;
}

std::vector<Point> remote_act(const EndpointConfig& cfg, const PromptTemplate& prompts,
                              const std::vector<Raster>& image_history,
                              const std::string& query, int turn) {
  cfg.validate();
  if (image_history.empty()) throw InvalidInput("remote_act: empty image history");

  const std::string prompt = prompts.render(query, turn);
  const std::string image_uri = to_png_data_uri(image_history.back());

  json request;
  request["model"] = cfg.model;
  request["temperature"] = cfg.temperature;
  request["max_tokens"] = cfg.max_output_tokens;
  request["messages"] = json::array({{{"role", "user"},
                                      {"content", json::array({
                                           {{"type", "text"}, {"text", prompt}},
                                           {{"type", "image_url"},
                                            {"image_url", {{"url", image_uri}}}},
                                       })}}});
  const std::string body = request.dump();

  httplib::Client client(cfg.base_url);
  client.set_connection_timeout(std::chrono::milliseconds(
      static_cast<int>(cfg.timeout_seconds * 1000)));
  client.set_read_timeout(std::chrono::milliseconds(
      static_cast<int>(cfg.timeout_seconds * 1000)));

  httplib::Headers headers;
  if (const char* key = std::getenv(cfg.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  std::ofstream transcript;
  if (!cfg.transcript_path.empty()) {
    transcript.open(cfg.transcript_path, std::ios::app);
  }
  auto log_attempt = [&](int attempt, int status, const std::string& response,
                         const std::string& error) {
    if (!transcript.is_open()) return;
    json entry;
    entry["turn"] = turn;
    entry["attempt"] = attempt;
    entry["request"] = request;
    entry["status"] = status;
    entry["response"] = response;
    if (!error.empty()) entry["error"] = error;
    transcript << entry.dump() << '\n';
  };

  const int attempts = 1 + cfg.max_retries;
  std::string last_error = "no attempt made";
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    httplib::Result res = client.Post("/v1/chat/completions", headers, body, "application/json");
    if (!res) {
      last_error = "transport failure: " + httplib::to_string(res.error());
      log_attempt(attempt, -1, "", last_error);
      continue;
    }
    if (res->status != 200) {
      last_error = "http status " + std::to_string(res->status);
      log_attempt(attempt, res->status, res->body, last_error);
      continue;
    }
    std::string content;
    try {
      const json reply = json::parse(res->body);
      content = reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const std::exception& e) {
      last_error = std::string("malformed chat response: ") + e.what();
      log_attempt(attempt, res->status, res->body, last_error);
      continue;
    }
    try {
      std::vector<Point> points = parse_points(content);
      log_attempt(attempt, res->status, content, "");
      return points;
    } catch (const ParseError& e) {
      last_error = std::string("parse failure: ") + e.what();
      log_attempt(attempt, res->status, content, last_error);
    }
  }
  if (last_error.rfind("parse failure", 0) == 0) {
    throw ParseError("no point extracted after " + std::to_string(attempts) +
                     " attempts: " + last_error);
  }
  throw EndpointError("endpoint failed after " + std::to_string(attempts) +
                      " attempts: " + last_error);
}

}  // namespace poivre
