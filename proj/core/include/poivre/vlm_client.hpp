#pragma once

#include <string>

#include "poivre/rollout.hpp"

namespace poivre {

struct EndpointConfig {
  std::string base_url;           // e.g. http://127.0.0.1:8080
  std::string model;
  std::string api_key_env = "POIVRE_API_KEY";  // env var holding the key
  double timeout_seconds = 60.0;
  int max_retries = 3;
  double temperature = 0.0;
  int max_output_tokens = 512;
  std::string prompt_template_id = "default";
  std::string transcript_path;    // JSONL request/response log when non-empty

  void validate() const {
    if (base_url.empty()) throw InvalidInput("endpoint base_url must be set");
    if (timeout_seconds <= 0.0) throw InvalidInput("timeout must be > 0");
    if (max_retries < 0) throw InvalidInput("max_retries must be >= 0");
  }
};

/// Prompt pair for the two phases of the procedure. {query} and {turn} are
/// substituted at render time; the coordinate-format instruction is part of
/// both templates.
struct PromptTemplate {
  std::string first_turn;
  std::string refinement_turn;

  static PromptTemplate by_id(const std::string& id);
  std::string render(const std::string& query, int turn) const;
};

/// One policy step against an OpenAI-compatible chat endpoint: templated
/// prompt plus the latest marked image as a base64 PNG data URI. Retries on
/// transport errors and parse failures; never returns a log-probability.
std::vector<Point> remote_act(const EndpointConfig& cfg, const PromptTemplate& prompts,
                              const std::vector<Raster>& image_history,
                              const std::string& query, int turn);

/// PolicyInterface adapter so run_poivre can drive a remote model.
class RemoteVlmPolicy : public PolicyInterface {
 public:
  explicit RemoteVlmPolicy(EndpointConfig cfg)
      : cfg_(std::move(cfg)), prompts_(PromptTemplate::by_id(cfg_.prompt_template_id)) {
    cfg_.validate();
  }

  PolicyAction act(const std::vector<Raster>& image_history, const std::string& query,
                   int turn) override {
    PolicyAction out;
    out.points = remote_act(cfg_, prompts_, image_history, query, turn);
    return out;
  }

  const EndpointConfig& config() const { return cfg_; }

 private:
  EndpointConfig cfg_;
  PromptTemplate prompts_;
};

}  // namespace poivre
