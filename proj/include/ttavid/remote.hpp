#pragma once

// Chat-completions client for a remote vision-language model. The remote
// model is a black box: it supplies generations for reward and bandit
// learning but receives no parameter updates.

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include "ttavid/orchestrator.hpp"

namespace ttavid {

struct EndpointConfig {
  std::string url;      // e.g. http://host:8000/v1/chat/completions
  std::string api_key;  // optional bearer token
  std::string model;
  int max_attempts = 3;
  std::chrono::milliseconds backoff_base{1000};
  std::chrono::seconds timeout{120};

  // Reads TTRL_ENDPOINT_URL, TTRL_API_KEY and TTRL_MODEL_NAME. Throws
  // ConfigError naming the first missing required variable.
  static EndpointConfig from_env();
};

struct RemoteRequest {
  std::string question;
  std::vector<std::filesystem::path> images;
  double temperature = 1.0;
  std::size_t max_tokens = 1024;
  std::size_t max_prompt_tokens = 7524;
};

struct RemoteResponse {
  std::string text;
  double latency_ms = 0.0;
  int attempts = 0;
};

// Rough prompt size: one token per four bytes of text plus a fixed budget per
// image.
inline constexpr std::size_t kImageTokenEstimate = 192;
std::size_t estimate_prompt_tokens(const std::string& prompt_text, std::size_t image_count);

std::string render_prompt(const std::string& question);

// Request body for one completion; images are embedded as base64 data URLs.
std::string build_request_body(const RemoteRequest& request, const std::string& model);

// Sends one completion request, retrying transport errors, 429 and 5xx with
// exponential backoff. Throws std::invalid_argument for unreadable or empty
// images and oversize prompts (before anything is sent) and BackendError for
// non-retryable statuses or exhausted retries.
RemoteResponse remote_generate(const RemoteRequest& request, const EndpointConfig& endpoint);

std::string base64_encode(std::string_view bytes);

class RemoteBackend : public Backend {
 public:
  RemoteBackend(EndpointConfig endpoint, std::size_t max_prompt_tokens)
      : endpoint_(std::move(endpoint)), max_prompt_tokens_(max_prompt_tokens) {}
  Generation generate(const GenerationRequest& request) override;
  bool thread_safe() const override { return true; }

 private:
  EndpointConfig endpoint_;
  std::size_t max_prompt_tokens_;
};

// Loads a video directory: manifest.json plus frame_NNNN.jpg|png files.
VideoSample load_video_dir(const std::filesystem::path& dir);

// Every subdirectory of `root` that holds a manifest.json, in name order.
std::vector<VideoSample> load_video_root(const std::filesystem::path& root);

}  // namespace ttavid
