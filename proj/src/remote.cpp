#include "ttavid/remote.hpp"

#include <cstdlib>
#include <regex>
#include <thread>

#include <httplib.h>
#include <openssl/evp.h>

#include "ttavid/distribution.hpp"
#include "ttavid/errors.hpp"
#include "ttavid/json_text.hpp"

namespace ttavid {
namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint URL has no scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string mime_type(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  return ext == ".png" ? "image/png" : "image/jpeg";
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

EndpointConfig EndpointConfig::from_env() {
  auto get = [](const char* name) -> std::string {
    const char* v = std::getenv(name);
    return v ? std::string(v) : std::string();
  };
  EndpointConfig cfg;
  cfg.url = get("TTRL_ENDPOINT_URL");
  cfg.api_key = get("TTRL_API_KEY");
  cfg.model = get("TTRL_MODEL_NAME");
  if (cfg.url.empty()) throw ConfigError("remote backend: TTRL_ENDPOINT_URL is not set");
  if (cfg.model.empty()) throw ConfigError("remote backend: TTRL_MODEL_NAME is not set");
  split_url(cfg.url);
  return cfg;
}

std::string base64_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string render_prompt(const std::string& question) {
  return question +
         "\nThink step by step about the frames, then give the final answer on its own line as "
         "'Answer: X'.";
}

std::size_t estimate_prompt_tokens(const std::string& prompt_text, std::size_t image_count) {
  return (prompt_text.size() + 3) / 4 + image_count * kImageTokenEstimate;
}

std::string build_request_body(const RemoteRequest& request, const std::string& model) {
  const std::string prompt = render_prompt(request.question);
  const std::size_t tokens = estimate_prompt_tokens(prompt, request.images.size());
  if (tokens > request.max_prompt_tokens) {
    throw std::invalid_argument("prompt needs ~" + std::to_string(tokens) + " tokens, limit is " +
                                std::to_string(request.max_prompt_tokens));
  }
  nlohmann::json content = nlohmann::json::array();
  content.push_back({{"type", "text"}, {"text", prompt}});
  for (const auto& img : request.images) {
    std::error_code ec;
    const auto size = std::filesystem::file_size(img, ec);
    if (ec) throw std::invalid_argument("cannot read image " + img.string() + ": " + ec.message());
    if (size == 0) throw std::invalid_argument("image file is empty: " + img.string());
    const std::string bytes = read_text_file(img);
    content.push_back({{"type", "image_url"},
                       {"image_url", {{"url", "data:" + mime_type(img) + ";base64," + base64_encode(bytes)}}}});
  }
  nlohmann::json body = {
      {"model", model},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})},
      {"temperature", request.temperature},
      {"max_tokens", request.max_tokens},
  };
  return body.dump();
}

RemoteResponse remote_generate(const RemoteRequest& request, const EndpointConfig& endpoint) {
  const std::string body = build_request_body(request, endpoint.model);
  const ParsedUrl url = split_url(endpoint.url);
  httplib::Client client(url.origin);
  client.set_connection_timeout(endpoint.timeout);
  client.set_read_timeout(endpoint.timeout);
  client.set_write_timeout(endpoint.timeout);
  httplib::Headers headers;
  if (!endpoint.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint.api_key);

  const auto start = std::chrono::steady_clock::now();
  std::string last_error;
  const int attempts = std::max(endpoint.max_attempts, 1);
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    if (attempt > 1) std::this_thread::sleep_for(endpoint.backoff_base * (1 << (attempt - 2)));
    auto res = client.Post(url.path, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) {
      std::string text;
      try {
        const auto j = nlohmann::json::parse(res->body);
        text = j.at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        throw BackendError(endpoint.url + ": malformed completion response: " + e.what());
      }
      const auto elapsed = std::chrono::steady_clock::now() - start;
      return {std::move(text), std::chrono::duration<double, std::milli>(elapsed).count(), attempt};
    }
    last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
    if (!retryable_status(res->status)) {
      throw BackendError(endpoint.url + " (model " + endpoint.model + "): " + last_error);
    }
  }
  throw BackendError(endpoint.url + ": giving up after " + std::to_string(attempts) + " attempts; " + last_error);
}

Generation RemoteBackend::generate(const GenerationRequest& request) {
  RemoteRequest r;
  r.question = request.sample.question;
  for (std::size_t t : request.frames) r.images.push_back(request.sample.frame_paths.at(t));
  r.temperature = request.temperature;
  r.max_tokens = request.max_tokens;
  r.max_prompt_tokens = max_prompt_tokens_;
  RemoteResponse resp;
  try {
    resp = remote_generate(r, endpoint_);
  } catch (const std::invalid_argument& e) {
    throw BackendError(e.what());
  }
  return {std::move(resp.text), resp.latency_ms};
}

VideoSample load_video_dir(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  const nlohmann::json j = json_text::parse(read_text_file(manifest_path), manifest_path.string());
  static const std::regex frame_name(R"(frame_\d{4}\.(jpg|png))");
  VideoSample s;
  try {
    s.video_id = j.value("video_id", dir.filename().string());
    s.question_id = j.value("question_id", s.video_id);
    s.question = j.at("question").get<std::string>();
    s.format = parse_answer_format(j.value("format", "mcq:4"));
    s.num_frames = j.at("num_frames").get<std::size_t>();
    for (const auto& f : j.at("frames")) {
      const std::string name = f.get<std::string>();
      if (!std::regex_match(name, frame_name)) {
        throw DataFormatError(manifest_path.string() + ": frame name '" + name + "' is not frame_NNNN.jpg|png");
      }
      s.frame_paths.push_back(dir / name);
    }
    if (j.contains("clip_scores")) s.clip_scores = j.at("clip_scores").get<std::vector<double>>();
    if (j.contains("answer")) s.ground_truth = j.at("answer").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw DataFormatError(manifest_path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataFormatError(manifest_path.string() + ": " + e.what());
  }
  if (s.frame_paths.size() != s.num_frames) {
    throw DataFormatError(manifest_path.string() + ": lists " + std::to_string(s.frame_paths.size()) +
                          " frames but num_frames = " + std::to_string(s.num_frames));
  }
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw DataFormatError(manifest_path.string() + ": " + e.what());
  }
  return s;
}

std::vector<VideoSample> load_video_root(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_directory() && std::filesystem::exists(entry.path() / "manifest.json")) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<VideoSample> out;
  for (const auto& d : dirs) out.push_back(load_video_dir(d));
  if (out.empty()) throw DataFormatError("no video directories with manifest.json under " + root.string());
  return out;
}

}  // namespace ttavid
