// Eigen must precede httplib: <resolv.h> defines a `_res` macro.
#include "masscope/backend.hpp"
#include "masscope/error.hpp"
#include "masscope/hash.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <json.hpp>
#include <thread>

namespace masscope {

namespace {

using json = nlohmann::json;

struct UrlParts {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path without trailing slash
};

UrlParts split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(Errc::InvalidArgument, "base_url '" + url + "' lacks a scheme");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  UrlParts parts;
  parts.origin = url.substr(0, path_start);
  if (path_start != std::string::npos) parts.prefix = url.substr(path_start);
  while (!parts.prefix.empty() && parts.prefix.back() == '/') parts.prefix.pop_back();
  return parts;
}

}  // namespace

struct HttpBackend::Impl {
  BackendConfig config;
  UrlParts url;
  std::string api_key;
  std::counting_semaphore<1024> in_flight;
  std::mutex rng_mutex;
  SplitMix64 jitter_rng;

  explicit Impl(BackendConfig cfg)
      : config(std::move(cfg)),
        url(split_url(*config.base_url)),
        in_flight(std::min(config.max_in_flight, 1024)),
        jitter_rng(config.seed) {
    if (const char* key = std::getenv("MASSCOPE_API_KEY")) api_key = key;
  }

  double draw() {
    std::lock_guard lock(rng_mutex);
    return jitter_rng.next_unit();
  }

  // POSTs `body` to `path`, retrying transport failures and non-2xx statuses
  // with exponential backoff. Returns the parsed response body.
  json post(const std::string& path, const json& body) {
    std::string last_error;
    for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(backoff_delay(attempt - 1, draw()));
      in_flight.acquire();
      httplib::Result res;
      {
        httplib::Client client(url.origin);
        const auto secs = static_cast<time_t>(config.timeout_seconds);
        const auto usecs =
            static_cast<time_t>((config.timeout_seconds - static_cast<double>(secs)) * 1e6);
        client.set_connection_timeout(secs, usecs);
        client.set_read_timeout(secs, usecs);
        client.set_write_timeout(secs, usecs);
        httplib::Headers headers;
        if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
        res = client.Post(url.prefix + path, headers, body.dump(), "application/json");
      }
      in_flight.release();

      if (!res) {
        last_error = httplib::to_string(res.error());
      } else if (res->status < 200 || res->status >= 300) {
        last_error = "HTTP " + std::to_string(res->status);
      } else {
        try {
          return json::parse(res->body);
        } catch (const json::exception& e) {
          last_error = std::string("malformed JSON response: ") + e.what();
        }
      }
      spdlog::warn("POST {}{} failed (attempt {}/{}): {}", url.origin, path, attempt + 1,
                   config.max_retries + 1, last_error);
    }
    throw Error(Errc::BackendUnavailable, "POST " + path + " failed after " +
                                              std::to_string(config.max_retries + 1) +
                                              " attempts: " + last_error);
  }

  std::string chat(const std::string& model, const std::string& system, const std::string& user) {
    json body = {{"model", model},
                 {"temperature", 0},
                 {"messages", json::array({{{"role", "system"}, {"content", system}},
                                           {{"role", "user"}, {"content", user}}})}};
    const json reply = post("/v1/chat/completions", body);
    std::string content;
    try {
      const auto& msg = reply.at("choices").at(0).at("message").at("content");
      if (msg.is_string()) content = msg.get<std::string>();
    } catch (const json::exception& e) {
      throw Error(Errc::EmptyResponse, std::string("chat response lacks content: ") + e.what());
    }
    if (content.empty()) throw Error(Errc::EmptyResponse, "chat response content is empty");
    return content;
  }
};

HttpBackend::HttpBackend(BackendConfig config) {
  config.validate();
  impl_ = std::make_unique<Impl>(std::move(config));
}

HttpBackend::~HttpBackend() = default;

std::string HttpBackend::complete(std::string_view role_prompt, std::string_view query,
                                  std::span<const Message> inputs) {
  if (role_prompt.empty()) throw Error(Errc::InvalidArgument, "empty role prompt");
  return impl_->chat(impl_->config.chat_model, std::string(role_prompt),
                     format_user_turn(query, inputs));
}

Embedding HttpBackend::embed(std::string_view text) {
  if (text.empty()) throw Error(Errc::InvalidArgument, "cannot embed empty text");
  const json body = {{"model", impl_->config.embed_model}, {"input", std::string(text)}};
  const json reply = impl_->post("/v1/embeddings", body);
  std::vector<double> values;
  try {
    values = reply.at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw Error(Errc::EmptyResponse, std::string("embedding response malformed: ") + e.what());
  }
  Embedding v = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  if (!v.allFinite()) throw Error(Errc::EmptyResponse, "embedding has non-finite entries");
  const double norm = v.norm();
  if (!(norm > 0.0)) throw Error(Errc::ZeroVector, "embedding is the zero vector");
  return v / norm;
}

Usefulness HttpBackend::judge_usefulness(std::string_view query, std::string_view role_prompt,
                                         std::string_view message) {
  static constexpr const char* kSystem = "You are a strict evaluator. Follow the output format exactly.";
  std::string prompt = usefulness_prompt(query, role_prompt, message);
  std::string reply = impl_->chat(impl_->config.judge_model, kSystem, prompt);
  if (auto u = parse_usefulness(reply)) return *u;
  prompt += "\n\nYour previous reply could not be parsed. Answer with USEFUL or NOT_USEFUL only.";
  reply = impl_->chat(impl_->config.judge_model, kSystem, prompt);
  if (auto u = parse_usefulness(reply)) return *u;
  throw Error(Errc::JudgeParseFailure, "judge reply lacks USEFUL/NOT_USEFUL: '" + reply + "'");
}

std::string HttpBackend::judge(std::string_view prompt) {
  return impl_->chat(impl_->config.judge_model, "You are a careful evaluator.", std::string(prompt));
}

}  // namespace masscope
