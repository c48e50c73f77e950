#include <cstdlib>
#include <thread>

#include "dcond/ensemble.hpp"
#include "httplib.h"
#include "json.hpp"

namespace dcond {

std::string chat_request_json(const ChatRequest& request) {
  nlohmann::ordered_json j;
  j["model"] = request.model;
  j["messages"] = nlohmann::ordered_json::array();
  for (const auto& m : request.messages) j["messages"].push_back({{"role", m.role}, {"content", m.content}});
  j["temperature"] = request.temperature;
  return j.dump();
}

std::string parse_chat_response_json(std::string_view body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw ChatError(std::string("completion reply is not JSON: ") + e.what());
  }
  try {
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw ChatError("completion reply lacks choices[0].message.content");
  }
}

HttpChatClient::HttpChatClient(ServiceConfig cfg, Sleeper sleeper)
    : cfg_(std::move(cfg)), sleep_(std::move(sleeper)), rng_(cfg_.jitter_seed) {
  if (!(cfg_.timeout_seconds > 0)) throw InvalidArgument("service timeout must be > 0");
  if (cfg_.max_retries < 0) throw InvalidArgument("max_retries must be >= 0");
  if (!sleep_) sleep_ = [](std::chrono::duration<double> d) { std::this_thread::sleep_for(d); };

  std::string_view url = cfg_.endpoint;
  constexpr std::string_view scheme = "http://";
  if (!url.starts_with(scheme)) {
    throw InvalidArgument("service endpoint must be an http:// URL (TLS is not compiled in): " + cfg_.endpoint);
  }
  url.remove_prefix(scheme.size());
  const auto slash = url.find('/');
  std::string_view authority = url.substr(0, slash);
  path_ = slash == std::string_view::npos ? "/" : std::string(url.substr(slash));
  const auto colon = authority.rfind(':');
  if (colon != std::string_view::npos) {
    host_ = std::string(authority.substr(0, colon));
    try {
      port_ = std::stoi(std::string(authority.substr(colon + 1)));
    } catch (const std::exception&) {
      throw InvalidArgument("service endpoint has a bad port: " + cfg_.endpoint);
    }
  } else {
    host_ = std::string(authority);
  }
  if (host_.empty()) throw InvalidArgument("service endpoint has no host: " + cfg_.endpoint);
}

std::string HttpChatClient::complete(const ChatRequest& request) {
  const std::string body = chat_request_json(request);
  httplib::Headers headers;
  if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  std::string last_error;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0) {
      double jitter = 0.0;
      {
        std::lock_guard lock(rng_mutex_);
        jitter = std::uniform_real_distribution<double>(0.0, cfg_.backoff_base_seconds)(rng_);
      }
      sleep_(std::chrono::duration<double>(cfg_.backoff_base_seconds * std::pow(2.0, attempt - 1) + jitter));
    }
    httplib::Client client(host_, port_);
    const auto secs = std::chrono::duration<double>(cfg_.timeout_seconds);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "service returned HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) throw ChatError("service returned HTTP " + std::to_string(res->status));
    return parse_chat_response_json(res->body);
  }
  throw ChatError("service unavailable after " + std::to_string(cfg_.max_retries + 1) + " attempts: " + last_error);
}

}  // namespace dcond
