#pragma once

#include "rafg/error.hpp"
#include "rafg/knowledge.hpp"
#include "rafg/oracle.hpp"

#include <httplib.h>
#include <json.hpp>

#include <memory>
#include <string>
#include <vector>

namespace rafg::oracle {

struct HttpGatewayConfig {
  std::string base_url;  // e.g. https://api.example.com or http://127.0.0.1:8711
  std::string model;
  std::string api_key;
  std::string path = "/v1/chat/completions";
  double temperature = 0.0;
  int timeout_seconds = 120;
};

/// Chat-completion transport. Sends model + messages, returns the first
/// choice's text. One retry on transport failure, then the error surfaces.
class HttpChatGateway final : public ChatGateway {
 public:
  explicit HttpChatGateway(HttpGatewayConfig config) : config_(std::move(config)) {
    if (config_.base_url.empty() || config_.model.empty())
      fail(Errc::InvalidConfig, "live gateway needs an endpoint and a model");
    if (config_.api_key.empty())
      fail(Errc::InvalidConfig, "live gateway needs an API key");
  }

  std::string complete(const ChatTranscript& transcript) override {
    std::string last_error;
    for (int attempt = 0; attempt < 2; ++attempt) {
      try {
        return complete_once(transcript);
      } catch (const Error& e) {
        if (e.code() != Errc::TransportFailure) throw;
        last_error = e.what();
      }
    }
    fail(Errc::TransportFailure, "chat request failed after retry: " + last_error);
  }

 private:
  std::string complete_once(const ChatTranscript& transcript) {
    nlohmann::json body;
    body["model"] = config_.model;
    body["temperature"] = config_.temperature;
    auto& messages = body["messages"] = nlohmann::json::array();
    for (const auto& m : transcript.messages)
      messages.push_back({{"role", m.role}, {"content", m.text}});

    httplib::Client client(config_.base_url);
    client.set_connection_timeout(config_.timeout_seconds);
    client.set_read_timeout(config_.timeout_seconds);
    httplib::Headers headers = {{"Authorization", "Bearer " + config_.api_key}};
    auto res = client.Post(config_.path, headers, body.dump(), "application/json");
    if (!res)
      fail(Errc::TransportFailure,
           "no response from " + config_.base_url + config_.path);
    if (res->status < 200 || res->status >= 300)
      fail(Errc::TransportFailure,
           "chat endpoint returned status " + std::to_string(res->status));

    try {
      auto json = nlohmann::json::parse(res->body);
      std::string text = json.at("choices").at(0).at("message").at("content");
      if (text.empty()) fail(Errc::EmptyResponse, "model returned empty content");
      return text;
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::TransportFailure, std::string("malformed chat response: ") + e.what());
    }
  }

  HttpGatewayConfig config_;
};

}  // namespace rafg::oracle

namespace rafg::knowledge {

struct RemoteEmbedderConfig {
  std::string base_url;
  std::string model;
  std::string api_key;
  std::string path = "/v1/embeddings";
  std::size_t dim = 0;  // expected dimension; provider vectors are used verbatim
  int timeout_seconds = 120;
};

/// Embedding transport; returns the provider vector verbatim.
class RemoteEmbedder final : public Embedder {
 public:
  explicit RemoteEmbedder(RemoteEmbedderConfig config) : config_(std::move(config)) {
    if (config_.base_url.empty() || config_.model.empty())
      fail(Errc::InvalidConfig, "remote embedder needs an endpoint and a model");
    if (config_.dim == 0)
      fail(Errc::InvalidConfig, "remote embedder needs an explicit dimension");
  }

  std::vector<double> embed(const std::string& text) const override {
    if (rafg::trim(text).empty()) fail(Errc::EmptyText, "cannot embed empty text");

    nlohmann::json body;
    body["model"] = config_.model;
    body["input"] = text;

    httplib::Client client(config_.base_url);
    client.set_connection_timeout(config_.timeout_seconds);
    client.set_read_timeout(config_.timeout_seconds);
    httplib::Headers headers = {{"Authorization", "Bearer " + config_.api_key}};
    auto res = client.Post(config_.path, headers, body.dump(), "application/json");
    if (!res) fail(Errc::TransportFailure, "no response from embedding endpoint");
    if (res->status < 200 || res->status >= 300)
      fail(Errc::TransportFailure,
           "embedding endpoint returned status " + std::to_string(res->status));

    try {
      auto json = nlohmann::json::parse(res->body);
      std::vector<double> v = json.at("data").at(0).at("embedding").get<std::vector<double>>();
      if (v.size() != config_.dim)
        fail(Errc::DimensionMismatch,
             "provider returned dimension " + std::to_string(v.size()) +
                 ", expected " + std::to_string(config_.dim));
      return v;
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::TransportFailure,
           std::string("malformed embedding response: ") + e.what());
    }
  }

  std::size_t dim() const override { return config_.dim; }
  std::string id() const override {
    return "remote/" + config_.model + "/" + std::to_string(config_.dim);
  }

 private:
  RemoteEmbedderConfig config_;
};

}  // namespace rafg::knowledge
