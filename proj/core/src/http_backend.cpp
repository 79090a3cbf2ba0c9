#include <cstdlib>

#include "charmem/errors.hpp"
#include "charmem/providers.hpp"
#include "httplib.h"
#include "json_util.hpp"

namespace charmem {

using detail::json;

std::string build_http_request_body(const std::string& api, const ModelSpec& model, const std::string& prompt) {
  json body = {{"model", model.model_name},
               {"max_tokens", model.params.max_tokens},
               {"temperature", model.params.temperature},
               {"messages", json::array({{{"role", "user"}, {"content", prompt}}})}};
  if (api == "openai-chat") {
    if (model.params.seed) body["seed"] = *model.params.seed;
  } else if (api != "anthropic-messages") {
    throw ConfigError("kind", "unsupported http api '" + api + "'");
  }
  return body.dump();
}

std::string parse_http_response_body(const std::string& api, const std::string& body) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded()) throw TransportError("response is not JSON");
  try {
    if (api == "openai-chat") return j.at("choices").at(0).at("message").at("content").get<std::string>();
    std::string out;
    for (const auto& block : j.at("content")) {
      if (block.value("type", "text") == "text") out += block.at("text").get<std::string>();
    }
    return out;
  } catch (const json::exception& e) {
    throw TransportError(std::string("unexpected response shape: ") + e.what());
  }
}

namespace {

class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpSettings s) : s_(std::move(s)) {
    auto scheme = s_.endpoint.find("://");
    if (scheme == std::string::npos) throw ConfigError("endpoint", "endpoint must be an absolute URL: " + s_.endpoint);
    auto slash = s_.endpoint.find('/', scheme + 3);
    origin_ = s_.endpoint.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : s_.endpoint.substr(slash);
  }

  bool uses_network() const override { return true; }

 protected:
  BackendReply do_send(const ModelSpec& model, const std::string& prompt, int) override {
    BackendReply reply;
    const char* key = std::getenv(s_.auth_env.c_str());
    if (!key || !*key) {
      reply.status = 401;
      reply.error = "environment variable " + s_.auth_env + " is not set";
      return reply;
    }
    httplib::Client client(origin_);
    client.set_connection_timeout(std::chrono::seconds(10));
    client.set_read_timeout(s_.timeout);
    httplib::Headers headers;
    if (s_.api == "anthropic-messages") {
      headers.emplace("x-api-key", key);
      headers.emplace("anthropic-version", "2023-06-01");
    } else {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    auto res = client.Post(path_, headers, build_http_request_body(s_.api, model, prompt), "application/json");
    if (!res) {
      reply.status = 0;
      reply.error = httplib::to_string(res.error());
      return reply;
    }
    reply.status = res->status;
    if (res->has_header("Retry-After")) {
      char* end = nullptr;
      std::string v = res->get_header_value("Retry-After");
      double secs = std::strtod(v.c_str(), &end);
      if (end != v.c_str()) reply.retry_after_seconds = secs;
    }
    if (res->status < 200 || res->status >= 300) {
      reply.error = res->body.substr(0, 300);
      return reply;
    }
    try {
      reply.text = parse_http_response_body(s_.api, res->body);
    } catch (const TransportError& e) {
      reply.status = 0;
      reply.error = e.what();
      return reply;
    }
    json body = json::parse(res->body, nullptr, false);
    json meta = json::object();
    if (body.is_object()) {
      if (body.contains("model")) meta["model"] = body["model"];
      if (body.contains("system_fingerprint") && !body["system_fingerprint"].is_null()) {
        meta["system_fingerprint"] = body["system_fingerprint"];
      }
    }
    reply.metadata = meta.dump();
    return reply;
  }

 private:
  HttpSettings s_;
  std::string origin_;
  std::string path_;
};

}  // namespace

std::shared_ptr<Backend> make_http_backend(HttpSettings settings) {
  return std::make_shared<HttpBackend>(std::move(settings));
}

}  // namespace charmem
