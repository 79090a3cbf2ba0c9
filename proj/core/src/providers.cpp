#include "charmem/providers.hpp"

#include <algorithm>
#include <condition_variable>
#include <cstdlib>
#include <ctime>
#include <thread>

#include "charmem/corpus.hpp"
#include "charmem/digest.hpp"
#include "charmem/errors.hpp"
#include "json_util.hpp"

namespace charmem {

namespace fs = std::filesystem;
using detail::json;

void ModelSpec::validate() const {
  std::string where = "models." + (id.empty() ? model_name : id);
  if (provider_id.empty()) throw ConfigError(where + ".provider", "missing provider");
  if (model_name.empty()) throw ConfigError(where + ".model_name", "missing model name");
  if (!(params.temperature >= 0.0)) throw ConfigError(where + ".temperature", "temperature must be >= 0");
  if (params.max_tokens < 1) throw ConfigError(where + ".max_tokens", "max_tokens must be >= 1");
}

std::string request_hash(const ModelSpec& model, std::string_view prompt, int trial_index) {
  json params = {{"temperature", model.params.temperature}, {"max_tokens", model.params.max_tokens}};
  params["seed"] = model.params.seed ? json(*model.params.seed) : json(nullptr);
  json key = {{"provider_id", model.provider_id},
              {"model_name", model.model_name},
              {"params", params},
              {"prompt", std::string(prompt)},
              {"trial_index", trial_index}};
  return sha256_hex(key.dump());
}

std::string completion_record_to_json(const CompletionRecord& r) {
  json meta = json::parse(r.metadata.empty() ? "{}" : r.metadata, nullptr, false);
  if (meta.is_discarded()) meta = json::object();
  json j = {{"request_hash", r.request_hash}, {"prompt", r.prompt},
            {"response_text", r.response_text}, {"latency_ms", r.latency_ms},
            {"timestamp", r.timestamp},         {"provider_id", r.provider_id},
            {"model_name", r.model_name},       {"trial_index", r.trial_index},
            {"attempts", r.attempts},           {"metadata", meta}};
  return j.dump();
}

CompletionRecord completion_record_from_json(std::string_view text) {
  json j = detail::parse_json(text, "completion record");
  CompletionRecord r;
  r.request_hash = detail::require_string(j, "request_hash", "");
  r.prompt = detail::require_string(j, "prompt", "");
  r.response_text = detail::require_string(j, "response_text", "");
  r.latency_ms = j.value("latency_ms", std::int64_t{0});
  r.timestamp = j.value("timestamp", std::string());
  r.provider_id = j.value("provider_id", std::string());
  r.model_name = j.value("model_name", std::string());
  r.trial_index = j.value("trial_index", 0);
  r.attempts = j.value("attempts", 0);
  r.metadata = j.contains("metadata") ? j.at("metadata").dump() : "{}";
  return r;
}

BackendReply Backend::send(const ModelSpec& model, const std::string& prompt, int trial_index) {
  ++calls_;
  return do_send(model, prompt, trial_index);
}

// ---------------------------------------------------------------- cache

ResponseCache::ResponseCache(fs::path dir) {
  if (dir.empty()) return;  // memory only
  dir_ = std::move(dir);
  std::error_code ec;
  fs::create_directories(*dir_, ec);
  if (ec) throw IoError("cannot create cache directory " + dir_->string() + ": " + ec.message());
}

fs::path ResponseCache::file_for(const std::string& hash) const {
  return *dir_ / hash.substr(0, 2) / (hash + ".json");
}

std::optional<CompletionRecord> ResponseCache::get(const std::string& hash) {
  {
    std::lock_guard lock(mu_);
    if (auto it = memory_.find(hash); it != memory_.end()) return it->second;
  }
  if (!dir_) return std::nullopt;
  fs::path f = file_for(hash);
  if (!fs::exists(f)) return std::nullopt;
  CompletionRecord r;
  try {
    r = completion_record_from_json(read_file(f));
  } catch (const Error&) {
    return std::nullopt;  // torn or foreign file: treat as a miss and overwrite
  }
  if (r.request_hash != hash) return std::nullopt;
  std::lock_guard lock(mu_);
  memory_.emplace(hash, r);
  return r;
}

void ResponseCache::put(const CompletionRecord& record) {
  if (dir_) write_file_atomic(file_for(record.request_hash), completion_record_to_json(record) + "\n");
  std::lock_guard lock(mu_);
  memory_[record.request_hash] = record;
}

std::size_t ResponseCache::size_on_disk() const {
  if (!dir_ || !fs::exists(*dir_)) return 0;
  std::size_t n = 0;
  for (const auto& de : fs::recursive_directory_iterator(*dir_)) {
    if (de.is_regular_file() && de.path().extension() == ".json") ++n;
  }
  return n;
}

// ---------------------------------------------------------------- retry / rate

std::chrono::milliseconds RetryPolicy::delay_for(int retry_number, std::optional<double> retry_after) const {
  if (retry_after && *retry_after >= 0) {
    auto ms = std::chrono::milliseconds(static_cast<std::int64_t>(*retry_after * 1000.0));
    return std::min(ms, max_delay);
  }
  double d = static_cast<double>(base_delay.count());
  for (int i = 1; i < retry_number; ++i) d *= multiplier;
  auto ms = std::chrono::milliseconds(static_cast<std::int64_t>(d));
  return std::min(ms, max_delay);
}

TokenBucket::TokenBucket(double per_minute, double burst)
    : rate_per_sec_(per_minute / 60.0), capacity_(burst), tokens_(burst), last_(std::chrono::steady_clock::now()) {}

void TokenBucket::acquire() {
  if (rate_per_sec_ <= 0) return;
  std::unique_lock lock(mu_);
  for (;;) {
    auto now = std::chrono::steady_clock::now();
    tokens_ = std::min(capacity_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_per_sec_);
    last_ = now;
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_per_sec_);
    lock.unlock();
    std::this_thread::sleep_for(wait);
    lock.lock();
  }
}

// ---------------------------------------------------------------- service

struct CompletionService::Provider {
  std::shared_ptr<Backend> backend;
  RateLimit limits;
  TokenBucket bucket;
  std::mutex mu;
  std::condition_variable cv;
  int in_flight = 0;

  Provider(std::shared_ptr<Backend> b, RateLimit l)
      : backend(std::move(b)), limits(l), bucket(l.requests_per_minute, std::max(1.0, l.requests_per_minute / 60.0)) {}

  void enter() {
    std::unique_lock lock(mu);
    cv.wait(lock, [&] { return limits.max_in_flight <= 0 || in_flight < limits.max_in_flight; });
    ++in_flight;
  }
  void leave() {
    {
      std::lock_guard lock(mu);
      --in_flight;
    }
    cv.notify_one();
  }
};

CompletionService::CompletionService(std::shared_ptr<ResponseCache> cache, RetryPolicy retry)
    : cache_(std::move(cache)), retry_(retry), sleeper_([](std::chrono::milliseconds d) {
        std::this_thread::sleep_for(d);
      }) {}

CompletionService::~CompletionService() = default;

void CompletionService::add_provider(const std::string& id, std::shared_ptr<Backend> backend, RateLimit limits) {
  std::lock_guard lock(mu_);
  providers_[id] = std::make_unique<Provider>(std::move(backend), limits);
}

bool CompletionService::has_provider(const std::string& id) const {
  std::lock_guard lock(mu_);
  return providers_.count(id) > 0;
}

std::shared_ptr<Backend> CompletionService::backend(const std::string& id) const { return provider(id).backend; }

CompletionService::Provider& CompletionService::provider(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = providers_.find(id);
  if (it == providers_.end()) throw ConfigError("provider", "unknown provider '" + id + "'");
  return *it->second;
}

std::shared_ptr<std::mutex> CompletionService::key_lock(const std::string& hash) {
  std::lock_guard lock(mu_);
  auto& m = key_locks_[hash];
  if (!m) m = std::make_shared<std::mutex>();
  return m;
}

void CompletionService::set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper) {
  sleeper_ = std::move(sleeper);
}

CompletionStats CompletionService::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

namespace {

std::string utc_timestamp() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

CompletionRecord CompletionService::complete(const ModelSpec& model, const std::string& prompt, int trial_index) {
  const std::string hash = request_hash(model, prompt, trial_index);
  {
    std::lock_guard lock(mu_);
    ++stats_.requests;
  }
  auto klock = key_lock(hash);
  std::lock_guard key_guard(*klock);

  if (auto hit = cache_->get(hash)) {
    std::lock_guard lock(mu_);
    ++stats_.cache_hits;
    hit->cache_hit = true;
    hit->attempts = 0;
    return *hit;
  }

  Provider& p = provider(model.provider_id);
  const int max_attempts = std::max(1, retry_.max_attempts);
  for (int attempt = 1;; ++attempt) {
    p.bucket.acquire();
    p.enter();
    auto start = std::chrono::steady_clock::now();
    BackendReply reply;
    try {
      reply = p.backend->send(model, prompt, trial_index);
    } catch (const std::exception& e) {
      reply.status = 0;
      reply.error = e.what();
    }
    auto elapsed = std::chrono::steady_clock::now() - start;
    p.leave();
    {
      std::lock_guard lock(mu_);
      ++stats_.backend_calls;
    }

    if (reply.status >= 200 && reply.status < 300) {
      CompletionRecord r;
      r.request_hash = hash;
      r.prompt = prompt;
      r.response_text = std::move(reply.text);
      r.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
      r.timestamp = utc_timestamp();
      r.provider_id = model.provider_id;
      r.model_name = model.model_name;
      r.trial_index = trial_index;
      r.attempts = attempt;
      r.metadata = reply.metadata.empty() ? "{}" : reply.metadata;
      cache_->put(r);
      return r;
    }

    auto fail = [&] {
      std::lock_guard lock(mu_);
      ++stats_.failures;
    };
    std::string detail = reply.error.empty() ? "" : ": " + reply.error;
    if (reply.status == 401 || reply.status == 403) {
      fail();
      throw CredentialError(model.provider_id + " rejected credentials (HTTP " + std::to_string(reply.status) +
                                ")" + detail,
                            reply.status, attempt);
    }
    const bool retryable = reply.status == 0 || reply.status == 429 || reply.status >= 500;
    if (!retryable) {
      fail();
      throw TransportError(model.provider_id + " returned HTTP " + std::to_string(reply.status) + detail,
                           reply.status, attempt);
    }
    if (attempt >= max_attempts) {
      fail();
      throw TransportError(model.provider_id + ": giving up after " + std::to_string(attempt) +
                               " attempts (last status " + std::to_string(reply.status) + ")" + detail,
                           reply.status, attempt);
    }
    {
      std::lock_guard lock(mu_);
      ++stats_.retries;
    }
    sleeper_(retry_.delay_for(attempt, reply.retry_after_seconds));
  }
}

// ---------------------------------------------------------------- scripted

ScriptedBackend::ScriptedBackend(std::map<std::string, std::string> responses, std::optional<std::string> fallback)
    : responses_(std::move(responses)), fallback_(std::move(fallback)) {}

void ScriptedBackend::set_response(const std::string& prompt, std::string response) {
  std::lock_guard lock(mu_);
  responses_[prompt] = std::move(response);
}

void ScriptedBackend::set_fault_script(std::vector<int> statuses) {
  std::lock_guard lock(mu_);
  faults_ = std::move(statuses);
}

void ScriptedBackend::set_delay(std::chrono::milliseconds delay) {
  std::lock_guard lock(mu_);
  delay_ = delay;
}

BackendReply ScriptedBackend::do_send(const ModelSpec&, const std::string& prompt, int) {
  std::chrono::milliseconds delay;
  BackendReply reply;
  {
    std::lock_guard lock(mu_);
    delay = delay_;
    if (!faults_.empty()) {
      reply.status = faults_.front();
      faults_.erase(faults_.begin());
      reply.error = "scripted fault";
      if (reply.status == 429) reply.retry_after_seconds = 0.0;
      return reply;
    }
    if (auto it = responses_.find(prompt); it != responses_.end()) {
      reply.text = it->second;
    } else if (fallback_) {
      reply.text = *fallback_;
    } else {
      reply.status = 404;
      reply.error = "no scripted response for prompt";
    }
  }
  if (delay.count() > 0) std::this_thread::sleep_for(delay);
  return reply;
}

// ---------------------------------------------------------------- config

bool ProviderConfig::uses_network() const {
  for (const auto& p : providers) {
    if (p.kind == "openai-chat" || p.kind == "anthropic-messages") return true;
  }
  return false;
}

const ModelSpec& ProviderConfig::model(const std::string& id) const {
  auto it = models.find(id);
  if (it == models.end()) throw ConfigError("models", "unknown model id '" + id + "'");
  return it->second;
}

namespace {

const char* const kKnownKinds[] = {"openai-chat", "anthropic-messages", "scripted", "verbatim-oracle", "gist-oracle"};

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

ProviderConfig load_provider_config(std::string_view json_text, fs::path base_dir) {
  json j = detail::parse_json(json_text, "provider config");
  detail::check_format_version(j, "");
  ProviderConfig cfg;
  cfg.base_dir = std::move(base_dir);
  if (j.contains("cache_dir")) cfg.cache_dir = resolve(cfg.base_dir, j.at("cache_dir").get<std::string>());
  if (j.contains("retry")) {
    const json& r = j.at("retry");
    cfg.retry.max_attempts = r.value("max_attempts", cfg.retry.max_attempts);
    cfg.retry.base_delay = std::chrono::milliseconds(r.value("base_delay_ms", std::int64_t{500}));
    cfg.retry.max_delay = std::chrono::milliseconds(r.value("max_delay_ms", std::int64_t{30000}));
    cfg.retry.multiplier = r.value("multiplier", 2.0);
    if (cfg.retry.max_attempts < 1) throw ConfigError("retry.max_attempts", "must be >= 1");
  }
  const json& providers = detail::require(j, "providers", "");
  for (std::size_t i = 0; i < providers.size(); ++i) {
    std::string path = detail::index_path("providers", i);
    ProviderSettings p;
    p.id = detail::require_string(providers[i], "id", path);
    p.kind = detail::require_string(providers[i], "kind", path);
    if (std::find(std::begin(kKnownKinds), std::end(kKnownKinds), p.kind) == std::end(kKnownKinds)) {
      throw ConfigError(detail::join_path(path, "kind"), "unknown provider kind '" + p.kind + "'");
    }
    p.limits.requests_per_minute = providers[i].value("requests_per_minute", 0.0);
    p.limits.max_in_flight = providers[i].value("max_in_flight", 4);
    if ((p.kind == "openai-chat" || p.kind == "anthropic-messages")) {
      detail::require_string(providers[i], "endpoint", path);
      detail::require_string(providers[i], "auth_env", path);
    }
    for (const auto& other : cfg.providers) {
      if (other.id == p.id) throw ConfigError(detail::join_path(path, "id"), "duplicate provider id '" + p.id + "'");
    }
    p.settings_json = providers[i].dump();
    cfg.providers.push_back(std::move(p));
  }
  const json& models = detail::require(j, "models", "");
  for (std::size_t i = 0; i < models.size(); ++i) {
    std::string path = detail::index_path("models", i);
    ModelSpec m;
    m.provider_id = detail::require_string(models[i], "provider", path);
    m.model_name = detail::require_string(models[i], "model_name", path);
    m.id = models[i].value("id", m.model_name);
    m.params.temperature = models[i].value("temperature", 0.0);
    m.params.max_tokens = models[i].value("max_tokens", 512);
    if (models[i].contains("seed")) {
      m.params.seed = models[i].at("seed").is_null() ? std::nullopt
                                                     : std::optional<std::int64_t>(models[i].at("seed").get<std::int64_t>());
    }
    m.validate();
    if (std::none_of(cfg.providers.begin(), cfg.providers.end(),
                     [&](const ProviderSettings& p) { return p.id == m.provider_id; })) {
      throw ConfigError(detail::join_path(path, "provider"), "unknown provider '" + m.provider_id + "'");
    }
    if (!cfg.models.emplace(m.id, m).second) {
      throw ConfigError(detail::join_path(path, "id"), "duplicate model id '" + m.id + "'");
    }
  }
  return cfg;
}

ProviderConfig load_provider_config_file(const fs::path& path) {
  try {
    return load_provider_config(read_file(path), path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string(), e.what());
  }
}

void preflight_credentials(const ProviderConfig& config) {
  for (const auto& p : config.providers) {
    if (p.kind != "openai-chat" && p.kind != "anthropic-messages") continue;
    std::string env = json::parse(p.settings_json).at("auth_env").get<std::string>();
    const char* v = std::getenv(env.c_str());
    if (!v || !*v) throw CredentialError("provider '" + p.id + "': environment variable " + env + " is not set");
  }
}

namespace {

std::vector<WorkText> load_works(const json& s, const fs::path& base, const std::string& path) {
  std::vector<WorkText> works;
  const json& ws = detail::require(s, "works", path);
  for (std::size_t i = 0; i < ws.size(); ++i) {
    std::string wp = detail::index_path(detail::join_path(path, "works"), i);
    WorkText w;
    w.title = detail::require_string(ws[i], "title", wp);
    if (ws[i].contains("text")) {
      w.raw_text = ws[i].at("text").get<std::string>();
    } else {
      w.raw_text = read_file(resolve(base, detail::require_string(ws[i], "script", wp)));
    }
    works.push_back(std::move(w));
  }
  return works;
}

std::vector<TraitProfile> load_traits(const json& s, const fs::path& base, const std::string& path) {
  json traits = s.contains("traits_file")
                    ? detail::parse_json(read_file(resolve(base, s.at("traits_file").get<std::string>())), path)
                    : detail::require(s, "traits", path);
  // A traits file may wrap the list as {"format_version": 1, "traits": [...]}.
  if (traits.is_object() && traits.contains("traits")) traits = json(traits.at("traits"));
  std::vector<TraitProfile> out;
  if (traits.is_array()) {
    for (std::size_t i = 0; i < traits.size(); ++i) {
      std::string tp = detail::index_path(detail::join_path(path, "traits"), i);
      out.push_back({detail::require_string(traits[i], "character", tp),
                     detail::require(traits[i], "keywords", tp).get<std::vector<std::string>>()});
    }
  } else {
    throw ConfigError(detail::join_path(path, "traits"), "expected a list of {character, keywords}");
  }
  if (out.empty()) throw ConfigError(detail::join_path(path, "traits"), "trait db is empty");
  return out;
}

// Adds a fixed latency in front of another backend.
class DelayedBackend : public Backend {
 public:
  DelayedBackend(std::shared_ptr<Backend> inner, std::chrono::milliseconds delay)
      : inner_(std::move(inner)), delay_(delay) {}
  bool uses_network() const override { return inner_->uses_network(); }

 protected:
  BackendReply do_send(const ModelSpec& model, const std::string& prompt, int trial_index) override {
    std::this_thread::sleep_for(delay_);
    return inner_->send(model, prompt, trial_index);
  }

 private:
  std::shared_ptr<Backend> inner_;
  std::chrono::milliseconds delay_;
};

}  // namespace

std::unique_ptr<CompletionService> make_completion_service(const ProviderConfig& config,
                                                           const fs::path& default_cache_dir) {
  auto cache = std::make_shared<ResponseCache>(config.cache_dir.value_or(default_cache_dir));
  auto service = std::make_unique<CompletionService>(cache, config.retry);
  for (std::size_t i = 0; i < config.providers.size(); ++i) {
    const auto& p = config.providers[i];
    std::string path = detail::index_path("providers", i);
    json s = json::parse(p.settings_json);
    std::shared_ptr<Backend> backend;
    if (p.kind == "openai-chat" || p.kind == "anthropic-messages") {
      HttpSettings h;
      h.api = p.kind;
      h.endpoint = s.at("endpoint").get<std::string>();
      h.auth_env = s.at("auth_env").get<std::string>();
      h.timeout = std::chrono::seconds(s.value("timeout_s", 120));
      backend = make_http_backend(std::move(h));
    } else if (p.kind == "scripted") {
      std::map<std::string, std::string> responses;
      if (s.contains("responses")) responses = s.at("responses").get<std::map<std::string, std::string>>();
      std::optional<std::string> fallback;
      if (s.contains("default")) fallback = s.at("default").get<std::string>();
      backend = std::make_shared<ScriptedBackend>(std::move(responses), std::move(fallback));
    } else if (p.kind == "verbatim-oracle") {
      auto works = load_works(s, config.base_dir, path);
      if (works.empty()) throw ConfigError(detail::join_path(path, "works"), "verbatim oracle needs a corpus");
      backend = make_verbatim_oracle(std::move(works));
    } else if (p.kind == "gist-oracle") {
      backend = make_gist_oracle(load_traits(s, config.base_dir, path));
    }
    if (int delay = s.value("delay_ms", 0); delay > 0) {
      backend = std::make_shared<DelayedBackend>(std::move(backend), std::chrono::milliseconds(delay));
    }
    service->add_provider(p.id, std::move(backend), p.limits);
  }
  return service;
}

}  // namespace charmem
