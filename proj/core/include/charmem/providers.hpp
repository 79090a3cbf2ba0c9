#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace charmem {

struct ModelParams {
  double temperature = 0.0;
  int max_tokens = 512;
  std::optional<std::int64_t> seed = 0;
};

struct ModelSpec {
  std::string id;  // name used by plans; defaults to model_name
  std::string provider_id;
  std::string model_name;
  ModelParams params;

  // Throws ConfigError when temperature < 0 or max_tokens < 1.
  void validate() const;
};

struct CompletionRecord {
  std::string request_hash;
  std::string prompt;
  std::string response_text;
  std::int64_t latency_ms = 0;
  std::string timestamp;  // ISO-8601 UTC
  std::string provider_id;
  std::string model_name;
  int trial_index = 0;
  int attempts = 0;     // backend calls made for this record; 0 on a cache hit
  bool cache_hit = false;
  std::string metadata;  // provider-specific JSON object, "{}" when none
};

// Stable SHA-256 over (provider_id, model_name, params, prompt, trial_index).
std::string request_hash(const ModelSpec& model, std::string_view prompt, int trial_index);

std::string completion_record_to_json(const CompletionRecord& record);
CompletionRecord completion_record_from_json(std::string_view json_text);

struct BackendReply {
  int status = 200;  // HTTP-style status; 0 = transport failure before a response
  std::string text;
  std::string error;
  std::optional<double> retry_after_seconds;
  std::string metadata = "{}";
};

// One provider endpoint or mock. send() is called concurrently.
class Backend {
 public:
  virtual ~Backend() = default;

  BackendReply send(const ModelSpec& model, const std::string& prompt, int trial_index);
  std::size_t calls() const noexcept { return calls_.load(); }
  virtual bool uses_network() const { return false; }

 protected:
  virtual BackendReply do_send(const ModelSpec& model, const std::string& prompt, int trial_index) = 0;

 private:
  std::atomic<std::size_t> calls_{0};
};

// Content-addressed record store: one JSON file per request hash under dir
// (sharded by the first two hex digits), plus an in-memory layer.
class ResponseCache {
 public:
  ResponseCache() = default;
  explicit ResponseCache(std::filesystem::path dir);  // empty path: memory only

  std::optional<CompletionRecord> get(const std::string& hash);
  void put(const CompletionRecord& record);
  std::size_t size_on_disk() const;
  const std::optional<std::filesystem::path>& dir() const noexcept { return dir_; }

 private:
  std::filesystem::path file_for(const std::string& hash) const;

  std::optional<std::filesystem::path> dir_;
  std::mutex mu_;
  std::map<std::string, CompletionRecord> memory_;
};

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_delay{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_delay{30000};

  std::chrono::milliseconds delay_for(int retry_number, std::optional<double> retry_after_seconds) const;
};

struct RateLimit {
  double requests_per_minute = 0.0;  // 0 = unlimited
  int max_in_flight = 4;
};

class TokenBucket {
 public:
  TokenBucket(double per_minute, double burst);
  // Blocks until a token is available.
  void acquire();

 private:
  double rate_per_sec_;
  double capacity_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
  std::mutex mu_;
};

struct CompletionStats {
  std::size_t requests = 0;
  std::size_t cache_hits = 0;
  std::size_t backend_calls = 0;
  std::size_t retries = 0;
  std::size_t failures = 0;
};

class CompletionService {
 public:
  explicit CompletionService(std::shared_ptr<ResponseCache> cache = std::make_shared<ResponseCache>(),
                             RetryPolicy retry = {});
  ~CompletionService();

  CompletionService(const CompletionService&) = delete;
  CompletionService& operator=(const CompletionService&) = delete;

  void add_provider(const std::string& provider_id, std::shared_ptr<Backend> backend, RateLimit limits = {});
  bool has_provider(const std::string& provider_id) const;
  std::shared_ptr<Backend> backend(const std::string& provider_id) const;

  // Cache hit: stored record, no backend call. Miss: rate-limited request
  // with retries on 429/5xx/transport failures; 401/403 raise CredentialError
  // immediately; exhausted retries raise TransportError.
  CompletionRecord complete(const ModelSpec& model, const std::string& prompt, int trial_index);

  CompletionStats stats() const;
  ResponseCache& cache() { return *cache_; }

  // Replaces std::this_thread::sleep_for in backoff (tests).
  void set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper);

 private:
  struct Provider;
  Provider& provider(const std::string& id) const;
  std::shared_ptr<std::mutex> key_lock(const std::string& hash);

  std::shared_ptr<ResponseCache> cache_;
  RetryPolicy retry_;
  std::map<std::string, std::unique_ptr<Provider>> providers_;
  std::function<void(std::chrono::milliseconds)> sleeper_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<std::mutex>> key_locks_;
  CompletionStats stats_;
};

// ---------------------------------------------------------------- backends

// Deterministic scripted responses keyed by exact prompt. An optional fault
// script makes the next calls return the listed statuses before succeeding.
class ScriptedBackend : public Backend {
 public:
  explicit ScriptedBackend(std::map<std::string, std::string> responses = {},
                           std::optional<std::string> fallback = std::nullopt);

  void set_response(const std::string& prompt, std::string response);
  void set_fault_script(std::vector<int> statuses);
  void set_delay(std::chrono::milliseconds delay);

 protected:
  BackendReply do_send(const ModelSpec& model, const std::string& prompt, int trial_index) override;

 private:
  std::mutex mu_;
  std::map<std::string, std::string> responses_;
  std::optional<std::string> fallback_;
  std::vector<int> faults_;
  std::chrono::milliseconds delay_{0};
};

struct WorkText {
  std::string title;
  std::string raw_text;  // labeled-lines script
};

struct TraitProfile {
  std::string character;
  std::vector<std::string> keywords;
};

inline constexpr std::string_view kUnknownSource = "UNKNOWN";

// Memorization stand-in. Source-probe prompts are attributed to the work
// whose stored text contains the whole excerpt verbatim ("UNKNOWN"
// otherwise). Speaker-guess prompts are answered by exact lookup of every
// dialogue line; one unmatched line and the scene is not recognized.
std::shared_ptr<Backend> make_verbatim_oracle(std::vector<WorkText> corpus,
                                              std::string probe_instruction = "Tell me the source for following script:");

// Reasoning stand-in. Each placeholder in a speaker-guess prompt is assigned
// the character whose trait keywords overlap its lines the most; names play
// no part. Ties go to trait-db order; zero overlap falls back to the first
// character and is flagged as low confidence in the record metadata.
std::shared_ptr<Backend> make_gist_oracle(std::vector<TraitProfile> trait_db);

struct HttpSettings {
  std::string api = "openai-chat";  // or "anthropic-messages"
  std::string endpoint;             // full URL of the completion route
  std::string auth_env;             // environment variable holding the key
  std::chrono::seconds timeout{120};
};

std::shared_ptr<Backend> make_http_backend(HttpSettings settings);

// Request/response shapes of the supported chat APIs (exposed for tests).
std::string build_http_request_body(const std::string& api, const ModelSpec& model, const std::string& prompt);
std::string parse_http_response_body(const std::string& api, const std::string& body);

// ---------------------------------------------------------------- config

struct ProviderSettings {
  std::string id;
  std::string kind;  // openai-chat | anthropic-messages | scripted | verbatim-oracle | gist-oracle
  RateLimit limits;
  std::string settings_json;  // the provider's JSON object
};

struct ProviderConfig {
  std::filesystem::path base_dir;  // relative paths resolve here
  std::vector<ProviderSettings> providers;
  std::map<std::string, ModelSpec> models;  // keyed by model id
  std::optional<std::filesystem::path> cache_dir;
  RetryPolicy retry;

  bool uses_network() const;
  const ModelSpec& model(const std::string& id) const;  // ConfigError if unknown
};

ProviderConfig load_provider_config(std::string_view json_text, std::filesystem::path base_dir);
ProviderConfig load_provider_config_file(const std::filesystem::path& path);

// Credentials present for every network provider; throws CredentialError.
void preflight_credentials(const ProviderConfig& config);

std::unique_ptr<CompletionService> make_completion_service(const ProviderConfig& config,
                                                           const std::filesystem::path& default_cache_dir);

}  // namespace charmem
