#include <doctest.h>

#include <cstdlib>
#include <json.hpp>
#include <random>
#include <set>
#include <thread>

#include "charmem/errors.hpp"
#include "charmem/perturb.hpp"
#include "charmem/prompts.hpp"
#include "charmem/providers.hpp"
#include "test_support.hpp"

using namespace charmem;
using charmem::testing::fixture;
using nlohmann::json;

namespace {

ModelSpec mock_model(std::string provider = "mock") { return {"m", std::move(provider), "mock-1", {}}; }

std::vector<WorkText> main_works() {
  std::vector<WorkText> out;
  for (const char* w : {"friends", "tbbt", "csi"}) {
    out.push_back({load_roster_file(fixture(std::string("rosters/") + w + ".json")).title,
                   read_file(fixture(std::string("scripts/") + w + ".txt"))});
  }
  return out;
}

std::vector<TraitProfile> traits() {
  std::vector<TraitProfile> out;
  const json db = json::parse(read_file(fixture("traits.json")));
  for (const auto& t : db.at("traits")) {
    out.push_back({t.at("character").get<std::string>(), t.at("keywords").get<std::vector<std::string>>()});
  }
  return out;
}

}  // namespace

TEST_SUITE("providers") {
  TEST_CASE("model spec validation") {
    ModelSpec m = mock_model();
    CHECK_NOTHROW(m.validate());
    m.params.temperature = -0.1;
    CHECK_THROWS_AS(m.validate(), ConfigError);
    m.params.temperature = 0;
    m.params.max_tokens = 0;
    CHECK_THROWS_AS(m.validate(), ConfigError);
  }

  TEST_CASE("request hash is stable and input-sensitive") {
    ModelSpec m = mock_model();
    std::string h = request_hash(m, "prompt", 0);
    CHECK(h.size() == 64);
    CHECK(h == request_hash(m, "prompt", 0));
    CHECK(h != request_hash(m, "prompt", 1));
    CHECK(h != request_hash(m, "prompt ", 0));
    ModelSpec m2 = m;
    m2.params.temperature = 0.5;
    CHECK(h != request_hash(m2, "prompt", 0));
    m2 = m;
    m2.params.seed = std::nullopt;
    CHECK(h != request_hash(m2, "prompt", 0));
    m2 = m;
    m2.provider_id = "other";
    CHECK(h != request_hash(m2, "prompt", 0));
    m2 = m;
    m2.id = "alias";  // the plan-facing id is not part of the request
    CHECK(h == request_hash(m2, "prompt", 0));
  }

  TEST_CASE("no digest collisions over 1e5 random requests") {
    std::mt19937_64 rng(99);
    std::set<std::string> seen;
    std::set<std::string> inputs;
    ModelSpec m = mock_model();
    for (int i = 0; i < 100000; ++i) {
      std::string prompt = std::to_string(rng()) + ":" + std::to_string(rng() % 1000);
      int trial = static_cast<int>(rng() % 3);
      if (!inputs.insert(prompt + "#" + std::to_string(trial)).second) continue;
      CHECK(seen.insert(request_hash(m, prompt, trial)).second);
    }
  }

  TEST_CASE("completion record json round trip") {
    CompletionRecord r{"abc", "p", "r", 12, "2026-01-01T00:00:00Z", "prov", "model", 2, 3, false, R"({"x":1})"};
    CompletionRecord back = completion_record_from_json(completion_record_to_json(r));
    CHECK(back.request_hash == r.request_hash);
    CHECK(back.response_text == "r");
    CHECK(back.trial_index == 2);
    CHECK(back.attempts == 3);
    CHECK(json::parse(back.metadata) == json::parse(r.metadata));
  }

  TEST_CASE("scripted response and cache hit without a backend call") {
    CompletionService svc;
    auto backend = std::make_shared<ScriptedBackend>(std::map<std::string, std::string>{{"promptA", "Sheldon"}});
    svc.add_provider("mock", backend);
    auto a = svc.complete(mock_model(), "promptA", 0);
    CHECK(a.response_text == "Sheldon");
    CHECK_FALSE(a.cache_hit);
    CHECK(a.attempts == 1);
    CHECK(backend->calls() == 1);
    auto b = svc.complete(mock_model(), "promptA", 0);
    CHECK(backend->calls() == 1);
    CHECK(b.cache_hit);
    CHECK(b.attempts == 0);
    CHECK(b.response_text == a.response_text);
    CHECK(b.request_hash == a.request_hash);
    CHECK(b.timestamp == a.timestamp);
    CHECK(b.latency_ms == a.latency_ms);
    // a new trial index is a new request
    svc.complete(mock_model(), "promptA", 1);
    CHECK(backend->calls() == 2);
    CHECK(svc.stats().cache_hits == 1);
    CHECK(svc.stats().requests == 3);
  }

  TEST_CASE("429 twice then 200 succeeds after two backoffs") {
    CompletionService svc(std::make_shared<ResponseCache>(), RetryPolicy{5, std::chrono::milliseconds(100), 2.0,
                                                                         std::chrono::milliseconds(1000)});
    std::vector<std::chrono::milliseconds> sleeps;
    svc.set_sleeper([&](std::chrono::milliseconds d) { sleeps.push_back(d); });
    auto backend = std::make_shared<ScriptedBackend>(std::map<std::string, std::string>{}, "ok");
    backend->set_fault_script({429, 429});
    svc.add_provider("mock", backend);
    auto r = svc.complete(mock_model(), "p", 0);
    CHECK(r.response_text == "ok");
    CHECK(r.attempts == 3);
    CHECK(backend->calls() == 3);
    CHECK(svc.stats().retries == 2);
    CHECK(sleeps.size() == 2);
  }

  TEST_CASE("5xx and transport failures retry until exhausted") {
    CompletionService svc(std::make_shared<ResponseCache>(), RetryPolicy{3, std::chrono::milliseconds(1), 2.0,
                                                                         std::chrono::milliseconds(4)});
    svc.set_sleeper([](std::chrono::milliseconds) {});
    auto backend = std::make_shared<ScriptedBackend>(std::map<std::string, std::string>{}, "ok");
    backend->set_fault_script({500, 0, 503});
    svc.add_provider("mock", backend);
    try {
      svc.complete(mock_model(), "p", 0);
      FAIL("expected TransportError");
    } catch (const CredentialError&) {
      FAIL("wrong error type");
    } catch (const TransportError& e) {
      CHECK(e.attempts() == 3);
      CHECK(e.status() == 503);
    }
    CHECK(backend->calls() == 3);
    // nothing cached for the failed request; the next call succeeds
    CHECK(svc.complete(mock_model(), "p", 0).response_text == "ok");
  }

  TEST_CASE("auth failures are not retried, other 4xx fail fast") {
    CompletionService svc;
    svc.set_sleeper([](std::chrono::milliseconds) { FAIL("slept"); });
    auto backend = std::make_shared<ScriptedBackend>(std::map<std::string, std::string>{}, "ok");
    svc.add_provider("mock", backend);
    backend->set_fault_script({401});
    CHECK_THROWS_AS(svc.complete(mock_model(), "p", 0), CredentialError);
    backend->set_fault_script({403});
    CHECK_THROWS_AS(svc.complete(mock_model(), "p", 0), CredentialError);
    backend->set_fault_script({400});
    CHECK_THROWS_AS(svc.complete(mock_model(), "p", 0), TransportError);
    CHECK(backend->calls() == 3);
    auto unscripted = std::make_shared<ScriptedBackend>();
    svc.add_provider("empty", unscripted);
    CHECK_THROWS_AS(svc.complete(mock_model("empty"), "p", 0), TransportError);
    CHECK_THROWS_AS(svc.complete(mock_model("nobody"), "p", 0), ConfigError);
  }

  TEST_CASE("backoff schedule") {
    RetryPolicy p{5, std::chrono::milliseconds(500), 2.0, std::chrono::milliseconds(3000)};
    CHECK(p.delay_for(1, std::nullopt).count() == 500);
    CHECK(p.delay_for(2, std::nullopt).count() == 1000);
    CHECK(p.delay_for(3, std::nullopt).count() == 2000);
    CHECK(p.delay_for(4, std::nullopt).count() == 3000);
    CHECK(p.delay_for(2, 1.5).count() == 1500);
    CHECK(p.delay_for(2, 60.0).count() == 3000);
  }

  TEST_CASE("disk cache survives a new service; torn files are misses") {
    charmem::testing::TempDir dir;
    auto backend = std::make_shared<ScriptedBackend>(std::map<std::string, std::string>{}, "stored");
    std::string hash;
    {
      CompletionService svc(std::make_shared<ResponseCache>(dir.path()));
      svc.add_provider("mock", backend);
      hash = svc.complete(mock_model(), "p", 0).request_hash;
    }
    CHECK(std::filesystem::exists(dir / (hash.substr(0, 2) + "/" + hash + ".json")));
    CompletionService again(std::make_shared<ResponseCache>(dir.path()));
    again.add_provider("mock", backend);
    auto r = again.complete(mock_model(), "p", 0);
    CHECK(r.cache_hit);
    CHECK(r.response_text == "stored");
    CHECK(backend->calls() == 1);
    CHECK(again.cache().size_on_disk() == 1);

    write_file_atomic(dir / (hash.substr(0, 2) + "/" + hash + ".json"), "{\"request_hash\": ");
    CompletionService third(std::make_shared<ResponseCache>(dir.path()));
    third.add_provider("mock", backend);
    CHECK_FALSE(third.complete(mock_model(), "p", 0).cache_hit);
    CHECK(backend->calls() == 2);
  }

  TEST_CASE("concurrent identical requests make one backend call") {
    CompletionService svc;
    auto backend = std::make_shared<ScriptedBackend>(std::map<std::string, std::string>{}, "x");
    backend->set_delay(std::chrono::milliseconds(20));
    svc.add_provider("mock", backend, RateLimit{0, 8});
    std::vector<std::thread> ts;
    for (int i = 0; i < 8; ++i) ts.emplace_back([&] { svc.complete(mock_model(), "same", 0); });
    for (auto& t : ts) t.join();
    CHECK(backend->calls() == 1);
    CHECK(svc.stats().cache_hits == 7);
  }

  TEST_CASE("token bucket paces requests") {
    TokenBucket bucket(600.0, 1.0);  // 10 per second, burst 1
    auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < 4; ++i) bucket.acquire();
    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
    CHECK(ms >= 250);
    TokenBucket unlimited(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) unlimited.acquire();
  }

  TEST_CASE("verbatim oracle: source probe") {
    auto oracle = make_verbatim_oracle(main_works());
    auto seg = load_corpus_file(fixture("corpus/guess.jsonl"));
    const Segment* tb = nullptr;
    for (const auto& s : seg) {
      if (s.work_id == "tbbt") tb = &s;
    }
    REQUIRE(tb);
    ModelSpec m = mock_model();
    CHECK(oracle->send(m, render_source_probe(tb->utterances), 0).text == "The Big Bang Theory");
    NameMap map = build_name_map(charmem::testing::tbbt_roster(), CrossCulturalStrategy{}, default_cross_cultural_pool(), 0);
    auto replaced = apply_name_map(*tb, map).segment;
    CHECK(oracle->send(m, render_source_probe(replaced.utterances), 0).text == "UNKNOWN");
    CHECK(oracle->send(m, render_source_probe({}), 0).text == "UNKNOWN");
    CHECK(oracle->send(m, "What is this?", 0).text == "UNKNOWN");
  }

  TEST_CASE("verbatim oracle: speaker guess by exact line lookup") {
    auto oracle = make_verbatim_oracle(main_works());
    auto seg = load_corpus_file(fixture("corpus/anonymize.jsonl")).at(1);
    auto anon = anonymize_speakers(seg, PlaceholderTemplate::p_style(), charmem::testing::csi_roster());
    std::string prompt = render(anon.segment.task, PromptCondition::Baseline, anon.segment);
    CHECK(oracle->send(mock_model(), prompt, 0).text == "P0: Peter Berglund\nP1: Grissom");
    anon.segment.utterances[2].text += " Really.";
    prompt = render(anon.segment.task, PromptCondition::Baseline, anon.segment);
    CHECK(oracle->send(mock_model(), prompt, 0).text == "UNKNOWN");
  }

  TEST_CASE("gist oracle: unique overlap, invariance, low-confidence fallback") {
    auto oracle = make_gist_oracle(traits());
    ModelSpec m = mock_model();
    CHECK(oracle->send(m, "Who?\nP0: The dinosaur museum is closed.", 0).text == "P0: Ross");

    auto segs = load_corpus_file(fixture("corpus/guess.jsonl"));
    auto rosters = load_roster_dir(fixture("rosters"));
    for (const auto& s : segs) {
      const Roster& r = rosters.at(s.work_id);
      auto a = anonymize_speakers(s, PlaceholderTemplate::p_style(), r);
      NameMap map = build_name_map(r, CrossCulturalStrategy{}, default_cross_cultural_pool(), 0);
      auto p = apply_name_map(s, map).segment;
      auto b = anonymize_speakers(p, PlaceholderTemplate::p_style(), rendered_roster(r, map));
      std::string before = oracle->send(m, render(a.segment.task, PromptCondition::Gist, a.segment), 0).text;
      std::string after = oracle->send(m, render(b.segment.task, PromptCondition::Gist, b.segment), 0).text;
      CHECK(before == after);
      std::string gold;
      for (const auto& [label, name] : a.label_map) gold += (gold.empty() ? "" : "\n") + label + ": " + name;
      CHECK(before == gold);
    }

    auto reply = oracle->send(m, "Who?\nP0: Nothing to see.\nP1: The fossil.", 0);
    CHECK(reply.text == "P0: Monica\nP1: Ross");
    CHECK(json::parse(reply.metadata) == json{{"low_confidence", {"P0"}}});
    CHECK(oracle->send(m, "Tell me the source for following script:\nMonica: hi", 0).text == "UNKNOWN");
  }

  TEST_CASE("provider config parsing") {
    auto cfg = load_provider_config_file(fixture("config/providers.json"));
    CHECK(cfg.providers.size() == 4);
    CHECK(cfg.model("gist-oracle").provider_id == "gist");
    CHECK(cfg.model("live-model").params.seed == 0);
    CHECK(cfg.uses_network());
    CHECK_THROWS_AS(cfg.model("nope"), ConfigError);
    CHECK(cfg.retry.max_attempts == 3);

    try {
      load_provider_config(R"({"format_version":1,"providers":[{"id":"a","kind":"openai-chat"}],"models":[]})", ".");
      FAIL("missing endpoint accepted");
    } catch (const ConfigError& e) {
      CHECK(e.path() == "providers[0].endpoint");
    }
    CHECK_THROWS_AS(load_provider_config(R"({"format_version":1,"providers":[{"id":"a","kind":"magic"}],"models":[]})", "."),
                    ConfigError);
    CHECK_THROWS_AS(load_provider_config(R"({"format_version":1,"providers":[{"id":"a","kind":"scripted"}],
        "models":[{"provider":"b","model_name":"x"}]})", "."), ConfigError);
    CHECK_THROWS_AS(load_provider_config(R"({"format_version":1,"providers":[{"id":"a","kind":"scripted"},{"id":"a","kind":"scripted"}],"models":[]})", "."),
                    ConfigError);
  }

  TEST_CASE("credential preflight reads the environment only") {
    auto cfg = load_provider_config_file(fixture("config/providers.json"));
    ::unsetenv("CHARMEM_TEST_UNSET_KEY");
    try {
      preflight_credentials(cfg);
      FAIL("expected CredentialError");
    } catch (const CredentialError& e) {
      CHECK(std::string(e.what()).find("CHARMEM_TEST_UNSET_KEY") != std::string::npos);
    }
    ::setenv("CHARMEM_TEST_UNSET_KEY", "sk-test", 1);
    CHECK_NOTHROW(preflight_credentials(cfg));
    ::unsetenv("CHARMEM_TEST_UNSET_KEY");
  }

  TEST_CASE("service from config answers with the oracles") {
    auto cfg = load_provider_config_file(fixture("config/providers.json"));
    charmem::testing::TempDir dir;
    auto svc = make_completion_service(cfg, dir.path());
    auto r = svc->complete(cfg.model("gist-oracle"), "Who?\nP0: I love my guitar.", 0);
    CHECK(r.response_text == "P0: Phoebe");
    CHECK(svc->cache().size_on_disk() == 1);
  }

  TEST_CASE("http request and response shapes") {
    ModelSpec m{"gpt", "p", "gpt-4o", {0.0, 64, 7}};
    auto openai = json::parse(build_http_request_body("openai-chat", m, "hello"));
    CHECK(openai.at("model") == "gpt-4o");
    CHECK(openai.at("max_tokens") == 64);
    CHECK(openai.at("seed") == 7);
    CHECK(openai.at("messages").at(0) == json{{"role", "user"}, {"content", "hello"}});
    auto anthropic = json::parse(build_http_request_body("anthropic-messages", m, "hello"));
    CHECK_FALSE(anthropic.contains("seed"));
    CHECK(parse_http_response_body("openai-chat", R"({"choices":[{"message":{"content":"Friends"}}]})") == "Friends");
    CHECK(parse_http_response_body("anthropic-messages",
                                   R"({"content":[{"type":"text","text":"The Big "},{"type":"text","text":"Bang Theory"}]})") ==
          "The Big Bang Theory");
    CHECK_THROWS_AS(build_http_request_body("smoke-signal", m, "x"), ConfigError);
    CHECK_THROWS(parse_http_response_body("openai-chat", "{}"));
  }
}
