#include <doctest.h>

#include <csignal>
#include <json.hpp>
#include <regex>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>

#include "charmem/corpus.hpp"
#include "test_support.hpp"

using charmem::testing::fixture;
namespace fs = std::filesystem;

namespace {

std::size_t cache_files(const fs::path& dir) {
  std::size_t n = 0;
  if (!fs::exists(dir)) return 0;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") ++n;
  }
  return n;
}

pid_t spawn_run(const fs::path& out, const fs::path& log) {
  pid_t pid = ::fork();
  if (pid == 0) {
    std::string plan = fixture("plans/resume.json").string();
    std::string cfg = fixture("config/providers.json").string();
    std::string o = out.string();
    FILE* f = std::freopen(log.c_str(), "w", stdout);
    (void)f;
    ::execl(CHARMEM_BIN, CHARMEM_BIN, "run", "--plan", plan.c_str(), "--provider-config", cfg.c_str(), "--out",
            o.c_str(), static_cast<char*>(nullptr));
    std::_Exit(127);
  }
  return pid;
}

int wait_for(pid_t pid) {
  int status = 0;
  ::waitpid(pid, &status, 0);
  return status;
}

}  // namespace

TEST_SUITE("resume") {
  TEST_CASE("SIGKILL mid-run then resume reproduces the uninterrupted report") {
    charmem::testing::TempDir full, cut;
    int st = wait_for(spawn_run(full.path(), full / "log.txt"));
    REQUIRE(WIFEXITED(st));
    REQUIRE(WEXITSTATUS(st) == 0);

    pid_t pid = spawn_run(cut.path(), cut / "log1.txt");
    auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(60);
    while (cache_files(cut / "cache") < 40 && std::chrono::steady_clock::now() < deadline) {
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    ::kill(pid, SIGKILL);
    st = wait_for(pid);
    REQUIRE(WIFSIGNALED(st));
    std::size_t before = cache_files(cut / "cache");
    CHECK(before >= 40);
    CHECK(before < 168);
    CHECK_FALSE(fs::exists(cut / "report.md"));

    st = wait_for(spawn_run(cut.path(), cut / "log2.txt"));
    REQUIRE(WIFEXITED(st));
    CHECK(WEXITSTATUS(st) == 0);
    std::string log = charmem::read_file(cut / "log2.txt");
    std::smatch m;
    REQUIRE(std::regex_search(log, m, std::regex(R"(cache hits (\d+)/(\d+))")));
    CHECK(std::stoul(m[1]) == before);
    CHECK(std::stoul(m[2]) == 168);
    CHECK(charmem::read_file(cut / "report.md") == charmem::read_file(full / "report.md"));
    CHECK(charmem::read_file(cut / "results.jsonl") == charmem::read_file(full / "results.jsonl"));
  }
}
