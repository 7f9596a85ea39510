#include "support.hpp"

#include "weightflow/cli.hpp"

#include <doctest.h>

#include <sstream>

using namespace weightflow;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Result r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Copy of the shipped configs and demo data, so runs never touch the source tree.
fs::path workspace(const std::string& name) {
  const fs::path dir = wf_test::scratch_dir("cli_" + name);
  const fs::path src(WF_SOURCE_DIR);
  fs::copy(src / "configs", dir / "configs", fs::copy_options::recursive);
  fs::copy(src / "data", dir / "data", fs::copy_options::recursive);
  return dir;
}

}  // namespace

TEST_CASE("usage errors") {
  CHECK(run({}).code == kExitConfig);
  CHECK(run({"frobnicate"}).code == kExitConfig);
  CHECK(run({"backtest"}).code == kExitConfig);
  CHECK(run({"backtest", "--config", "/nonexistent.json"}).code == kExitConfig);
  CHECK(run({"--help"}).code == kExitOk);
}

TEST_CASE("backtest writes every artifact and is reproducible") {
  const fs::path ws = workspace("backtest");
  const std::string cfg = (ws / "configs" / "baselines.json").string();
  const Result a = run({"backtest", "--config", cfg, "--out", (ws / "a").string(), "--seed", "11"});
  REQUIRE_MESSAGE(a.code == kExitOk, a.err);
  CHECK(a.out.find("growth x") != std::string::npos);
  for (const char* f : {"metrics.csv", "metrics.json", "equity.svg"}) CHECK(fs::exists(ws / "a" / f));
  std::size_t strategies = 0;
  for (const auto& entry : fs::directory_iterator(ws / "a")) {
    if (!entry.is_directory()) continue;
    ++strategies;
    for (const char* f : {"ledger.csv", "gross.csv", "weights.csv", "metrics.csv", "equity.svg"}) {
      CHECK_MESSAGE(fs::exists(entry.path() / f), (entry.path() / f).string());
    }
  }
  CHECK(strategies == 8);

  const Result b = run({"backtest", "--config", cfg, "--out", (ws / "b").string(), "--seed", "11"});
  REQUIRE(b.code == kExitOk);
  CHECK(a.out.substr(0, a.out.rfind("wrote")) == b.out.substr(0, b.out.rfind("wrote")));
  for (const auto& entry : fs::recursive_directory_iterator(ws / "a")) {
    if (!entry.is_regular_file()) continue;
    const fs::path twin = ws / "b" / fs::relative(entry.path(), ws / "a");
    CHECK_MESSAGE(slurp(entry.path()) == slurp(twin), twin.string());
  }
}

TEST_CASE("ablation pairs") {
  const fs::path ws = workspace("ablate");
  const std::string cfg = (ws / "configs" / "ablation.json").string();
  const Result t = run({"backtest", "-c", cfg, "-o", (ws / "t").string(), "--ablate", "timing"});
  REQUIRE_MESSAGE(t.code == kExitOk, t.err);
  CHECK(t.out.find("(No Timing)") != std::string::npos);
  CHECK(t.out.find("(With Timing)") != std::string::npos);
  const Result o = run({"backtest", "-c", cfg, "-o", (ws / "o").string(), "--ablate", "overlay"});
  REQUIRE_MESSAGE(o.code == kExitOk, o.err);
  CHECK(o.out.find("(With Overlay)") != std::string::npos);
  CHECK(run({"backtest", "-c", cfg, "--ablate", "sizing"}).code == kExitConfig);
  CHECK(run({"backtest", "-c", cfg, "--strategy", "no-such-id"}).code == kExitConfig);
}

TEST_CASE("paper sessions") {
  const fs::path ws = workspace("paper");

  SUBCASE("ideal broker matches the backtest") {
    const Result r = run({"paper", "-c", (ws / "configs" / "consistency.json").string(), "-o", (ws / "ideal").string()});
    REQUIRE_MESSAGE(r.code == kExitOk, r.err);
    CHECK(r.out.find("max relative gap to backtest") != std::string::npos);
    for (const char* f : {"journal.jsonl", "paper_ledger.csv", "reconciliation.csv", "state.json", "paper_metrics.csv"}) {
      CHECK(fs::exists(ws / "ideal" / f));
    }
  }

  SUBCASE("faulty broker, crash and resume") {
    const std::string cfg = (ws / "configs" / "paper_faulty.json").string();
    const Result full = run({"paper", "-c", cfg, "-o", (ws / "full").string()});
    REQUIRE_MESSAGE(full.code == kExitOk, full.err);
    CHECK(full.out.find("rejection rate 0,") == std::string::npos);

    const Result killed = run({"paper", "-c", cfg, "-o", (ws / "crash").string(), "--kill-after", "120"});
    CHECK(killed.code == kExitRuntime);
    CHECK(killed.out.find("--resume") != std::string::npos);
    const std::string journal = (ws / "crash" / "journal.jsonl").string();
    const Result resumed = run({"paper", "-c", cfg, "-o", (ws / "crash").string(), "--resume", journal});
    REQUIRE_MESSAGE(resumed.code == kExitOk, resumed.err);
    CHECK(slurp(ws / "crash" / "state.json") == slurp(ws / "full" / "state.json"));
    CHECK(slurp(journal) == slurp(ws / "full" / "journal.jsonl"));
    CHECK(slurp(ws / "crash" / "paper_ledger.csv") == slurp(ws / "full" / "paper_ledger.csv"));

    const Result other_seed =
        run({"paper", "-c", cfg, "-o", (ws / "crash").string(), "--resume", journal, "--seed", "8"});
    CHECK(other_seed.code == kExitConfig);
    CHECK(run({"paper", "-c", cfg, "--resume", (ws / "missing.jsonl").string()}).code == kExitData);
  }
}

TEST_CASE("ingest") {
  const fs::path ws = workspace("ingest");
  const std::string cfg = (ws / "configs" / "equal_weight.json").string();
  const Result a = run({"ingest", "-c", cfg, "-o", (ws / "a").string()});
  REQUIRE_MESSAGE(a.code == kExitOk, a.err);
  const Result b = run({"ingest", "-c", cfg, "-o", (ws / "b").string()});
  REQUIRE(b.code == kExitOk);
  CHECK(a.out.substr(0, a.out.find('\n')) == b.out.substr(0, b.out.find('\n')));
  CHECK(a.out.rfind("snapshot ", 0) == 0);

  fs::remove(ws / "data" / "prices.csv");
  const Result missing = run({"ingest", "-c", cfg, "-o", (ws / "c").string()});
  CHECK(missing.code == kExitData);
  CHECK(missing.err.find("prices.csv") != std::string::npos);
}

TEST_CASE("bad inputs map to exit codes") {
  const fs::path ws = workspace("bad");
  wf_test::write_file(ws / "configs" / "broken.json", "{\"strategies\": [");
  CHECK(run({"backtest", "-c", (ws / "configs" / "broken.json").string()}).code == kExitConfig);
  wf_test::write_file(ws / "configs" / "unknown.json",
                      "{\"data\": {\"prices\": [\"../data/prices.csv\"]}, \"strategies\": [{\"id\": \"x\", "
                      "\"alocator\": {}}]}");
  CHECK(run({"backtest", "-c", (ws / "configs" / "unknown.json").string()}).code == kExitConfig);

  wf_test::write_file(ws / "data" / "prices.csv", "date,symbol,open,close\n2024-01-02,AAA,1,oops\n");
  const Result r = run({"backtest", "-c", (ws / "configs" / "equal_weight.json").string(), "-o",
                        (ws / "out").string()});
  CHECK(r.code == kExitData);
}

TEST_CASE("report") {
  const fs::path ws = workspace("report");
  REQUIRE(run({"backtest", "-c", (ws / "configs" / "baselines.json").string(), "-o", (ws / "bt").string()}).code ==
          kExitOk);
  REQUIRE(run({"paper", "-c", (ws / "configs" / "paper_faulty.json").string(), "-o", (ws / "pp").string()}).code ==
          kExitOk);
  const Result r = run({"report", (ws / "bt" / "metrics.csv").string(), (ws / "pp" / "paper_metrics.csv").string(),
                        "-o", (ws / "rep").string()});
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  CHECK(r.out.find("(paper)") != std::string::npos);
  CHECK(fs::exists(ws / "rep" / "report.csv"));
  CHECK(fs::exists(ws / "rep" / "report.md"));
  CHECK(fs::exists(ws / "rep" / "report.svg"));
  CHECK(run({"report", "-o", (ws / "rep2").string()}).code == kExitConfig);
  CHECK(run({"report", (ws / "bt" / "metrics.csv").string(), (ws / "bt" / "metrics.json").string(), "-o",
             (ws / "rep3").string()})
            .code == kExitConfig);
  CHECK(run({"report", (ws / "nope.csv").string()}).code == kExitData);
}
