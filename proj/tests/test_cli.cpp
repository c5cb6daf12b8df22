// End-to-end smoke of the installed binary: every subcommand is exercised
// through a real process boundary, so exit codes, stdout wording, and
// on-disk side effects are all checked the way an operator would see them.

#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <string>

#include "cocot/strategy.hpp"
#include "cocot/util.hpp"
#include "cocot/version.hpp"

#include "helpers.hpp"

using namespace cocot;

namespace {

struct CmdResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

CmdResult run_cli(const std::string& args, const std::filesystem::path& scratch) {
  static int counter = 0;
  std::filesystem::path out_path = scratch / ("stdout." + std::to_string(counter));
  std::filesystem::path err_path = scratch / ("stderr." + std::to_string(counter));
  ++counter;

  std::string cmd = std::string(COCOT_CLI_PATH) + " " + args + " > " + out_path.string() +
                    " 2> " + err_path.string();
  int rc = std::system(cmd.c_str());

  CmdResult result;
  result.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  result.out = read_file(out_path);
  result.err = read_file(err_path);
  return result;
}

bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

// A small two-strategy grid over the intent dataset: 3 items x 2 strategies
// x 2 grounding conditions = 12 cells, all served by the deterministic mock.
std::filesystem::path write_config(const std::filesystem::path& scratch) {
  json doc = {
      {"run_id", "smoke"},
      {"datasets",
       {{{"manifest", testutil::fixture("datasets/vague_speech.manifest.json").string()},
         {"conditions", {"socratic_caption", "raw_image"}}}}},
      {"strategies", {"direct", "cocot_full"}},
      {"sample", {{"count", 3}, {"seed", 7}}},
      {"providers",
       {{{"provider_id", "mock-vlm"},
         {"dialect", "mock"},
         {"model_name", "mock-model"},
         {"max_parallel", 4},
         {"mock_fixtures", testutil::fixture("mock/rules.jsonl").string()}}}},
      {"caption_provider", "mock-vlm"},
      {"judge", {{"mode", "rules"}}},
      {"cache_dir", (scratch / "cache").string()},
      {"output_dir", (scratch / "out").string()},
  };
  std::filesystem::path path = scratch / "smoke.json";
  std::ofstream f(path);
  f << doc.dump(2) << "\n";
  return path;
}

}  // namespace

TEST_CASE("cli walks plan, run, resume, and report end to end") {
  testutil::TempDir dir("cli");
  std::string cfg = " --config " + write_config(dir.path()).string();

  CmdResult version = run_cli("--version", dir.path());
  CHECK(version.exit_code == 0);
  CHECK(contains(version.out, kHarnessVersion));

  CmdResult plan = run_cli("plan" + cfg, dir.path());
  CHECK(plan.exit_code == 0);
  CHECK(contains(plan.out, "dataset vague_speech"));
  CHECK(contains(plan.out, "items=3"));
  CHECK(contains(plan.out, "total cells: 12"));

  CmdResult dry = run_cli("run --dry-run" + cfg, dir.path());
  CHECK(dry.exit_code == 0);
  CHECK(contains(dry.out, "dry run: no provider calls made"));
  CHECK_FALSE(std::filesystem::exists(dir / "cache" / "mock-vlm"));

  CmdResult partial = run_cli("run --stop-after 5" + cfg, dir.path());
  CHECK(partial.exit_code == 0);
  CHECK(contains(partial.out, "cells done=5 failed=0 pending=7"));

  CmdResult resumed = run_cli("run --resume" + cfg, dir.path());
  CHECK(resumed.exit_code == 0);
  CHECK(contains(resumed.out, "cells done=12 failed=0 pending=0"));

  // a second resume finds everything cached and still reports a full grid
  CmdResult again = run_cli("run --resume" + cfg, dir.path());
  CHECK(again.exit_code == 0);
  CHECK(contains(again.out, "cells done=12 failed=0 pending=0"));

  CmdResult report = run_cli("report" + cfg, dir.path());
  CHECK(report.exit_code == 0);
  CHECK(contains(report.out, "missing cells: 0"));
  std::filesystem::path run_dir = dir / "out" / "smoke";
  REQUIRE(std::filesystem::exists(run_dir / "report.json"));
  CHECK(std::filesystem::exists(run_dir / "report.csv"));
  CHECK(std::filesystem::exists(run_dir / "report.md"));
  json doc = json::parse(read_file(run_dir / "report.json"));
  CHECK(doc.at("header").at("run_id") == "smoke");
  CHECK(doc.at("header").at("planned_cells") == 12);
  CHECK(std::filesystem::read_symlink(dir / "out" / "latest") == "smoke");
}

TEST_CASE("cli strategy and run-id overrides narrow the grid") {
  testutil::TempDir dir("cli");
  std::string cfg = " --config " + write_config(dir.path()).string();

  CmdResult plan = run_cli("plan --strategies direct --sample 2 --seed 9" + cfg, dir.path());
  CHECK(plan.exit_code == 0);
  CHECK(contains(plan.out, "items=2"));
  CHECK(contains(plan.out, "total cells: 4"));

  CmdResult run = run_cli("run --strategies direct --sample 2 --seed 9 --run-id tiny" + cfg,
                          dir.path());
  CHECK(run.exit_code == 0);
  CHECK(contains(run.out, "cells done=4 failed=0 pending=0"));

  CmdResult report =
      run_cli("report --strategies direct --sample 2 --seed 9 --run-id tiny" + cfg, dir.path());
  CHECK(report.exit_code == 0);
  CHECK(std::filesystem::exists(dir / "out" / "tiny" / "report.json"));
}

TEST_CASE("cli converters and template export round-trip through the binary") {
  testutil::TempDir dir("cli");

  for (const char* task : {"vague", "m3cot", "vlguard"}) {
    std::string native = "native/" + std::string(task) + "_native.jsonl";
    std::filesystem::path out = dir / (std::string(task) + ".jsonl");
    CmdResult conv = run_cli("convert-" + std::string(task) + " --input " +
                                 testutil::fixture(native).string() + " --output " + out.string(),
                             dir.path());
    INFO(task);
    CHECK(conv.exit_code == 0);
    CHECK(contains(conv.out, "converted 20 items"));
    REQUIRE(std::filesystem::exists(out));
  }
  CHECK(read_file(dir / "vague.jsonl") ==
        read_file(testutil::fixture("datasets/vague_speech.jsonl")));

  std::filesystem::path tpl = dir / "templates";
  CmdResult init = run_cli("init-templates --dir " + tpl.string(), dir.path());
  CHECK(init.exit_code == 0);
  CHECK(contains(init.out, "templates written to"));
  CHECK(PromptRegistry::load_dir(tpl).combined_hash() ==
        PromptRegistry::builtin().combined_hash());
}

TEST_CASE("cli failures exit nonzero with an error line") {
  testutil::TempDir dir("cli");

  // config file that does not exist
  CmdResult missing = run_cli("plan --config " + (dir / "nope.json").string(), dir.path());
  CHECK(missing.exit_code == 1);
  CHECK(contains(missing.err, "error: "));

  // config whose dataset manifest points nowhere
  json doc = {
      {"run_id", "broken"},
      {"datasets", {{{"manifest", (dir / "ghost.manifest.json").string()}}}},
      {"strategies", {"direct"}},
      {"providers",
       {{{"provider_id", "mock-vlm"},
         {"dialect", "mock"},
         {"model_name", "mock-model"},
         {"mock_fixtures", testutil::fixture("mock/rules.jsonl").string()}}}},
      {"judge", {{"mode", "rules"}}},
      {"cache_dir", (dir / "cache").string()},
      {"output_dir", (dir / "out").string()},
  };
  std::filesystem::path broken = dir / "broken.json";
  {
    std::ofstream f(broken);
    f << doc.dump(2) << "\n";
  }
  CmdResult ghost = run_cli("plan --config " + broken.string(), dir.path());
  CHECK(ghost.exit_code == 1);
  CHECK(contains(ghost.err, "error: "));

  // unknown strategy name in the override flag
  std::string cfg = " --config " + write_config(dir.path()).string();
  CmdResult unknown = run_cli("plan --strategies nonsense" + cfg, dir.path());
  CHECK(unknown.exit_code == 1);
  CHECK(contains(unknown.err, "error: "));

  // missing required --config is a usage error from the argument parser
  CmdResult usage = run_cli("plan", dir.path());
  CHECK(usage.exit_code != 0);
}
