// End-to-end checks of the installed command line: exit codes, manifests,
// and byte-stable outputs. Each test execs the real binary.

#include <doctest.h>

#include <array>
#include <cstdio>
#include <string>

#include "test_util.hpp"

using testutil::read_file;
using testutil::temp_dir;

namespace {

struct RunOutcome {
  int exit_code;
  std::string output;
};

RunOutcome run_tool(const std::string& args) {
  const std::string cmd =
      std::string(PATCHDROP_TOOL_PATH) + " " + args + " 2>&1";
  std::array<char, 4096> buf{};
  std::string output;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  while (std::fgets(buf.data(), buf.size(), pipe)) output += buf.data();
  const int status = pclose(pipe);
  return RunOutcome{WEXITSTATUS(status), output};
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("no arguments prints usage and exits 2") {
  RunOutcome r = run_tool("");
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("Usage") != std::string::npos);
  CHECK(r.output.find("train") != std::string::npos);
}

TEST_CASE("out-of-range keep rate is a usage error") {
  RunOutcome r = run_tool("train --keep 1.5 --data x --splits y");
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("--keep") != std::string::npos);
}

TEST_CASE("unknown flags exit 2") {
  RunOutcome r = run_tool("cost --wat 3");
  CHECK(r.exit_code == 2);
}

TEST_CASE("cost command reproduces the published table cell") {
  RunOutcome r =
      run_tool("cost --variant base --image 896 --patch 16 --keep 0.25");
  CHECK(r.exit_code == 0);
  // 79.96 GFLOPs cell: empirical count at k = floor(0.25 * 3136) = 784.
  CHECK(r.output.find("79882420224") != std::string::npos);
  CHECK(r.output.find("base@896,3136,784,785,") != std::string::npos);
}

TEST_CASE("missing dataset is a runtime failure, exit 1") {
  RunOutcome r = run_tool(
      "train --data /nonexistent.tid --splits /nonexistent.tsp --epochs 1");
  CHECK(r.exit_code == 1);
}

TEST_CASE("full pipeline: dataset-gen, train, eval, plot") {
  const auto dir = temp_dir("cli_pipe");
  const std::string ds = (dir / "ds").string();
  RunOutcome gen = run_tool("dataset-gen --kind texture --out " + ds +
                            " --train 48 --val 16 --test 16 --size 32"
                            " --seed 5");
  CHECK(gen.exit_code == 0);
  CHECK(std::filesystem::exists(dir / "ds" / "data.tid"));
  CHECK(std::filesystem::exists(dir / "ds" / "splits.tsp"));

  const std::string run_dir = (dir / "run").string();
  const std::string train_args =
      "train --data " + ds + "/data.tid --splits " + ds +
      "/splits.tsp --depth 1 --width 16 --heads 2 --patch 8 --image 32"
      " --classes 4 --channels 1 --keep 0.5 --epochs 2 --batch 16"
      " --lr 0.05 --warmup-epochs 1 --seed 3 --out " + run_dir;
  RunOutcome tr = run_tool(train_args);
  CHECK(tr.exit_code == 0);
  CHECK(std::filesystem::exists(dir / "run" / "manifest.json"));
  CHECK(std::filesystem::exists(dir / "run" / "trainlog.csv"));
  CHECK(std::filesystem::exists(dir / "run" / "checkpoint.pdvt"));
  CHECK(std::filesystem::exists(dir / "run" / "metrics.csv"));

  RunOutcome ev = run_tool("eval --checkpoint " + run_dir +
                           "/checkpoint.pdvt --data " + ds +
                           "/data.tid --splits " + ds + "/splits.tsp");
  CHECK(ev.exit_code == 0);
  CHECK(ev.output.find("top1=") != std::string::npos);

  // Deterministic rerun: byte-identical artifacts.
  const std::string run2 = (dir / "run2").string();
  RunOutcome tr2 = run_tool(train_args.substr(0, train_args.size() -
                                              run_dir.size()) + run2);
  CHECK(tr2.exit_code == 0);
  CHECK(read_file(dir / "run" / "checkpoint.pdvt") ==
        read_file(dir / "run2" / "checkpoint.pdvt"));
  CHECK(read_file(dir / "run" / "trainlog.csv") ==
        read_file(dir / "run2" / "trainlog.csv"));
}

TEST_CASE("dry run prints the manifest and cost prediction") {
  RunOutcome r = run_tool(
      "train --data x --splits y --depth 1 --width 16 --heads 2 --patch 8"
      " --image 32 --classes 4 --channels 1 --keep 0.5 --dry-run");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("config_hash") != std::string::npos);
  CHECK(r.output.find("predicted_empirical_flops=") != std::string::npos);
}

TEST_CASE("config files work and unknown keys are rejected") {
  const auto dir = temp_dir("cli_cfg");
  {
    std::ofstream os(dir / "good.cfg");
    os << "variant=base\nimage=224\npatch=16\nkeep=0.25\n";
  }
  RunOutcome ok = run_tool("cost --config " + (dir / "good.cfg").string());
  CHECK(ok.exit_code == 0);
  // variant/image/patch/keep resolve to the matching report row
  CHECK(ok.output.find("base@224,196,49,50,") != std::string::npos);

  {
    std::ofstream os(dir / "bad.cfg");
    os << "variant=base\nbogus_key=1\n";
  }
  RunOutcome bad = run_tool("cost --config " + (dir / "bad.cfg").string());
  CHECK(bad.exit_code == 2);
}

TEST_CASE("plot command emits deterministic SVG with manifest") {
  const auto dir = temp_dir("cli_plot");
  const std::string csv = (dir / "c.csv").string();
  RunOutcome co = run_tool(
      "cost --variant base --image 224,448 --patch 16 --keep 0.5,0.25 --out " +
      csv);
  CHECK(co.exit_code == 0);
  REQUIRE(std::filesystem::exists(csv));
  CHECK(std::filesystem::exists(csv + ".manifest.json"));

  RunOutcome p1 = run_tool("plot --csv " + csv + " --kind savings --out " +
                           (dir / "a.svg").string());
  CHECK(p1.exit_code == 0);
  RunOutcome p2 = run_tool("plot --csv " + csv + " --kind savings --out " +
                           (dir / "b.svg").string());
  CHECK(p2.exit_code == 0);
  CHECK(read_file(dir / "a.svg") == read_file(dir / "b.svg"));

  RunOutcome bad = run_tool("plot --csv " + csv +
                            " --kind keep_rate_curve --out " +
                            (dir / "x.svg").string());
  CHECK(bad.exit_code == 1);  // schema mismatch is a runtime failure
}

TEST_SUITE_END();
