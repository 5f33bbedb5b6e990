// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "moelab/model.hpp"

using namespace moelab;
namespace fs = std::filesystem;

namespace {

const std::string kBin = MOELAB_BIN;

int run(const std::string& args) {
  int rc = std::system((kBin + " " + args + " >/dev/null 2>&1").c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("moelab_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int counter;
};
int TempDir::counter = 0;

void write_config(const fs::path& path, const fs::path& out_dir,
                  const std::string& extra = "") {
  std::ofstream os(path);
  os << R"({
  "model": {"vocab_size": 16, "d_model": 8, "d_ff": 6, "n_layers": 2,
            "n_experts": 4, "top_k": 2, "seed": 5},
  "corpus": {"vocab_size": 16, "seq_len": 12, "n_sequences": 10,
             "markov_order": 1, "seed": 5, "pad_fraction": 0.0},
  "train": {"steps": 10, "lr": 0.003, "batch_size": 4},
  "kd": {"max_samples": 10, "learning_rate": 0.001},
  "compression": {"method": "prune", "retention": 0.75},
)" << extra
     << R"(  "output_dir": ")" << out_dir.string() << R"("
})";
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(run("train-teacher --config /nonexistent/cfg.json") == 2);
  CHECK(run("train-teacher") == 2);  // missing required --config
  CHECK(run("bogus-subcommand") == 2);
  TempDir tmp;
  fs::path cfg = tmp.path / "cfg.json";
  std::ofstream(cfg) << "{ not json";
  CHECK(run("train-teacher --config " + cfg.string()) == 2);
}

TEST_CASE("zero-step training equals a fresh init") {
  TempDir tmp;
  fs::path cfg = tmp.path / "cfg.json";
  write_config(cfg, tmp.path / "out");
  REQUIRE(run("train-teacher --config " + cfg.string() + " --steps 0") == 0);

  MoEModel fresh = init_model({.vocab_size = 16, .d_model = 8, .d_ff = 6,
                               .n_layers = 2, .n_experts = 4, .top_k = 2,
                               .seed = 5});
  save_checkpoint(fresh, (tmp.path / "fresh.moec").string());
  CHECK(slurp(tmp.path / "out" / "teacher.moec") ==
        slurp(tmp.path / "fresh.moec"));
}

TEST_CASE("pipeline runs end to end with deterministic reports") {
  TempDir tmp;
  fs::path cfg = tmp.path / "cfg.json";
  fs::path out = tmp.path / "out";
  write_config(cfg, out);
  std::string c = " --config " + cfg.string();

  REQUIRE(run("train-teacher" + c) == 0);
  CHECK(fs::exists(out / "teacher.moec"));
  CHECK(fs::exists(out / "train_log.jsonl"));
  std::string teacher = (out / "teacher.moec").string();

  // Re-training reproduces the checkpoint byte for byte.
  std::string first = slurp(out / "teacher.moec");
  REQUIRE(run("train-teacher" + c) == 0);
  CHECK(slurp(out / "teacher.moec") == first);

  for (std::string method : {"prune", "edit", "merge"}) {
    std::string flags = method == "prune"  ? " --retention 0.75"
                        : method == "edit" ? " --rank-ratio 0.5"
                                           : " --target 3";
    REQUIRE(run("compress" + c + " --teacher " + teacher + " --method " +
                method + flags) == 0);
    CHECK(fs::exists(out / ("student_" + method + ".moec")));
    CHECK(fs::exists(out / ("map_" + method + ".json")));
  }
  CHECK(run("compress" + c + " --teacher " + teacher +
            " --method prune --retention 1.5") == 2);

  std::string student = (out / "student_prune.moec").string();
  REQUIRE(run("calibrate" + c + " --teacher " + teacher + " --student " +
              student) == 0);
  CHECK(fs::exists(out / "student_prune_R.moec"));
  CHECK(fs::exists(out / "kd_log.jsonl"));

  // Analyze twice; the report directories must be byte-identical.
  std::string map = (out / "map_prune.json").string();
  fs::path r1 = tmp.path / "rep1", r2 = tmp.path / "rep2";
  REQUIRE(run("analyze" + c + " --teacher " + teacher + " --student " +
              student + " --map " + map + " --output-dir " + r1.string()) == 0);
  REQUIRE(run("analyze" + c + " --teacher " + teacher + " --student " +
              student + " --map " + map + " --output-dir " + r2.string()) == 0);
  for (const char* f : {"l1.csv", "overlap.csv", "entropy.csv", "summary.json",
                        "census.csv", "decomposition.json"}) {
    CHECK(fs::exists(r1 / f));
    CHECK(slurp(r1 / f) == slurp(r2 / f));
  }

  REQUIRE(run("report " + r1.string() + " --output-dir " + tmp.path.string()) ==
          0);
  CHECK(fs::exists(tmp.path / "report.csv"));
  CHECK(fs::exists(tmp.path / "report.txt"));
  CHECK(run("report " + (tmp.path / "empty").string()) == 2);
}

TEST_CASE("teacher against itself reports zero drift") {
  TempDir tmp;
  fs::path cfg = tmp.path / "cfg.json";
  fs::path out = tmp.path / "out";
  write_config(cfg, out);
  std::string c = " --config " + cfg.string();
  REQUIRE(run("train-teacher" + c + " --steps 3") == 0);
  std::string teacher = (out / "teacher.moec").string();
  fs::path rep = tmp.path / "rep";
  REQUIRE(run("analyze" + c + " --teacher " + teacher + " --student " +
              teacher + " --output-dir " + rep.string()) == 0);

  std::ifstream ov(rep / "overlap.csv");
  std::string line;
  std::getline(ov, line);  // header
  while (std::getline(ov, line))
    CHECK(line.find(",1,") != std::string::npos);
  std::ifstream l1(rep / "l1.csv");
  std::getline(l1, line);
  while (std::getline(l1, line))
    CHECK(line.find(",0,") != std::string::npos);
}

TEST_CASE("corrupted checkpoints exit with code 2") {
  TempDir tmp;
  fs::path cfg = tmp.path / "cfg.json";
  write_config(cfg, tmp.path / "out");
  fs::path bad = tmp.path / "bad.moec";
  std::ofstream(bad, std::ios::binary) << "MOEXgarbage";
  CHECK(run("compress --config " + cfg.string() + " --teacher " +
            bad.string() + " --method edit") == 2);
}
