#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#ifndef T2_CLI_PATH
#define T2_CLI_PATH "t2rec"
#endif

namespace {

namespace fs = std::filesystem;

struct RunResult {
  int exit_code;
  std::string output;
};

RunResult run(const std::string& args) {
  std::string out_file = (fs::temp_directory_path() / "t2_cli_out.txt").string();
  std::string cmd = std::string(T2_CLI_PATH) + " " + args + " >" + out_file + " 2>&1";
  int status = std::system(cmd.c_str());
  std::ifstream in(out_file);
  std::ostringstream ss;
  ss << in.rdbuf();
  return {WEXITSTATUS(status), ss.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("usage errors exit with 64") {
  CHECK(run("definitely-not-a-command").exit_code == 64);
  CHECK(run("synth").exit_code == 64);          // missing --out
  CHECK(run("prep --out /tmp/x").exit_code == 64);  // missing --input
  CHECK(run("eval --data /tmp/x").exit_code == 64);  // missing --checkpoint
  CHECK(run("--help").exit_code == 0);
}

TEST_CASE("data errors exit with 2") {
  TempDir dir("t2_cli_data_err");
  RunResult missing = run("prep --input " + dir.str() + "/absent.csv --out " + dir.str());
  CHECK(missing.exit_code == 2);

  std::ofstream bad(dir.path / "bad.csv");
  bad << "user_id,item_id,domain,rating,timestamp\nu1,i1,A,4\n";
  bad.close();
  RunResult malformed = run("prep --input " + (dir.path / "bad.csv").string() + " --out " +
                            dir.str() + "/out");
  CHECK(malformed.exit_code == 2);
  CHECK(malformed.output.find(":2") != std::string::npos);  // line number named
}

TEST_CASE("synth then prep then stats pipeline") {
  TempDir dir("t2_cli_pipe");
  std::string csv = dir.str() + "/raw.csv";
  RunResult synth = run("synth --users 40 --items-a 16 --items-b 16 --len-min 10 --len-max 14 "
                        "--seed 3 --out " + csv);
  CHECK(synth.exit_code == 0);

  RunResult stats = run("stats --data " + csv);
  CHECK(stats.exit_code == 0);
  CHECK(stats.output.find("type1_pct") != std::string::npos);

  RunResult prep = run("prep --input " + csv + " --out " + dir.str() + "/prep");
  CHECK(prep.exit_code == 0);
  CHECK(fs::exists(dir.path / "prep" / "histories.train.jsonl"));
  CHECK(fs::exists(dir.path / "prep" / "idmap.json"));
  CHECK(fs::exists(dir.path / "prep" / "stats.json"));
  CHECK(fs::exists(dir.path / "prep" / "manifest.json"));

  // same seed twice: byte-identical synthetic files
  std::string csv2 = dir.str() + "/raw2.csv";
  run("synth --users 40 --items-a 16 --items-b 16 --len-min 10 --len-max 14 --seed 3 --out " +
      csv2);
  CHECK(slurp(csv) == slurp(csv2));
}

TEST_CASE("inspect-masks prints the worked example grids") {
  RunResult r = run("inspect-masks --domains ABA --feedbacks ++-");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("M1") != std::string::npos);
  CHECK(r.output.find("0 0 0\n0 0 1\n0 1 0") != std::string::npos);  // M1
  CHECK(r.output.find("0 0 1\n0 0 0\n1 0 0") != std::string::npos);  // M2
  CHECK(r.output.find("1 0 0\n0 1 0\n0 0 1") != std::string::npos);  // M4

  CHECK(run("inspect-masks --domains AB --feedbacks +").exit_code == 64);
  CHECK(run("inspect-masks --domains AX --feedbacks ++").exit_code == 64);
}

TEST_CASE("gradcheck command reports a passing harness") {
  RunResult r = run("gradcheck");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("\"passed\": true") != std::string::npos);
}

TEST_CASE("train, eval, diagnose and inspectors round trip") {
  TempDir dir("t2_cli_train");
  std::string csv = dir.str() + "/raw.csv";
  run("synth --users 30 --items-a 12 --items-b 12 --len-min 10 --len-max 12 --planted --seed 8 "
      "--out " + csv);
  run("prep --input " + csv + " --out " + dir.str() + "/prep");

  RunResult train = run("train --data " + dir.str() + "/prep --out " + dir.str() +
                        "/run --d 8 --n_heads 4 --epochs 2 --max_len 16 --seed 5");
  CHECK(train.exit_code == 0);
  CHECK(fs::exists(dir.path / "run" / "checkpoint_best.t2ck"));
  CHECK(fs::exists(dir.path / "run" / "train_log.jsonl"));
  CHECK(fs::exists(dir.path / "run" / "manifest.json"));
  CHECK(fs::exists(dir.path / "run" / "config.toml"));

  RunResult eval = run("eval --checkpoint " + dir.str() + "/run/checkpoint_best.t2ck --data " +
                       dir.str() + "/prep --split test --negatives 50 --seed 4 --out " +
                       dir.str() + "/metrics");
  CHECK(eval.exit_code == 0);
  CHECK(fs::exists(dir.path / "metrics" / "metrics.json"));
  CHECK(fs::exists(dir.path / "metrics" / "metrics.csv"));

  RunResult diag = run("diagnose --checkpoint " + dir.str() + "/run/checkpoint_best.t2ck "
                       "--data " + dir.str() + "/prep --plot " + dir.str() + "/sim.svg");
  CHECK(diag.exit_code == 0);
  CHECK(diag.output.find("align_cosine_A") != std::string::npos);
  CHECK(fs::exists(dir.path / "sim.svg"));

  RunResult graph = run("inspect-graph --data " + dir.str() + "/prep --which C");
  CHECK(graph.exit_code == 0);
  CHECK(graph.output.find("\"edges\"") != std::string::npos);

  RunResult header = run("inspect-checkpoint --checkpoint " + dir.str() +
                         "/run/checkpoint_best.t2ck");
  CHECK(header.exit_code == 0);
  CHECK(header.output.find("\"d\": 8") != std::string::npos);

  // loading a checkpoint as data is a data error
  RunResult not_ck = run("inspect-checkpoint --checkpoint " + csv);
  CHECK(not_ck.exit_code == 2);
}

TEST_CASE("config file values apply and flags override them") {
  TempDir dir("t2_cli_config");
  std::string csv = dir.str() + "/raw.csv";
  run("synth --users 20 --items-a 10 --items-b 10 --len-min 8 --len-max 10 --seed 2 --out " + csv);
  run("prep --input " + csv + " --out " + dir.str() + "/prep");

  std::ofstream config(dir.path / "t2.toml");
  config << "# tiny run\nd = 8\nn_heads = 4\nepochs = 1\nmax_len = 16\nmask_mode = \"additive\"\n";
  config.close();

  RunResult train = run("train --config " + (dir.path / "t2.toml").string() + " --data " +
                        dir.str() + "/prep --out " + dir.str() + "/run --epochs 0");
  CHECK(train.exit_code == 0);
  std::string snapshot = slurp(dir.path / "run" / "config.toml");
  CHECK(snapshot.find("d = 8") != std::string::npos);
  CHECK(snapshot.find("epochs = 0") != std::string::npos);  // flag wins

  std::ofstream bad(dir.path / "bad.toml");
  bad << "[section]\nd = 8\n";
  bad.close();
  RunResult rejected = run("train --config " + (dir.path / "bad.toml").string() + " --data " +
                           dir.str() + "/prep --out " + dir.str() + "/run2");
  CHECK(rejected.exit_code == 2);
}

TEST_CASE("T2_SEED environment variable is the seed fallback") {
  TempDir dir("t2_cli_env");
  std::string csv1 = dir.str() + "/a.csv";
  std::string csv2 = dir.str() + "/b.csv";
  std::string base = "synth --users 10 --items-a 8 --items-b 8 --out ";
  std::string cmd1 =
      "T2_SEED=99 " + std::string(T2_CLI_PATH) + " " + base + csv1 + " >/dev/null 2>&1";
  std::string cmd2 = std::string(T2_CLI_PATH) + " " + base + csv2 + " --seed 99 >/dev/null 2>&1";
  CHECK(std::system(cmd1.c_str()) == 0);
  CHECK(std::system(cmd2.c_str()) == 0);
  CHECK(slurp(csv1) == slurp(csv2));
}
