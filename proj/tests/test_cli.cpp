#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "codistillery/config.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kBinary = CODISTILLERY_BINARY;
const fs::path kConfigs = CODISTILLERY_CONFIG_DIR;
const fs::path kScratch = fs::path(CODISTILLERY_SCRATCH_DIR);

struct Outcome {
  int code = -1;
  std::string output;
};

Outcome run(const std::string& args, const std::string& env = "") {
  fs::create_directories(kScratch);
  const fs::path log = kScratch / "last_output.txt";
  const std::string cmd = env + (env.empty() ? "" : " ") + kBinary.string() + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  Outcome o;
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  o.output = ss.str();
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    rows.push_back(std::move(fields));
  }
  return rows;
}

fs::path fresh(const std::string& name) {
  const fs::path dir = kScratch / name;
  fs::remove_all(dir);
  return dir;
}

std::string minimal() { return (kConfigs / "minimal.yaml").string(); }

}  // namespace

TEST_CASE("commcost prints the exact reference numbers") {
  const Outcome o = run("commcost --T 5");
  CHECK(o.code == 0);
  CHECK(o.output.find("1600000000") != std::string::npos);
  CHECK(o.output.find("1638400") != std::string::npos);
  CHECK(o.output.find("976.5625") != std::string::npos);
  CHECK(run("commcost --T 0").code == 2);
  CHECK(run("commcost --n 1").code == 2);
  CHECK(run("commcost --T 2.5").code == 2);
  CHECK(run("commcost --bogus").code == 2);
}

TEST_CASE("run writes metrics, summary and manifest") {
  const fs::path out = fresh("run_minimal");
  const Outcome o = run("run " + minimal() + " --out " + out.string());
  REQUIRE_MESSAGE(o.code == 0, o.output);
  const auto rows = read_csv(out / "metrics.csv");
  REQUIRE(rows.size() == 1 + 40 * 2);
  CHECK(rows[0].size() == 16);
  CHECK(rows[0][0] == "seed");

  const auto summary = nlohmann::json::parse(slurp(out / "summary.json"));
  CHECK(summary["iterations"] == 40);
  // Final rows: the last two lines of the CSV, one per group.
  double acc_sum = 0.0;
  for (std::size_t g = 0; g < 2; ++g) {
    const auto& row = rows[rows.size() - 2 + g];
    CHECK(row[1] == "40");
    acc_sum += std::strtod(row[8].c_str(), nullptr);
    CHECK(summary["groups"][g]["total_bits"]["mean"].get<double>() == std::strtod(row[15].c_str(), nullptr));
  }
  CHECK(summary["models_mean"]["final_val_acc"]["mean"].get<double>() == acc_sum / 2.0);

  const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
  CHECK(manifest["tool"] == "codistillery");
  CHECK(manifest["seed_offset"] == 0);
  const std::string resolved = slurp(out / "config.resolved.yaml");
  CHECK(manifest["config_digest"] == codistillery::sha256_hex(resolved));
  CHECK(codistillery::parse_config(resolved).points[0].canonical == resolved);
}

TEST_CASE("reruns are byte-identical and the seed offset changes them") {
  const fs::path a = fresh("rerun_a"), b = fresh("rerun_b"), c = fresh("rerun_c");
  REQUIRE(run("run " + minimal() + " --out " + a.string()).code == 0);
  REQUIRE(run("run " + minimal() + " --out " + b.string()).code == 0);
  CHECK(slurp(a / "metrics.csv") == slurp(b / "metrics.csv"));
  CHECK(slurp(a / "summary.json") == slurp(b / "summary.json"));
  REQUIRE(run("run " + minimal() + " --out " + c.string(), "CODISTILLERY_SEED_OFFSET=3").code == 0);
  CHECK(slurp(a / "metrics.csv") != slurp(c / "metrics.csv"));
  CHECK(read_csv(c / "metrics.csv")[1][0] == "3");
  CHECK(run("run " + minimal() + " --out " + c.string(), "CODISTILLERY_SEED_OFFSET=abc").code == 2);
}

TEST_CASE("overrides and sweeps") {
  const fs::path out = fresh("sweep");
  const Outcome o = run("run " + minimal() + " --out " + out.string() +
                        " --set 'strategy.exchange_period=[1, 4]' --set train.iterations=8");
  REQUIRE_MESSAGE(o.code == 0, o.output);
  CHECK(read_csv(out / "point_000" / "metrics.csv").size() == 1 + 8 * 2);
  const auto p1 = read_csv(out / "point_001" / "metrics.csv");
  // Period 4: prediction traffic only on iterations 4 and 8.
  CHECK(p1[1][14] == "0");
  CHECK(p1[7][14] != "0");
  CHECK(fs::exists(out / "manifest.json"));
}

TEST_CASE("configuration errors exit 2, contract violations exit 3") {
  CHECK(run("run " + minimal() + " --out " + fresh("err").string() + " --set strategy.bogus=1").code == 2);
  CHECK(run("run " + (kConfigs / "missing.yaml").string() + " --out " + fresh("err").string()).code == 2);
  CHECK(run("run " + minimal() + " --out " + fresh("err").string() + " --set train.sampling=independent").code == 3);
  CHECK(run("run").code == 2);
  CHECK(run("--help").code == 0);
}

TEST_CASE("multiview with one seed reports zero standard error") {
  const fs::path out = fresh("multiview");
  const Outcome o = run("multiview " + (kConfigs / "multiview.yaml").string() + " --out " + out.string() +
                        " --set 'seeds=[0]' --set multiview.pretrain_iterations=20 --set multiview.iterations=10"
                        " --set 'multiview.n_list=[1, 2]' --set data.train_size=400");
  REQUIRE_MESSAGE(o.code == 0, o.output);
  const auto rows = read_csv(out / "multiview_summary.csv");
  REQUIRE(rows.size() == 1 + 3 * 2);
  CHECK(rows[0] == std::vector<std::string>{"arm", "n", "mean_acc", "stderr", "seeds"});
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i][3] == "0");
    CHECK(rows[i][4] == "1");
  }
  CHECK(run("multiview " + minimal() + " --out " + fresh("mv_err").string()).code == 2);
}
