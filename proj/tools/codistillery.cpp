#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "codistillery/config.hpp"
#include "codistillery/errors.hpp"
#include "codistillery/harness.hpp"
#include "codistillery/report.hpp"

namespace fs = std::filesystem;
using namespace codistillery;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitContract = 3;

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::int64_t seed_offset_from_env() {
  const char* raw = std::getenv("CODISTILLERY_SEED_OFFSET");
  if (!raw || !*raw) return 0;
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(raw, &end, 10);
  if (errno != 0 || *end != '\0') {
    throw ConfigError(std::string("not an integer: '") + raw + "'", "CODISTILLERY_SEED_OFFSET");
  }
  return v;
}

std::uint64_t parse_positive_count(const std::string& raw, const std::string& flag) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(raw, &used);
  } catch (const std::exception&) {
    throw ConfigError("not a number: '" + raw + "'", flag);
  }
  if (used != raw.size() || !(v >= 1.0) || v > 9.0e15 || std::floor(v) != v) {
    throw ConfigError("expected a positive integer, got '" + raw + "'", flag);
  }
  return static_cast<std::uint64_t>(v);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

struct ManifestBase {
  std::string digest;
  std::string started;
  std::vector<std::string> overrides;
  std::int64_t seed_offset = 0;
};

ordered_json manifest_json(const ManifestBase& m, const std::vector<std::uint64_t>& seeds,
                           const std::vector<std::string>& artifacts) {
  ordered_json j;
  j["tool"] = "codistillery";
  j["version"] = CODISTILLERY_VERSION;
  j["config_digest"] = m.digest;
  j["overrides"] = m.overrides;
  j["seed_offset"] = m.seed_offset;
  j["seeds"] = seeds;
  j["started_at"] = m.started;
  j["finished_at"] = utc_now();
  j["artifacts"] = artifacts;
  return j;
}

int cmd_run(const std::string& config, const std::vector<std::string>& overrides, const fs::path& out_dir) {
  ManifestBase base;
  base.started = utc_now();
  base.overrides = overrides;
  base.seed_offset = seed_offset_from_env();
  const ParsedConfig parsed = load_config(config, overrides, base.seed_offset);
  fs::create_directories(out_dir);

  ordered_json points = ordered_json::array();
  for (const SweepPoint& point : parsed.points) {
    const fs::path dir = point.label.empty() ? out_dir : out_dir / point.label;
    fs::create_directories(dir);
    ManifestBase mb = base;
    mb.started = utc_now();
    mb.digest = sha256_hex(point.canonical);

    const ExperimentResult result = run_experiment(point.experiment);
    const Summary summary = summarize(result.rows);

    std::vector<std::string> artifacts = {"config.resolved.yaml", "metrics.csv", "summary.json"};
    write_text(dir / "config.resolved.yaml", point.canonical);
    {
      std::ofstream csv(dir / "metrics.csv", std::ios::binary);
      write_metrics_csv(csv, result.rows);
      if (!csv) throw std::runtime_error("cannot write " + (dir / "metrics.csv").string());
    }
    write_text(dir / "summary.json", summary_json(point.experiment, result, summary));
    if (point.export_dataset) {
      auto [train, val] = generate_multiview(point.experiment.data);
      export_dataset(train, dir / "train.bin");
      export_dataset(val, dir / "val.bin");
      artifacts.push_back("train.bin");
      artifacts.push_back("val.bin");
    }
    artifacts.push_back("manifest.json");
    ordered_json manifest = manifest_json(mb, point.experiment.seeds, artifacts);
    if (!point.label.empty()) {
      ordered_json assigned = ordered_json::object();
      for (const auto& [path, value] : point.assignments) assigned[path] = value;
      manifest["sweep_point"] = {{"label", point.label}, {"assignments", assigned}};
    }
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    std::cout << (point.label.empty() ? std::string("run") : point.label) << ": " << result.rows.size()
              << " rows, final mean val_acc " << format_real(summary.val_acc.mean) << " -> " << dir.string() << '\n';
    if (!point.label.empty()) {
      points.push_back({{"label", point.label}, {"config_digest", mb.digest}, {"path", point.label}});
    }
  }

  if (parsed.points.size() > 1) {
    ordered_json top;
    top["tool"] = "codistillery";
    top["version"] = CODISTILLERY_VERSION;
    top["config_digest"] = sha256_hex([&] {
      std::string all;
      for (const SweepPoint& p : parsed.points) all += p.canonical;
      return all;
    }());
    top["overrides"] = overrides;
    top["seed_offset"] = base.seed_offset;
    top["started_at"] = base.started;
    top["finished_at"] = utc_now();
    top["points"] = points;
    std::vector<std::string> artifacts;
    for (const SweepPoint& p : parsed.points) {
      for (const char* f : {"config.resolved.yaml", "metrics.csv", "summary.json", "manifest.json"}) {
        artifacts.push_back(p.label + "/" + f);
      }
      if (p.export_dataset) {
        artifacts.push_back(p.label + "/train.bin");
        artifacts.push_back(p.label + "/val.bin");
      }
    }
    artifacts.push_back("manifest.json");
    top["artifacts"] = artifacts;
    write_text(out_dir / "manifest.json", top.dump(2) + "\n");
  }
  return kExitOk;
}

int cmd_multiview(const std::string& config, const std::vector<std::string>& overrides, const fs::path& out_dir) {
  ManifestBase mb;
  mb.started = utc_now();
  mb.overrides = overrides;
  mb.seed_offset = seed_offset_from_env();
  const ParsedConfig parsed = load_config(config, overrides, mb.seed_offset);
  if (parsed.points.size() != 1) throw ConfigError("sweep axes are not supported here", "multiview");
  if (!parsed.multiview) throw ConfigError("required section is missing", "multiview");
  const SweepPoint& point = parsed.points.front();
  mb.digest = sha256_hex(point.canonical);
  fs::create_directories(out_dir);

  const MultiviewResult result = run_multiview_suite(*parsed.multiview);
  write_text(out_dir / "config.resolved.yaml", point.canonical);
  {
    std::ofstream csv(out_dir / "multiview_summary.csv", std::ios::binary);
    write_multiview_csv(csv, result);
    if (!csv) throw std::runtime_error("cannot write multiview_summary.csv");
  }
  write_text(out_dir / "manifest.json",
             manifest_json(mb, parsed.multiview->base.seeds,
                           {"config.resolved.yaml", "multiview_summary.csv", "manifest.json"})
                     .dump(2) +
                 "\n");
  std::ifstream in(out_dir / "multiview_summary.csv");
  std::cout << in.rdbuf();
  return kExitOk;
}

int cmd_commcost(const CommcostInputs& in, const std::string& strategy) {
  CommcostReport report = commcost(in);
  if (strategy != "all") {
    const auto kind = parse_sync_kind(strategy);
    if (!kind) throw ConfigError("unknown strategy '" + strategy + "'", "--strategy");
    std::erase_if(report.point, [&](const CommcostLine& l) { return l.kind != *kind; });
  }
  std::cout << commcost_table(report) << '\n' << commcost_json(report);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic codistillation simulator"};
  app.require_subcommand(1);

  std::string config;
  std::vector<std::string> overrides;
  std::string out_dir = "out";
  auto* run = app.add_subcommand("run", "Run an experiment (or sweep) from a YAML config");
  run->add_option("config", config, "Config file")->required();
  run->add_option("--set", overrides, "Override a config value, dotted.key=value")->take_all();
  run->add_option("--out", out_dir, "Output directory");

  std::string mv_config;
  std::vector<std::string> mv_overrides;
  std::string mv_out = "out";
  auto* mv = app.add_subcommand("multiview", "Run the split-and-freeze multi-view suite");
  mv->add_option("config", mv_config, "Config file")->required();
  mv->add_option("--set", mv_overrides, "Override a config value, dotted.key=value")->take_all();
  mv->add_option("--out", mv_out, "Output directory");

  std::string n = "2", period = "1", b_model = "8e8", b_pred = "3.2e4", batch = "256", strategy = "all";
  auto* cc = app.add_subcommand("commcost", "Per-device bits per iteration for each strategy");
  cc->add_option("--n", n, "Number of codistilled groups");
  cc->add_option("--T", period, "Exchange period in iterations");
  cc->add_option("--b-model", b_model, "Bits per model serialization");
  cc->add_option("--b-pred", b_pred, "Bits per sample prediction");
  cc->add_option("--batch", batch, "Group batch size");
  cc->add_option("--strategy", strategy, "all, all_reduce, codistill_predictions or codistill_checkpoints");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmd_run(config, overrides, out_dir);
    if (*mv) return cmd_multiview(mv_config, mv_overrides, mv_out);
    CommcostInputs in;
    in.n = parse_positive_count(n, "--n");
    in.period = parse_positive_count(period, "--T");
    in.b_model = parse_positive_count(b_model, "--b-model");
    in.b_predictions = parse_positive_count(b_pred, "--b-pred");
    in.batch = parse_positive_count(batch, "--batch");
    return cmd_commcost(in, strategy);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ContractError& e) {
    std::cerr << "contract violation: " << e.what() << '\n';
    return kExitContract;
  } catch (const DimensionError& e) {
    std::cerr << "contract violation: " << e.what() << '\n';
    return kExitContract;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
