#include "codistillery/report.hpp"

#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "codistillery/errors.hpp"

namespace codistillery {
namespace {

using nlohmann::ordered_json;

ordered_json stat_json(const Stat& s) {
  return {{"mean", s.mean}, {"stderr", s.std_error}, {"n", s.n}, {"single_seed", s.single}};
}

ordered_json rational_json(Rational r) {
  ordered_json j = {{"value", r.value()}, {"exact", exact_decimal(r)}};
  if (r.den == 1) j["value"] = r.num;
  return j;
}

ordered_json line_json(const CommcostLine& l) {
  ordered_json j = {{"strategy", std::string(to_string(l.kind))}, {"T", l.period}};
  j["bits_per_device_per_iteration"] = rational_json(l.bits);
  return j;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

}  // namespace

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string exact_decimal(Rational r) {
  std::uint64_t den = r.den;
  while (den % 2 == 0) den /= 2;
  while (den % 5 == 0) den /= 5;
  if (den != 1) return std::to_string(r.num) + "/" + std::to_string(r.den);
  std::string out = std::to_string(r.num / r.den);
  unsigned __int128 rem = r.num % r.den;
  if (rem == 0) return out;
  out.push_back('.');
  while (rem != 0) {
    rem *= 10;
    out.push_back(static_cast<char>('0' + static_cast<int>(rem / r.den)));
    rem %= r.den;
  }
  return out;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows) {
  out << kMetricsHeader << '\n';
  for (const MetricsRow& r : rows) {
    out << r.seed << ',' << r.iteration << ',' << r.epoch << ',' << r.group << ',' << format_real(r.train_loss) << ','
        << format_real(r.supervised) << ',' << format_real(r.distill) << ',' << format_real(r.l2) << ','
        << format_real(r.val_acc) << ',' << format_real(r.dist_from_init) << ',' << format_real(r.lr) << ','
        << format_real(r.wd) << ',' << format_real(r.alpha) << ',' << format_real(r.epsilon) << ',' << r.bits_iter
        << ',' << r.bits_cum << '\n';
  }
}

std::string summary_json(const ExperimentConfig& cfg, const ExperimentResult& result, const Summary& summary) {
  ordered_json j;
  j["strategy"] = {{"kind", std::string(to_string(cfg.strategy.kind))},
                   {"n_groups", cfg.strategy.n_groups},
                   {"devices_per_group", cfg.strategy.devices_per_group},
                   {"per_device_batch", cfg.strategy.per_device_batch},
                   {"exchange_period", cfg.strategy.exchange_period},
                   {"checkpoint_delay", cfg.strategy.checkpoint_delay}};
  j["iterations"] = result.iterations;
  j["iterations_per_epoch"] = result.iterations_per_epoch;
  j["b_model"] = result.b_model;
  j["b_predictions"] = result.b_predictions;
  j["seeds"] = cfg.seeds;

  ordered_json runs = ordered_json::array();
  for (const FinalRow& f : summary.finals) {
    runs.push_back({{"seed", f.seed},
                    {"group", f.group},
                    {"final_train_loss", f.train_loss},
                    {"final_val_acc", f.val_acc},
                    {"final_dist_from_init", f.dist_from_init},
                    {"total_bits", f.bits_total}});
  }
  j["runs"] = runs;

  ordered_json groups = ordered_json::array();
  for (const GroupSummary& g : summary.groups) {
    groups.push_back({{"group", g.group},
                      {"final_train_loss", stat_json(g.train_loss)},
                      {"final_val_acc", stat_json(g.val_acc)},
                      {"final_dist_from_init", stat_json(g.dist_from_init)},
                      {"total_bits", stat_json(g.bits_total)}});
  }
  j["groups"] = groups;
  j["models_mean"] = {{"final_train_loss", stat_json(summary.train_loss)},
                      {"final_val_acc", stat_json(summary.val_acc)},
                      {"final_dist_from_init", stat_json(summary.dist_from_init)}};
  return j.dump(2) + "\n";
}

void write_multiview_csv(std::ostream& out, const MultiviewResult& result) {
  out << kMultiviewHeader << '\n';
  for (const MultiviewCell& c : result.cells) {
    out << to_string(c.arm) << ',' << c.n << ',' << format_real(c.acc.mean) << ',' << format_real(c.acc.std_error)
        << ',' << c.acc.n << '\n';
  }
}

CommcostReport commcost(const CommcostInputs& in) {
  if (in.n < 2) throw ConfigError("must be >= 2", "--n");
  if (in.period < 1) throw ConfigError("must be >= 1", "--T");
  if (in.b_model < 1) throw ConfigError("must be >= 1", "--b-model");
  if (in.b_predictions < 1) throw ConfigError("must be >= 1", "--b-pred");
  if (in.batch < 1) throw ConfigError("must be >= 1", "--batch");

  CommcostReport r;
  r.inputs = in;
  const Rational ar = Rational::make(allreduce_bits(in.b_model), 1);
  const Rational ck = checkpoint_bits(in.n, in.period, in.b_model);
  const Rational pr = prediction_bits(in.n, in.period, in.b_predictions, in.batch);
  r.point = {{SyncKind::all_reduce, 1, ar},
             {SyncKind::codistill_checkpoints, in.period, ck},
             {SyncKind::codistill_predictions, in.period, pr}};
  r.ratio_predictions = ar / pr;
  r.ratio_checkpoints = ar / ck;
  for (std::uint64_t t : {1, 5, 10, 100}) {
    r.prediction_sweep.push_back(
        {SyncKind::codistill_predictions, t, prediction_bits(in.n, t, in.b_predictions, in.batch)});
  }
  for (std::uint64_t t : {625, 1250, 2500, 5000}) {
    r.checkpoint_sweep.push_back({SyncKind::codistill_checkpoints, t, checkpoint_bits(in.n, t, in.b_model)});
  }
  return r;
}

std::string commcost_table(const CommcostReport& r) {
  std::ostringstream out;
  const CommcostInputs& in = r.inputs;
  out << "n=" << in.n << " T=" << in.period << " b_model=" << in.b_model << " b_predictions=" << in.b_predictions
      << " batch=" << in.batch << "\n\n";
  out << pad("strategy", 24) << pad("T", 8) << "bits/device/iteration\n";
  auto row = [&](const CommcostLine& l) {
    out << pad(std::string(to_string(l.kind)), 24) << pad(std::to_string(l.period), 8) << exact_decimal(l.bits)
        << '\n';
  };
  for (const CommcostLine& l : r.point) row(l);
  out << "\nall_reduce / codistill_predictions = " << exact_decimal(r.ratio_predictions) << '\n';
  out << "all_reduce / codistill_checkpoints = " << exact_decimal(r.ratio_checkpoints) << "\n\n";
  for (const CommcostLine& l : r.prediction_sweep) row(l);
  for (const CommcostLine& l : r.checkpoint_sweep) row(l);
  return out.str();
}

std::string commcost_json(const CommcostReport& r) {
  ordered_json j;
  j["inputs"] = {{"n", r.inputs.n},
                 {"T", r.inputs.period},
                 {"b_model", r.inputs.b_model},
                 {"b_predictions", r.inputs.b_predictions},
                 {"batch", r.inputs.batch}};
  ordered_json point = ordered_json::array();
  for (const CommcostLine& l : r.point) point.push_back(line_json(l));
  j["point"] = point;
  j["ratio_all_reduce_to_predictions"] = rational_json(r.ratio_predictions);
  j["ratio_all_reduce_to_checkpoints"] = rational_json(r.ratio_checkpoints);
  ordered_json ps = ordered_json::array(), cs = ordered_json::array();
  for (const CommcostLine& l : r.prediction_sweep) ps.push_back(line_json(l));
  for (const CommcostLine& l : r.checkpoint_sweep) cs.push_back(line_json(l));
  j["sweep"] = {{"codistill_predictions", ps}, {"codistill_checkpoints", cs}};
  return j.dump(2) + "\n";
}

}  // namespace codistillery
