// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "codistillery/config.hpp"
#include "codistillery/harness.hpp"
#include "codistillery/losses.hpp"
#include "codistillery/report.hpp"
#include "codistillery/schedules.hpp"
#include "support/experiments.hpp"
#include "support/oracle.hpp"

using namespace codistillery;

namespace {

const std::filesystem::path kConfigs = CODISTILLERY_CONFIG_DIR;

// Pinned tolerances and budgets.
constexpr std::size_t kLedgerIterations = 1000;
constexpr std::size_t kEquivalenceIterations = 200;
constexpr std::size_t kFdProbes = 50;
constexpr double kFdTolerance = 1e-5;
constexpr double kSignTestAlpha = 0.05;
constexpr double kBayesSlack = 0.01;
constexpr double kMultiviewBudgetSeconds = 600.0;
constexpr std::size_t kMinSeeds = 5;

struct Verdict {
  bool pass = false;
  std::string detail;
};

ExperimentConfig load_point(const std::string& file, std::vector<std::string> overrides, std::size_t point = 0) {
  return load_config(kConfigs / file, overrides).points.at(point).experiment;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// One-sided sign test: P(X >= wins) for X ~ Binomial(trials, 1/2).
double sign_test_p(std::size_t wins, std::size_t trials) {
  double p = 0.0;
  for (std::size_t i = wins; i <= trials; ++i) {
    p += std::exp(std::lgamma(trials + 1.0) - std::lgamma(i + 1.0) - std::lgamma(trials - i + 1.0) -
                  static_cast<double>(trials) * std::log(2.0));
  }
  return p;
}

Verdict commcost_exact() {
  CommcostInputs in;
  in.period = 5;
  const CommcostReport r = commcost(in);
  const bool ok = r.point[0].bits == Rational{1600000000, 1} && r.point[2].bits == Rational{1638400, 1} &&
                  r.ratio_predictions == Rational{15625, 16} && exact_decimal(r.ratio_predictions) == "976.5625";
  return {ok, "all_reduce=" + exact_decimal(r.point[0].bits) + " predictions(T=5)=" + exact_decimal(r.point[2].bits) +
                  " ratio=" + exact_decimal(r.ratio_predictions) + " (exact)"};
}

Verdict ledger_matches_formula() {
  std::size_t checked = 0, bad = 0;
  for (std::size_t n : {2, 3, 4}) {
    for (std::size_t period : {1, 5, 10, 50}) {
      for (SyncKind kind : {SyncKind::codistill_predictions, SyncKind::codistill_checkpoints}) {
        ExperimentConfig cfg = experiments::small_config(kind, n, kLedgerIterations);
        cfg.strategy.exchange_period = period;
        const ExperimentResult r = run_experiment(cfg);
        const std::uint64_t batch = cfg.strategy.group_batch();
        for (std::size_t g = 0; g < n; ++g) {
          const Rational f = kind == SyncKind::codistill_predictions
                                 ? prediction_bits(n, period, r.b_predictions[g], batch)
                                 : checkpoint_bits(n, period, r.b_model[g]);
          const MetricsRow& last = r.rows[r.rows.size() - n + g];
          if (last.group != g || last.bits_cum * f.den != kLedgerIterations * f.num) ++bad;
          ++checked;
        }
      }
    }
    // all_reduce across n devices; the exchange period does not apply.
    ExperimentConfig cfg = experiments::small_config(SyncKind::all_reduce, 1, kLedgerIterations);
    cfg.strategy.devices_per_group = n;
    cfg.strategy.per_device_batch = 8;
    const ExperimentResult r = run_experiment(cfg);
    if (r.rows.back().bits_cum != kLedgerIterations * allreduce_bits(r.b_model[0])) ++bad;
    ++checked;
  }
  return {bad == 0, std::to_string(checked - bad) + "/" + std::to_string(checked) +
                        " (strategy, n, T, group) totals equal 1000 x formula exactly"};
}

Verdict alpha_zero_equivalence() {
  ExperimentConfig cfg = load_point("default.yaml", {"train={iterations: " + std::to_string(kEquivalenceIterations) +
                                                     ", optimizer: sgd_momentum, momentum: 0.9}"});
  cfg.seeds = {0, 1, 2};
  const auto check = experiments::alpha_zero_matches_independent(cfg);
  return {check.ok, check.ok ? "200 iterations x 3 seeds, parameters and metrics bit-identical" : check.detail};
}

Verdict large_batch_equivalence() {
  ExperimentConfig cfg = load_point("default.yaml", {"strategy={kind: all_reduce, n_groups: 1}",
                                                     "train={iterations: " + std::to_string(kEquivalenceIterations) +
                                                         ", optimizer: sgd}"});
  cfg.seeds = {0, 1, 2};
  const auto check = experiments::large_batch_matches(cfg, 4, 8);
  return {check.ok, check.ok ? "m=4 x B=8 vs B=32, 200 iterations x 3 seeds, bit-identical" : check.detail};
}

struct FdOutcome {
  std::size_t probes = 0;
  std::size_t skipped = 0;
  double worst = 0.0;
};

// Probes the full objective of one model variant and distillation loss.
FdOutcome probe_objective(const ModelSpec& spec, DistillKind kind, std::uint64_t seed) {
  Rng rng(seed);
  Parameters params = init_parameters(spec, seed);
  for (auto& [name, t] : params.entries()) {
    if (name.find("bias") != std::string::npos) {
      for (double& v : t.data()) v = rng.uniform(-0.3, 0.3);
    }
  }
  const Tensor x = oracle::random_tensor(rng, {6, spec.input_dim});
  std::vector<int> y(6);
  for (int& v : y) v = static_cast<int>(rng.below(spec.num_classes));
  const std::vector<Tensor> peers{oracle::random_tensor(rng, {6, spec.num_classes}),
                                  oracle::random_tensor(rng, {6, spec.num_classes})};
  const double alpha = 0.7, lambda = 0.01, eps = 0.1;

  auto objective = [&](oracle::Pattern* pattern) {
    const Tensor z = oracle::mlp_forward(spec, params, x, pattern);
    double d = 0.0;
    for (const Tensor& p : peers) d += kind == DistillKind::mse ? oracle::mse(z, p) : oracle::kl(z, p);
    d /= static_cast<double>(peers.size());
    double l2 = 0.0;
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
      if (spec.layer_frozen(l)) continue;
      for (double v : params.at(weight_name(l)).data()) l2 += v * v;
    }
    return oracle::cross_entropy(z, y, eps) + alpha * d + lambda * 0.5 * l2;
  };

  Tape tape;
  const BoundModel bound = bind(tape, spec, params);
  const Var z = forward(tape, spec, bound, tape.constant(x));
  const LossValue lv = codistill_objective(tape, z, y, peers, alpha, lambda, spec, bound, eps, kind);
  const GradientMap grads = tape.backward(lv.root);
  std::vector<std::string> trainable;
  for (const auto& entry : grads) trainable.push_back(entry.first);

  FdOutcome out;
  while (out.probes < kFdProbes) {
    const std::string& name = trainable[rng.below(trainable.size())];
    const std::size_t idx = rng.below(params.at(name).size());
    double& coord = params.at(name)[idx];
    oracle::Pattern base, up, down;
    objective(&base);
    const double saved = coord;
    coord = saved + oracle::kStep;
    objective(&up);
    coord = saved - oracle::kStep;
    objective(&down);
    coord = saved;
    if (up != base || down != base) {
      ++out.skipped;  // a relu kink lies inside the stencil
      continue;
    }
    const double numeric = oracle::central_difference([&] { return objective(nullptr); }, coord);
    out.worst = std::max(out.worst, oracle::rel_error(grads.at(name)[idx], numeric));
    ++out.probes;
  }
  return out;
}

Verdict finite_differences() {
  std::vector<std::pair<std::string, ModelSpec>> variants;
  variants.emplace_back("plain", oracle::mlp_spec(8, {12, 10}, 4));
  ModelSpec viewed = oracle::mlp_spec(8, {12, 10}, 4);
  viewed.view_mask = std::vector<bool>(12, false);
  for (std::size_t u = 3; u < 9; ++u) (*viewed.view_mask)[u] = true;
  variants.emplace_back("view-masked", viewed);
  ModelSpec inputs = oracle::mlp_spec(8, {12}, 3);
  inputs.input_mask = std::vector<bool>{true, true, false, false, true, true, true, false};
  variants.emplace_back("input-masked", inputs);
  ModelSpec frozen = oracle::mlp_spec(8, {12, 10}, 4);
  frozen.frozen_prefix = 1;
  variants.emplace_back("frozen-prefix", frozen);

  std::size_t configs = 0, probes = 0, skipped = 0;
  double worst = 0.0;
  for (const auto& [label, spec] : variants) {
    for (DistillKind kind : {DistillKind::mse, DistillKind::kl}) {
      const FdOutcome o = probe_objective(spec, kind, 100 + configs);
      ++configs;
      probes += o.probes;
      skipped += o.skipped;
      worst = std::max(worst, o.worst);
    }
  }
  return {worst < kFdTolerance, std::to_string(configs) + " model/loss configurations x 50 probes (" +
                                    std::to_string(skipped) + " kink-straddling skipped), max relative error " +
                                    fmt("%.3g", worst) + " < 1e-5"};
}

Verdict checkpoint_staleness() {
  std::size_t checked = 0, bad = 0;
  for (std::size_t period : {1, 5, 10}) {
    ExperimentConfig cfg = load_point("checkpoints.yaml", {"train={iterations: 100}", "strategy.checkpoint_delay=0",
                                                           "strategy.exchange_period=" + std::to_string(period)});
    cfg.seeds = {0};
    std::vector<std::vector<Parameters>> history;
    run_experiment(cfg, [&](const IterationTrace& t) {
      history.emplace_back(t.params.begin(), t.params.end());
      const std::size_t expected = period * ((t.iteration - 1) / period);
      for (std::size_t g = 0; g < t.params.size(); ++g) {
        const std::size_t peer = 1 - g;
        const bool label_ok = t.sources[g] == std::vector<std::size_t>{expected};
        const bool logits_ok =
            bit_equal(t.peers[g].at(0), predict(cfg.models[peer], history.at(expected)[peer], t.batches[g].x));
        if (!label_ok || !logits_ok) ++bad;
        ++checked;
      }
    });
  }
  return {bad == 0, std::to_string(checked - bad) + "/" + std::to_string(checked) +
                        " peer lookups (k <= 100, T in {1,5,10}) used iteration T*floor((k-1)/T)"};
}

Verdict multiview_trend() {
  const auto start = std::chrono::steady_clock::now();
  const ParsedConfig parsed =
      load_config(kConfigs / "multiview.yaml", std::vector<std::string>{"multiview.arms=[frozen]", "multiview.n_list=[1, 2, 4]"});
  const MultiviewConfig& mv = *parsed.multiview;
  const MultiviewResult r = run_multiview_suite(mv);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::vector<std::size_t> all_views(mv.base.data.n_views);
  for (std::size_t v = 0; v < all_views.size(); ++v) all_views[v] = v;
  const double bayes = bayes_accuracy(mv.base.data, all_views);

  const MultiviewCell* one = nullptr;
  const MultiviewCell* four = nullptr;
  bool under_bayes = true;
  std::string means;
  for (const MultiviewCell& c : r.cells) {
    if (c.n == 1) one = &c;
    if (c.n == 4) four = &c;
    under_bayes = under_bayes && c.acc.mean <= bayes + kBayesSlack;
    means += " acc(n=" + std::to_string(c.n) + ")=" + fmt("%.4f", c.acc.mean);
  }
  std::size_t wins = 0, trials = 0;
  for (std::size_t s = 0; s < one->per_seed.size(); ++s) {
    if (four->per_seed[s] == one->per_seed[s]) continue;
    ++trials;
    if (four->per_seed[s] > one->per_seed[s]) ++wins;
  }
  const double p = sign_test_p(wins, trials);
  const bool ok = one->per_seed.size() >= kMinSeeds && p < kSignTestAlpha && under_bayes &&
                  seconds < kMultiviewBudgetSeconds;
  return {ok, "frozen arm," + means + "; n=4 beats n=1 on " + std::to_string(wins) + "/" + std::to_string(trials) +
                  " seeds, sign test p=" + fmt("%.4f", p) + " < 0.05; bayes=" + fmt("%.4f", bayes) +
                  " (+0.01 slack); " + fmt("%.0f", seconds) + "s < 600s"};
}

Verdict distance_from_init() {
  ExperimentConfig codistill = load_point("distance.yaml", {});
  ExperimentConfig independent = load_point("distance.yaml", {"schedules.alpha.base=0"});
  const Summary a = summarize(run_experiment(codistill).rows);
  const Summary b = summarize(run_experiment(independent).rows);
  const bool ok = codistill.seeds.size() >= kMinSeeds && a.dist_from_init.mean < b.dist_from_init.mean;
  return {ok, std::to_string(codistill.seeds.size()) + " seeds, width 512, 256 samples: mean distance codistilled " +
                  fmt("%.4f", a.dist_from_init.mean) + " < independent " + fmt("%.4f", b.dist_from_init.mean)};
}

Verdict subsample_overfitting() {
  ExperimentConfig codistill = load_point("overfitting.yaml", {});
  ExperimentConfig independent = load_point("overfitting.yaml", {"schedules.alpha.base=0"});
  const Summary a = summarize(run_experiment(codistill).rows);
  const Summary b = summarize(run_experiment(independent).rows);
  const bool ok = codistill.seeds.size() >= kMinSeeds && a.val_acc.mean >= b.val_acc.mean;
  return {ok, std::to_string(codistill.seeds.size()) + " seeds, k=4 with 4x epochs: val acc codistilled " +
                  fmt("%.4f", a.val_acc.mean) + " >= independent " + fmt("%.4f", b.val_acc.mean)};
}

Verdict fixed_compute() {
  const ParsedConfig parsed = load_config(kConfigs / "fixed_compute.yaml");
  double acc2 = 0.0, acc4 = 0.0;
  std::size_t seeds = 0;
  for (const SweepPoint& p : parsed.points) {
    const Summary s = summarize(run_experiment(p.experiment).rows);
    if (p.experiment.strategy.n_groups == 2) acc2 = s.val_acc.mean;
    if (p.experiment.strategy.n_groups == 4) acc4 = s.val_acc.mean;
    seeds = p.experiment.seeds.size();
  }
  const bool ok = seeds >= kMinSeeds && acc4 <= acc2;
  return {ok, std::to_string(seeds) + " seeds, fixed total updates: acc(n=4) " + fmt("%.4f", acc4) +
                  " <= acc(n=2) " + fmt("%.4f", acc2)};
}

Verdict schedules_exact() {
  ScheduleSet s;
  s.lr.kind = LrKind::step;
  s.lr.base = 0.1;
  s.lr.milestones = {18, 38, 44};
  s.lr.factor = 0.1;
  s.lr.total_epochs = 50;
  s.alpha.kind = AlphaKind::geometric;
  s.alpha.base = 1.0;
  s.alpha.gamma = 1.1;
  const std::size_t ipe = 10;
  auto at_epoch = [&](std::size_t e) { return e * ipe + 1; };
  bool ok = lr_at(s, at_epoch(0), ipe) == 0.1 && lr_at(s, at_epoch(17), ipe) == 0.1 &&
            lr_at(s, at_epoch(20), ipe) == 0.1 * 0.1 && lr_at(s, at_epoch(38), ipe) == 0.1 * (0.1 * 0.1);
  ok = ok && wd_at(s, at_epoch(0), ipe) == 5e-4 && wd_at(s, at_epoch(17), ipe) == 5e-4 &&
       wd_at(s, at_epoch(18), ipe) == 1e-5 && wd_at(s, at_epoch(37), ipe) == 1e-5 &&
       wd_at(s, at_epoch(38), ipe) == 0.0 && wd_at(s, at_epoch(44), ipe) == 0.0;
  ok = ok && alpha_at(s, 0) == 1.0 && alpha_at(s, 1) == 1.1 && alpha_at(s, 2) == 1.1 * 1.1;
  return {ok, "milestones {18,38,44}: lr 0.1 -> 0.01 at epoch 20, wd 5e-4 -> 1e-5 -> 0, alpha 1, 1.1, 1.1^2 (zero tolerance)"};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Verdict()> run;
    double budget_seconds;
  };
  const std::vector<Criterion> criteria{
      {"commcost exact", commcost_exact, 1},
      {"ledger equals formula", ledger_matches_formula, 60},
      {"alpha=0 equals independent runs", alpha_zero_equivalence, 60},
      {"all_reduce equals large batch", large_batch_equivalence, 60},
      {"finite differences", finite_differences, 60},
      {"checkpoint staleness", checkpoint_staleness, 60},
      {"multiview trend", multiview_trend, kMultiviewBudgetSeconds},
      {"distance from init", distance_from_init, 300},
      {"subsample overfitting", subsample_overfitting, 600},
      {"fixed compute", fixed_compute, 600},
      {"exact schedules", schedules_exact, 1},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const Criterion& c = criteria[i];
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (seconds >= c.budget_seconds) v.pass = false;
    if (!v.pass) ++failed;
    std::printf("%s %2zu %s: %s [%.1fs, budget %.0fs]\n", v.pass ? "PASS" : "FAIL", i + 1, c.name, v.detail.c_str(),
                seconds, c.budget_seconds);
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed;
}
