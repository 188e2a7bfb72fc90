#include "codistillery/harness.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <string>

#include "codistillery/errors.hpp"
#include "codistillery/rng.hpp"

namespace codistillery {
namespace {

constexpr std::uint64_t kInitSalt = 0x1000;
constexpr std::uint64_t kSamplingSalt = 0x2000;
constexpr std::uint64_t kSubsampleSalt = 0x3000;
constexpr std::uint64_t kFamilySalt = 0x4000;

std::uint64_t model_bits(const ModelSpec& spec) { return 8 * static_cast<std::uint64_t>(serialized_size(spec)); }

ScheduleSet effective_schedules(const ExperimentConfig& cfg) {
  ScheduleSet s = cfg.schedules;
  s.lr.base *= cfg.batch_ratio;
  const auto k = static_cast<double>(cfg.subsample);
  for (double& m : s.lr.milestones) m *= k;
  s.lr.warmup_epochs *= k;
  s.lr.total_epochs *= k;
  return s;
}

// Device-local state for one iteration.
struct DevicePass {
  std::unique_ptr<Tape> tape;
  BoundModel bound;
  Var logits;
  std::size_t row_begin = 0;
  std::size_t row_end = 0;
};

double mean_left_to_right(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s = s + x;
  return s / static_cast<double>(v.size());
}

}  // namespace

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "sgd_momentum"; }

std::optional<OptimizerKind> parse_optimizer_kind(std::string_view name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "sgd_momentum") return OptimizerKind::sgd_momentum;
  return std::nullopt;
}

std::uint64_t init_seed(std::uint64_t seed, std::size_t group) { return mix_seed(seed, kInitSalt + group); }
std::uint64_t sampling_seed(std::uint64_t seed) { return mix_seed(seed, kSamplingSalt); }
std::uint64_t subsample_seed(std::uint64_t data_seed) { return mix_seed(data_seed, kSubsampleSalt); }

void ExperimentConfig::validate() const {
  strategy.validate();
  data.validate();
  schedules.validate();
  if (models.size() != strategy.n_groups) {
    throw ConfigError("expected " + std::to_string(strategy.n_groups) + " model specs, got " +
                          std::to_string(models.size()),
                      "models");
  }
  for (const ModelSpec& m : models) {
    m.validate();
    if (m.input_dim != data.input_dim()) {
      throw ConfigError("model input_dim " + std::to_string(m.input_dim) + " != data input_dim " +
                            std::to_string(data.input_dim()),
                        "model.input_dim");
    }
    if (m.num_classes != data.num_classes) {
      throw ConfigError("model num_classes " + std::to_string(m.num_classes) + " != data num_classes " +
                            std::to_string(data.num_classes),
                        "model.num_classes");
    }
  }
  if (subsample == 0) throw ConfigError("must be >= 1", "data.subsample");
  if (subsample > data.train_size) throw ConfigError("exceeds train_size", "data.subsample");
  if (data.train_size / subsample < strategy.group_batch()) {
    throw ConfigError("group batch " + std::to_string(strategy.group_batch()) + " exceeds the training set",
                      "strategy.per_device_batch");
  }
  if (iterations && *iterations == 0) throw ConfigError("must be >= 1", "train.iterations");
  if (!iterations && !(epochs > 0.0)) throw ConfigError("must be > 0", "train.epochs");
  if (!(batch_ratio > 0.0)) throw ConfigError("must be > 0", "schedules.batch_ratio");
  if (eval_every == 0) throw ConfigError("must be >= 1", "train.eval_every");
  if (seeds.empty()) throw ConfigError("at least one seed required", "seeds");
  if (optimizer.kind == OptimizerKind::sgd_momentum && !(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0)) {
    throw ConfigError("must be in [0, 1)", "train.momentum");
  }
  if (b_model && *b_model == 0) throw ConfigError("must be > 0", "strategy.b_model");
  if (initial_parameters) {
    if (initial_parameters->size() != models.size()) {
      throw ConfigError("one parameter set per group required", "initial_parameters");
    }
    for (std::size_t g = 0; g < models.size(); ++g) check_parameters(models[g], (*initial_parameters)[g]);
  }
}

std::size_t planned_iterations(const ExperimentConfig& cfg, std::size_t iterations_per_epoch) {
  std::size_t k = cfg.iterations ? *cfg.iterations
                                 : static_cast<std::size_t>(std::floor(
                                       cfg.epochs * static_cast<double>(cfg.subsample) *
                                       static_cast<double>(iterations_per_epoch)));
  if (cfg.fixed_compute) k /= cfg.strategy.n_groups;
  if (k == 0) throw ConfigError("iteration budget rounds to 0", cfg.iterations ? "train.iterations" : "train.epochs");
  return k;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const IterationObserver& observer) {
  cfg.validate();
  const SyncStrategy& st = cfg.strategy;
  const std::size_t n = st.n_groups;
  const std::size_t m = st.devices_per_group;
  const std::size_t per_device = st.per_device_batch;
  const std::size_t group_batch = st.group_batch();

  auto [full_train, val] = generate_multiview(cfg.data);
  Dataset train = cfg.subsample == 1
                      ? std::move(full_train)
                      : subsample_fraction(full_train, cfg.subsample, subsample_seed(cfg.data.seed)).data;

  ExperimentResult result;
  result.iterations_per_epoch = train.size() / group_batch;
  const std::size_t ipe = result.iterations_per_epoch;
  const std::size_t K = planned_iterations(cfg, ipe);
  result.iterations = K;
  const ScheduleSet sched = effective_schedules(cfg);

  for (const ModelSpec& spec : cfg.models) {
    result.b_model.push_back(cfg.b_model.value_or(model_bits(spec)));
    result.b_predictions.push_back(cfg.b_predictions.value_or(64 * static_cast<std::uint64_t>(spec.num_classes)));
  }

  const std::size_t eval_stride = ipe * cfg.eval_every;
  const bool momentum = cfg.optimizer.kind == OptimizerKind::sgd_momentum;
  result.rows.reserve(cfg.seeds.size() * K * n);

  for (const std::uint64_t seed : cfg.seeds) {
    std::vector<Parameters> params;
    for (std::size_t g = 0; g < n; ++g) {
      if (cfg.initial_parameters) {
        params.push_back((*cfg.initial_parameters)[g]);
      } else {
        const std::size_t id = (cfg.identical_init ? 0 : g) + cfg.group_index_offset;
        params.push_back(init_parameters(cfg.models[g], init_seed(seed, id)));
      }
    }
    const std::vector<Parameters> theta1 = params;
    std::vector<std::map<std::string, Tensor>> velocity(n);

    std::vector<Sampler> samplers;
    for (std::size_t g = 0; g < n; ++g) {
      samplers.emplace_back(train.size(), sampling_seed(seed), g + cfg.group_index_offset, cfg.sampling);
    }
    Synchronizer sync(st, result.b_model, result.b_predictions, params);
    std::vector<double> val_acc(n, 0.0);

    for (std::size_t k = 1; k <= K; ++k) {
      const std::size_t epoch = epoch_of(k, ipe);
      const double lr = lr_at(sched, k, ipe);
      const double wd = wd_at(sched, k, ipe);
      const double alpha = alpha_at(sched, epoch);
      const double eps = smoothing_at(sched, k, ipe);

      std::vector<Minibatch> batches;
      batches.reserve(n);
      for (std::size_t g = 0; g < n; ++g) batches.push_back(next_minibatch(samplers[g], train, group_batch));

      std::vector<std::vector<DevicePass>> passes(n);
      std::vector<Tensor> group_logits(n);
      for (std::size_t g = 0; g < n; ++g) {
        std::vector<Tensor> parts;
        for (std::size_t d = 0; d < m; ++d) {
          DevicePass p;
          p.tape = std::make_unique<Tape>(m == 1 ? cfg.reduction_block : 0);
          p.row_begin = d * per_device;
          p.row_end = p.row_begin + per_device;
          p.bound = bind(*p.tape, cfg.models[g], params[g]);
          const Var x = p.tape->constant(m == 1 ? batches[g].x : batches[g].x.slice_rows(p.row_begin, p.row_end));
          p.logits = forward(*p.tape, cfg.models[g], p.bound, x);
          parts.push_back(p.logits.value());
          passes[g].push_back(std::move(p));
        }
        group_logits[g] = m == 1 ? parts.front() : concat_rows(parts);
      }

      std::vector<GroupView> views(n);
      for (std::size_t g = 0; g < n; ++g) views[g] = {&cfg.models[g], &params[g], &batches[g], &group_logits[g]};
      std::vector<std::vector<std::size_t>> sources;
      const std::vector<std::vector<Tensor>> peers = sync.gather_peer_logits(k, views, &sources);

      std::vector<GradientMap> grads(n);
      std::vector<MetricsRow> rows(n);
      for (std::size_t g = 0; g < n; ++g) {
        const ModelSpec& spec = cfg.models[g];
        std::vector<GradientMap> device_grads;
        std::vector<double> sup, dist;
        double l2 = 0.0;
        for (DevicePass& p : passes[g]) {
          std::vector<Tensor> device_peers;
          for (const Tensor& pl : peers[g]) {
            device_peers.push_back(m == 1 ? pl : pl.slice_rows(p.row_begin, p.row_end));
          }
          const std::span<const int> labels(batches[g].y.data() + p.row_begin, p.row_end - p.row_begin);
          const LossValue lv = codistill_objective(*p.tape, p.logits, labels, device_peers, alpha, m == 1 ? wd : 0.0,
                                                   spec, p.bound, eps, cfg.distill);
          sup.push_back(lv.supervised);
          dist.push_back(lv.distill);
          l2 = lv.l2;
          device_grads.push_back(p.tape->backward(lv.root));
        }
        if (m == 1) {
          grads[g] = std::move(device_grads.front());
        } else {
          grads[g] = all_reduce_grads(device_grads);
          if (wd != 0.0) {
            for (std::size_t l = 0; l < spec.num_layers(); ++l) {
              if (spec.layer_frozen(l)) continue;
              const std::string name = weight_name(l);
              axpy_inplace(wd, params[g].at(name), grads[g].at(name));
            }
          }
        }

        MetricsRow& row = rows[g];
        row.seed = seed;
        row.iteration = k;
        row.epoch = epoch;
        row.group = g;
        row.supervised = m == 1 ? sup.front() : mean_left_to_right(sup);
        row.distill = m == 1 ? dist.front() : mean_left_to_right(dist);
        row.l2 = l2;
        row.train_loss = (row.supervised + alpha * row.distill) + wd * row.l2;
        if (k == 1 || k == K || (k - 1) % eval_stride == 0) {
          val_acc[g] = accuracy(predict(spec, params[g], val.features), val.labels);
        }
        row.val_acc = val_acc[g];
        row.dist_from_init = distance_from(spec, params[g], theta1[g]);
        row.lr = lr;
        row.wd = wd;
        row.alpha = alpha;
        row.epsilon = eps;
      }

      if (observer) observer(IterationTrace{seed, k, params, batches, peers, sources});

      for (std::size_t g = 0; g < n; ++g) {
        for (auto& [name, grad] : grads[g]) {
          Tensor& theta = params[g].at(name);
          if (!momentum) {
            axpy_inplace(-lr, grad, theta);
            continue;
          }
          auto it = velocity[g].find(name);
          if (it == velocity[g].end()) {
            it = velocity[g].emplace(name, Tensor::zeros_like(grad)).first;
          }
          Tensor& v = it->second;
          v = add(scale(v, cfg.optimizer.momentum), grad);
          axpy_inplace(-lr, v, theta);
        }
      }
      sync.end_iteration(k, params);

      for (std::size_t g = 0; g < n; ++g) {
        rows[g].bits_iter = sync.ledger().bits_this_iteration(g);
        rows[g].bits_cum = sync.ledger().cumulative(g);
        result.rows.push_back(rows[g]);
      }
    }
    result.final_params.push_back(std::move(params));
  }
  return result;
}

Stat mean_stderr(std::span<const double> values) {
  Stat s;
  s.n = values.size();
  if (values.empty()) return s;
  double total = 0.0;
  for (double v : values) total = total + v;
  s.mean = total / static_cast<double>(s.n);
  if (s.n == 1) {
    s.single = true;
    return s;
  }
  double ss = 0.0;
  for (double v : values) ss = ss + (v - s.mean) * (v - s.mean);
  s.std_error = std::sqrt(ss / static_cast<double>(s.n - 1)) / std::sqrt(static_cast<double>(s.n));
  return s;
}

Summary summarize(std::span<const MetricsRow> rows) {
  if (rows.empty()) throw ContractError("summarize: empty metrics table");
  std::map<std::pair<std::uint64_t, std::size_t>, const MetricsRow*> last;
  std::vector<std::uint64_t> seed_order;
  std::size_t n_groups = 0;
  for (const MetricsRow& r : rows) {
    if (std::find(seed_order.begin(), seed_order.end(), r.seed) == seed_order.end()) seed_order.push_back(r.seed);
    n_groups = std::max(n_groups, r.group + 1);
    const MetricsRow*& slot = last[{r.seed, r.group}];
    if (!slot || r.iteration >= slot->iteration) slot = &r;
  }

  Summary out;
  for (std::uint64_t seed : seed_order) {
    for (std::size_t g = 0; g < n_groups; ++g) {
      auto it = last.find({seed, g});
      if (it == last.end()) continue;
      const MetricsRow& r = *it->second;
      out.finals.push_back({seed, g, r.train_loss, r.val_acc, r.dist_from_init, r.bits_cum});
    }
  }

  for (std::size_t g = 0; g < n_groups; ++g) {
    std::vector<double> loss, acc, dist, bits;
    for (const FinalRow& f : out.finals) {
      if (f.group != g) continue;
      loss.push_back(f.train_loss);
      acc.push_back(f.val_acc);
      dist.push_back(f.dist_from_init);
      bits.push_back(static_cast<double>(f.bits_total));
    }
    out.groups.push_back({g, mean_stderr(loss), mean_stderr(acc), mean_stderr(dist), mean_stderr(bits)});
  }

  std::vector<double> loss, acc, dist;
  for (std::uint64_t seed : seed_order) {
    std::vector<double> l, a, d;
    for (const FinalRow& f : out.finals) {
      if (f.seed != seed) continue;
      l.push_back(f.train_loss);
      a.push_back(f.val_acc);
      d.push_back(f.dist_from_init);
    }
    loss.push_back(mean_stderr(l).mean);
    acc.push_back(mean_stderr(a).mean);
    dist.push_back(mean_stderr(d).mean);
  }
  out.train_loss = mean_stderr(loss);
  out.val_acc = mean_stderr(acc);
  out.dist_from_init = mean_stderr(dist);
  return out;
}

void MultiviewConfig::validate() const {
  if (base.models.empty()) throw ConfigError("an unsplit architecture is required", "model");
  const ModelSpec& spec = base.models.front();
  spec.validate();
  if (spec.hidden_widths.empty()) throw ConfigError("needs at least one hidden layer", "model.hidden_widths");
  if (arms.empty()) throw ConfigError("at least one arm required", "multiview.arms");
  if (n_list.empty()) throw ConfigError("at least one n required", "multiview.n_list");
  for (std::size_t v : n_list) {
    if (v == 0) throw ConfigError("entries must be >= 1", "multiview.n_list");
  }
  const std::size_t max_n = *std::max_element(n_list.begin(), n_list.end());
  if (spec.hidden_widths[0] % max_n != 0) {
    throw ConfigError("first hidden width " + std::to_string(spec.hidden_widths[0]) + " not divisible by " +
                          std::to_string(max_n),
                      "multiview.n_list");
  }
  if (max_n > 1 && base.strategy.kind == SyncKind::all_reduce) {
    throw ConfigError("n > 1 needs a codistillation kind", "strategy.kind");
  }
  if (pretrain_iterations == 0) throw ConfigError("must be >= 1", "multiview.pretrain_iterations");
  if (iterations == 0) throw ConfigError("must be >= 1", "multiview.iterations");
  if (base.seeds.empty()) throw ConfigError("at least one seed required", "seeds");
}

MultiviewResult run_multiview_suite(const MultiviewConfig& cfg) {
  cfg.validate();
  const ModelSpec unsplit = cfg.base.models.front();
  const std::size_t max_n = *std::max_element(cfg.n_list.begin(), cfg.n_list.end());

  MultiviewResult out;
  for (SplitArm arm : cfg.arms) {
    for (std::size_t n : cfg.n_list) out.cells.push_back({arm, n, {}, {}});
  }

  for (const std::uint64_t seed : cfg.base.seeds) {
    ExperimentConfig pre = cfg.base;
    pre.strategy.kind = SyncKind::all_reduce;
    pre.strategy.n_groups = 1;
    pre.models = {unsplit};
    pre.initial_parameters.reset();
    pre.iterations = cfg.pretrain_iterations;
    pre.fixed_compute = false;
    pre.seeds = {seed};
    ExperimentResult pre_run = run_experiment(pre);
    out.pretrained_acc.push_back(pre_run.rows.back().val_acc);
    const Parameters& pretrained = pre_run.final_params.front().front();

    std::size_t cell = 0;
    for (SplitArm arm : cfg.arms) {
      const std::vector<FamilyMember> family =
          make_split_family(pretrained, unsplit, max_n, arm, mix_seed(seed, kFamilySalt));
      for (std::size_t n : cfg.n_list) {
        ExperimentConfig run = cfg.base;
        run.strategy.kind = n == 1 ? SyncKind::all_reduce : cfg.base.strategy.kind;
        run.strategy.n_groups = n;
        run.models.clear();
        std::vector<Parameters> init;
        for (std::size_t i = 0; i < n; ++i) {
          run.models.push_back(family[i].spec);
          init.push_back(family[i].params);
        }
        run.initial_parameters = std::move(init);
        run.iterations = cfg.iterations;
        run.fixed_compute = false;
        run.seeds = {seed};
        const ExperimentResult r = run_experiment(run);
        std::vector<double> finals;
        for (const MetricsRow& row : r.rows) {
          if (row.iteration == r.iterations) finals.push_back(row.val_acc);
        }
        out.cells[cell++].per_seed.push_back(mean_stderr(finals).mean);
      }
    }
  }
  for (MultiviewCell& c : out.cells) c.acc = mean_stderr(c.per_seed);
  return out;
}

}  // namespace codistillery
