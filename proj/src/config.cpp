#include "codistillery/config.hpp"

#include <yaml-cpp/yaml.h>

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "codistillery/errors.hpp"

namespace codistillery {
namespace {

enum class Kind { scalar, list, map, model_list };

const std::map<std::string, Kind>& top_schema() {
  static const std::map<std::string, Kind> schema = {
      {"seeds", Kind::list},
      {"strategy", Kind::map},
      {"strategy.kind", Kind::scalar},
      {"strategy.n_groups", Kind::scalar},
      {"strategy.devices_per_group", Kind::scalar},
      {"strategy.per_device_batch", Kind::scalar},
      {"strategy.exchange_period", Kind::scalar},
      {"strategy.checkpoint_delay", Kind::scalar},
      {"strategy.count_intra_group", Kind::scalar},
      {"strategy.b_model", Kind::scalar},
      {"strategy.b_predictions", Kind::scalar},
      {"strategy.reduction_block", Kind::scalar},
      {"model", Kind::map},
      {"model.hidden_widths", Kind::list},
      {"model.activation", Kind::scalar},
      {"model.frozen_prefix", Kind::scalar},
      {"model.views", Kind::list},
      {"models", Kind::model_list},
      {"data", Kind::map},
      {"data.n_views", Kind::scalar},
      {"data.dims_per_view", Kind::scalar},
      {"data.num_classes", Kind::scalar},
      {"data.separation", Kind::list},
      {"data.noise", Kind::scalar},
      {"data.train_size", Kind::scalar},
      {"data.val_size", Kind::scalar},
      {"data.seed", Kind::scalar},
      {"data.subsample", Kind::scalar},
      {"train", Kind::map},
      {"train.epochs", Kind::scalar},
      {"train.iterations", Kind::scalar},
      {"train.fixed_compute", Kind::scalar},
      {"train.optimizer", Kind::scalar},
      {"train.momentum", Kind::scalar},
      {"train.distill_loss", Kind::scalar},
      {"train.eval_every", Kind::scalar},
      {"train.identical_init", Kind::scalar},
      {"train.group_index_offset", Kind::scalar},
      {"train.sampling", Kind::scalar},
      {"schedules", Kind::map},
      {"schedules.lr", Kind::map},
      {"schedules.lr.kind", Kind::scalar},
      {"schedules.lr.base", Kind::scalar},
      {"schedules.lr.milestones", Kind::list},
      {"schedules.lr.factor", Kind::scalar},
      {"schedules.lr.warmup_epochs", Kind::scalar},
      {"schedules.lr.total_epochs", Kind::scalar},
      {"schedules.wd", Kind::map},
      {"schedules.wd.values", Kind::list},
      {"schedules.alpha", Kind::map},
      {"schedules.alpha.kind", Kind::scalar},
      {"schedules.alpha.base", Kind::scalar},
      {"schedules.alpha.gamma", Kind::scalar},
      {"schedules.smoothing", Kind::map},
      {"schedules.smoothing.base", Kind::scalar},
      {"schedules.smoothing.zero_after_milestone", Kind::scalar},
      {"schedules.batch_ratio", Kind::scalar},
      {"output", Kind::map},
      {"output.export_dataset", Kind::scalar},
      {"multiview", Kind::map},
      {"multiview.arms", Kind::list},
      {"multiview.n_list", Kind::list},
      {"multiview.pretrain_iterations", Kind::scalar},
      {"multiview.iterations", Kind::scalar},
  };
  return schema;
}

const std::map<std::string, Kind>& model_schema() {
  static const std::map<std::string, Kind> schema = {
      {"hidden_widths", Kind::list},
      {"activation", Kind::scalar},
      {"frozen_prefix", Kind::scalar},
      {"views", Kind::list},
  };
  return schema;
}

struct Axis {
  std::string path;
  std::vector<YAML::Node> values;
};

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

void check_list(const YAML::Node& node, const std::string& path) {
  if (node.IsScalar()) return;
  if (!node.IsSequence()) throw ConfigError("expected a list", path);
  for (const YAML::Node& item : node) {
    if (!item.IsScalar()) throw ConfigError("expected a list of scalars", path);
  }
}

void check_model_map(const YAML::Node& node, const std::string& path) {
  if (!node.IsMap()) throw ConfigError("expected a mapping", path);
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    const std::string sub = path + "." + key;
    auto it = model_schema().find(key);
    if (it == model_schema().end()) throw ConfigError("unknown key", sub);
    if (it->second == Kind::scalar && !kv.second.IsScalar()) throw ConfigError("expected a scalar", sub);
    if (it->second == Kind::list) check_list(kv.second, sub);
  }
}

void walk(const YAML::Node& node, const std::string& prefix, std::vector<Axis>& axes) {
  if (!node.IsMap()) throw ConfigError("expected a mapping", prefix.empty() ? "<root>" : prefix);
  for (const auto& kv : node) {
    const std::string path = join(prefix, kv.first.as<std::string>());
    auto it = top_schema().find(path);
    if (it == top_schema().end()) throw ConfigError("unknown key", path);
    const YAML::Node& value = kv.second;
    switch (it->second) {
      case Kind::map:
        walk(value, path, axes);
        break;
      case Kind::scalar:
        if (value.IsSequence()) {
          if (value.size() == 0) throw ConfigError("empty sweep", path);
          Axis axis{path, {}};
          for (const YAML::Node& v : value) {
            if (!v.IsScalar()) throw ConfigError("sweep values must be scalars", path);
            axis.values.push_back(v);
          }
          axes.push_back(std::move(axis));
        } else if (!value.IsScalar()) {
          throw ConfigError("expected a scalar", path);
        }
        break;
      case Kind::list:
        if (value.IsSequence() && value.size() > 0 && value[0].IsSequence()) {
          Axis axis{path, {}};
          for (const YAML::Node& v : value) {
            check_list(v, path);
            axis.values.push_back(v);
          }
          axes.push_back(std::move(axis));
        } else {
          check_list(value, path);
        }
        break;
      case Kind::model_list:
        if (!value.IsSequence() || value.size() == 0) throw ConfigError("expected a non-empty list of models", path);
        for (std::size_t i = 0; i < value.size(); ++i) {
          check_model_map(value[i], path + "[" + std::to_string(i) + "]");
        }
        break;
    }
  }
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) throw ConfigError("malformed key path", path);
    parts.push_back(part);
  }
  if (parts.empty()) throw ConfigError("empty key path", path);
  return parts;
}

void set_path(YAML::Node root, const std::string& path, const YAML::Node& value) {
  const std::vector<std::string> parts = split_path(path);
  YAML::Node cur = root;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    YAML::Node next = cur[parts[i]];
    if (!next.IsDefined() || next.IsNull()) {
      cur[parts[i]] = YAML::Node(YAML::NodeType::Map);
      next = cur[parts[i]];
    }
    if (!next.IsMap()) throw ConfigError("cannot descend into a non-mapping", path);
    cur.reset(next);
  }
  cur[parts.back()] = value;
}

void apply_override(YAML::Node root, const std::string& raw) {
  const auto eq = raw.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must be key=value: " + raw, raw);
  const std::string path = raw.substr(0, eq);
  YAML::Node value;
  try {
    value = YAML::Load(raw.substr(eq + 1));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("unparsable override value: ") + e.what(), path);
  }
  set_path(root, path, value);
}

void emit_canonical(YAML::Emitter& out, const YAML::Node& node) {
  if (node.IsMap()) {
    // Sort keys only: assigning a YAML::Node writes through to the node it
    // refers to, so nodes must not be moved by std::sort.
    std::vector<std::string> keys;
    for (const auto& kv : node) keys.push_back(kv.first.as<std::string>());
    std::sort(keys.begin(), keys.end());
    out << YAML::BeginMap;
    for (const std::string& k : keys) {
      out << YAML::Key << k << YAML::Value;
      emit_canonical(out, node[k]);
    }
    out << YAML::EndMap;
  } else if (node.IsSequence()) {
    out << YAML::Flow << YAML::BeginSeq;
    for (const YAML::Node& item : node) emit_canonical(out, item);
    out << YAML::EndSeq;
  } else if (node.IsScalar()) {
    out << node.Scalar();
  } else {
    out << YAML::Null;
  }
}

std::string canonical_text(const YAML::Node& node) {
  YAML::Emitter out;
  emit_canonical(out, node);
  return std::string(out.c_str()) + "\n";
}

std::string scalar_text(const YAML::Node& node) {
  if (node.IsScalar()) return node.Scalar();
  YAML::Emitter out;
  out << YAML::Flow;
  emit_canonical(out, node);
  return out.c_str();
}

// Typed accessors. Each reports the dotted path on failure.

std::uint64_t as_count(const YAML::Node& node, const std::string& path) {
  if (!node.IsScalar()) throw ConfigError("expected a non-negative integer", path);
  try {
    const long long v = node.as<long long>();
    if (v < 0) throw ConfigError("expected a non-negative integer", path);
    return static_cast<std::uint64_t>(v);
  } catch (const YAML::BadConversion&) {
  }
  try {
    const double d = node.as<double>();
    if (d >= 0.0 && d < 1.8e19 && std::floor(d) == d) return static_cast<std::uint64_t>(d);
  } catch (const YAML::BadConversion&) {
  }
  throw ConfigError("expected a non-negative integer, got '" + node.Scalar() + "'", path);
}

double as_real(const YAML::Node& node, const std::string& path) {
  try {
    if (node.IsScalar()) {
      const double d = node.as<double>();
      if (std::isfinite(d)) return d;
    }
  } catch (const YAML::BadConversion&) {
  }
  throw ConfigError("expected a finite number", path);
}

bool as_bool(const YAML::Node& node, const std::string& path) {
  try {
    if (node.IsScalar()) return node.as<bool>();
  } catch (const YAML::BadConversion&) {
  }
  throw ConfigError("expected true or false", path);
}

std::string as_string(const YAML::Node& node, const std::string& path) {
  if (!node.IsScalar()) throw ConfigError("expected a string", path);
  return node.Scalar();
}

template <typename F>
auto as_list(const YAML::Node& node, const std::string& path, F item) {
  using T = decltype(item(node, path));
  std::vector<T> out;
  if (node.IsScalar()) {
    out.push_back(item(node, path));
  } else {
    for (std::size_t i = 0; i < node.size(); ++i) out.push_back(item(node[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

YAML::Node child(const YAML::Node& parent, const char* key) {
  return parent.IsMap() ? parent[key] : YAML::Node();
}

bool present(const YAML::Node& n) { return n.IsDefined() && !n.IsNull(); }

YAML::Node require(const YAML::Node& parent, const char* key, const std::string& path) {
  YAML::Node n = child(parent, key);
  if (!present(n)) throw ConfigError("required field is missing", path);
  return n;
}

template <typename E, typename P>
E parse_enum(const YAML::Node& node, const std::string& path, P parse, const char* allowed) {
  const std::string name = as_string(node, path);
  if (auto v = parse(name)) return *v;
  throw ConfigError("unknown value '" + name + "' (expected " + allowed + ")", path);
}

ModelSpec parse_model(const YAML::Node& node, const std::string& path, const MultiViewSpec& data) {
  ModelSpec spec;
  spec.input_dim = data.input_dim();
  spec.num_classes = data.num_classes;
  const std::string widths_path = path + ".hidden_widths";
  for (std::uint64_t w : as_list(require(node, "hidden_widths", widths_path), widths_path, as_count)) {
    spec.hidden_widths.push_back(static_cast<std::size_t>(w));
  }
  if (auto n = child(node, "activation"); present(n)) {
    if (as_string(n, path + ".activation") != "relu") {
      throw ConfigError("only relu is supported", path + ".activation");
    }
  }
  if (auto n = child(node, "frozen_prefix"); present(n)) spec.frozen_prefix = as_count(n, path + ".frozen_prefix");
  if (auto n = child(node, "views"); present(n)) {
    std::vector<bool> mask(spec.input_dim, false);
    const auto views = as_list(n, path + ".views", as_count);
    if (views.empty()) throw ConfigError("needs at least one view", path + ".views");
    for (std::uint64_t v : views) {
      if (v >= data.n_views) throw ConfigError("view index " + std::to_string(v) + " out of range", path + ".views");
      for (std::size_t j = 0; j < data.dims_per_view; ++j) mask[v * data.dims_per_view + j] = true;
    }
    spec.input_mask = std::move(mask);
  }
  return spec;
}

struct PointConfig {
  ExperimentConfig experiment;
  bool export_dataset = false;
  std::optional<MultiviewConfig> multiview;
};

PointConfig parse_point(const YAML::Node& root) {
  PointConfig out;
  ExperimentConfig& cfg = out.experiment;

  if (auto n = child(root, "seeds"); present(n)) cfg.seeds = as_list(n, "seeds", as_count);

  const YAML::Node strategy = require(root, "strategy", "strategy");
  SyncStrategy& st = cfg.strategy;
  st.kind = parse_enum<SyncKind>(require(strategy, "kind", "strategy.kind"), "strategy.kind", parse_sync_kind,
                                 "all_reduce, codistill_predictions, codistill_checkpoints");
  st.n_groups = st.kind == SyncKind::all_reduce ? 1 : 2;
  if (auto n = child(strategy, "n_groups"); present(n)) st.n_groups = as_count(n, "strategy.n_groups");
  if (auto n = child(strategy, "devices_per_group"); present(n)) {
    st.devices_per_group = as_count(n, "strategy.devices_per_group");
  }
  if (auto n = child(strategy, "per_device_batch"); present(n)) {
    st.per_device_batch = as_count(n, "strategy.per_device_batch");
  }
  if (auto n = child(strategy, "exchange_period"); present(n)) {
    st.exchange_period = as_count(n, "strategy.exchange_period");
  }
  if (auto n = child(strategy, "checkpoint_delay"); present(n)) {
    st.checkpoint_delay = as_count(n, "strategy.checkpoint_delay");
  }
  if (auto n = child(strategy, "count_intra_group"); present(n)) {
    st.count_intra_group = as_bool(n, "strategy.count_intra_group");
  }
  if (auto n = child(strategy, "b_model"); present(n)) cfg.b_model = as_count(n, "strategy.b_model");
  if (auto n = child(strategy, "b_predictions"); present(n)) {
    cfg.b_predictions = as_count(n, "strategy.b_predictions");
  }
  if (auto n = child(strategy, "reduction_block"); present(n)) {
    cfg.reduction_block = as_count(n, "strategy.reduction_block");
  }

  MultiViewSpec& data = cfg.data;
  if (const YAML::Node d = child(root, "data"); present(d)) {
    if (auto n = child(d, "n_views"); present(n)) data.n_views = as_count(n, "data.n_views");
    if (auto n = child(d, "dims_per_view"); present(n)) data.dims_per_view = as_count(n, "data.dims_per_view");
    if (auto n = child(d, "num_classes"); present(n)) data.num_classes = as_count(n, "data.num_classes");
    if (auto n = child(d, "separation"); present(n)) data.separation = as_list(n, "data.separation", as_real);
    if (auto n = child(d, "noise"); present(n)) data.noise = as_real(n, "data.noise");
    if (auto n = child(d, "train_size"); present(n)) data.train_size = as_count(n, "data.train_size");
    if (auto n = child(d, "val_size"); present(n)) data.val_size = as_count(n, "data.val_size");
    if (auto n = child(d, "seed"); present(n)) data.seed = as_count(n, "data.seed");
    if (auto n = child(d, "subsample"); present(n)) cfg.subsample = as_count(n, "data.subsample");
  }
  data.validate();

  const YAML::Node model = child(root, "model");
  const YAML::Node models = child(root, "models");
  if (present(model) && present(models)) throw ConfigError("give either model or models, not both", "models");
  if (present(models)) {
    for (std::size_t i = 0; i < models.size(); ++i) {
      cfg.models.push_back(parse_model(models[i], "models[" + std::to_string(i) + "]", data));
    }
  } else {
    if (!present(model)) throw ConfigError("required field is missing", "model");
    cfg.models.assign(st.n_groups, parse_model(model, "model", data));
  }

  const YAML::Node train = require(root, "train", "train");
  const YAML::Node epochs = child(train, "epochs");
  const YAML::Node iterations = child(train, "iterations");
  if (present(epochs) && present(iterations)) {
    throw ConfigError("give either epochs or iterations, not both", "train.iterations");
  }
  if (!present(epochs) && !present(iterations)) throw ConfigError("required field is missing", "train.epochs");
  if (present(epochs)) cfg.epochs = as_real(epochs, "train.epochs");
  if (present(iterations)) cfg.iterations = as_count(iterations, "train.iterations");
  if (auto n = child(train, "fixed_compute"); present(n)) cfg.fixed_compute = as_bool(n, "train.fixed_compute");
  if (auto n = child(train, "optimizer"); present(n)) {
    cfg.optimizer.kind =
        parse_enum<OptimizerKind>(n, "train.optimizer", parse_optimizer_kind, "sgd, sgd_momentum");
  }
  if (auto n = child(train, "momentum"); present(n)) cfg.optimizer.momentum = as_real(n, "train.momentum");
  if (auto n = child(train, "distill_loss"); present(n)) {
    cfg.distill = parse_enum<DistillKind>(n, "train.distill_loss", parse_distill_kind, "mse, kl");
  }
  if (auto n = child(train, "eval_every"); present(n)) cfg.eval_every = as_count(n, "train.eval_every");
  if (auto n = child(train, "identical_init"); present(n)) cfg.identical_init = as_bool(n, "train.identical_init");
  if (auto n = child(train, "group_index_offset"); present(n)) {
    cfg.group_index_offset = as_count(n, "train.group_index_offset");
  }
  cfg.sampling = st.kind == SyncKind::codistill_predictions ? SamplingMode::coordinated : SamplingMode::independent;
  if (auto n = child(train, "sampling"); present(n)) {
    const std::string mode = as_string(n, "train.sampling");
    if (mode == "coordinated") {
      cfg.sampling = SamplingMode::coordinated;
    } else if (mode == "independent") {
      cfg.sampling = SamplingMode::independent;
    } else if (mode != "auto") {
      throw ConfigError("unknown value '" + mode + "' (expected auto, coordinated, independent)", "train.sampling");
    }
  }

  ScheduleSet& sc = cfg.schedules;
  bool total_given = false;
  if (const YAML::Node s = child(root, "schedules"); present(s)) {
    if (const YAML::Node lr = child(s, "lr"); present(lr)) {
      if (auto n = child(lr, "kind"); present(n)) {
        sc.lr.kind = parse_enum<LrKind>(n, "schedules.lr.kind", parse_lr_kind, "step, cosine");
      }
      if (auto n = child(lr, "base"); present(n)) sc.lr.base = as_real(n, "schedules.lr.base");
      if (auto n = child(lr, "milestones"); present(n)) {
        sc.lr.milestones = as_list(n, "schedules.lr.milestones", as_real);
      }
      if (auto n = child(lr, "factor"); present(n)) sc.lr.factor = as_real(n, "schedules.lr.factor");
      if (auto n = child(lr, "warmup_epochs"); present(n)) {
        sc.lr.warmup_epochs = as_real(n, "schedules.lr.warmup_epochs");
      }
      if (auto n = child(lr, "total_epochs"); present(n)) {
        sc.lr.total_epochs = as_real(n, "schedules.lr.total_epochs");
        total_given = true;
      }
    }
    if (const YAML::Node wd = child(s, "wd"); present(wd)) {
      if (auto n = child(wd, "values"); present(n)) sc.wd.values = as_list(n, "schedules.wd.values", as_real);
    }
    if (const YAML::Node a = child(s, "alpha"); present(a)) {
      if (auto n = child(a, "kind"); present(n)) {
        sc.alpha.kind = parse_enum<AlphaKind>(n, "schedules.alpha.kind", parse_alpha_kind, "constant, geometric");
      }
      if (auto n = child(a, "base"); present(n)) sc.alpha.base = as_real(n, "schedules.alpha.base");
      if (auto n = child(a, "gamma"); present(n)) sc.alpha.gamma = as_real(n, "schedules.alpha.gamma");
    }
    if (const YAML::Node sm = child(s, "smoothing"); present(sm)) {
      if (auto n = child(sm, "base"); present(n)) sc.smoothing.base = as_real(n, "schedules.smoothing.base");
      if (auto n = child(sm, "zero_after_milestone"); present(n)) {
        sc.smoothing.zero_after_milestone = as_count(n, "schedules.smoothing.zero_after_milestone");
      }
    }
    if (auto n = child(s, "batch_ratio"); present(n)) cfg.batch_ratio = as_real(n, "schedules.batch_ratio");
  }
  if (!total_given) {
    if (!cfg.iterations) {
      sc.lr.total_epochs = cfg.epochs;
    } else if (sc.lr.kind == LrKind::cosine) {
      throw ConfigError("required for a cosine schedule with train.iterations", "schedules.lr.total_epochs");
    } else {
      sc.lr.total_epochs = sc.lr.milestones.empty() ? 1.0 : sc.lr.milestones.back() + 1.0;
      sc.lr.total_epochs = std::max(sc.lr.total_epochs, sc.lr.warmup_epochs);
    }
  }

  if (const YAML::Node o = child(root, "output"); present(o)) {
    if (auto n = child(o, "export_dataset"); present(n)) out.export_dataset = as_bool(n, "output.export_dataset");
  }

  cfg.validate();

  if (const YAML::Node mv = child(root, "multiview"); present(mv)) {
    MultiviewConfig m;
    m.base = cfg;
    if (auto n = child(mv, "arms"); present(n)) {
      m.arms.clear();
      const std::string path = "multiview.arms";
      for (const std::string& name : as_list(n, path, as_string)) {
        auto arm = parse_split_arm(name);
        if (!arm) {
          throw ConfigError("unknown arm '" + name + "' (expected frozen, pretrained_not_frozen, random_init)", path);
        }
        m.arms.push_back(*arm);
      }
    }
    if (auto n = child(mv, "n_list"); present(n)) {
      m.n_list.clear();
      for (std::uint64_t v : as_list(n, "multiview.n_list", as_count)) m.n_list.push_back(v);
    }
    if (auto n = child(mv, "pretrain_iterations"); present(n)) {
      m.pretrain_iterations = as_count(n, "multiview.pretrain_iterations");
    }
    if (auto n = child(mv, "iterations"); present(n)) m.iterations = as_count(n, "multiview.iterations");
    m.validate();
    out.multiview = std::move(m);
  }
  return out;
}

std::uint64_t offset_seed(std::uint64_t seed, std::int64_t offset, const std::string& path) {
  const long double shifted = static_cast<long double>(seed) + static_cast<long double>(offset);
  if (shifted < 0) throw ConfigError("seed offset makes a seed negative", path);
  return offset >= 0 ? seed + static_cast<std::uint64_t>(offset) : seed - static_cast<std::uint64_t>(-offset);
}

}  // namespace

ParsedConfig parse_config(std::string_view yaml_text, std::span<const std::string> overrides,
                          std::int64_t seed_offset) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml_text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("YAML syntax error: ") + e.what(), "<document>");
  }
  if (!root.IsDefined() || root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  for (const std::string& o : overrides) apply_override(root, o);

  std::vector<Axis> axes;
  walk(root, "", axes);

  std::size_t total = 1;
  for (const Axis& a : axes) total *= a.values.size();

  ParsedConfig out;
  for (std::size_t p = 0; p < total; ++p) {
    YAML::Node point = YAML::Clone(root);
    SweepPoint sp;
    std::size_t rem = p;
    std::vector<std::size_t> pick(axes.size());
    for (std::size_t i = axes.size(); i-- > 0;) {
      pick[i] = rem % axes[i].values.size();
      rem /= axes[i].values.size();
    }
    for (std::size_t i = 0; i < axes.size(); ++i) {
      const YAML::Node& v = axes[i].values[pick[i]];
      set_path(point, axes[i].path, YAML::Clone(v));
      sp.assignments.emplace_back(axes[i].path, scalar_text(v));
    }
    if (!axes.empty()) {
      char label[32];
      std::snprintf(label, sizeof label, "point_%03zu", p);
      sp.label = label;
    }

    PointConfig parsed = parse_point(point);
    if (seed_offset != 0) {
      for (std::uint64_t& s : parsed.experiment.seeds) s = offset_seed(s, seed_offset, "seeds");
      parsed.experiment.data.seed = offset_seed(parsed.experiment.data.seed, seed_offset, "data.seed");
      YAML::Node seeds(YAML::NodeType::Sequence);
      for (std::uint64_t s : parsed.experiment.seeds) seeds.push_back(s);
      point["seeds"] = seeds;
      set_path(point, "data.seed", YAML::Node(parsed.experiment.data.seed));
      if (parsed.multiview) {
        parsed.multiview->base.seeds = parsed.experiment.seeds;
        parsed.multiview->base.data.seed = parsed.experiment.data.seed;
      }
    }
    sp.canonical = canonical_text(point);
    sp.experiment = std::move(parsed.experiment);
    sp.export_dataset = parsed.export_dataset;
    if (p == 0 && total == 1) out.multiview = std::move(parsed.multiview);
    out.points.push_back(std::move(sp));
  }
  return out;
}

ParsedConfig load_config(const std::filesystem::path& path, std::span<const std::string> overrides,
                         std::int64_t seed_offset) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string(), "<file>");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides, seed_offset);
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw ContractError("SHA-256 computation failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

}  // namespace codistillery
