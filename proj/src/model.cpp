#include "codistillery/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "codistillery/errors.hpp"
#include "codistillery/kernels.hpp"
#include "codistillery/rng.hpp"

namespace codistillery {
namespace {

Tensor mask_tensor(const std::vector<bool>& mask) {
  Tensor t({mask.size()});
  for (std::size_t i = 0; i < mask.size(); ++i) t[i] = mask[i] ? 1.0 : 0.0;
  return t;
}

void add_bias_rows(Tensor& z, const Tensor& bias) {
  const auto& k = kernels::active();
  const std::size_t n = z.cols();
  for (std::size_t r = 0; r < z.rows(); ++r) k.add(z.ptr() + r * n, bias.ptr(), z.ptr() + r * n, n);
}

void mask_rows(Tensor& z, const Tensor& mask) {
  const auto& k = kernels::active();
  const std::size_t n = z.cols();
  for (std::size_t r = 0; r < z.rows(); ++r) k.mul(z.ptr() + r * n, mask.ptr(), z.ptr() + r * n, n);
}

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return value;
  }

  std::string string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw ContractError("parameter blob truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::size_t ModelSpec::fan_in(std::size_t layer) const {
  return layer == 0 ? input_dim : hidden_widths.at(layer - 1);
}

std::size_t ModelSpec::fan_out(std::size_t layer) const {
  return layer < hidden_widths.size() ? hidden_widths[layer] : num_classes;
}

void ModelSpec::validate() const {
  if (input_dim == 0) throw ConfigError("input_dim must be positive", "model.input_dim");
  if (num_classes == 0) throw ConfigError("num_classes must be positive", "model.num_classes");
  for (std::size_t w : hidden_widths) {
    if (w == 0) throw ConfigError("hidden widths must be positive", "model.hidden_widths");
  }
  if (frozen_prefix > num_layers()) {
    throw ConfigError("frozen_prefix exceeds the number of layers", "model.frozen_prefix");
  }
  if (view_mask) {
    if (hidden_widths.empty()) throw ConfigError("view_mask needs a hidden layer", "model.view_mask");
    if (view_mask->size() != hidden_widths[0]) {
      throw ConfigError("view_mask length must equal the first hidden width", "model.view_mask");
    }
    if (std::find(view_mask->begin(), view_mask->end(), true) == view_mask->end()) {
      throw ConfigError("view_mask must keep at least one unit", "model.view_mask");
    }
  }
  if (input_mask) {
    if (input_mask->size() != input_dim) {
      throw ConfigError("input_mask length must equal input_dim", "model.input_mask");
    }
    if (std::find(input_mask->begin(), input_mask->end(), true) == input_mask->end()) {
      throw ConfigError("input_mask must keep at least one feature", "model.input_mask");
    }
  }
}

std::string weight_name(std::size_t layer) { return "layer" + std::to_string(layer) + ".weight"; }
std::string bias_name(std::size_t layer) { return "layer" + std::to_string(layer) + ".bias"; }

void Parameters::insert(std::string name, Tensor value) {
  if (contains(name)) throw ContractError("duplicate parameter " + name);
  entries_.emplace_back(std::move(name), std::move(value));
}

const Tensor& Parameters::at(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw ContractError("no parameter named " + name);
}

Tensor& Parameters::at(const std::string& name) {
  return const_cast<Tensor&>(std::as_const(*this).at(name));
}

bool Parameters::contains(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.first == name) return true;
  }
  return false;
}

bool bit_equal(const Parameters& a, const Parameters& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.entries()[i].first != b.entries()[i].first) return false;
    if (!bit_equal(a.entries()[i].second, b.entries()[i].second)) return false;
  }
  return true;
}

Parameters init_parameters(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  Parameters params;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const std::size_t in = spec.fan_in(l), out = spec.fan_out(l);
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    Tensor w({in, out});
    for (double& v : w.data()) v = rng.uniform(-limit, limit);
    params.insert(weight_name(l), std::move(w));
    params.insert(bias_name(l), Tensor({out}));
  }
  return params;
}

void check_parameters(const ModelSpec& spec, const Parameters& params) {
  if (params.size() != 2 * spec.num_layers()) {
    throw DimensionError("parameter count " + std::to_string(params.size()) + " does not match a " +
                         std::to_string(spec.num_layers()) + "-layer spec");
  }
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const Tensor::Shape ws{spec.fan_in(l), spec.fan_out(l)};
    const Tensor::Shape bs{spec.fan_out(l)};
    if (params.at(weight_name(l)).shape() != ws || params.at(bias_name(l)).shape() != bs) {
      throw DimensionError("layer " + std::to_string(l) + " parameter shapes do not match the spec");
    }
  }
}

BoundModel bind(Tape& tape, const ModelSpec& spec, const Parameters& params) {
  check_parameters(spec, params);
  BoundModel m;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const Tensor& w = params.at(weight_name(l));
    const Tensor& b = params.at(bias_name(l));
    if (spec.layer_frozen(l)) {
      m.weights.push_back(tape.constant(w));
      m.biases.push_back(tape.constant(b));
    } else {
      m.weights.push_back(tape.parameter(weight_name(l), w));
      m.biases.push_back(tape.parameter(bias_name(l), b));
    }
  }
  return m;
}

Var forward(Tape& tape, const ModelSpec& spec, const BoundModel& model, Var x) {
  if (x.value().rank() != 2 || x.value().cols() != spec.input_dim) {
    throw DimensionError("forward: input " + shape_string(x.value().shape()) + " does not have " +
                         std::to_string(spec.input_dim) + " columns");
  }
  Var h = x;
  if (spec.input_mask) h = tape.mul_row(h, mask_tensor(*spec.input_mask));
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    h = tape.add_row(tape.matmul(h, model.weights[l]), model.biases[l]);
    if (l + 1 == spec.num_layers()) break;
    h = tape.relu(h);
    if (l == 0 && spec.view_mask) h = tape.mul_row(h, mask_tensor(*spec.view_mask));
  }
  return h;
}

Tensor predict(const ModelSpec& spec, const Parameters& params, const Tensor& x) {
  check_parameters(spec, params);
  if (x.rank() != 2 || x.cols() != spec.input_dim) {
    throw DimensionError("predict: input " + shape_string(x.shape()) + " does not have " +
                         std::to_string(spec.input_dim) + " columns");
  }
  Tensor h = x;
  if (spec.input_mask) mask_rows(h, mask_tensor(*spec.input_mask));
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    h = matmul(h, params.at(weight_name(l)));
    add_bias_rows(h, params.at(bias_name(l)));
    if (l + 1 == spec.num_layers()) break;
    h = relu(h);
    if (l == 0 && spec.view_mask) mask_rows(h, mask_tensor(*spec.view_mask));
  }
  return h;
}

double accuracy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rows() != labels.size()) throw DimensionError("accuracy: label count mismatch");
  const std::size_t c = logits.cols();
  std::size_t correct = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (logits.at(r, j) > logits.at(r, best)) best = j;
    }
    if (static_cast<int>(best) == labels[r]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double distance_from(const ModelSpec& spec, const Parameters& theta, const Parameters& theta0) {
  double s = 0.0;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    if (spec.layer_frozen(l)) continue;
    for (const auto& name : {weight_name(l), bias_name(l)}) {
      const Tensor& a = theta.at(name);
      const Tensor& b = theta0.at(name);
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s = s + d * d;
      }
    }
  }
  return std::sqrt(s);
}

std::vector<std::uint8_t> serialize(const Parameters& params) {
  std::vector<std::uint8_t> out{'C', 'D', 'P', 'M'};
  put<std::uint32_t>(out, 1);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params.entries()) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
  }
  for (const auto& entry : params.entries()) {
    for (double v : entry.second.data()) put<double>(out, v);
  }
  return out;
}

Parameters deserialize(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  if (in.string(4) != "CDPM") throw ContractError("not a parameter blob");
  if (in.get<std::uint32_t>() != 1) throw ContractError("unsupported parameter blob version");
  const auto count = in.get<std::uint32_t>();
  std::vector<std::pair<std::string, Tensor::Shape>> table;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = in.get<std::uint16_t>();
    std::string name = in.string(len);
    const auto rank = in.get<std::uint32_t>();
    Tensor::Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(in.get<std::uint64_t>());
    table.emplace_back(std::move(name), std::move(shape));
  }
  Parameters params;
  for (auto& [name, shape] : table) {
    Tensor t(shape);
    for (double& v : t.data()) v = in.get<double>();
    params.insert(name, std::move(t));
  }
  if (!in.done()) throw ContractError("trailing bytes after parameter blob");
  return params;
}

std::size_t serialized_size(const ModelSpec& spec) {
  std::size_t bytes = 4 + 4 + 4;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const std::size_t in = spec.fan_in(l), out = spec.fan_out(l);
    bytes += 2 + weight_name(l).size() + 4 + 2 * 8 + 8 * in * out;
    bytes += 2 + bias_name(l).size() + 4 + 1 * 8 + 8 * out;
  }
  return bytes;
}

std::string to_string(SplitArm arm) {
  switch (arm) {
    case SplitArm::frozen:
      return "frozen";
    case SplitArm::pretrained_not_frozen:
      return "pretrained_not_frozen";
    case SplitArm::random_init:
      return "random_init";
  }
  return "?";
}

std::optional<SplitArm> parse_split_arm(std::string_view name) {
  if (name == "frozen") return SplitArm::frozen;
  if (name == "pretrained_not_frozen") return SplitArm::pretrained_not_frozen;
  if (name == "random_init") return SplitArm::random_init;
  return std::nullopt;
}

std::vector<FamilyMember> make_split_family(const Parameters& pretrained, const ModelSpec& spec,
                                            std::size_t n_splits, SplitArm arm, std::uint64_t seed) {
  spec.validate();
  if (spec.hidden_widths.empty() || n_splits == 0 || spec.hidden_widths[0] % n_splits != 0) {
    throw ConfigError("first hidden width must be divisible by the number of splits",
                      "multiview.n_list");
  }
  if (arm != SplitArm::random_init) check_parameters(spec, pretrained);
  const std::size_t width = spec.hidden_widths[0];
  const std::size_t per_split = width / n_splits;
  std::vector<FamilyMember> family;
  for (std::size_t s = 0; s < n_splits; ++s) {
    ModelSpec member = spec;
    member.view_mask = std::vector<bool>(width, false);
    for (std::size_t u = s * per_split; u < (s + 1) * per_split; ++u) (*member.view_mask)[u] = true;
    member.frozen_prefix = arm == SplitArm::frozen ? 1 : 0;
    Parameters params = init_parameters(member, mix_seed(seed, s));
    if (arm != SplitArm::random_init) {
      params.at(weight_name(0)) = pretrained.at(weight_name(0));
      params.at(bias_name(0)) = pretrained.at(bias_name(0));
    }
    family.push_back({std::move(member), std::move(params)});
  }
  return family;
}

}  // namespace codistillery
