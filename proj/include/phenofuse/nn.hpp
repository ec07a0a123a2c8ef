#pragma once

// Dense ReLU multilayer perceptron with explicit forward/backward passes,
// mean-squared-error losses, Adam, finite-difference gradient verification
// and a checkpoint format.
//
// Every layer but the last is followed by ReLU; the last is linear. Parameters
// are stored in float; BasicMlp<double> is the verification shadow used by
// grad_check.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "phenofuse/error.hpp"
#include "phenofuse/io.hpp"

namespace phenofuse::nn {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

struct MlpSpec {
  std::vector<std::size_t> layer_sizes;  // input, hidden..., output

  std::size_t input_size() const { return layer_sizes.front(); }
  std::size_t output_size() const { return layer_sizes.back(); }
  std::size_t layer_count() const { return layer_sizes.size() - 1; }

  void validate() const {
    if (layer_sizes.size() < 2) throw InvalidArgument("MLP spec needs at least input and output sizes");
    for (std::size_t s : layer_sizes) {
      if (s == 0) throw InvalidArgument("MLP layer sizes must be positive");
    }
  }

  std::string to_string() const {
    std::string s;
    for (std::size_t i = 0; i < layer_sizes.size(); ++i) {
      if (i) s += "->";
      s += std::to_string(layer_sizes[i]);
    }
    return s;
  }

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

template <class T>
struct Dense {
  Matrix<T> weight;  // out x in
  Vector<T> bias;    // out
};

/// Per-layer tensors shaped like the model; holds parameters, gradients and
/// Adam moments alike.
template <class T>
using Params = std::vector<Dense<T>>;

template <class T>
Params<T> zeros_like(const Params<T>& p) {
  Params<T> out(p.size());
  for (std::size_t l = 0; l < p.size(); ++l) {
    out[l].weight = Matrix<T>::Zero(p[l].weight.rows(), p[l].weight.cols());
    out[l].bias = Vector<T>::Zero(p[l].bias.size());
  }
  return out;
}

template <class T>
std::size_t parameter_count(const Params<T>& p) {
  std::size_t n = 0;
  for (const auto& d : p) n += static_cast<std::size_t>(d.weight.size() + d.bias.size());
  return n;
}

template <class T>
struct BasicMlp {
  MlpSpec spec;
  std::uint64_t seed = 0;
  Params<T> layers;

  template <class U>
  BasicMlp<U> cast() const {
    BasicMlp<U> out;
    out.spec = spec;
    out.seed = seed;
    out.layers.resize(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) {
      out.layers[l].weight = layers[l].weight.template cast<U>();
      out.layers[l].bias = layers[l].bias.template cast<U>();
    }
    return out;
  }
};

using MlpModel = BasicMlp<float>;

template <class T>
bool params_equal(const Params<T>& a, const Params<T>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t l = 0; l < a.size(); ++l) {
    if (a[l].weight.rows() != b[l].weight.rows() || a[l].weight.cols() != b[l].weight.cols() ||
        a[l].bias.size() != b[l].bias.size()) {
      return false;
    }
    if (a[l].weight != b[l].weight || a[l].bias != b[l].bias) return false;
  }
  return true;
}

/// He-style uniform init: W ~ U[-sqrt(6/fan_in), +sqrt(6/fan_in)], b = 0.
inline MlpModel init_params(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  MlpModel model;
  model.spec = spec;
  model.seed = seed;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const auto fan_in = static_cast<Eigen::Index>(spec.layer_sizes[l]);
    const auto fan_out = static_cast<Eigen::Index>(spec.layer_sizes[l + 1]);
    const auto bound = static_cast<float>(std::sqrt(6.0 / static_cast<double>(fan_in)));
    std::uniform_real_distribution<float> dist(-bound, bound);
    Dense<float> d;
    d.weight.resize(fan_out, fan_in);
    for (Eigen::Index i = 0; i < d.weight.size(); ++i) d.weight.data()[i] = dist(rng);
    d.bias = Vector<float>::Zero(fan_out);
    model.layers.push_back(std::move(d));
  }
  return model;
}

/// Activations kept by forward for use by backward (rows are batch samples).
template <class T>
struct Tape {
  std::vector<Matrix<T>> inputs;           // input to each layer
  std::vector<Matrix<T>> pre_activations;  // affine output of each layer
};

template <class T>
struct ForwardResult {
  Matrix<T> output;  // batch x output_size
  Tape<T> tape;
};

template <class T>
void check_model_shapes(const BasicMlp<T>& model) {
  if (model.layers.size() != model.spec.layer_count()) {
    throw InvalidArgument("model has " + std::to_string(model.layers.size()) +
                          " layers but spec declares " + std::to_string(model.spec.layer_count()));
  }
}

template <class T>
ForwardResult<T> forward_batch(const BasicMlp<T>& model, const Matrix<T>& x) {
  check_model_shapes(model);
  if (static_cast<std::size_t>(x.cols()) != model.spec.input_size()) {
    throw InvalidArgument("forward: input has " + std::to_string(x.cols()) + " features, model expects " +
                          std::to_string(model.spec.input_size()));
  }
  ForwardResult<T> result;
  Matrix<T> h = x;
  const std::size_t last = model.layers.size() - 1;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    Matrix<T> z = h * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    result.tape.inputs.push_back(std::move(h));
    h = l == last ? z : Matrix<T>(z.cwiseMax(T(0)));
    result.tape.pre_activations.push_back(std::move(z));
  }
  result.output = std::move(h);
  return result;
}

/// Forward pass without a tape, for inference.
template <class T>
Matrix<T> predict_batch(const BasicMlp<T>& model, const Matrix<T>& x) {
  check_model_shapes(model);
  if (static_cast<std::size_t>(x.cols()) != model.spec.input_size()) {
    throw InvalidArgument("forward: input has " + std::to_string(x.cols()) + " features, model expects " +
                          std::to_string(model.spec.input_size()));
  }
  Matrix<T> h = x;
  const std::size_t last = model.layers.size() - 1;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    Matrix<T> z = h * model.layers[l].weight.transpose();
    z.rowwise() += model.layers[l].bias.transpose();
    h = l == last ? std::move(z) : Matrix<T>(z.cwiseMax(T(0)));
  }
  return h;
}

/// Single-sample forward.
template <class T>
std::pair<Vector<T>, Tape<T>> forward(const BasicMlp<T>& model, std::span<const T> x) {
  Matrix<T> row(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) row(0, static_cast<Eigen::Index>(i)) = x[i];
  auto r = forward_batch(model, row);
  Vector<T> out = r.output.row(0).transpose();
  return {std::move(out), std::move(r.tape)};
}

/// Gradients of a scalar loss w.r.t. every parameter, given dLoss/dOutput for
/// each sample in the taped batch. ReLU'(0) is taken as 0.
template <class T>
Params<T> backward(const BasicMlp<T>& model, const Tape<T>& tape, const Matrix<T>& grad_output) {
  check_model_shapes(model);
  const std::size_t n = model.layers.size();
  if (tape.inputs.size() != n || tape.pre_activations.size() != n) {
    throw InvalidArgument("backward: tape does not match model depth");
  }
  for (std::size_t l = 0; l < n; ++l) {
    if (tape.inputs[l].cols() != model.layers[l].weight.cols() ||
        tape.pre_activations[l].cols() != model.layers[l].weight.rows()) {
      throw InvalidArgument("backward: tape shapes do not match layer " + std::to_string(l));
    }
  }
  if (grad_output.rows() != tape.pre_activations.back().rows() ||
      grad_output.cols() != tape.pre_activations.back().cols()) {
    throw InvalidArgument("backward: grad_output shape does not match the forward output");
  }
  Params<T> grads(n);
  Matrix<T> dz = grad_output;
  for (std::size_t l = n; l-- > 0;) {
    grads[l].weight = dz.transpose() * tape.inputs[l];
    grads[l].bias = dz.colwise().sum().transpose();
    if (l > 0) {
      Matrix<T> dh = dz * model.layers[l].weight;
      const auto& z_prev = tape.pre_activations[l - 1];
      dz = (z_prev.array() > T(0)).select(dh, T(0));
    }
  }
  return grads;
}

template <class T>
Params<T> backward(const BasicMlp<T>& model, const Tape<T>& tape, const Vector<T>& grad_output) {
  Matrix<T> g = grad_output.transpose();
  return backward(model, tape, g);
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

template <class T>
struct MseResult {
  T loss;
  Vector<T> gradient;  // d loss / d pred
};

/// Mean of squared differences; gradient 2(pred - target)/n.
template <class T>
MseResult<T> mse_loss(std::span<const T> pred, std::span<const T> target) {
  if (pred.empty()) throw InvalidArgument("mse_loss: empty vectors");
  if (pred.size() != target.size()) {
    throw InvalidArgument("mse_loss: length mismatch " + std::to_string(pred.size()) + " vs " +
                          std::to_string(target.size()));
  }
  const auto n = static_cast<double>(pred.size());
  double acc = 0.0;
  Vector<T> grad(static_cast<Eigen::Index>(pred.size()));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    acc += d * d;
    grad(static_cast<Eigen::Index>(i)) = static_cast<T>(2.0 * d / n);
  }
  return {static_cast<T>(acc / n), std::move(grad)};
}

/// Batch loss that sums, over output columns, the per-column mean squared
/// error across the batch. With two columns this is MSE(age) + MSE(leaf);
/// with one it is plain MSE.
template <class T>
struct ColumnMse {
  double total = 0.0;
  std::vector<double> per_column;
  Matrix<T> gradient;  // batch x columns
};

template <class T>
ColumnMse<T> column_mse_sum(const Matrix<T>& pred, const Matrix<T>& target) {
  if (pred.rows() == 0 || pred.cols() == 0) throw InvalidArgument("column_mse_sum: empty batch");
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw InvalidArgument("column_mse_sum: prediction/target shape mismatch");
  }
  ColumnMse<T> out;
  const auto b = static_cast<double>(pred.rows());
  out.gradient.resize(pred.rows(), pred.cols());
  out.per_column.assign(static_cast<std::size_t>(pred.cols()), 0.0);
  for (Eigen::Index c = 0; c < pred.cols(); ++c) {
    double acc = 0.0;
    for (Eigen::Index r = 0; r < pred.rows(); ++r) {
      const double d = static_cast<double>(pred(r, c)) - static_cast<double>(target(r, c));
      acc += d * d;
      out.gradient(r, c) = static_cast<T>(2.0 * d / b);
    }
    out.per_column[static_cast<std::size_t>(c)] = acc / b;
    out.total += acc / b;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
  Params<float> m;
  Params<float> v;
  std::uint64_t t = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

inline AdamState make_adam_state(const MlpModel& model, double learning_rate) {
  AdamState s;
  s.m = zeros_like(model.layers);
  s.v = zeros_like(model.layers);
  s.learning_rate = learning_rate;
  return s;
}

namespace detail {

inline void adam_update(float* theta, const float* g, float* m, float* v, std::size_t n, const AdamState& s,
                        double bc1, double bc2) {
  for (std::size_t i = 0; i < n; ++i) {
    const double gi = g[i];
    const double mi = s.beta1 * m[i] + (1.0 - s.beta1) * gi;
    const double vi = s.beta2 * v[i] + (1.0 - s.beta2) * gi * gi;
    m[i] = static_cast<float>(mi);
    v[i] = static_cast<float>(vi);
    const double m_hat = mi / bc1;
    const double v_hat = vi / bc2;
    theta[i] = static_cast<float>(theta[i] - s.learning_rate * m_hat / (std::sqrt(v_hat) + s.epsilon));
  }
}

template <class T>
bool all_finite(const Dense<T>& d) {
  return d.weight.allFinite() && d.bias.allFinite();
}

}  // namespace detail

/// One bias-corrected Adam update. Rejects non-finite gradients, naming the
/// offending layer, before touching any state.
inline void adam_step(MlpModel& model, const Params<float>& grads, AdamState& state) {
  if (grads.size() != model.layers.size() || state.m.size() != model.layers.size() ||
      state.v.size() != model.layers.size()) {
    throw InvalidArgument("adam_step: gradient/state layer count mismatch");
  }
  for (std::size_t l = 0; l < grads.size(); ++l) {
    const auto& p = model.layers[l];
    if (grads[l].weight.rows() != p.weight.rows() || grads[l].weight.cols() != p.weight.cols() ||
        grads[l].bias.size() != p.bias.size() || state.m[l].weight.size() != p.weight.size() ||
        state.v[l].weight.size() != p.weight.size()) {
      throw InvalidArgument("adam_step: shape mismatch at layer " + std::to_string(l));
    }
    if (!detail::all_finite(grads[l])) {
      throw NumericError("adam_step: non-finite gradient in layer " + std::to_string(l));
    }
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t l = 0; l < grads.size(); ++l) {
    auto& p = model.layers[l];
    detail::adam_update(p.weight.data(), grads[l].weight.data(), state.m[l].weight.data(),
                        state.v[l].weight.data(), static_cast<std::size_t>(p.weight.size()), state, bc1, bc2);
    detail::adam_update(p.bias.data(), grads[l].bias.data(), state.m[l].bias.data(), state.v[l].bias.data(),
                        static_cast<std::size_t>(p.bias.size()), state, bc1, bc2);
  }
}

// ---------------------------------------------------------------------------
// Gradient verification
// ---------------------------------------------------------------------------

struct LossValue {
  double value = 0.0;
  Vector<double> gradient;  // d loss / d output
};

using LossFn = std::function<LossValue(const Vector<double>& output, const Vector<double>& target)>;
using BackwardFn =
    std::function<Params<double>(const BasicMlp<double>&, const Tape<double>&, const Matrix<double>&)>;

/// Single-sample multi-task loss: sum over outputs of squared error, i.e.
/// MSE(age) + MSE(leaf) for a batch of one.
inline LossFn squared_error_sum() {
  return [](const Vector<double>& out, const Vector<double>& target) {
    LossValue lv;
    const Vector<double> d = out - target;
    lv.value = d.squaredNorm();
    lv.gradient = 2.0 * d;
    return lv;
  };
}

inline LossFn mean_squared_error() {
  return [](const Vector<double>& out, const Vector<double>& target) {
    auto r = mse_loss<double>(std::span<const double>(out.data(), static_cast<std::size_t>(out.size())),
                              std::span<const double>(target.data(), static_cast<std::size_t>(target.size())));
    return LossValue{r.loss, std::move(r.gradient)};
  };
}

namespace detail {

inline std::vector<bool> relu_pattern(const Tape<double>& tape) {
  std::vector<bool> bits;
  for (std::size_t l = 0; l + 1 < tape.pre_activations.size(); ++l) {
    const auto& z = tape.pre_activations[l];
    for (Eigen::Index i = 0; i < z.size(); ++i) bits.push_back(z.data()[i] > 0.0);
  }
  return bits;
}

}  // namespace detail

/// Compares backprop gradients with central differences, entirely in double.
/// Returns max over parameters of |g_a - g_n| / max(|g_a|, |g_n|, 1e-12).
///
/// A perturbation that flips a ReLU on either side measures the kink instead
/// of the derivative; such parameters are re-probed with step/10 (down to
/// step/1000) until the activation pattern is preserved. A parameter that
/// still flips a unit on one side at the smallest step is on the kink itself
/// and gets a one-sided difference from the side that keeps the pattern.
template <class T>
double grad_check(const BasicMlp<T>& model_in, std::span<const T> x, std::span<const T> target,
                  const LossFn& loss, double step = 1e-3, const BackwardFn& backward_fn = {}) {
  BasicMlp<double> model = model_in.template cast<double>();
  Vector<double> xd(static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) xd(static_cast<Eigen::Index>(i)) = static_cast<double>(x[i]);
  Vector<double> td(static_cast<Eigen::Index>(target.size()));
  for (std::size_t i = 0; i < target.size(); ++i) {
    td(static_cast<Eigen::Index>(i)) = static_cast<double>(target[i]);
  }
  const std::span<const double> xs(xd.data(), x.size());

  auto [out, tape] = forward<double>(model, xs);
  const LossValue base = loss(out, td);
  const Matrix<double> g_out = base.gradient.transpose();
  const Params<double> analytic = backward_fn ? backward_fn(model, tape, g_out) : backward(model, tape, g_out);
  const std::vector<bool> base_pattern = detail::relu_pattern(tape);

  auto eval = [&](std::vector<bool>* pattern) {
    auto [o, tp] = forward<double>(model, xs);
    if (pattern) *pattern = detail::relu_pattern(tp);
    return loss(o, td).value;
  };

  double worst = 0.0;
  auto probe = [&](double& param, double g_a) {
    const double saved = param;
    double h = step;
    double g_n = 0.0;
    for (int attempt = 0; attempt < 4; ++attempt, h /= 10.0) {
      std::vector<bool> p_plus, p_minus;
      param = saved + h;
      const double f_plus = eval(&p_plus);
      param = saved - h;
      const double f_minus = eval(&p_minus);
      param = saved;
      g_n = (f_plus - f_minus) / (2.0 * h);
      const bool plus_ok = p_plus == base_pattern;
      const bool minus_ok = p_minus == base_pattern;
      if (plus_ok && minus_ok) break;
      if (attempt == 3 && plus_ok != minus_ok) {
        // the parameter sits on a kink: only one side agrees with the
        // ReLU'(0) = 0 convention used by backward
        const double f0 = eval(nullptr);
        g_n = plus_ok ? (f_plus - f0) / h : (f0 - f_minus) / h;
      }
    }
    const double denom = std::max({std::abs(g_a), std::abs(g_n), 1e-12});
    worst = std::max(worst, std::abs(g_a - g_n) / denom);
  };

  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto& layer = model.layers[l];
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) probe(layer.weight.data()[i], analytic[l].weight.data()[i]);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) probe(layer.bias.data()[i], analytic[l].bias.data()[i]);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------
//
// <base>.model.json    spec, seed, mode tag, optimizer flag, free-form extras
// <base>.model.f32bin  little-endian float32: per layer W (row-major) then b;
//                      followed by Adam m then v in the same order when saved

struct Checkpoint {
  MlpModel model;
  std::string mode;
  std::optional<AdamState> adam;
  io::json extra = io::json::object();
};

inline std::filesystem::path checkpoint_manifest_path(const std::filesystem::path& base) {
  return io::with_suffix(base, ".model.json");
}
inline std::filesystem::path checkpoint_payload_path(const std::filesystem::path& base) {
  return io::with_suffix(base, ".model.f32bin");
}

namespace detail {

inline void append_params(std::string& out, const Params<float>& p) {
  for (const auto& d : p) {
    io::append_f32le(out, std::span<const float>(d.weight.data(), static_cast<std::size_t>(d.weight.size())));
    io::append_f32le(out, std::span<const float>(d.bias.data(), static_cast<std::size_t>(d.bias.size())));
  }
}

inline std::size_t decode_params(std::string_view bytes, std::size_t offset, Params<float>& p) {
  for (auto& d : p) {
    const auto nw = static_cast<std::size_t>(d.weight.size());
    io::decode_f32le(bytes.substr(offset, nw * 4), std::span<float>(d.weight.data(), nw));
    offset += nw * 4;
    const auto nb = static_cast<std::size_t>(d.bias.size());
    io::decode_f32le(bytes.substr(offset, nb * 4), std::span<float>(d.bias.data(), nb));
    offset += nb * 4;
  }
  return offset;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& base) {
  check_model_shapes(ckpt.model);
  io::json manifest;
  manifest["format"] = "phenofuse-mlp";
  manifest["version"] = 1;
  manifest["mode"] = ckpt.mode;
  manifest["layer_sizes"] = ckpt.model.spec.layer_sizes;
  manifest["seed"] = ckpt.model.seed;
  manifest["parameter_count"] = parameter_count(ckpt.model.layers);
  manifest["optimizer_state"] = ckpt.adam.has_value();
  if (ckpt.adam) {
    manifest["adam"] = {{"t", ckpt.adam->t},
                        {"learning_rate", ckpt.adam->learning_rate},
                        {"beta1", ckpt.adam->beta1},
                        {"beta2", ckpt.adam->beta2},
                        {"epsilon", ckpt.adam->epsilon}};
  }
  manifest["extra"] = ckpt.extra;
  std::string payload;
  detail::append_params(payload, ckpt.model.layers);
  if (ckpt.adam) {
    detail::append_params(payload, ckpt.adam->m);
    detail::append_params(payload, ckpt.adam->v);
  }
  io::atomic_write(checkpoint_payload_path(base), payload);
  io::write_json(checkpoint_manifest_path(base), manifest);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& base) {
  const io::json manifest = io::read_json(checkpoint_manifest_path(base));
  Checkpoint ckpt;
  bool has_adam = false;
  try {
    if (manifest.at("format").get<std::string>() != "phenofuse-mlp") {
      throw FormatError(FormatError::Kind::bad_manifest, "not a phenofuse model checkpoint");
    }
    ckpt.mode = manifest.at("mode").get<std::string>();
    MlpSpec spec{manifest.at("layer_sizes").get<std::vector<std::size_t>>()};
    spec.validate();
    ckpt.model = init_params(spec, manifest.at("seed").get<std::uint64_t>());
    has_adam = manifest.at("optimizer_state").get<bool>();
    if (has_adam) {
      const auto& a = manifest.at("adam");
      AdamState s = make_adam_state(ckpt.model, a.at("learning_rate").get<double>());
      s.t = a.at("t").get<std::uint64_t>();
      s.beta1 = a.at("beta1").get<double>();
      s.beta2 = a.at("beta2").get<double>();
      s.epsilon = a.at("epsilon").get<double>();
      ckpt.adam = std::move(s);
    }
    if (manifest.contains("extra")) ckpt.extra = manifest.at("extra");
  } catch (const io::json::exception& e) {
    throw FormatError(FormatError::Kind::bad_manifest, std::string("malformed checkpoint manifest: ") + e.what());
  }
  const std::string bytes = io::read_file(checkpoint_payload_path(base));
  const std::size_t n = parameter_count(ckpt.model.layers) * (has_adam ? 3 : 1);
  if (bytes.size() < n * 4) {
    throw FormatError(FormatError::Kind::truncated_payload, "checkpoint payload is truncated");
  }
  if (bytes.size() > n * 4) {
    throw FormatError(FormatError::Kind::count_mismatch, "checkpoint payload is longer than the manifest declares");
  }
  std::size_t offset = detail::decode_params(bytes, 0, ckpt.model.layers);
  if (ckpt.adam) {
    offset = detail::decode_params(bytes, offset, ckpt.adam->m);
    detail::decode_params(bytes, offset, ckpt.adam->v);
  }
  return ckpt;
}

}  // namespace phenofuse::nn
