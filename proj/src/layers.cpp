#include "ricnet/layers.hpp"

#include <cmath>

#include "ricnet/errors.hpp"

namespace ricnet {

Tensor activate(const Tensor& x, Activation act) {
  switch (act) {
    case Activation::linear: return x;
    case Activation::sigmoid: return sigmoid(x);
    case Activation::tanh: return tanh(x);
    case Activation::relu: return relu(x);
  }
  return x;
}

std::string to_string(Activation act) {
  switch (act) {
    case Activation::linear: return "linear";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
  }
  return "linear";
}

Activation activation_from_string(std::string_view name) {
  if (name == "linear") return Activation::linear;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  throw ValidationError("unknown activation '" + std::string(name) + "'");
}

std::string to_string(Padding padding) { return padding == Padding::same ? "same" : "valid"; }

Padding padding_from_string(std::string_view name) {
  if (name == "same") return Padding::same;
  if (name == "valid") return Padding::valid;
  throw ValidationError("unknown padding '" + std::string(name) + "'");
}

std::string to_string(PositionMode mode) { return mode == PositionMode::learned ? "learned" : "sinusoidal"; }

PositionMode position_mode_from_string(std::string_view name) {
  if (name == "learned") return PositionMode::learned;
  if (name == "sinusoidal") return PositionMode::sinusoidal;
  throw ValidationError("unknown position embedding mode '" + std::string(name) + "'");
}

void glorot_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (auto& v : t.data_mut()) v = dist(rng);
}

// ---------------------------------------------------------------------------

DenseLayer::DenseLayer(std::size_t in, std::size_t out, Activation act, Rng& rng)
    : weight(Tensor::zeros({in, out}, true)), bias(Tensor::zeros({out}, true)), activation(act) {
  glorot_uniform(weight, in, out, rng);
}

Tensor DenseLayer::forward(const Tensor& x) const {
  if (x.rank() == 0 || x.shape().back() != in_features()) {
    throw ShapeError("dense layer expects last extent " + std::to_string(in_features()) + ", got input " +
                     shape_str(x.shape()));
  }
  return activate(add(matmul(x, weight), bias), activation);
}

void DenseLayer::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

// ---------------------------------------------------------------------------

DropoutLayer::DropoutLayer(double r) : rate(r) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ValidationError("dropout rate must lie in [0, 1)");
}

Tensor DropoutLayer::forward(const Tensor& x, const ForwardContext& ctx) const {
  if (!ctx.training || rate == 0.0) return x;
  if (ctx.rng == nullptr) throw ValidationError("dropout in training mode needs an RNG");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = u(*ctx.rng) < rate ? 0.0 : keep_scale;
  return mul(x, Tensor(x.shape(), std::move(mask)));
}

// ---------------------------------------------------------------------------

Conv1dLayer::Conv1dLayer(std::size_t in_channels, std::size_t filters, std::size_t kernel_size, Padding pad,
                         Activation act, Rng& rng)
    : weight(Tensor::zeros({kernel_size, in_channels, filters}, true)),
      bias(Tensor::zeros({filters}, true)),
      padding(pad),
      activation(act) {
  if (kernel_size == 0 || filters == 0) throw ValidationError("conv1d needs positive filters and kernel size");
  glorot_uniform(weight, kernel_size * in_channels, kernel_size * filters, rng);
}

Tensor Conv1dLayer::forward(const Tensor& x) const { return activate(conv1d(x, weight, bias, padding), activation); }

void Conv1dLayer::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

std::size_t Conv1dLayer::output_length(std::size_t input_length) const {
  const std::size_t k = weight.dim(0);
  if (padding == Padding::same) return input_length;
  return input_length >= k ? input_length - k + 1 : 0;
}

// ---------------------------------------------------------------------------

LstmLayer::LstmLayer(std::size_t input_size, std::size_t units, Rng& rng)
    : kernel(Tensor::zeros({input_size, 4 * units}, true)),
      recurrent(Tensor::zeros({units, 4 * units}, true)),
      bias(Tensor::zeros({4 * units}, true)) {
  if (units == 0) throw ValidationError("LSTM needs at least one unit");
  glorot_uniform(kernel, input_size, 4 * units, rng);
  glorot_uniform(recurrent, units, 4 * units, rng);
  // Forget-gate bias starts at one.
  auto b = bias.data_mut();
  for (std::size_t j = units; j < 2 * units; ++j) b[j] = 1.0;
}

LstmOutput LstmLayer::forward(const Tensor& seq) const {
  if (seq.rank() != 3 || seq.dim(2) != input_size()) {
    throw ShapeError("LSTM expects (batch, time, " + std::to_string(input_size()) + "), got " + shape_str(seq.shape()));
  }
  const std::size_t batch = seq.dim(0);
  const std::size_t steps = seq.dim(1);
  const std::size_t u = units();
  if (steps == 0) throw ShapeError("LSTM input sequence is empty");

  const Tensor projected = add(matmul(seq, kernel), bias);  // (B, T, 4u)
  const Tensor states = lstm_scan(projected, recurrent);     // (B, T, 2u)
  const Tensor last = reshape(slice(states, 1, steps - 1, 1), {batch, 2 * u});
  return {slice(states, -1, 0, u), slice(last, -1, 0, u), slice(last, -1, u, u)};
}

void LstmLayer::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".kernel", kernel});
  out.push_back({prefix + ".recurrent", recurrent});
  out.push_back({prefix + ".bias", bias});
}

// ---------------------------------------------------------------------------

LayerNormLayer::LayerNormLayer(std::size_t features, double eps)
    : gain(Tensor::full({features}, 1.0, true)), shift(Tensor::zeros({features}, true)), epsilon(eps) {
  if (features == 0) throw ValidationError("layer norm needs a non-empty feature axis");
}

Tensor LayerNormLayer::forward(const Tensor& x) const { return layer_norm(x, gain, shift, epsilon); }

void LayerNormLayer::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".gain", gain});
  out.push_back({prefix + ".shift", shift});
}

// ---------------------------------------------------------------------------

MultiHeadAttention::MultiHeadAttention(std::size_t query_dim, std::size_t kv_dim, std::size_t heads,
                                       std::size_t size, double drop, Rng& rng)
    : num_heads(heads), head_size(size), dropout(drop) {
  if (heads == 0 || size == 0) throw ValidationError("attention needs positive head count and head size");
  const std::size_t inner = heads * size;
  auto make = [&](std::size_t in, std::size_t out, Tensor& w, Tensor& b) {
    w = Tensor::zeros({in, out}, true);
    b = Tensor::zeros({out}, true);
    glorot_uniform(w, in, out, rng);
  };
  make(query_dim, inner, wq, bq);
  make(kv_dim, inner, wk, bk);
  make(kv_dim, inner, wv, bv);
  make(inner, query_dim, wo, bo);
}

AttentionOutput MultiHeadAttention::forward(const Tensor& query, const Tensor& key, const Tensor& value,
                                            const ForwardContext& ctx, bool causal) const {
  if (query.rank() != 3 || key.rank() != 3 || value.rank() != 3) {
    throw ShapeError("attention expects rank-3 inputs, got " + shape_str(query.shape()) + ", " +
                     shape_str(key.shape()) + ", " + shape_str(value.shape()));
  }
  if (key.dim(1) != value.dim(1) || key.dim(0) != value.dim(0)) {
    throw ShapeError("attention key/value time extents differ: " + shape_str(key.shape()) + " vs " +
                     shape_str(value.shape()));
  }
  if (query.dim(0) != key.dim(0)) {
    throw ShapeError("attention batch mismatch: " + shape_str(query.shape()) + " vs " + shape_str(key.shape()));
  }
  const std::size_t batch = query.dim(0);
  const std::size_t tq = query.dim(1);
  const std::size_t tk = key.dim(1);
  const std::size_t inner = num_heads * head_size;

  const Tensor q = permute(reshape(add(matmul(query, wq), bq), {batch, tq, num_heads, head_size}), {0, 2, 1, 3});
  const Tensor k = permute(reshape(add(matmul(key, wk), bk), {batch, tk, num_heads, head_size}), {0, 2, 3, 1});
  const Tensor v = permute(reshape(add(matmul(value, wv), bv), {batch, tk, num_heads, head_size}), {0, 2, 1, 3});

  Tensor scores = scale(matmul(q, k), 1.0 / std::sqrt(static_cast<double>(head_size)));
  if (causal) {
    std::vector<double> mask(tq * tk, 0.0);
    for (std::size_t i = 0; i < tq; ++i) {
      for (std::size_t j = i + 1; j < tk; ++j) mask[i * tk + j] = -1e30;
    }
    scores = add(scores, Tensor({tq, tk}, std::move(mask)));
  }
  const Tensor weights = softmax(scores, -1);
  const Tensor attended = matmul(DropoutLayer(dropout).forward(weights, ctx), v);  // (B, H, Tq, dk)
  const Tensor merged = reshape(permute(attended, {0, 2, 1, 3}), {batch, tq, inner});
  return {add(matmul(merged, wo), bo), weights};
}

void MultiHeadAttention::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".wq", wq});
  out.push_back({prefix + ".bq", bq});
  out.push_back({prefix + ".wk", wk});
  out.push_back({prefix + ".bk", bk});
  out.push_back({prefix + ".wv", wv});
  out.push_back({prefix + ".bv", bv});
  out.push_back({prefix + ".wo", wo});
  out.push_back({prefix + ".bo", bo});
}

// ---------------------------------------------------------------------------

std::vector<double> sinusoidal_encoding(std::size_t pos, std::size_t d_model, double base) {
  std::vector<double> pe(d_model);
  for (std::size_t j = 0; j < d_model; ++j) {
    const double i = static_cast<double>(j / 2);
    const double angle = static_cast<double>(pos) / std::pow(base, 2.0 * i / static_cast<double>(d_model));
    pe[j] = j % 2 == 0 ? std::sin(angle) : std::cos(angle);
  }
  return pe;
}

PositionEmbedding::PositionEmbedding(PositionMode m, std::size_t max_len, std::size_t d, double b, Rng& rng)
    : mode(m), max_length(max_len), d_model(d), base(b) {
  if (max_len == 0 || d == 0) throw ValidationError("position embedding needs positive length and width");
  if (mode == PositionMode::learned) {
    table = Tensor::zeros({max_len, d}, true);
    glorot_uniform(table, max_len, d, rng);
  } else {
    std::vector<double> values;
    values.reserve(max_len * d);
    for (std::size_t p = 0; p < max_len; ++p) {
      const auto row = sinusoidal_encoding(p, d, base);
      values.insert(values.end(), row.begin(), row.end());
    }
    table = Tensor({max_len, d}, std::move(values));
  }
}

std::vector<double> PositionEmbedding::encoding(std::size_t pos) const {
  if (pos >= max_length) {
    throw ValidationError("position " + std::to_string(pos) + " out of range [0, " + std::to_string(max_length) + ")");
  }
  const auto v = table.data();
  return {v.begin() + static_cast<std::ptrdiff_t>(pos * d_model),
          v.begin() + static_cast<std::ptrdiff_t>((pos + 1) * d_model)};
}

Tensor PositionEmbedding::forward(const Tensor& x) const {
  if (x.rank() != 3 || x.dim(2) != d_model || x.dim(1) > max_length) {
    throw ShapeError("position embedding expects (batch, <=" + std::to_string(max_length) + ", " +
                     std::to_string(d_model) + "), got " + shape_str(x.shape()));
  }
  return add(x, slice(table, 0, 0, x.dim(1)));
}

void PositionEmbedding::collect(const std::string& prefix, ParameterList& out) const {
  if (mode == PositionMode::learned) out.push_back({prefix + ".table", table});
}

}  // namespace ricnet
