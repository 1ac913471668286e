#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "ricnet/ops.hpp"
#include "ricnet/tensor.hpp"

namespace ricnet {

using Rng = std::mt19937_64;

enum class Activation { linear, sigmoid, tanh, relu };

Tensor activate(const Tensor& x, Activation act);
std::string to_string(Activation act);
Activation activation_from_string(std::string_view name);
std::string to_string(Padding padding);
Padding padding_from_string(std::string_view name);

// Dropout is active only when `training` is set; it then draws from `rng`.
struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;
};

struct NamedParameter {
  std::string name;
  Tensor tensor;
};
using ParameterList = std::vector<NamedParameter>;

// U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
void glorot_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng);

struct DenseLayer {
  DenseLayer() = default;
  DenseLayer(std::size_t in, std::size_t out, Activation act, Rng& rng);

  // activation(x W + b) over the last axis.
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }

  Tensor weight;  // (in, out)
  Tensor bias;    // (out)
  Activation activation = Activation::linear;
};

struct DropoutLayer {
  DropoutLayer() = default;
  explicit DropoutLayer(double rate);

  // Identity in eval mode. In train mode zeroes each element with
  // probability `rate` and scales survivors by 1 / (1 - rate).
  Tensor forward(const Tensor& x, const ForwardContext& ctx) const;

  double rate = 0.0;
};

struct Conv1dLayer {
  Conv1dLayer() = default;
  Conv1dLayer(std::size_t in_channels, std::size_t filters, std::size_t kernel_size, Padding padding,
              Activation act, Rng& rng);

  // x: (batch, time, channels) -> (batch, time', filters).
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;
  std::size_t output_length(std::size_t input_length) const;

  Tensor weight;  // (kernel, in_channels, filters)
  Tensor bias;    // (filters)
  Padding padding = Padding::same;
  Activation activation = Activation::linear;
};

struct LstmOutput {
  Tensor sequence;  // (batch, time, units)
  Tensor h;         // (batch, units)
  Tensor c;         // (batch, units)
};

// Gate layout along the 4*units axis: input, forget, candidate, output.
struct LstmLayer {
  LstmLayer() = default;
  LstmLayer(std::size_t input_size, std::size_t units, Rng& rng);

  // seq: (batch, time, features); h0 = c0 = 0.
  LstmOutput forward(const Tensor& seq) const;
  void collect(const std::string& prefix, ParameterList& out) const;
  std::size_t units() const { return recurrent.dim(0); }
  std::size_t input_size() const { return kernel.dim(0); }

  Tensor kernel;     // (input, 4 units)
  Tensor recurrent;  // (units, 4 units)
  Tensor bias;       // (4 units)
};

struct LayerNormLayer {
  LayerNormLayer() = default;
  LayerNormLayer(std::size_t features, double epsilon);

  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  Tensor gain;
  Tensor shift;
  double epsilon = 1e-6;
};

struct AttentionOutput {
  Tensor output;   // (batch, query time, query dim)
  Tensor weights;  // (batch, heads, query time, key time)
};

// softmax(Q K^T / sqrt(head_size)) V per head; heads are concatenated and
// projected back to the query width.
struct MultiHeadAttention {
  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t query_dim, std::size_t kv_dim, std::size_t num_heads, std::size_t head_size,
                     double dropout, Rng& rng);

  AttentionOutput forward(const Tensor& query, const Tensor& key, const Tensor& value, const ForwardContext& ctx,
                          bool causal = false) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  std::size_t num_heads = 1;
  std::size_t head_size = 1;
  double dropout = 0.0;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

enum class PositionMode { learned, sinusoidal };

std::string to_string(PositionMode mode);
PositionMode position_mode_from_string(std::string_view name);

// Closed-form sinusoidal encoding: even slots sin(pos / base^(2i/d)),
// odd slots cos(...) with i = slot / 2.
std::vector<double> sinusoidal_encoding(std::size_t pos, std::size_t d_model, double base = 10000.0);

struct PositionEmbedding {
  PositionEmbedding() = default;
  PositionEmbedding(PositionMode mode, std::size_t max_length, std::size_t d_model, double base, Rng& rng);

  std::vector<double> encoding(std::size_t pos) const;
  // x: (batch, time, d_model) -> x + table[0:time].
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  PositionMode mode = PositionMode::learned;
  std::size_t max_length = 0;
  std::size_t d_model = 0;
  double base = 10000.0;
  Tensor table;  // (max_length, d_model); trainable only in learned mode
};

}  // namespace ricnet
