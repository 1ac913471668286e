#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "ricnet/layers.hpp"
#include "ricnet/model_spec.hpp"

namespace ricnet {

inline constexpr std::size_t kProfileLength = 28;
inline constexpr std::size_t kSequenceChannels = 4;  // qc_ini, blows, T, F
inline constexpr std::size_t kFeatureCount = 3;      // blows, T, F
inline constexpr std::size_t kFnnRowWidth = 4;
inline constexpr std::size_t kFnnSWidth = kProfileLength + kFeatureCount;

// Model-ready arrays in scaled space. Which fields are read depends on kind:
//   FNN          input (rows, 4)
//   FNN_S        input (N, 31)
//   sequential   input (N, 28, 4), features (N, 3)
//   seq2seq      as sequential plus shifted (N, 28)
struct ModelInput {
  Tensor input;
  Tensor features;
  Tensor shifted;
};

// What the encoder hands to the decoder. Recurrent/convolutional seq2seq
// kinds produce a latent vector; the transformer produces per-token memory.
struct EncoderState {
  Tensor latent;    // (N, latent)
  Tensor memory;    // (N, 28, d_model), TRANSFORMER only
  Tensor features;  // (N, 3)
};

struct MlpStack {
  std::vector<DenseLayer> layers;

  MlpStack() = default;
  // Widths are hidden layer sizes; all use `act`.
  MlpStack(std::size_t in, const std::vector<std::size_t>& widths, Activation act, Rng& rng);
  Tensor forward(Tensor x) const;
  void collect(const std::string& prefix, ParameterList& out) const;
  std::size_t out_features(std::size_t in) const { return layers.empty() ? in : layers.back().out_features(); }
};

struct LstmBranch {
  LstmLayer lstm;
  DropoutLayer dropout;
  MlpStack dense;

  Tensor forward(const Tensor& seq, const ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParameterList& out) const;
};

struct CnnBranch {
  std::vector<Conv1dLayer> convs;
  DropoutLayer dropout;
  DenseLayer dense;

  Tensor forward(const Tensor& seq, const ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParameterList& out) const;
};

// Position embedding, pre-norm self-attention with residual, then a
// pointwise Conv1D stack with a second residual, flattened to a vector.
struct AttentionBranch {
  DenseLayer embed;
  PositionEmbedding position;
  LayerNormLayer norm_attention;
  MultiHeadAttention attention;
  LayerNormLayer norm_conv;
  std::vector<Conv1dLayer> convs;
  std::optional<DenseLayer> shortcut;  // present when conv output width differs from d_model
  DenseLayer dense;

  Tensor forward(const Tensor& seq, const ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParameterList& out) const;
};

class Model {
 public:
  // Deterministic given (spec, seed). Throws ValidationError on a bad spec.
  Model(ModelSpec spec, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  ModelKind kind() const { return spec_.kind; }
  std::uint64_t seed() const { return seed_; }

  // Every trainable tensor exactly once, in a fixed order.
  const ParameterList& parameters() const { return params_; }
  std::vector<Tensor> parameter_tensors() const;
  std::size_t param_count() const;

  // Predictions shaped like the target: (rows, 1) for FNN, (N, 28) otherwise.
  // Seq2seq kinds are teacher-forced on `in.shifted`.
  Tensor forward(const ModelInput& in, const ForwardContext& ctx = {}) const;

  Tensor forward_feedforward(const ModelInput& in, const ForwardContext& ctx = {}) const;
  EncoderState encode(const Tensor& sequence, const Tensor& features, const ForwardContext& ctx = {}) const;
  // shifted: (N, 28) -> (N, 28). Output at step t reads shifted[0..t] only.
  Tensor decode(const EncoderState& state, const Tensor& shifted, const ForwardContext& ctx = {}) const;
  Tensor forward_seq2seq(const ModelInput& in, const ForwardContext& ctx = {}) const;

 private:
  void build(Rng& rng);
  void register_parameters();
  void check_sequence_input(const Tensor& seq, const Tensor& features) const;
  Tensor s2s_decode(const EncoderState& state, const Tensor& shifted, const ForwardContext& ctx) const;
  Tensor transformer_decode(const EncoderState& state, const Tensor& shifted, const ForwardContext& ctx) const;

  ModelSpec spec_;
  std::uint64_t seed_ = 0;
  ParameterList params_;

  // FNN / FNN_S
  MlpStack fnn_hidden_;
  DropoutLayer fnn_dropout_;
  DenseLayer fnn_out_;

  // Encoder branches
  std::optional<LstmBranch> lstm_branch_;
  std::optional<CnnBranch> cnn_branch_;
  std::optional<AttentionBranch> attention_branch_;
  std::optional<DenseLayer> feature_encoder_;  // LSTM_CNN

  // Feed-forward decoder (LSTM, CNN, LSTM_CNN)
  MlpStack ff_decoder_;
  DenseLayer ff_out_;

  // Latent-vector seq2seq decoder
  DenseLayer latent_;
  LstmLayer decoder_lstm_;
  MlpStack step_mlp_;
  MlpStack feature_mlp_;
  DropoutLayer s2s_dropout_;
  MlpStack s2s_head_;
  DenseLayer s2s_out_;

  // Transformer
  DenseLayer enc_embed_;
  PositionEmbedding enc_position_;
  MultiHeadAttention enc_attention_;
  LayerNormLayer enc_norm_;
  DenseLayer dec_embed_;
  PositionEmbedding dec_position_;
  MultiHeadAttention dec_self_attention_;
  LayerNormLayer dec_norm_;
  MultiHeadAttention dec_cross_attention_;
  MlpStack tf_head_;
  DropoutLayer tf_dropout_;
  MlpStack tf_mlp_;
  DenseLayer tf_out_;
};

// Broadcast (N, D) across time to (N, T, D).
Tensor repeat_over_time(const Tensor& x, std::size_t steps);

}  // namespace ricnet
