#include "ricnet/models.hpp"

#include "ricnet/errors.hpp"

namespace ricnet {

Tensor repeat_over_time(const Tensor& x, std::size_t steps) {
  const std::size_t n = x.dim(0);
  const std::size_t d = x.dim(1);
  return add(reshape(x, {n, 1, d}), Tensor::zeros({n, steps, d}));
}

MlpStack::MlpStack(std::size_t in, const std::vector<std::size_t>& widths, Activation act, Rng& rng) {
  for (auto w : widths) {
    layers.emplace_back(in, w, act, rng);
    in = w;
  }
}

Tensor MlpStack::forward(Tensor x) const {
  for (const auto& l : layers) x = l.forward(x);
  return x;
}

void MlpStack::collect(const std::string& prefix, ParameterList& out) const {
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(prefix + "." + std::to_string(i), out);
}

// ---------------------------------------------------------------------------

Tensor LstmBranch::forward(const Tensor& seq, const ForwardContext& ctx) const {
  return dense.forward(dropout.forward(lstm.forward(seq).h, ctx));
}

void LstmBranch::collect(const std::string& prefix, ParameterList& out) const {
  lstm.collect(prefix + ".lstm", out);
  dense.collect(prefix + ".dense", out);
}

Tensor CnnBranch::forward(const Tensor& seq, const ForwardContext& ctx) const {
  Tensor x = seq;
  for (const auto& c : convs) x = c.forward(x);
  x = reshape(x, {x.dim(0), x.dim(1) * x.dim(2)});
  return dense.forward(dropout.forward(x, ctx));
}

void CnnBranch::collect(const std::string& prefix, ParameterList& out) const {
  for (std::size_t i = 0; i < convs.size(); ++i) convs[i].collect(prefix + ".conv" + std::to_string(i), out);
  dense.collect(prefix + ".dense", out);
}

Tensor AttentionBranch::forward(const Tensor& seq, const ForwardContext& ctx) const {
  const Tensor tokens = position.forward(embed.forward(seq));
  const Tensor normed = norm_attention.forward(tokens);
  const Tensor attended = add(tokens, attention.forward(normed, normed, normed, ctx).output);
  Tensor x = norm_conv.forward(attended);
  for (const auto& c : convs) x = c.forward(x);
  x = add(x, shortcut ? shortcut->forward(attended) : attended);
  return dense.forward(reshape(x, {x.dim(0), x.dim(1) * x.dim(2)}));
}

void AttentionBranch::collect(const std::string& prefix, ParameterList& out) const {
  embed.collect(prefix + ".embed", out);
  position.collect(prefix + ".position", out);
  norm_attention.collect(prefix + ".norm_attention", out);
  attention.collect(prefix + ".attention", out);
  norm_conv.collect(prefix + ".norm_conv", out);
  for (std::size_t i = 0; i < convs.size(); ++i) convs[i].collect(prefix + ".conv" + std::to_string(i), out);
  if (shortcut) shortcut->collect(prefix + ".shortcut", out);
  dense.collect(prefix + ".dense", out);
}

// ---------------------------------------------------------------------------

namespace {

LstmBranch make_lstm_branch(const ModelSpec& s, Rng& rng) {
  LstmBranch b;
  b.lstm = LstmLayer(kSequenceChannels, s.lstm.units, rng);
  b.dropout = DropoutLayer(s.lstm.dropout);
  b.dense = MlpStack(s.lstm.units, s.lstm.dense, s.hidden_activation, rng);
  return b;
}

CnnBranch make_cnn_branch(const ModelSpec& s, Rng& rng) {
  CnnBranch b;
  std::size_t channels = kSequenceChannels;
  std::size_t length = kProfileLength;
  for (std::size_t i = 0; i < s.cnn.filters.size(); ++i) {
    b.convs.emplace_back(channels, s.cnn.filters[i], s.cnn.kernels[i], s.cnn.padding, s.cnn.activation, rng);
    length = b.convs.back().output_length(length);
    if (length == 0) throw ValidationError("cnn.kernels: kernel longer than the remaining sequence");
    channels = s.cnn.filters[i];
  }
  b.dropout = DropoutLayer(s.cnn.dropout);
  b.dense = DenseLayer(length * channels, s.cnn.dense, s.hidden_activation, rng);
  return b;
}

AttentionBranch make_attention_branch(const ModelSpec& s, Rng& rng) {
  const auto& a = s.attention_branch;
  AttentionBranch b;
  b.embed = DenseLayer(kSequenceChannels, a.d_model, Activation::linear, rng);
  b.position = PositionEmbedding(a.position, kProfileLength, a.d_model, a.position_base, rng);
  b.norm_attention = LayerNormLayer(a.d_model, a.layer_norm_epsilon);
  b.attention = MultiHeadAttention(a.d_model, a.d_model, a.num_heads, a.head_size, 0.0, rng);
  b.norm_conv = LayerNormLayer(a.d_model, a.layer_norm_epsilon);
  std::size_t channels = a.d_model;
  for (std::size_t i = 0; i < a.conv_filters.size(); ++i) {
    // Pointwise or same-padded so the residual can align along time.
    b.convs.emplace_back(channels, a.conv_filters[i], a.conv_kernels[i], Padding::same, s.hidden_activation, rng);
    channels = a.conv_filters[i];
  }
  if (channels != a.d_model) b.shortcut = DenseLayer(a.d_model, channels, Activation::linear, rng);
  b.dense = DenseLayer(kProfileLength * channels, a.dense, s.hidden_activation, rng);
  return b;
}

}  // namespace

Model::Model(ModelSpec spec, std::uint64_t seed) : spec_(std::move(spec)), seed_(seed) {
  spec_.validate();
  Rng rng(seed);
  build(rng);
  register_parameters();
}

void Model::build(Rng& rng) {
  const auto& s = spec_;
  const Activation act = s.hidden_activation;
  switch (s.kind) {
    case ModelKind::FNN:
    case ModelKind::FNN_S: {
      const std::size_t in = s.kind == ModelKind::FNN ? kFnnRowWidth : kFnnSWidth;
      const std::size_t out = s.kind == ModelKind::FNN ? 1 : kProfileLength;
      fnn_hidden_ = MlpStack(in, s.fnn.hidden, act, rng);
      fnn_dropout_ = DropoutLayer(s.fnn.dropout);
      fnn_out_ = DenseLayer(s.fnn.hidden.back(), out, s.output_activation, rng);
      return;
    }
    case ModelKind::LSTM:
    case ModelKind::CNN:
    case ModelKind::LSTM_CNN: {
      std::size_t latent = 0;
      if (s.kind != ModelKind::CNN) {
        lstm_branch_ = make_lstm_branch(s, rng);
        latent += s.lstm.dense.back();
      }
      if (s.kind != ModelKind::LSTM) {
        cnn_branch_ = make_cnn_branch(s, rng);
        latent += s.cnn.dense;
      }
      if (s.kind == ModelKind::LSTM_CNN) {
        feature_encoder_ = DenseLayer(kFeatureCount, s.feature_encoder.units, act, rng);
        latent += s.feature_encoder.units;
      }
      ff_decoder_ = MlpStack(latent, s.decoder.hidden, act, rng);
      ff_out_ = DenseLayer(ff_decoder_.out_features(latent), kProfileLength, s.output_activation, rng);
      return;
    }
    case ModelKind::LSTM_S2S:
    case ModelKind::CNN_S2S:
    case ModelKind::LSTM_CNN_S2S:
    case ModelKind::LSTM_ATT_S2S: {
      std::size_t width = 0;
      if (s.kind != ModelKind::CNN_S2S) {
        lstm_branch_ = make_lstm_branch(s, rng);
        width += s.lstm.dense.back();
      }
      if (s.kind == ModelKind::CNN_S2S || s.kind == ModelKind::LSTM_CNN_S2S) {
        cnn_branch_ = make_cnn_branch(s, rng);
        width += s.cnn.dense;
      }
      if (s.kind == ModelKind::LSTM_ATT_S2S) {
        attention_branch_ = make_attention_branch(s, rng);
        width += s.attention_branch.dense;
      }
      const auto& q = s.seq2seq;
      latent_ = DenseLayer(width, q.latent, act, rng);
      decoder_lstm_ = LstmLayer(1, q.decoder_lstm, rng);
      step_mlp_ = MlpStack(q.decoder_lstm, q.step_mlp, act, rng);
      feature_mlp_ = MlpStack(kFeatureCount, q.feature_mlp, act, rng);
      s2s_dropout_ = DropoutLayer(q.dropout);
      const std::size_t joined = q.latent + q.step_mlp.back() + q.feature_mlp.back();
      s2s_head_ = MlpStack(joined, q.head, act, rng);
      s2s_out_ = DenseLayer(s2s_head_.out_features(joined), 1, s.output_activation, rng);
      return;
    }
    case ModelKind::TRANSFORMER: {
      const auto& t = s.transformer;
      const std::size_t d = t.d_model;
      enc_embed_ = DenseLayer(kSequenceChannels, d, Activation::linear, rng);
      enc_position_ = PositionEmbedding(t.position, kProfileLength, d, t.position_base, rng);
      enc_attention_ = MultiHeadAttention(d, d, t.num_heads, t.head_size, 0.0, rng);
      enc_norm_ = LayerNormLayer(d, t.layer_norm_epsilon);
      dec_embed_ = DenseLayer(1, d, Activation::linear, rng);
      dec_position_ = PositionEmbedding(t.position, kProfileLength, d, t.position_base, rng);
      dec_self_attention_ = MultiHeadAttention(d, d, t.num_heads, t.head_size, t.attention_dropout, rng);
      dec_norm_ = LayerNormLayer(d, t.layer_norm_epsilon);
      dec_cross_attention_ = MultiHeadAttention(d, d, t.num_heads, t.head_size, t.attention_dropout, rng);
      tf_head_ = MlpStack(d, t.head_dense, act, rng);
      tf_dropout_ = DropoutLayer(t.dropout);
      const std::size_t joined = tf_head_.out_features(d) + kFeatureCount;
      tf_mlp_ = MlpStack(joined, t.mlp, act, rng);
      tf_out_ = DenseLayer(tf_mlp_.out_features(joined), 1, s.output_activation, rng);
      return;
    }
  }
}

void Model::register_parameters() {
  auto& p = params_;
  switch (spec_.kind) {
    case ModelKind::FNN:
    case ModelKind::FNN_S:
      fnn_hidden_.collect("fnn.hidden", p);
      fnn_out_.collect("fnn.out", p);
      return;
    case ModelKind::LSTM:
    case ModelKind::CNN:
    case ModelKind::LSTM_CNN:
      if (lstm_branch_) lstm_branch_->collect("encoder.lstm", p);
      if (cnn_branch_) cnn_branch_->collect("encoder.cnn", p);
      if (feature_encoder_) feature_encoder_->collect("encoder.features", p);
      ff_decoder_.collect("decoder.hidden", p);
      ff_out_.collect("decoder.out", p);
      return;
    case ModelKind::TRANSFORMER:
      enc_embed_.collect("encoder.embed", p);
      enc_position_.collect("encoder.position", p);
      enc_attention_.collect("encoder.attention", p);
      enc_norm_.collect("encoder.norm", p);
      dec_embed_.collect("decoder.embed", p);
      dec_position_.collect("decoder.position", p);
      dec_self_attention_.collect("decoder.self_attention", p);
      dec_norm_.collect("decoder.norm", p);
      dec_cross_attention_.collect("decoder.cross_attention", p);
      tf_head_.collect("decoder.head", p);
      tf_mlp_.collect("decoder.mlp", p);
      tf_out_.collect("decoder.out", p);
      return;
    default:
      if (lstm_branch_) lstm_branch_->collect("encoder.lstm", p);
      if (cnn_branch_) cnn_branch_->collect("encoder.cnn", p);
      if (attention_branch_) attention_branch_->collect("encoder.attention", p);
      latent_.collect("encoder.latent", p);
      decoder_lstm_.collect("decoder.lstm", p);
      step_mlp_.collect("decoder.step_mlp", p);
      feature_mlp_.collect("decoder.feature_mlp", p);
      s2s_head_.collect("decoder.head", p);
      s2s_out_.collect("decoder.out", p);
      return;
  }
}

std::vector<Tensor> Model::parameter_tensors() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.tensor);
  return out;
}

std::size_t Model::param_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void Model::check_sequence_input(const Tensor& seq, const Tensor& features) const {
  if (!seq.defined() || seq.rank() != 3 || seq.dim(1) != kProfileLength || seq.dim(2) != kSequenceChannels) {
    throw ShapeError(to_string(kind()) + " expects a (N, 28, 4) sequence input, got " +
                     (seq.defined() ? shape_str(seq.shape()) : "none"));
  }
  if (!features.defined() || features.rank() != 2 || features.dim(0) != seq.dim(0) ||
      features.dim(1) != kFeatureCount) {
    throw ShapeError(to_string(kind()) + " expects (N, 3) features, got " +
                     (features.defined() ? shape_str(features.shape()) : "none"));
  }
}

Tensor Model::forward(const ModelInput& in, const ForwardContext& ctx) const {
  return is_seq2seq(kind()) ? forward_seq2seq(in, ctx) : forward_feedforward(in, ctx);
}

Tensor Model::forward_feedforward(const ModelInput& in, const ForwardContext& ctx) const {
  switch (kind()) {
    case ModelKind::FNN:
    case ModelKind::FNN_S: {
      const std::size_t width = kind() == ModelKind::FNN ? kFnnRowWidth : kFnnSWidth;
      if (!in.input.defined() || in.input.rank() != 2 || in.input.dim(1) != width) {
        throw ShapeError(to_string(kind()) + " expects (rows, " + std::to_string(width) + ") input, got " +
                         (in.input.defined() ? shape_str(in.input.shape()) : "none"));
      }
      const auto& layers = fnn_hidden_.layers;
      Tensor x = in.input;
      for (std::size_t i = 0; i < layers.size(); ++i) {
        x = layers[i].forward(x);
        if (i == 0) x = fnn_dropout_.forward(x, ctx);
      }
      return fnn_out_.forward(x);
    }
    case ModelKind::LSTM:
    case ModelKind::CNN:
    case ModelKind::LSTM_CNN: {
      check_sequence_input(in.input, in.features);
      std::vector<Tensor> parts;
      if (lstm_branch_) parts.push_back(lstm_branch_->forward(in.input, ctx));
      if (cnn_branch_) parts.push_back(cnn_branch_->forward(in.input, ctx));
      if (feature_encoder_) parts.push_back(feature_encoder_->forward(in.features));
      const Tensor latent = parts.size() == 1 ? parts.front() : concat(parts, 1);
      return ff_out_.forward(ff_decoder_.forward(latent));
    }
    default: throw KindError(to_string(kind()) + " is a sequence-to-sequence model; use forward_seq2seq");
  }
}

EncoderState Model::encode(const Tensor& sequence, const Tensor& features, const ForwardContext& ctx) const {
  if (!is_seq2seq(kind())) throw KindError(to_string(kind()) + " has no sequence-to-sequence encoder");
  check_sequence_input(sequence, features);
  EncoderState state;
  state.features = features;
  if (kind() == ModelKind::TRANSFORMER) {
    const Tensor tokens = enc_position_.forward(enc_embed_.forward(sequence));
    const Tensor attended = enc_attention_.forward(tokens, tokens, tokens, ctx).output;
    state.memory = enc_norm_.forward(add(tokens, attended));
    return state;
  }
  std::vector<Tensor> parts;
  if (lstm_branch_) parts.push_back(lstm_branch_->forward(sequence, ctx));
  if (cnn_branch_) parts.push_back(cnn_branch_->forward(sequence, ctx));
  if (attention_branch_) parts.push_back(attention_branch_->forward(sequence, ctx));
  state.latent = latent_.forward(parts.size() == 1 ? parts.front() : concat(parts, 1));
  return state;
}

Tensor Model::decode(const EncoderState& state, const Tensor& shifted, const ForwardContext& ctx) const {
  if (!is_seq2seq(kind())) throw KindError(to_string(kind()) + " has no sequence-to-sequence decoder");
  if (!shifted.defined() || shifted.rank() != 2 || shifted.dim(1) != kProfileLength) {
    throw ShapeError("shifted target must be (N, 28), got " + (shifted.defined() ? shape_str(shifted.shape()) : "none"));
  }
  if (shifted.dim(0) != state.features.dim(0)) {
    throw ShapeError("shifted target batch " + shape_str(shifted.shape()) + " does not match features " +
                     shape_str(state.features.shape()));
  }
  return kind() == ModelKind::TRANSFORMER ? transformer_decode(state, shifted, ctx) : s2s_decode(state, shifted, ctx);
}

Tensor Model::s2s_decode(const EncoderState& state, const Tensor& shifted, const ForwardContext& ctx) const {
  const std::size_t n = shifted.dim(0);
  const Tensor steps = step_mlp_.forward(decoder_lstm_.forward(reshape(shifted, {n, kProfileLength, 1})).sequence);
  const Tensor feats = repeat_over_time(feature_mlp_.forward(state.features), kProfileLength);
  const Tensor latent = repeat_over_time(state.latent, kProfileLength);
  Tensor x = s2s_dropout_.forward(concat({latent, steps, feats}, 2), ctx);
  x = s2s_out_.forward(s2s_head_.forward(x));
  return reshape(x, {n, kProfileLength});
}

Tensor Model::transformer_decode(const EncoderState& state, const Tensor& shifted, const ForwardContext& ctx) const {
  const std::size_t n = shifted.dim(0);
  const Tensor tokens = dec_position_.forward(dec_embed_.forward(reshape(shifted, {n, kProfileLength, 1})));
  const Tensor self = dec_self_attention_.forward(tokens, tokens, tokens, ctx, true).output;
  const Tensor normed = dec_norm_.forward(add(tokens, self));
  const Tensor crossed =
      add(normed, dec_cross_attention_.forward(normed, state.memory, state.memory, ctx).output);
  const Tensor head = tf_head_.forward(crossed);
  Tensor x = concat({head, repeat_over_time(state.features, kProfileLength)}, 2);
  x = tf_out_.forward(tf_mlp_.forward(tf_dropout_.forward(x, ctx)));
  return reshape(x, {n, kProfileLength});
}

Tensor Model::forward_seq2seq(const ModelInput& in, const ForwardContext& ctx) const {
  if (!is_seq2seq(kind())) throw KindError(to_string(kind()) + " is a feed-forward model; use forward_feedforward");
  return decode(encode(in.input, in.features, ctx), in.shifted, ctx);
}

}  // namespace ricnet
