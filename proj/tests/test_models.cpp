#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "ricnet/data.hpp"
#include "ricnet/errors.hpp"
#include "ricnet/gradcheck.hpp"
#include "ricnet/models.hpp"
#include "ricnet/ops.hpp"

using namespace ricnet;

namespace {

// Parameter arithmetic straight from the layer definitions.
std::size_t dense(std::size_t i, std::size_t o) { return i * o + o; }
std::size_t lstm(std::size_t i, std::size_t u) { return 4 * u * (i + u + 1); }
std::size_t conv(std::size_t k, std::size_t c, std::size_t f) { return k * c * f + f; }

std::size_t expected_params(ModelKind k) {
  const std::size_t lstm_branch = lstm(4, 200) + dense(200, 200) + dense(200, 50);
  const std::size_t cnn_branch = conv(4, 4, 128) + conv(2, 128, 64) + dense(28 * 64, 50);
  const std::size_t att_branch = dense(4, 240) + 28 * 240 + 2 * 240 + 4 * dense(240, 240) + 2 * 240 + conv(1, 240, 2) +
                                 conv(1, 2, 4) + dense(240, 4) + dense(28 * 4, 50);
  const std::size_t ff_decoder = [](std::size_t in) { return dense(in, 200) + dense(200, 100) + dense(100, 28); }(50);
  const std::size_t s2s_decoder = lstm(1, 100) + dense(100, 40) + dense(40, 16) + dense(3, 40) + dense(40, 16) +
                                  dense(48, 30) + dense(30, 5) + dense(5, 1);
  switch (k) {
    case ModelKind::FNN: return dense(4, 100) + dense(100, 50) + dense(50, 1);
    case ModelKind::FNN_S: return dense(31, 100) + dense(100, 50) + dense(50, 28);
    case ModelKind::LSTM: return lstm_branch + ff_decoder;
    case ModelKind::CNN: return cnn_branch + ff_decoder;
    case ModelKind::LSTM_CNN:
      return lstm_branch + cnn_branch + dense(3, 40) + dense(140, 200) + dense(200, 100) + dense(100, 28);
    case ModelKind::TRANSFORMER: {
      const std::size_t attn = 4 * dense(512, 512);
      const std::size_t enc = dense(4, 512) + 28 * 512 + attn + 2 * 512;
      const std::size_t dec = dense(1, 512) + 28 * 512 + attn + 2 * 512 + attn;
      const std::size_t head = dense(512, 50) + dense(50, 28) + dense(31, 100) + dense(100, 50) + dense(50, 10) +
                               dense(10, 5) + dense(5, 1);
      return enc + dec + head;
    }
    case ModelKind::LSTM_S2S: return lstm_branch + dense(50, 16) + s2s_decoder;
    case ModelKind::CNN_S2S: return cnn_branch + dense(50, 16) + s2s_decoder;
    case ModelKind::LSTM_CNN_S2S: return lstm_branch + cnn_branch + dense(100, 16) + s2s_decoder;
    case ModelKind::LSTM_ATT_S2S: return lstm_branch + att_branch + dense(100, 16) + s2s_decoder;
  }
  return 0;
}

ModelInput random_input(ModelKind k, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  auto make = [&](Shape s) {
    std::vector<double> v(shape_numel(s));
    for (auto& x : v) x = g(rng);
    return Tensor(std::move(s), std::move(v));
  };
  ModelInput in;
  if (k == ModelKind::FNN) {
    in.input = make({n, 4});
    return in;
  }
  if (k == ModelKind::FNN_S) {
    in.input = make({n, 31});
    return in;
  }
  in.input = make({n, 28, 4});
  in.features = make({n, 3});
  if (is_seq2seq(k)) in.shifted = shift_right(make({n, 28}));
  return in;
}

}  // namespace

TEST_CASE("parameter counts follow the layer arithmetic") {
  CHECK(dense(4, 1) == 5);
  CHECK(expected_params(ModelKind::FNN) == 5601);
  for (auto k : kAllKinds) {
    INFO(to_string(k));
    const Model m(default_spec(k), 1);
    CHECK(m.param_count() == expected_params(k));
  }
}

TEST_CASE("every kind runs forward and backward on the full schema") {
  for (auto k : kAllKinds) {
    INFO(to_string(k));
    const Model m(default_spec(k), 3);
    const std::size_t n = k == ModelKind::FNN ? 32 * 28 : 32;
    const auto in = random_input(k, n, 5);
    const Tensor out = m.forward(in);
    CHECK(out.shape() == (k == ModelKind::FNN ? Shape{n, 1} : Shape{32, 28}));
    const Tensor loss = mean(square(out));
    backward(loss);
    std::size_t touched = 0;
    for (const auto& p : m.parameters()) {
      for (double g : p.tensor.grad()) {
        if (g != 0.0) {
          ++touched;
          break;
        }
      }
    }
    CHECK(touched == m.parameters().size());
  }
}

// Every kind wired at toy widths so a full finite-difference pass stays cheap.
ModelSpec toy_spec(ModelKind k) {
  ModelSpec s = default_spec(k);
  s.fnn.hidden = {3, 2};
  s.lstm.units = 3;
  s.lstm.dense = {4, 3};
  s.cnn.filters = {3, 2};
  s.cnn.dense = 3;
  s.decoder.hidden = {4, 3};
  s.feature_encoder.units = 3;
  s.transformer.num_heads = 2;
  s.transformer.head_size = 2;
  s.transformer.d_model = 4;
  s.transformer.head_dense = {3, 2};
  s.transformer.mlp = {3, 2};
  s.seq2seq.latent = 2;
  s.seq2seq.decoder_lstm = 3;
  s.seq2seq.step_mlp = {3, 2};
  s.seq2seq.feature_mlp = {3, 2};
  s.seq2seq.head = {3, 2};
  s.attention_branch.num_heads = 2;
  s.attention_branch.head_size = 2;
  s.attention_branch.d_model = 4;
  s.attention_branch.conv_filters = {2, 3};
  s.attention_branch.dense = 3;
  return s;
}

TEST_CASE("whole-model gradients match central differences for every kind") {
  for (auto k : kAllKinds) {
    INFO(to_string(k));
    Model m(toy_spec(k), 21);
    // Zero-initialized biases put relu preactivations exactly on the kink
    // wherever a window sees only relu zeros; move every parameter off it.
    std::mt19937_64 jitter(24);
    std::normal_distribution<double> n01(0.0, 0.3);
    for (auto t : m.parameter_tensors())
      for (auto& v : t.data_mut()) v += n01(jitter);
    const auto in = random_input(k, 2, 22);
    // Fixed random weights give every output element a distinct gradient.
    const Shape out_shape = m.forward(in).shape();
    std::mt19937_64 rng(23);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> wv(shape_numel(out_shape));
    for (auto& x : wv) x = g(rng);
    const Tensor w(out_shape, wv);
    auto loss = [&]() -> Tensor { return sum(mul(m.forward(in), w)); };
    // Central-difference truncation is ~eps^2 = 1e-10 in absolute terms, so
    // gradients below 1e-4 are held to 1e-8 absolute instead of 1e-4 relative.
    const auto r = check_gradients(loss, m.parameter_tensors(), 1e-5, 1e-4);
    CHECK(r.checked == m.param_count());
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("FNN maps one row to one scalar") {
  const Model m(default_spec(ModelKind::FNN), 1);
  CHECK(m.forward(random_input(ModelKind::FNN, 1, 2)).shape() == Shape{1, 1});
}

TEST_CASE("same seed gives identical parameters; another seed does not") {
  for (auto k : {ModelKind::FNN, ModelKind::LSTM_ATT_S2S}) {
    const Model a(default_spec(k), 11), b(default_spec(k), 11), c(default_spec(k), 12);
    bool differs = false;
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
      CHECK(a.parameters()[i].name == b.parameters()[i].name);
      CHECK(a.parameters()[i].tensor.to_vector() == b.parameters()[i].tensor.to_vector());
      differs = differs || a.parameters()[i].tensor.to_vector() != c.parameters()[i].tensor.to_vector();
    }
    CHECK(differs);
  }
}

TEST_CASE("parameter names are unique") {
  for (auto k : kAllKinds) {
    const Model m(default_spec(k), 1);
    std::set<std::string> names;
    for (const auto& p : m.parameters()) names.insert(p.name);
    CHECK(names.size() == m.parameters().size());
  }
}

TEST_CASE("zeroed LSTM encoder makes the output constant across samples") {
  Model m(default_spec(ModelKind::LSTM), 4);
  for (const auto& p : m.parameters()) {
    if (p.name.rfind("encoder.lstm.lstm.", 0) == 0) {
      Tensor t = p.tensor;
      for (auto& v : t.data_mut()) v = 0.0;
    }
  }
  const Tensor out = m.forward(random_input(ModelKind::LSTM, 5, 6));
  const auto v = out.to_vector();
  // Equal up to the GEMM's per-row-block accumulation order.
  for (std::size_t i = 1; i < 5; ++i)
    for (std::size_t t = 0; t < 28; ++t) CHECK(std::abs(v[i * 28 + t] - v[t]) < 1e-12);
}

TEST_CASE("seq2seq decoders are causal in the shifted target") {
  for (auto k : kAllKinds) {
    if (!is_seq2seq(k)) continue;
    INFO(to_string(k));
    const Model m(default_spec(k), 7);
    const auto in = random_input(k, 2, 8);
    const Tensor base = m.forward(in);
    for (std::size_t j : {1u, 9u, 27u}) {
      auto shifted = in.shifted.to_vector();
      shifted[j] += 0.75;
      shifted[28 + j] -= 0.5;
      ModelInput p = in;
      p.shifted = Tensor({2, 28}, shifted);
      const Tensor out = m.forward(p);
      bool changed_at_j = false;
      for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t t = 0; t < j; ++t) CHECK(out.data()[r * 28 + t] == base.data()[r * 28 + t]);
        changed_at_j = changed_at_j || out.data()[r * 28 + j] != base.data()[r * 28 + j];
      }
      CHECK(changed_at_j);
    }
  }
}

TEST_CASE("every kind is sensitive to each compaction feature") {
  for (auto k : kAllKinds) {
    INFO(to_string(k));
    const Model m(default_spec(k), 9);
    auto in = random_input(k, 3, 10);
    in.input.set_requires_grad(true);
    if (in.features.defined()) in.features.set_requires_grad(true);
    backward(sum(m.forward(in)));
    const auto gi = in.input.grad();
    for (std::size_t f = 0; f < 3; ++f) {
      double g = 0.0;
      if (k == ModelKind::FNN) {
        for (std::size_t r = 0; r < 3; ++r) g += std::abs(gi[r * 4 + 1 + f]);
      } else if (k == ModelKind::FNN_S) {
        for (std::size_t r = 0; r < 3; ++r) g += std::abs(gi[r * 31 + 28 + f]);
      } else {
        for (std::size_t r = 0; r < 3; ++r) {
          double per_sample = in.features.grad()[r * 3 + f];
          for (std::size_t t = 0; t < 28; ++t) per_sample += gi[(r * 28 + t) * 4 + 1 + f];
          g += std::abs(per_sample);
        }
      }
      CHECK(g > 0.0);
    }
  }
}

TEST_CASE("eval-mode forward is deterministic") {
  for (auto k : {ModelKind::FNN_S, ModelKind::CNN, ModelKind::LSTM_ATT_S2S}) {
    const Model m(default_spec(k), 13);
    const auto in = random_input(k, 4, 14);
    CHECK(m.forward(in).to_vector() == m.forward(in).to_vector());
  }
}

TEST_CASE("wrong-kind calls and bad shapes are rejected") {
  const Model fnn(default_spec(ModelKind::FNN), 1);
  CHECK_THROWS_AS(fnn.encode(Tensor::zeros({1, 28, 4}), Tensor::zeros({1, 3})), KindError);
  CHECK_THROWS_AS(fnn.forward(random_input(ModelKind::FNN_S, 2, 1)), ShapeError);
  const Model s2s(default_spec(ModelKind::CNN_S2S), 1);
  CHECK_THROWS_AS(s2s.forward_feedforward(random_input(ModelKind::CNN_S2S, 2, 1)), KindError);
  auto in = random_input(ModelKind::CNN_S2S, 2, 1);
  in.shifted = Tensor::zeros({2, 27});
  CHECK_THROWS_AS(s2s.forward(in), ShapeError);
}

TEST_CASE("spec JSON round trip, hashing and validation") {
  for (auto k : kAllKinds) {
    const ModelSpec s = default_spec(k);
    const ModelSpec back = spec_from_json(to_json(s));
    CHECK(to_json(back) == to_json(s));
    CHECK(spec_hash(back) == spec_hash(s));
    CHECK(model_kind_from_string(to_string(k)) == k);
  }
  CHECK(spec_hash(default_spec(ModelKind::FNN)) != spec_hash(default_spec(ModelKind::FNN_S)));
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);

  auto j = to_json(default_spec(ModelKind::LSTM));
  j["lstm"]["unitz"] = 3;
  CHECK_THROWS_WITH_AS(spec_from_json(j), doctest::Contains("unitz"), ValidationError);

  ModelSpec bad = default_spec(ModelKind::CNN);
  bad.cnn.dropout = 1.0;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("dropout"), ValidationError);
  CHECK_THROWS_AS(model_kind_from_string("GRU"), ValidationError);
}

TEST_CASE("custom widths change the parameter count as predicted") {
  ModelSpec s = default_spec(ModelKind::FNN);
  s.fnn.hidden = {8};
  const Model m(s, 1);
  CHECK(m.param_count() == dense(4, 8) + dense(8, 1));
}
