#include "ricnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ricnet/layers.hpp"
#include "ricnet/ops.hpp"

namespace ricnet {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn, std::vector<Tensor> wrt, double eps,
                                double floor) {
  for (auto& t : wrt) t.zero_grad();
  backward(loss_fn());
  std::vector<std::vector<double>> analytic;
  analytic.reserve(wrt.size());
  for (const auto& t : wrt) {
    const auto g = t.grad();
    analytic.emplace_back(g.begin(), g.end());
  }

  GradCheckResult result;
  NoGradGuard no_grad;
  for (std::size_t ti = 0; ti < wrt.size(); ++ti) {
    auto values = wrt[ti].data_mut();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double saved = values[j];
      values[j] = saved + eps;
      const double plus = loss_fn().item();
      values[j] = saved - eps;
      const double minus = loss_fn().item();
      values[j] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double err = relative_error(analytic[ti][j], numeric, floor);
      ++result.checked;
      if (err > result.max_rel_error || !std::isfinite(err)) {
        result.max_rel_error = std::isfinite(err) ? err : INFINITY;
        result.worst = std::to_string(ti) + "[" + std::to_string(j) + "]";
      }
    }
  }
  return result;
}

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool requires_grad = true) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

// Contract an arbitrary output to a scalar with fixed random weights so
// every output element contributes a distinct gradient.
Tensor contract(const Tensor& out, const Tensor& weights) { return sum(mul(out, weights)); }

std::vector<Tensor> params_of(const ParameterList& list) {
  std::vector<Tensor> out;
  for (const auto& p : list) out.push_back(p.tensor);
  return out;
}

using Case = std::function<GradCheckResult(Rng&)>;

struct NamedCase {
  const char* name;
  Case run;
};

std::vector<NamedCase> suite_cases() {
  std::vector<NamedCase> cases;

  cases.push_back({"matmul", [](Rng& rng) {
                     std::uniform_int_distribution<std::size_t> d(1, 4);
                     const std::size_t m = d(rng), k = d(rng), n = d(rng);
                     auto a = random_tensor({2, m, k}, rng);
                     auto b = random_tensor({k, n}, rng);
                     auto w = random_tensor({2, m, n}, rng, -1, 1, false);
                     return check_gradients([&] { return contract(matmul(a, b), w); }, {a, b});
                   }});
  cases.push_back({"batched_matmul", [](Rng& rng) {
                     auto a = random_tensor({2, 3, 2, 4}, rng);
                     auto b = random_tensor({2, 3, 4, 3}, rng);
                     auto w = random_tensor({2, 3, 2, 3}, rng, -1, 1, false);
                     return check_gradients([&] { return contract(matmul(a, b), w); }, {a, b});
                   }});
  cases.push_back({"broadcast_add_mul_sub", [](Rng& rng) {
                     auto a = random_tensor({2, 3, 4}, rng);
                     auto b = random_tensor({4}, rng);
                     auto c = random_tensor({2, 1, 4}, rng);
                     auto w = random_tensor({2, 3, 4}, rng, -1, 1, false);
                     return check_gradients([&] { return contract(sub(mul(add(a, b), c), b), w); }, {a, b, c});
                   }});
  cases.push_back({"sigmoid_tanh_relu_square", [](Rng& rng) {
                     auto x = random_tensor({3, 5}, rng, -3, 3);
                     // Keep relu inputs away from its kink.
                     for (auto& v : x.data_mut()) {
                       if (std::abs(v) < 1e-2) v += 0.1;
                     }
                     auto w = random_tensor({3, 5}, rng, -1, 1, false);
                     return check_gradients(
                         [&] { return contract(add(add(sigmoid(x), tanh(x)), add(relu(x), square(x))), w); }, {x});
                   }});
  cases.push_back({"softmax", [](Rng& rng) {
                     auto x = random_tensor({2, 3, 4}, rng, -3, 3);
                     auto w = random_tensor({2, 3, 4}, rng, -1, 1, false);
                     std::uniform_int_distribution<int> ax(0, 2);
                     const int axis = ax(rng);
                     return check_gradients([&] { return contract(softmax(x, axis), w); }, {x});
                   }});
  cases.push_back({"reshape_permute_slice_concat", [](Rng& rng) {
                     auto x = random_tensor({2, 3, 4}, rng);
                     auto y = random_tensor({2, 2, 4}, rng);
                     auto w = random_tensor({4, 5, 2}, rng, -1, 1, false);
                     return check_gradients(
                         [&] {
                           auto joined = concat({slice(x, 1, 1, 2), y, slice(x, 1, 0, 1)}, 1);  // (2, 5, 4)
                           return contract(permute(joined, {2, 1, 0}), w);
                         },
                         {x, y});
                   }});
  cases.push_back({"mse_loss", [](Rng& rng) {
                     auto p = random_tensor({4, 3}, rng);
                     auto t = random_tensor({4, 3}, rng);
                     return check_gradients([&] { return mse_loss(p, t); }, {p, t});
                   }});
  cases.push_back({"dense", [](Rng& rng) {
                     DenseLayer layer(4, 3, Activation::sigmoid, rng);
                     for (auto& v : layer.bias.data_mut()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
                     auto x = random_tensor({5, 4}, rng);
                     auto w = random_tensor({5, 3}, rng, -1, 1, false);
                     ParameterList ps;
                     layer.collect("dense", ps);
                     auto wrt = params_of(ps);
                     wrt.push_back(x);
                     return check_gradients([&] { return contract(layer.forward(x), w); }, wrt);
                   }});
  cases.push_back({"lstm_28_step", [](Rng& rng) {
                     LstmLayer layer(2, 3, rng);
                     for (auto& v : layer.bias.data_mut()) v += std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
                     auto x = random_tensor({1, 28, 2}, rng);
                     auto w_seq = random_tensor({1, 28, 3}, rng, -1, 1, false);
                     auto w_c = random_tensor({1, 3}, rng, -1, 1, false);
                     ParameterList ps;
                     layer.collect("lstm", ps);
                     auto wrt = params_of(ps);
                     wrt.push_back(x);
                     return check_gradients(
                         [&] {
                           auto out = layer.forward(x);
                           return add(contract(out.sequence, w_seq), contract(out.c, w_c));
                         },
                         wrt);
                   }});
  cases.push_back({"conv1d", [](Rng& rng) {
                     std::uniform_int_distribution<std::size_t> k(1, 4);
                     const std::size_t kernel = k(rng);
                     const Padding pad = kernel % 2 == 0 ? Padding::same : Padding::valid;
                     Conv1dLayer layer(3, 2, kernel, pad, Activation::linear, rng);
                     for (auto& v : layer.bias.data_mut()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
                     auto x = random_tensor({2, 6, 3}, rng);
                     auto w = random_tensor({2, layer.output_length(6), 2}, rng, -1, 1, false);
                     ParameterList ps;
                     layer.collect("conv", ps);
                     auto wrt = params_of(ps);
                     wrt.push_back(x);
                     return check_gradients([&] { return contract(layer.forward(x), w); }, wrt);
                   }});
  cases.push_back({"attention", [](Rng& rng) {
                     MultiHeadAttention mha(4, 3, 2, 3, 0.0, rng);
                     auto q = random_tensor({2, 3, 4}, rng);
                     auto kv = random_tensor({2, 5, 3}, rng);
                     auto w = random_tensor({2, 3, 4}, rng, -1, 1, false);
                     ParameterList ps;
                     mha.collect("mha", ps);
                     auto wrt = params_of(ps);
                     wrt.push_back(q);
                     wrt.push_back(kv);
                     const ForwardContext ctx;
                     return check_gradients([&] { return contract(mha.forward(q, kv, kv, ctx).output, w); }, wrt);
                   }});
  cases.push_back({"causal_self_attention", [](Rng& rng) {
                     MultiHeadAttention mha(4, 4, 2, 2, 0.0, rng);
                     auto x = random_tensor({1, 4, 4}, rng);
                     auto w = random_tensor({1, 4, 4}, rng, -1, 1, false);
                     ParameterList ps;
                     mha.collect("mha", ps);
                     auto wrt = params_of(ps);
                     wrt.push_back(x);
                     const ForwardContext ctx;
                     return check_gradients([&] { return contract(mha.forward(x, x, x, ctx, true).output, w); }, wrt);
                   }});
  cases.push_back({"layer_norm", [](Rng& rng) {
                     LayerNormLayer ln(5, 1e-6);
                     for (auto& v : ln.gain.data_mut()) v = std::uniform_real_distribution<double>(0.5, 1.5)(rng);
                     for (auto& v : ln.shift.data_mut()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
                     auto x = random_tensor({3, 5}, rng, -2, 2);
                     auto w = random_tensor({3, 5}, rng, -1, 1, false);
                     ParameterList ps;
                     ln.collect("ln", ps);
                     auto wrt = params_of(ps);
                     wrt.push_back(x);
                     return check_gradients([&] { return contract(ln.forward(x), w); }, wrt);
                   }});
  cases.push_back({"dropout_eval", [](Rng& rng) {
                     DropoutLayer drop(0.3);
                     auto x = random_tensor({4, 5}, rng);
                     auto w = random_tensor({4, 5}, rng, -1, 1, false);
                     const ForwardContext ctx;
                     return check_gradients([&] { return contract(drop.forward(x, ctx), w); }, {x});
                   }});
  cases.push_back({"dropout_train_fixed_mask", [](Rng& rng) {
                     DropoutLayer drop(0.3);
                     auto x = random_tensor({4, 5}, rng);
                     auto w = random_tensor({4, 5}, rng, -1, 1, false);
                     const auto seed = rng();
                     return check_gradients(
                         [&] {
                           Rng mask_rng(seed);
                           return contract(drop.forward(x, ForwardContext{true, &mask_rng}), w);
                         },
                         {x});
                   }});
  cases.push_back({"position_embedding", [](Rng& rng) {
                     PositionEmbedding pe(PositionMode::learned, 6, 3, 10000.0, rng);
                     auto x = random_tensor({2, 4, 3}, rng);
                     auto w = random_tensor({2, 4, 3}, rng, -1, 1, false);
                     ParameterList ps;
                     pe.collect("pos", ps);
                     auto wrt = params_of(ps);
                     wrt.push_back(x);
                     return check_gradients([&] { return contract(pe.forward(x), w); }, wrt);
                   }});
  return cases;
}

}  // namespace

std::vector<GradCheckRow> run_gradcheck_suite(std::size_t instances, std::uint64_t base_seed, double tolerance) {
  std::vector<GradCheckRow> rows;
  for (const auto& c : suite_cases()) {
    GradCheckRow row{c.name, instances, 0.0, false};
    for (std::size_t i = 0; i < instances; ++i) {
      Rng rng(base_seed * 1000003ULL + i);
      const auto r = c.run(rng);
      row.max_rel_error = std::max(row.max_rel_error, r.max_rel_error);
    }
    row.passed = row.max_rel_error < tolerance;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace ricnet
