#include "ricnet/optim.hpp"

#include <cmath>

#include "ricnet/errors.hpp"

namespace ricnet {

Adam::Adam(AdamConfig config) {
  if (!(config.lr >= 0.0) || config.beta1 < 0.0 || config.beta1 >= 1.0 || config.beta2 < 0.0 || config.beta2 >= 1.0 ||
      !(config.epsilon > 0.0)) {
    throw ValidationError("invalid Adam hyperparameters");
  }
  state_.config = config;
}

void Adam::step(std::vector<Tensor>& params) {
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (auto& p : params) {
    const auto g = p.grad();
    grads.emplace_back(g.begin(), g.end());
  }
  step(params, grads);
}

void Adam::step(std::vector<Tensor>& params, const std::vector<std::vector<double>>& grads) {
  if (grads.size() != params.size()) throw ShapeError("Adam: gradient count does not match parameter count");
  if (state_.m.empty()) {
    for (const auto& p : params) {
      state_.m.emplace_back(p.numel(), 0.0);
      state_.v.emplace_back(p.numel(), 0.0);
    }
  }
  if (state_.m.size() != params.size()) throw ShapeError("Adam: parameter list changed between steps");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].numel() != state_.m[i].size() || grads[i].size() != state_.m[i].size()) {
      throw ShapeError("Adam: shape mismatch for parameter " + std::to_string(i) + " of shape " +
                       shape_str(params[i].shape()));
    }
  }

  const auto& c = state_.config;
  ++state_.t;
  const double t = static_cast<double>(state_.t);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].data_mut();
    auto& m = state_.m[i];
    auto& v = state_.v[i];
    const auto& g = grads[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      theta[j] -= c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

void zero_grads(std::vector<Tensor>& params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace ricnet
