#include "recnet/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace recnet {

Adam::Adam(nn::Module& module, AdamOptions options) : params_(module.named_parameters()), options_(options) {
  for (const auto& [name, p] : params_) {
    state_[name] = {Tensor(p.shape()), Tensor(p.shape())};
  }
}

double Adam::step() {
  double sq = 0.0;
  for (const auto& [name, p] : params_) {
    if (!p.has_grad()) continue;
    const Tensor& g = p.grad();
    for (int64_t i = 0; i < g.numel(); ++i) sq += g[i] * g[i];
  }
  const double norm = std::sqrt(sq);
  const double clip = options_.grad_clip > 0.0 && norm > options_.grad_clip ? options_.grad_clip / norm : 1.0;

  ++steps_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (auto& [name, p] : params_) {
    if (!p.has_grad()) continue;
    const Tensor& g = p.grad();
    Moments& s = state_.at(name);
    Tensor& w = p.mutable_value();
    for (int64_t i = 0; i < g.numel(); ++i) {
      const double gi = g[i] * clip;
      s.m[i] = b1 * s.m[i] + (1.0 - b1) * gi;
      s.v[i] = b2 * s.v[i] + (1.0 - b2) * gi * gi;
      const double denom = std::sqrt(s.v[i]) / std::sqrt(c2) + options_.eps;
      w[i] -= options_.lr * (s.m[i] / c1) / denom;
    }
  }
  return norm;
}

void Adam::restore(int64_t steps, std::map<std::string, Moments> state) {
  if (state.size() != params_.size()) throw std::invalid_argument("optimizer state has the wrong number of tensors");
  for (const auto& [name, p] : params_) {
    auto it = state.find(name);
    if (it == state.end()) throw std::invalid_argument("optimizer state lacks " + name);
    if (it->second.m.shape() != p.shape() || it->second.v.shape() != p.shape()) {
      throw std::invalid_argument("optimizer state for " + name + " has the wrong shape");
    }
  }
  steps_ = steps;
  state_ = std::move(state);
}

}  // namespace recnet
