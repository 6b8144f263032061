#include "recnet/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "recnet/ops.hpp"

namespace recnet::nn {

std::vector<std::pair<std::string, Var>> Module::named_parameters() {
  std::vector<std::pair<std::string, Var>> out;
  visit_parameters("", [&](const std::string& name, Var& p) { out.emplace_back(name, p); });
  return out;
}

int64_t Module::parameter_count() {
  int64_t n = 0;
  visit_parameters("", [&](const std::string&, Var& p) { n += p.value().numel(); });
  return n;
}

void Module::zero_grad() {
  visit_parameters("", [](const std::string&, Var& p) { p.zero_grad(); });
}

std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

Tensor kaiming_normal(Shape shape, int64_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (double& v : t.values()) v = dist(rng);
  return t;
}

Conv2d::Conv2d(int64_t in_channels, int64_t out_channels, int64_t kernel, Rng& rng) {
  if (in_channels <= 0 || out_channels <= 0 || kernel <= 0 || kernel % 2 == 0) {
    throw std::invalid_argument("Conv2d: invalid geometry");
  }
  weight = Var(kaiming_normal({kernel, kernel, in_channels, out_channels}, kernel * kernel * in_channels, rng), true);
  bias = Var(Tensor(Shape{out_channels}), true);
}

Var Conv2d::operator()(const Var& x) const { return ops::conv2d(x, weight, bias); }

void Conv2d::visit_parameters(const std::string& prefix, const ParamVisitor& fn) {
  fn(join_name(prefix, "weight"), weight);
  fn(join_name(prefix, "bias"), bias);
}

DepthwiseConv2d::DepthwiseConv2d(int64_t channels, int64_t kernel, Rng& rng) {
  if (channels <= 0 || kernel <= 0 || kernel % 2 == 0) throw std::invalid_argument("DepthwiseConv2d: invalid geometry");
  weight = Var(kaiming_normal({kernel, kernel, channels}, kernel * kernel, rng), true);
  bias = Var(Tensor(Shape{channels}), true);
}

Var DepthwiseConv2d::operator()(const Var& x) const { return ops::depthwise_conv2d(x, weight, bias); }

void DepthwiseConv2d::visit_parameters(const std::string& prefix, const ParamVisitor& fn) {
  fn(join_name(prefix, "weight"), weight);
  fn(join_name(prefix, "bias"), bias);
}

}  // namespace recnet::nn
