#pragma once

// Shared helpers for the unit tests and the acceptance binary: seeded random
// tensors, a finite-difference gradient checker, the gradient case registry
// and independent scalar-loop oracles.

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "recnet/autograd.hpp"
#include "recnet/model.hpp"

namespace recnet::testing {

Tensor random_tensor(const Shape& shape, uint64_t seed, double lo = -1.0, double hi = 1.0);
/// Uniform image in [lo, hi].
Tensor random_image(int64_t b, int64_t h, int64_t w, uint64_t seed, double lo = 0.05, double hi = 0.95);

/// sum(y * R) for a fixed random R, so every output entry reaches the check.
Var weighted_sum(const Var& y, uint64_t seed);

struct GradCheckResult {
  double rel_error = 0.0;  // worst leaf: |analytic - numeric| / max(|analytic|, |numeric|) over checked entries
  std::string worst_leaf;
  int64_t checked = 0;
};

using Leaves = std::vector<std::pair<std::string, Var>>;

/// Compares reverse-mode gradients of the scalar f() with central
/// differences, perturbing the leaf values in place. At most
/// `max_entries` coordinates per leaf are checked (an evenly spaced subset).
GradCheckResult gradcheck(const std::function<Var()>& f, const Leaves& leaves, double h = 1e-6,
                          int64_t max_entries = 24);

/// A leaf that requires grad.
Var leaf(Tensor t);

/// Every parameter of a module as named leaves.
Leaves module_leaves(nn::Module& m, const std::string& prefix);

struct GradCase {
  std::string name;
  std::function<GradCheckResult()> run;
};

/// One case per differentiable operation and module of the model.
std::vector<GradCase> model_grad_cases();
/// One case per loss term.
std::vector<GradCase> loss_grad_cases();

inline constexpr double kGradTolerance = 1e-3;

namespace oracle {

double mse(const Tensor& a, const Tensor& b);
/// Mean over masks of the mean clamped binary cross entropy.
double bce(const std::vector<Tensor>& masks, const Tensor& target, double eps);
/// Per pixel: 1 if Y(in) > Y(gt), Y the BT.601 luma.
Tensor gt_mask(const Tensor& input, const Tensor& gt);
double psnr(const Tensor& a, const Tensor& b);
/// Direct 2-D windowed SSIM on luma with a normalized 11x11 Gaussian
/// (sigma 1.5), valid positions only.
double ssim(const Tensor& a, const Tensor& b);
/// (1/positions) A^T B per sample, by explicit loops. Returns (B,C,C).
Tensor cross_gram(const Tensor& a, const Tensor& b);

}  // namespace oracle

/// Units in the last place between two doubles.
int64_t ulp_distance(double a, double b);

}  // namespace recnet::testing
