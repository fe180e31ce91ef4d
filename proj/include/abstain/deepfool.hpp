#pragma once

#include <optional>
#include <vector>

#include "abstain/attacks.hpp"

namespace abstain {

/// Affine requirement offset + <gradient, delta> >= 0.
struct LinearConstraint {
  double offset = 0.0;
  std::vector<double> gradient;

  double value_at(const std::vector<double>& delta) const;
};

struct MinNormStep {
  bool feasible = true;
  std::vector<double> delta;
  double norm = 0.0;  // ||delta||_inf
};

/// Exact minimizer of ||delta||_inf subject to one or two affine constraints.
/// Infeasible pairs (anti-parallel gradients with incompatible offsets, or a
/// violated constraint with a zero gradient) come back with feasible = false.
MinNormStep min_inf_norm_step(const LinearConstraint& c1, const LinearConstraint* c2 = nullptr);

struct DeepFoolConfig {
  int iterations = 50;
  double epsilon = 0.1;
  double overshoot = 1.02;  // multiplies every accepted step; 1 disables it

  void validate() const;
};

/// DeepFool adapted to abstention: the candidate boundary for class i is
/// max(z_y, z_a) - z_i = 0, over i not in {y, a}.
AttackResult deepfool_attack(const Classifier& clf, const Tensor& x, std::size_t y, const DeepFoolConfig& cfg);

/// DeepFool-Abstain: for each i not in {y, a} the step must cross the
/// linearized i-vs-y and i-vs-a boundaries together.
AttackResult deepfool_abstain_attack(const Classifier& clf, const Tensor& x, std::size_t y,
                                     const DeepFoolConfig& cfg);

}  // namespace abstain
