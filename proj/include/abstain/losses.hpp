#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "abstain/classifier.hpp"

namespace abstain {

/// Which adversarial surrogate the training loss uses:
/// l1 = -log(p_y + p_a), l2 = (-log p_y)(-log p_a).
enum class SurrogateVariant { l1, l2 };

/// Logit-margin objectives maximized by PGD.
enum class AttackLossVariant { cw, abstain, sum, interp, switching };

std::string_view to_string(SurrogateVariant v);
std::string_view to_string(AttackLossVariant v);
SurrogateVariant surrogate_from_string(std::string_view name);
AttackLossVariant attack_loss_from_string(std::string_view name);

/// Floor applied to probabilities before taking logs.
inline constexpr double kProbabilityFloor = 1e-12;

/// -log p_y on a probability vector.
double natural_loss(std::span<const double> p, std::size_t y);

/// Surrogate on a probability vector whose last entry is the abstain class.
double surrogate_adv_loss(SurrogateVariant v, std::span<const double> p, std::size_t y);

/// Scalar value and its gradient with respect to the logits.
struct LossValue {
  double value = 0.0;
  std::vector<double> logit_grad;
};

/// Log-space forms used for training; they agree with natural_loss and
/// surrogate_adv_loss but never underflow.
LossValue natural_loss_from_logits(std::span<const float> logits, std::size_t y);
LossValue surrogate_loss_from_logits(SurrogateVariant v, std::span<const float> logits, std::size_t y,
                                     std::size_t abstain_index);

/// Attack objective at PGD iteration t of T. `abstain_index` is empty for a
/// classifier without an abstain output, in which case every variant
/// reduces to the cw margin.
double attack_loss(AttackLossVariant v, std::span<const float> logits, std::size_t y,
                   std::optional<std::size_t> abstain_index, int t, int total);
LossValue attack_loss_with_grad(AttackLossVariant v, std::span<const float> logits, std::size_t y,
                                std::optional<std::size_t> abstain_index, int t, int total);

/// The switching variant uses cw while t < ceil(T / 2).
bool switch_uses_cw(int t, int total);

struct JacobianTerm {
  double penalty = 0.0;       // ||G||_1
  Tensor gradient;            // G = d(z_y - z_competitor)/dx on raw inputs
  std::size_t competitor = 0;  // argmax over i != y, held fixed
};

JacobianTerm jacobian_term(const Classifier& clf, const Trace& trace, std::size_t y);
double jacobian_penalty(const Classifier& clf, const Tensor& x, std::size_t y);

struct CarlLoss {
  double total = 0.0;
  double natural = 0.0;
  double adversarial = 0.0;
  double penalty = 0.0;
  Parameters grads;  // empty unless requested
};

/// -log p_y(x) + lambda * surrogate(x_adv) + eta * ||G_f(x, y)||_1.
CarlLoss carl_example_loss(const Classifier& clf, const Tensor& x, const Tensor& x_adv, std::size_t y,
                           double lambda, double eta, SurrogateVariant v, bool with_gradient = false);

}  // namespace abstain
