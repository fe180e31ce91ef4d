#include "abstain/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace abstain {

std::string_view to_string(SurrogateVariant v) { return v == SurrogateVariant::l1 ? "l1" : "l2"; }

std::string_view to_string(AttackLossVariant v) {
  switch (v) {
    case AttackLossVariant::cw: return "cw";
    case AttackLossVariant::abstain: return "abstain";
    case AttackLossVariant::sum: return "sum";
    case AttackLossVariant::interp: return "interp";
    case AttackLossVariant::switching: return "switch";
  }
  return "unknown";
}

SurrogateVariant surrogate_from_string(std::string_view name) {
  if (name == "l1") return SurrogateVariant::l1;
  if (name == "l2") return SurrogateVariant::l2;
  throw std::invalid_argument("unknown surrogate '" + std::string(name) + "' (expected l1 or l2)");
}

AttackLossVariant attack_loss_from_string(std::string_view name) {
  if (name == "cw") return AttackLossVariant::cw;
  if (name == "abstain") return AttackLossVariant::abstain;
  if (name == "sum") return AttackLossVariant::sum;
  if (name == "interp") return AttackLossVariant::interp;
  if (name == "switch") return AttackLossVariant::switching;
  throw std::invalid_argument("unknown attack loss '" + std::string(name) + "'");
}

namespace {

double floored_log(double p) { return std::log(std::max(p, kProbabilityFloor)); }

void check_probabilities(std::span<const double> p, std::size_t y, std::size_t classes) {
  if (p.empty()) throw std::invalid_argument("empty probability vector");
  if (y >= classes) {
    throw std::out_of_range("label " + std::to_string(y) + " out of range for " + std::to_string(classes) +
                            " classes");
  }
}

// Lowest-index argmax over logits, skipping `skip_a` / `skip_b`.
std::size_t best_excluding(std::span<const float> z, std::size_t skip_a, std::optional<std::size_t> skip_b) {
  std::size_t best = z.size();
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (i == skip_a || (skip_b && i == *skip_b)) continue;
    if (best == z.size() || z[i] > z[best]) best = i;
  }
  return best;
}

LossValue cw_loss(std::span<const float> z, std::size_t y) {
  const std::size_t other = best_excluding(z, y, std::nullopt);
  LossValue out;
  out.value = static_cast<double>(z[other]) - z[y];
  out.logit_grad.assign(z.size(), 0.0);
  out.logit_grad[other] += 1.0;
  out.logit_grad[y] -= 1.0;
  return out;
}

LossValue abstain_loss(std::span<const float> z, std::size_t y, std::size_t a) {
  const std::size_t other = best_excluding(z, y, a);
  const std::size_t guard = z[y] >= z[a] ? y : a;  // y < a, so ties go to y
  LossValue out;
  out.value = static_cast<double>(z[other]) - z[guard];
  out.logit_grad.assign(z.size(), 0.0);
  out.logit_grad[other] += 1.0;
  out.logit_grad[guard] -= 1.0;
  return out;
}

LossValue sum_loss(std::span<const float> z, std::size_t y, std::size_t a) {
  const std::size_t other = best_excluding(z, y, a);
  LossValue out;
  out.value = static_cast<double>(z[other]) - (static_cast<double>(z[y]) + z[a]);
  out.logit_grad.assign(z.size(), 0.0);
  out.logit_grad[other] += 1.0;
  out.logit_grad[y] -= 1.0;
  out.logit_grad[a] -= 1.0;
  return out;
}

}  // namespace

double natural_loss(std::span<const double> p, std::size_t y) {
  check_probabilities(p, y, p.size());
  return -floored_log(p[y]);
}

double surrogate_adv_loss(SurrogateVariant v, std::span<const double> p, std::size_t y) {
  if (p.size() < 2) throw std::invalid_argument("surrogate needs a class and an abstain probability");
  const std::size_t a = p.size() - 1;
  check_probabilities(p, y, a);
  if (v == SurrogateVariant::l1) return -floored_log(p[y] + p[a]);
  return floored_log(p[y]) * floored_log(p[a]);
}

LossValue natural_loss_from_logits(std::span<const float> logits, std::size_t y) {
  if (y >= logits.size()) throw std::out_of_range("label out of range");
  const auto logp = log_softmax(logits);
  LossValue out;
  out.value = -logp[y];
  out.logit_grad.resize(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) out.logit_grad[k] = std::exp(logp[k]);
  out.logit_grad[y] -= 1.0;
  return out;
}

LossValue surrogate_loss_from_logits(SurrogateVariant v, std::span<const float> logits, std::size_t y,
                                     std::size_t abstain_index) {
  if (abstain_index >= logits.size() || y >= abstain_index) throw std::out_of_range("label out of range");
  const auto logp = log_softmax(logits);
  const std::size_t a = abstain_index;
  std::vector<double> p(logp.size());
  for (std::size_t k = 0; k < p.size(); ++k) p[k] = std::exp(logp[k]);
  LossValue out;
  out.logit_grad.assign(logits.size(), 0.0);
  if (v == SurrogateVariant::l1) {
    const double hi = std::max(logp[y], logp[a]);
    const double log_q = hi + std::log(std::exp(logp[y] - hi) + std::exp(logp[a] - hi));
    out.value = -log_q;
    const double wy = std::exp(logp[y] - log_q);
    const double wa = std::exp(logp[a] - log_q);
    for (std::size_t k = 0; k < p.size(); ++k) out.logit_grad[k] = p[k];
    out.logit_grad[y] -= wy;
    out.logit_grad[a] -= wa;
  } else {
    const double ny = -logp[y];
    const double na = -logp[a];
    out.value = ny * na;
    for (std::size_t k = 0; k < p.size(); ++k) out.logit_grad[k] = (na + ny) * p[k];
    out.logit_grad[y] -= na;
    out.logit_grad[a] -= ny;
  }
  return out;
}

bool switch_uses_cw(int t, int total) { return t < (total + 1) / 2; }

LossValue attack_loss_with_grad(AttackLossVariant v, std::span<const float> logits, std::size_t y,
                                std::optional<std::size_t> abstain_index, int t, int total) {
  const std::size_t classes = logits.size() - (abstain_index ? 1 : 0);
  if (abstain_index && *abstain_index != classes) throw std::invalid_argument("abstain output must be last");
  if (classes < 2) throw std::invalid_argument("attack losses need at least two classes");
  if (y >= classes) throw std::out_of_range("label out of range");
  if (total < 1 || t < 0) throw std::invalid_argument("attack iteration out of range");

  if (!abstain_index) return cw_loss(logits, y);
  const std::size_t a = *abstain_index;
  switch (v) {
    case AttackLossVariant::cw: return cw_loss(logits, y);
    case AttackLossVariant::abstain: return abstain_loss(logits, y, a);
    case AttackLossVariant::sum: return sum_loss(logits, y, a);
    case AttackLossVariant::switching:
      return switch_uses_cw(t, total) ? cw_loss(logits, y) : abstain_loss(logits, y, a);
    case AttackLossVariant::interp: {
      const double alpha = static_cast<double>(t) / total;
      LossValue cw = cw_loss(logits, y);
      const LossValue ab = abstain_loss(logits, y, a);
      cw.value = (1.0 - alpha) * cw.value + alpha * ab.value;
      for (std::size_t k = 0; k < cw.logit_grad.size(); ++k) {
        cw.logit_grad[k] = (1.0 - alpha) * cw.logit_grad[k] + alpha * ab.logit_grad[k];
      }
      return cw;
    }
  }
  throw std::invalid_argument("unknown attack loss variant");
}

double attack_loss(AttackLossVariant v, std::span<const float> logits, std::size_t y,
                   std::optional<std::size_t> abstain_index, int t, int total) {
  return attack_loss_with_grad(v, logits, y, abstain_index, t, total).value;
}

JacobianTerm jacobian_term(const Classifier& clf, const Trace& trace, std::size_t y) {
  if (y >= clf.num_classes()) throw std::out_of_range("label out of range");
  const auto z = trace.output().values();
  JacobianTerm term;
  term.competitor = best_excluding(z, y, std::nullopt);
  Tensor weights(trace.output().shape());
  weights[y] = 1.0f;
  weights[term.competitor] = -1.0f;
  term.gradient = clf.input_gradient(trace, weights);
  double norm = 0.0;
  for (float g : term.gradient.values()) norm += std::abs(static_cast<double>(g));
  term.penalty = norm;
  return term;
}

double jacobian_penalty(const Classifier& clf, const Tensor& x, std::size_t y) {
  return jacobian_term(clf, clf.trace(x), y).penalty;
}

CarlLoss carl_example_loss(const Classifier& clf, const Tensor& x, const Tensor& x_adv, std::size_t y,
                           double lambda, double eta, SurrogateVariant v, bool with_gradient) {
  if (lambda < 0 || eta < 0) throw std::invalid_argument("lambda and eta must be non-negative");
  if (!clf.abstaining()) throw std::invalid_argument("the CARL loss needs an abstaining classifier");
  const std::size_t a = *clf.abstain_index();
  CarlLoss out;

  const Trace nat_trace = clf.trace(x);
  const LossValue nat = natural_loss_from_logits(nat_trace.output().values(), y);
  out.natural = nat.value;

  Tensor nat_weights(nat_trace.output().shape());
  for (std::size_t k = 0; k < nat.logit_grad.size(); ++k) nat_weights[k] = static_cast<float>(nat.logit_grad[k]);

  if (eta > 0) {
    const JacobianTerm jac = jacobian_term(clf, nat_trace, y);
    out.penalty = jac.penalty;
    if (with_gradient) {
      // ||G||_1 = <sign(G), G> with the sign pattern held fixed; in the
      // standardized coordinates the network sees, that is the directional
      // derivative of z_y - z_competitor along sign(G) / std.
      const auto& inv_scale = clf.input_scale();
      Tensor direction(clf.input_shape());
      for (std::size_t i = 0; i < direction.size(); ++i) {
        const float g = jac.gradient[i];
        direction[i] = (g > 0 ? 1.0f : (g < 0 ? -1.0f : 0.0f)) * inv_scale[i];
      }
      Tensor tangent_weights(nat_trace.output().shape());
      tangent_weights[y] = static_cast<float>(eta);
      tangent_weights[jac.competitor] = static_cast<float>(-eta);
      out.grads = clf.network().directional_backward(nat_trace, direction, nat_weights, tangent_weights);
    }
  } else if (with_gradient) {
    out.grads = clf.network().backward(nat_trace, nat_weights).params;
  }

  if (lambda > 0) {
    const Trace adv_trace = clf.trace(x_adv);
    const LossValue adv = surrogate_loss_from_logits(v, adv_trace.output().values(), y, a);
    out.adversarial = adv.value;
    if (with_gradient) {
      Tensor adv_weights(adv_trace.output().shape());
      for (std::size_t k = 0; k < adv.logit_grad.size(); ++k) {
        adv_weights[k] = static_cast<float>(lambda * adv.logit_grad[k]);
      }
      add_scaled(out.grads, clf.network().backward(adv_trace, adv_weights).params);
    }
  }

  out.total = out.natural + lambda * out.adversarial + eta * out.penalty;
  return out;
}

}  // namespace abstain
