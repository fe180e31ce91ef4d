#include "abstain/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace abstain {

std::string_view to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::constant: return "constant";
    case ScheduleKind::exponential: return "exponential";
    case ScheduleKind::harmonic: return "harmonic";
  }
  return "unknown";
}

ScheduleKind schedule_from_string(std::string_view name) {
  if (name == "constant") return ScheduleKind::constant;
  if (name == "exponential") return ScheduleKind::exponential;
  if (name == "harmonic") return ScheduleKind::harmonic;
  throw std::invalid_argument("unknown step schedule '" + std::string(name) + "'");
}

double step_size(const StepSchedule& s, int t, int total, double epsilon) {
  switch (s.kind) {
    case ScheduleKind::constant: return s.step ? *s.step : 2.0 * epsilon / total;
    case ScheduleKind::exponential: return s.scale * epsilon * std::pow(s.decay, t);
    case ScheduleKind::harmonic: return epsilon / (t + s.offset);
  }
  return 0.0;
}

void PGDConfig::validate() const {
  if (!(epsilon >= 0) || !std::isfinite(epsilon)) throw std::invalid_argument("PGD epsilon must be >= 0");
  if (iterations < 1) throw std::invalid_argument("PGD needs at least one iteration");
  if (restarts < 0) throw std::invalid_argument("PGD restarts must be >= 0");
  if (stop == StopRule::converge && !(threshold > 0)) {
    throw std::invalid_argument("convergence threshold must be positive");
  }
  if (schedule.step && !(*schedule.step > 0)) throw std::invalid_argument("constant step must be positive");
  if (!(schedule.scale > 0) || !(schedule.decay > 0) || !(schedule.offset > 0)) {
    throw std::invalid_argument("schedule parameters must be positive");
  }
}

Tensor project(const Tensor& candidate, const Tensor& x, double epsilon) {
  if (candidate.size() != x.size()) throw std::invalid_argument("project: size mismatch");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lo = std::max(0.0, static_cast<double>(x[i]) - epsilon);
    const double hi = std::min(1.0, static_cast<double>(x[i]) + epsilon);
    if (lo > hi) throw std::invalid_argument("project: reference point lies outside [0, 1]");
    // Rounding to float can step just outside the box; nudge back inside.
    float v = static_cast<float>(std::clamp(static_cast<double>(candidate[i]), lo, hi));
    if (v < lo) v = std::nextafter(v, 2.0f);
    if (v > hi) v = std::nextafter(v, -1.0f);
    out[i] = v;
  }
  return out;
}

bool is_adversarial(const Classifier& clf, const Tensor& x_adv, std::size_t y) {
  const Label l = clf.predict(x_adv);
  return !l.is_abstain() && !l.is(y);
}

namespace {

struct Objective {
  const Classifier& clf;
  std::size_t y;
  const PGDConfig& cfg;

  std::optional<std::size_t> abstain() const {
    return cfg.abstain_as_class ? std::nullopt : clf.abstain_index();
  }

  LossValue evaluate(std::span<const float> logits, int t) const {
    if (cfg.objective == PgdObjective::cross_entropy) return natural_loss_from_logits(logits, y);
    return attack_loss_with_grad(cfg.abstain_as_class ? AttackLossVariant::cw : cfg.loss, logits, y, abstain(), t,
                                 cfg.iterations);
  }

  bool succeeded(std::span<const float> logits) const {
    const std::size_t top = argmax(logits);
    if (cfg.abstain_as_class) return top != y;
    if (clf.abstaining() && top == *clf.abstain_index()) return false;
    return top != y;
  }
};

AttackResult run_once(const Objective& obj, const Tensor& x, Tensor current, const SuccessJudge* judge) {
  const auto& cfg = obj.cfg;
  const Classifier& clf = obj.clf;
  AttackResult res;
  double previous = std::numeric_limits<double>::quiet_NaN();
  auto success_of = [&](const Tensor& point, std::span<const float> logits) {
    return judge ? (*judge)(point) : obj.succeeded(logits);
  };
  try {
    int t = 0;
    for (; t < cfg.iterations; ++t) {
      const Trace trace = clf.trace(current);
      const auto logits = trace.output().values();
      if (cfg.early_stop && success_of(current, logits)) {
        res.adversarial = std::move(current);
        res.success = true;
        res.iterations = t;
        res.final_loss = obj.evaluate(logits, t).value;
        return res;
      }
      const LossValue loss = obj.evaluate(logits, t);
      if (cfg.stop == StopRule::converge && t > 0 && std::abs(loss.value - previous) < cfg.threshold) break;
      previous = loss.value;
      Tensor weights(trace.output().shape());
      for (std::size_t k = 0; k < weights.size(); ++k) weights[k] = static_cast<float>(loss.logit_grad[k]);
      const Tensor grad = clf.input_gradient(trace, weights);
      if (!grad.all_finite()) throw NumericError(clf.network().layers().size(), "non-finite input gradient");
      const double step = step_size(cfg.schedule, t, cfg.iterations, cfg.epsilon);
      Tensor next(current.shape());
      for (std::size_t i = 0; i < next.size(); ++i) {
        const float g = grad[i];
        const double dir = g > 0 ? 1.0 : (g < 0 ? -1.0 : 0.0);
        next[i] = static_cast<float>(current[i] + step * dir);
      }
      current = project(next, x, cfg.epsilon);
    }
    const Trace trace = clf.trace(current);
    res.success = success_of(current, trace.output().values());
    res.final_loss = obj.evaluate(trace.output().values(), std::min(t, cfg.iterations - 1)).value;
    res.iterations = t;
    res.adversarial = std::move(current);
  } catch (const NumericError& e) {
    res.adversarial = std::move(current);
    res.success = false;
    res.numeric_failure = true;
    res.failure = e.what();
    res.final_loss = std::numeric_limits<double>::quiet_NaN();
  }
  return res;
}

bool better(const AttackResult& a, const AttackResult& b) {
  if (a.success != b.success) return a.success;
  if (a.numeric_failure != b.numeric_failure) return !a.numeric_failure;
  return a.final_loss > b.final_loss;
}

}  // namespace

AttackResult pgd_attack(const Classifier& clf, const Tensor& x, std::size_t y, const PGDConfig& cfg,
                        const Tensor* start, const SuccessJudge* judge) {
  cfg.validate();
  if (x.size() != shape_size(clf.input_shape())) throw ShapeError("attack input does not match the classifier");
  const std::size_t limit = cfg.abstain_as_class ? clf.output_size() : clf.num_classes();
  if (y >= limit) throw std::out_of_range("attack label out of range");
  const Objective obj{clf, y, cfg};
  const Tensor origin = x.shape() == clf.input_shape() ? x : x.reshaped(clf.input_shape());

  AttackResult best = run_once(obj, origin, project(start ? start->reshaped(origin.shape()) : origin, origin,
                                                    cfg.epsilon),
                               judge);
  if (best.success || cfg.restarts == 0) return best;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int r = 0; r < cfg.restarts; ++r) {
    Tensor init(origin.shape());
    for (std::size_t i = 0; i < init.size(); ++i) init[i] = static_cast<float>(origin[i] + cfg.epsilon * unit(rng));
    AttackResult res = run_once(obj, origin, project(init, origin, cfg.epsilon), judge);
    if (better(res, best)) best = std::move(res);
    if (best.success) break;
  }
  return best;
}

PGDConfig default_probe_config(int iterations) {
  PGDConfig cfg;
  cfg.iterations = iterations;
  cfg.loss = AttackLossVariant::cw;
  cfg.schedule = StepSchedule::harmonic();
  cfg.stop = StopRule::fixed;
  cfg.early_stop = true;
  cfg.abstain_as_class = true;
  return cfg;
}

bool attack_succeeds_at_radius(const Classifier& base, const Tensor& x, std::size_t label, double r,
                               const PGDConfig& probe, const Tensor* warm_start, Tensor* final_point) {
  if (!(r >= 0)) throw std::invalid_argument("probe radius must be >= 0");
  PGDConfig cfg = probe;
  cfg.epsilon = r;
  cfg.loss = AttackLossVariant::cw;
  cfg.abstain_as_class = true;
  cfg.early_stop = true;
  const AttackResult res = pgd_attack(base, x, label, cfg, warm_start);
  if (final_point) *final_point = res.adversarial;
  return res.success;
}

std::size_t first_success_index(const Classifier& base, const Tensor& x, std::size_t label,
                                std::span<const double> radii, const PGDConfig& probe) {
  if (!std::is_sorted(radii.begin(), radii.end())) throw std::invalid_argument("probe radii must be ascending");
  Tensor point = x;
  for (std::size_t k = 0; k < radii.size(); ++k) {
    Tensor next;
    if (attack_succeeds_at_radius(base, x, label, radii[k], probe, &point, &next)) return k;
    point = std::move(next);
  }
  return radii.size();
}

}  // namespace abstain
