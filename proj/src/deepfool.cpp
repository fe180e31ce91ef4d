#include "abstain/deepfool.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace abstain {

double LinearConstraint::value_at(const std::vector<double>& delta) const {
  if (delta.size() != gradient.size()) throw std::invalid_argument("constraint/delta size mismatch");
  double v = offset;
  for (std::size_t j = 0; j < delta.size(); ++j) v += gradient[j] * delta[j];
  return v;
}

namespace {

double sign(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

double l1(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += std::abs(x);
  return s;
}

MinNormStep finish(std::vector<double> delta) {
  MinNormStep out;
  out.norm = 0;
  for (double d : delta) out.norm = std::max(out.norm, std::abs(d));
  out.delta = std::move(delta);
  return out;
}

MinNormStep infeasible(std::size_t d) {
  MinNormStep out;
  out.feasible = false;
  out.delta.assign(d, 0.0);
  return out;
}

MinNormStep single_constraint(const LinearConstraint& c) {
  const std::size_t d = c.gradient.size();
  if (c.offset >= 0) return finish(std::vector<double>(d, 0.0));
  const double n = l1(c.gradient);
  if (n == 0) return infeasible(d);
  const double t = -c.offset / n;
  std::vector<double> delta(d);
  for (std::size_t j = 0; j < d; ++j) delta[j] = t * sign(c.gradient[j]);
  return finish(std::move(delta));
}

struct DualPoint {
  double mu;
  double value;  // -G(mu) / ||W(mu)||_1
};

// Primal point for a maximizer mu of the dual ratio with optimum t.
std::vector<double> recover(const LinearConstraint& c1, const LinearConstraint& c2, double mu, double t) {
  const auto& w1 = c1.gradient;
  const auto& w2 = c2.gradient;
  const std::size_t d = w1.size();
  std::vector<double> delta(d, 0.0);
  std::vector<std::size_t> degenerate;
  for (std::size_t j = 0; j < d; ++j) {
    const double w = (1 - mu) * w1[j] + mu * w2[j];
    const double scale = std::abs(w1[j]) + std::abs(w2[j]);
    if (scale == 0) continue;
    if (std::abs(w) <= 1e-12 * scale) {
      degenerate.push_back(j);
    } else {
      delta[j] = t * sign(w);
    }
  }
  if (degenerate.empty()) return delta;

  if (mu <= 0 || mu >= 1) {
    // Only the endpoint's own constraint is active; spend the free
    // coordinates on the other one.
    const auto& other = mu <= 0 ? w2 : w1;
    for (auto j : degenerate) delta[j] = t * sign(other[j]);
    return delta;
  }

  // Interior breakpoint: both constraints active. On the degenerate
  // coordinates w2 is a negative multiple of w1, so they act through the
  // single quantity u = sum w1_j delta_j.
  double r1 = c1.offset, r2 = c2.offset, s = 0, cross = 0;
  for (std::size_t j = 0; j < d; ++j) {
    r1 += w1[j] * delta[j];
    r2 += w2[j] * delta[j];
  }
  for (auto j : degenerate) {
    s += std::abs(w1[j]);
    cross += w2[j] * sign(w1[j]);
  }
  if (s == 0) return delta;
  const double k = -cross / s;  // constraint 2 gains -k per unit of u
  double u = (r2 - r1) / (1 + k);
  u = std::clamp(u, -t * s, t * s);
  for (auto j : degenerate) delta[j] = sign(w1[j]) * u / s;
  return delta;
}

}  // namespace

MinNormStep min_inf_norm_step(const LinearConstraint& c1, const LinearConstraint* c2) {
  const std::size_t d = c1.gradient.size();
  if (d == 0) throw std::invalid_argument("constraint gradient is empty");
  if (c2 && c2->gradient.size() != d) throw std::invalid_argument("constraint gradients differ in size");
  auto finite = [](const LinearConstraint& c) {
    return std::isfinite(c.offset) &&
           std::all_of(c.gradient.begin(), c.gradient.end(), [](double v) { return std::isfinite(v); });
  };
  if (!finite(c1) || (c2 && !finite(*c2))) throw std::invalid_argument("constraint has non-finite entries");
  if (!c2) return single_constraint(c1);
  if (c1.offset >= 0 && c2->offset >= 0) return finish(std::vector<double>(d, 0.0));

  const auto& w1 = c1.gradient;
  const auto& w2 = c2->gradient;
  const double g1 = c1.offset, g2 = c2->offset;
  const double wscale = l1(w1) + l1(w2);
  const double gscale = std::abs(g1) + std::abs(g2);

  // Dual: t* = max over mu in [0, 1] of -G(mu) / ||W(mu)||_1, with
  // G = (1 - mu) g1 + mu g2 and W = (1 - mu) w1 + mu w2. The ratio is
  // quasi-linear between breakpoints of ||W||_1, so only mu in {0, 1} and
  // the breakpoints need evaluating; a sorted sweep keeps ||W||_1 current.
  std::vector<double> a(d), b(d), sgn(d);
  std::vector<std::pair<double, std::size_t>> breaks;
  double A = 0, B = 0;
  for (std::size_t j = 0; j < d; ++j) {
    a[j] = w1[j];
    b[j] = w2[j] - w1[j];
    sgn[j] = a[j] != 0 ? sign(a[j]) : sign(b[j]);
    A += sgn[j] * a[j];
    B += sgn[j] * b[j];
    if (b[j] != 0) {
      const double mu = -a[j] / b[j];
      if (mu > 0 && mu < 1) breaks.emplace_back(mu, j);
    }
  }
  std::sort(breaks.begin(), breaks.end());

  bool unbounded = false;
  std::vector<DualPoint> points;
  auto consider = [&](double mu, double norm) {
    const double G = (1 - mu) * g1 + mu * g2;
    if (norm <= 1e-13 * wscale) {
      if (G < -1e-12 * gscale) unbounded = true;
      return;
    }
    points.push_back({mu, -G / norm});
  };
  consider(0.0, l1(w1));
  for (std::size_t k = 0; k < breaks.size();) {
    const double mu = breaks[k].first;
    consider(mu, std::max(0.0, A + mu * B));
    for (; k < breaks.size() && breaks[k].first == mu; ++k) {
      const std::size_t j = breaks[k].second;
      A -= 2 * sgn[j] * a[j];
      B -= 2 * sgn[j] * b[j];
      sgn[j] = -sgn[j];
    }
  }
  consider(1.0, l1(w2));
  if (unbounded || points.empty()) return infeasible(d);

  // Re-evaluate the leading candidates exactly and recover primal points.
  std::sort(points.begin(), points.end(), [](const DualPoint& p, const DualPoint& q) { return p.value > q.value; });
  const std::size_t keep = std::min<std::size_t>(points.size(), 8);
  double t_star = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < keep; ++k) {
    const double mu = points[k].mu;
    double norm = 0;
    for (std::size_t j = 0; j < d; ++j) norm += std::abs((1 - mu) * w1[j] + mu * w2[j]);
    if (norm > 1e-13 * wscale) points[k].value = -((1 - mu) * g1 + mu * g2) / norm;
    t_star = std::max(t_star, points[k].value);
  }
  if (!(t_star > 0)) return finish(std::vector<double>(d, 0.0));

  std::vector<double> best;
  double best_slack = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < keep; ++k) {
    if (points[k].value < t_star * (1 - 1e-9)) continue;
    auto delta = recover(c1, *c2, points[k].mu, t_star);
    const double slack = std::min(c1.value_at(delta), c2->value_at(delta));
    if (slack > best_slack) {
      best_slack = slack;
      best = std::move(delta);
    }
  }
  const double tol = 1e-9 * std::max(1.0, gscale + t_star * wscale);
  if (best.empty() || best_slack < -tol) return infeasible(d);
  return finish(std::move(best));
}

void DeepFoolConfig::validate() const {
  if (iterations < 1) throw std::invalid_argument("DeepFool needs at least one iteration");
  if (!(epsilon >= 0)) throw std::invalid_argument("DeepFool epsilon must be >= 0");
  if (!(overshoot >= 1)) throw std::invalid_argument("DeepFool overshoot must be >= 1");
}

namespace {

std::vector<double> logit_difference_gradient(const Classifier& clf, const Trace& trace, std::size_t plus,
                                              std::size_t minus) {
  Tensor w(trace.output().shape());
  w[plus] += 1.0f;
  w[minus] -= 1.0f;
  const Tensor g = clf.input_gradient(trace, w);
  return {g.values().begin(), g.values().end()};
}

enum class StepRule { nearest_boundary, both_boundaries };

// Scaling a two-constraint step would push a constraint that is active with
// positive offset back across its boundary, so the abstain-aware variant
// instead asks every linearized boundary to be cleared by the overshoot
// fraction: g -> g - (overshoot - 1) |g|. For one violated constraint this
// is the same as scaling the step.
double overshoot_offset(double g, double overshoot) { return g - (overshoot - 1) * std::abs(g); }

AttackResult run_deepfool(const Classifier& clf, const Tensor& x_in, std::size_t y, const DeepFoolConfig& cfg,
                          StepRule rule) {
  cfg.validate();
  if (x_in.size() != shape_size(clf.input_shape())) throw ShapeError("attack input does not match the classifier");
  if (y >= clf.num_classes()) throw std::out_of_range("attack label out of range");
  const Tensor x = x_in.shape() == clf.input_shape() ? x_in : x_in.reshaped(clf.input_shape());
  const auto a = clf.abstain_index();
  const std::size_t outputs = clf.output_size();

  AttackResult res;
  Tensor current = x;
  try {
    int t = 0;
    for (; t < cfg.iterations; ++t) {
      const Trace trace = clf.trace(current);
      const auto z = trace.output().values();
      const Label label = clf.label_from_logits(z);
      if (!label.is_abstain() && !label.is(y)) {
        res.success = true;
        break;
      }
      std::vector<double> step;
      double best = std::numeric_limits<double>::infinity();
      if (rule == StepRule::nearest_boundary) {
        const std::size_t guard = a && z[*a] > z[y] ? *a : y;
        for (std::size_t i = 0; i < outputs; ++i) {
          if (i == y || (a && i == *a)) continue;
          const double zhat = static_cast<double>(z[guard]) - z[i];
          // Gradient of z_i - z_guard: the direction that closes the gap.
          const auto grad = logit_difference_gradient(clf, trace, i, guard);
          const double n = l1(grad);
          if (n == 0) continue;
          const double ratio = std::abs(zhat) / n;
          if (ratio < best) {
            best = ratio;
            step.resize(grad.size());
            for (std::size_t j = 0; j < grad.size(); ++j) step[j] = ratio * sign(grad[j]);
          }
        }
      } else {
        for (std::size_t i = 0; i < outputs; ++i) {
          if (i == y || (a && i == *a)) continue;
          LinearConstraint vs_y{overshoot_offset(static_cast<double>(z[i]) - z[y], cfg.overshoot),
                                logit_difference_gradient(clf, trace, i, y)};
          MinNormStep s;
          if (a) {
            LinearConstraint vs_a{overshoot_offset(static_cast<double>(z[i]) - z[*a], cfg.overshoot),
                                  logit_difference_gradient(clf, trace, i, *a)};
            s = min_inf_norm_step(vs_y, &vs_a);
          } else {
            s = min_inf_norm_step(vs_y);
          }
          if (!s.feasible || s.norm == 0) continue;
          if (s.norm < best) {
            best = s.norm;
            step = std::move(s.delta);
          }
        }
      }
      if (step.empty()) break;  // every candidate degenerate or infeasible
      const double scale = rule == StepRule::nearest_boundary ? cfg.overshoot : 1.0;
      Tensor next(current.shape());
      for (std::size_t j = 0; j < next.size(); ++j) {
        next[j] = static_cast<float>(current[j] + scale * step[j]);
      }
      current = project(next, x, cfg.epsilon);
    }
    res.iterations = t;
    const Trace trace = clf.trace(current);
    const Label label = clf.label_from_logits(trace.output().values());
    res.success = !label.is_abstain() && !label.is(y);
    res.final_loss = attack_loss(AttackLossVariant::abstain, trace.output().values(), y, a, 0, 1);
  } catch (const NumericError& e) {
    res.success = false;
    res.numeric_failure = true;
    res.failure = e.what();
    res.final_loss = std::numeric_limits<double>::quiet_NaN();
  }
  res.adversarial = std::move(current);
  return res;
}

}  // namespace

AttackResult deepfool_attack(const Classifier& clf, const Tensor& x, std::size_t y, const DeepFoolConfig& cfg) {
  return run_deepfool(clf, x, y, cfg, StepRule::nearest_boundary);
}

AttackResult deepfool_abstain_attack(const Classifier& clf, const Tensor& x, std::size_t y,
                                     const DeepFoolConfig& cfg) {
  return run_deepfool(clf, x, y, cfg, StepRule::both_boundaries);
}

}  // namespace abstain
