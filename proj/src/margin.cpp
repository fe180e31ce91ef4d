#include "abstain/margin.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "abstain/parallel.hpp"

namespace abstain {

std::string_view to_string(MarginMethod m) {
  return m == MarginMethod::grid_search ? "grid-search" : "attack-bisection";
}

MarginMethod margin_method_from_string(std::string_view name) {
  if (name == "attack-bisection") return MarginMethod::attack_bisection;
  if (name == "grid-search") return MarginMethod::grid_search;
  throw std::invalid_argument("unknown margin method '" + std::string(name) + "'");
}

namespace {

std::size_t output_index(const Classifier& clf, const Tensor& x) {
  const Tensor z = clf.logits(x);
  return argmax(z.values());
}

}  // namespace

GridMargin::GridMargin(const Classifier& base, double h) : clf_(base), h_(h) {
  if (shape_size(base.input_shape()) != 2) throw ShapeError("grid margins need a classifier with two inputs");
  if (!(h > 0) || h > 0.5) throw std::invalid_argument("grid spacing must lie in (0, 0.5]");
  const double cells = 1.0 / h;
  n_ = static_cast<std::size_t>(std::llround(cells)) + 1;
  if (std::abs(cells - std::round(cells)) > 1e-9 * cells) throw std::invalid_argument("grid spacing must divide 1");
  h_ = 1.0 / static_cast<double>(n_ - 1);
  labels_.resize(n_ * n_);
  parallel_for(n_, [&](std::size_t i) {
    Tensor x(clf_.input_shape());
    for (std::size_t j = 0; j < n_; ++j) {
      x[0] = static_cast<float>(i * h_);
      x[1] = static_cast<float>(j * h_);
      labels_[i * n_ + j] = static_cast<std::uint16_t>(output_index(clf_, x));
    }
  });
}

std::size_t GridMargin::label_of(const Tensor& x) const { return output_index(clf_, x); }

double GridMargin::distance_to_other(const Tensor& x, std::size_t label) const {
  if (x.size() != 2) throw ShapeError("grid margins need a two-dimensional input");
  const double x0 = x[0], x1 = x[1];
  const auto n = static_cast<long>(n_);
  const long ci = std::clamp(std::lround(x0 / h_), 0L, n - 1);
  const long cj = std::clamp(std::lround(x1 / h_), 0L, n - 1);
  double best = std::numeric_limits<double>::infinity();
  auto visit = [&](long i, long j) {
    if (i < 0 || j < 0 || i >= n || j >= n) return;
    if (labels_[static_cast<std::size_t>(i * n + j)] == label) return;
    best = std::min(best, std::max(std::abs(i * h_ - x0), std::abs(j * h_ - x1)));
  };
  // Every grid point at index distance k lies at least (k - 1/2) h away.
  for (long k = 0; k <= n; ++k) {
    if ((k - 0.5) * h_ >= best) break;
    if (k == 0) {
      visit(ci, cj);
      continue;
    }
    for (long d = -k; d <= k; ++d) {
      visit(ci - k, cj + d);
      visit(ci + k, cj + d);
    }
    for (long d = -k + 1; d <= k - 1; ++d) {
      visit(ci + d, cj - k);
      visit(ci + d, cj + k);
    }
  }
  return std::isfinite(best) ? best : 1.0;
}

void MarginOptions::validate() const {
  if (!(r_max > 0)) throw std::invalid_argument("margin search radius must be positive");
  if (!(tolerance > 0)) throw std::invalid_argument("margin tolerance must be positive");
  if (max_probes < 1) throw std::invalid_argument("margin search needs at least one probe");
  if (method == MarginMethod::grid_search && !grid) throw std::invalid_argument("grid-search margins need a grid");
}

MarginEstimate signed_margin(const Classifier& base, const Tensor& x, std::size_t y, const MarginOptions& opts) {
  opts.validate();
  const std::size_t own = output_index(base, x);
  const double sign = own == y ? 1.0 : -1.0;
  if (opts.method == MarginMethod::grid_search) {
    return {sign * opts.grid->distance_to_other(x, own), MarginMethod::grid_search, true};
  }
  auto flips = [&](double r) { return attack_succeeds_at_radius(base, x, own, r, opts.probe); };
  MarginEstimate out{sign * opts.r_max, MarginMethod::attack_bisection, false};
  if (!flips(opts.r_max)) return out;
  double lo = 0.0, hi = opts.r_max;
  for (int probes = 1; probes < opts.max_probes && hi - lo > opts.tolerance; ++probes) {
    const double mid = 0.5 * (lo + hi);
    (flips(mid) ? hi : lo) = mid;
  }
  out.value = sign * hi;
  out.certified = hi - lo <= opts.tolerance;
  return out;
}

void BaselineConfig::validate() const {
  if (!(gamma >= 0) || !std::isfinite(gamma)) throw std::invalid_argument("baseline threshold must be >= 0");
}

Label baseline_predict(const Classifier& base, const Tensor& x, const BaselineConfig& cfg) {
  cfg.validate();
  const Label own = base.predict(x);
  if (cfg.gamma == 0) return own;
  bool near;
  if (cfg.grid) {
    near = cfg.grid->margin(x) < cfg.gamma;
  } else {
    near = attack_succeeds_at_radius(base, x, output_index(base, x), cfg.gamma, cfg.probe);
  }
  return near ? Label::abstain() : own;
}

std::vector<Label> baseline_predict_sweep(const Classifier& base, const Tensor& x, std::span<const double> gammas,
                                          const PGDConfig& probe) {
  const Label own = base.predict(x);
  const std::size_t first = first_success_index(base, x, output_index(base, x), gammas, probe);
  std::vector<Label> out;
  for (std::size_t k = 0; k < gammas.size(); ++k) {
    if (!(gammas[k] >= 0)) throw std::invalid_argument("baseline threshold must be >= 0");
    out.push_back(k >= first && gammas[k] > 0 ? Label::abstain() : own);
  }
  return out;
}

namespace {

void check_radii(std::span<const double> radii) {
  if (radii.empty()) throw std::invalid_argument("need at least one radius");
  if (!std::is_sorted(radii.begin(), radii.end()) || !(radii.front() >= 0)) {
    throw std::invalid_argument("radii must be non-negative and ascending");
  }
}

}  // namespace

std::vector<CdfPoint> estimate_margin_cdf(const Classifier& base, const Dataset& data, std::span<const double> radii,
                                          const PGDConfig& probe) {
  check_radii(radii);
  if (data.empty()) throw std::invalid_argument("margin CDF of an empty dataset");
  std::vector<std::size_t> first(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    first[i] = first_success_index(base, data.inputs[i], data.labels[i], radii, probe);
  });
  std::vector<CdfPoint> out;
  for (std::size_t k = 0; k < radii.size(); ++k) {
    const auto hits = std::count_if(first.begin(), first.end(), [k](std::size_t f) { return f <= k; });
    out.push_back({radii[k], static_cast<double>(hits) / static_cast<double>(data.size())});
  }
  return out;
}

std::vector<CdfPoint> empirical_cdf(std::span<const double> signed_margins, std::span<const double> radii) {
  if (signed_margins.empty()) throw std::invalid_argument("CDF of an empty sample");
  std::vector<CdfPoint> out;
  for (double r : radii) {
    const auto hits = std::count_if(signed_margins.begin(), signed_margins.end(), [r](double m) { return m <= r; });
    out.push_back({r, static_cast<double>(hits) / static_cast<double>(signed_margins.size())});
  }
  return out;
}

std::vector<double> grid_signed_margins(const GridMargin& grid, const Dataset& data) {
  std::vector<double> out(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    const std::size_t own = grid.label_of(data.inputs[i]);
    const double m = grid.distance_to_other(data.inputs[i], own);
    out[i] = own == data.labels[i] ? m : -m;
  });
  return out;
}

void MarginDistribution::validate() const {
  if (!std::isfinite(mu)) throw std::invalid_argument("margin mean must be finite");
  if (!(sigma > 0) || !std::isfinite(sigma)) throw std::invalid_argument("margin sigma must be positive");
}

double std_normal_cdf(double z) { return boost::math::cdf(boost::math::normal(), z); }

double std_normal_quantile(double p) {
  if (!(p > 0 && p < 1)) throw std::domain_error("normal quantile needs p in (0, 1)");
  return boost::math::quantile(boost::math::normal(), p);
}

double normal_cdf(const MarginDistribution& dist, double x) {
  dist.validate();
  return std_normal_cdf((x - dist.mu) / dist.sigma);
}

MarginDistribution fit_normal(std::span<const CdfPoint> points) {
  std::vector<std::pair<double, double>> usable;
  for (const auto& p : points) {
    if (p.fraction > 0 && p.fraction < 1) usable.emplace_back(p.radius, std_normal_quantile(p.fraction));
  }
  if (usable.size() < 2) throw std::invalid_argument("normal fit needs two points with fractions inside (0, 1)");
  double mr = 0, mz = 0;
  for (auto [r, z] : usable) {
    mr += r;
    mz += z;
  }
  mr /= static_cast<double>(usable.size());
  mz /= static_cast<double>(usable.size());
  double srr = 0, srz = 0;
  for (auto [r, z] : usable) {
    srr += (r - mr) * (r - mr);
    srz += (r - mr) * (z - mz);
  }
  if (srr == 0) throw std::invalid_argument("normal fit needs distinct radii");
  const double slope = srz / srr;
  if (!(slope > 0)) throw std::invalid_argument("normal fit needs fractions increasing with the radius");
  // quantile(q) = (r - mu) / sigma
  MarginDistribution out{mr - mz / slope, 1.0 / slope};
  out.validate();
  return out;
}

std::vector<double> fit_residuals(const MarginDistribution& dist, std::span<const CdfPoint> points) {
  std::vector<double> out;
  for (const auto& p : points) out.push_back(p.fraction - normal_cdf(dist, p.radius));
  return out;
}

Theorem1Bounds theorem1_bounds(const MarginDistribution& dist, double gamma, double epsilon) {
  if (!(gamma >= 0)) throw std::invalid_argument("threshold must be >= 0");
  if (!(epsilon > 0)) throw std::invalid_argument("epsilon must be positive");
  return {normal_cdf(dist, gamma), normal_cdf(dist, epsilon - gamma)};
}

}  // namespace abstain
