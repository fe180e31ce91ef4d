#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "abstain/attacks.hpp"
#include "abstain/dataset.hpp"

namespace abstain {

enum class MarginMethod { attack_bisection, grid_search };

std::string_view to_string(MarginMethod m);
MarginMethod margin_method_from_string(std::string_view name);

/// Signed L-infinity margin: positive iff the base prediction equals y.
struct MarginEstimate {
  double value = 0.0;
  MarginMethod method = MarginMethod::attack_bisection;
  bool certified = false;
};

/// Labels of a classifier with two inputs on the grid {0, h, 2h, ..., 1}^2,
/// with the abstain output (if any) treated as an ordinary class. Distances
/// are measured inside [0, 1]^2 only.
class GridMargin {
 public:
  GridMargin(const Classifier& base, double h);

  double spacing() const { return h_; }
  std::size_t points_per_axis() const { return n_; }
  /// Output index at grid point (i h, j h).
  std::size_t label_at(std::size_t i, std::size_t j) const { return labels_[i * n_ + j]; }
  /// Output index of the classifier at an arbitrary point.
  std::size_t label_of(const Tensor& x) const;

  /// Distance from x to the nearest grid point whose label differs from
  /// `label`; 1 (the box diameter) when every grid point has that label.
  double distance_to_other(const Tensor& x, std::size_t label) const;
  /// Unsigned margin of the classifier's own output at x.
  double margin(const Tensor& x) const { return distance_to_other(x, label_of(x)); }

 private:
  Classifier clf_;
  double h_;
  std::size_t n_;
  std::vector<std::uint16_t> labels_;
};

struct MarginOptions {
  MarginMethod method = MarginMethod::attack_bisection;
  double r_max = 1.0;
  double tolerance = 1e-4;  // bracket width at which bisection stops (1e-3 of eps = 0.1)
  int max_probes = 20;
  PGDConfig probe = default_probe_config();
  const GridMargin* grid = nullptr;  // required for grid_search

  void validate() const;
};

/// Bisection returns the smallest radius at which a probe succeeded, an
/// upper bound on the true margin when the probe is sound. If the probe never
/// succeeds up to r_max the result is r_max with certified = false.
MarginEstimate signed_margin(const Classifier& base, const Tensor& x, std::size_t y, const MarginOptions& opts);

/// f_baseline: abstains iff some point within gamma changes base's output.
/// The probe is an attack unless `grid` is set, in which case the grid
/// margin decides.
struct BaselineConfig {
  double gamma = 0.0;
  PGDConfig probe = default_probe_config();
  const GridMargin* grid = nullptr;

  void validate() const;
};

Label baseline_predict(const Classifier& base, const Tensor& x, const BaselineConfig& cfg);

/// baseline_predict for each threshold in an ascending list, with probes
/// warm started across thresholds so the abstain sets are nested.
std::vector<Label> baseline_predict_sweep(const Classifier& base, const Tensor& x, std::span<const double> gammas,
                                          const PGDConfig& probe);

struct CdfPoint {
  double radius = 0.0;
  double fraction = 0.0;
};

/// Fraction of the dataset on which a probe against the true label succeeds
/// at each radius. Radii must be ascending and non-negative; probes are warm
/// started across radii, so the result is non-decreasing.
std::vector<CdfPoint> estimate_margin_cdf(const Classifier& base, const Dataset& data, std::span<const double> radii,
                                          const PGDConfig& probe);

/// Empirical CDF of signed margins: fraction with margin <= r.
std::vector<CdfPoint> empirical_cdf(std::span<const double> signed_margins, std::span<const double> radii);

/// Signed grid margins of every example.
std::vector<double> grid_signed_margins(const GridMargin& grid, const Dataset& data);

/// Normal model N(mu, sigma^2) of the signed margin.
struct MarginDistribution {
  double mu = 0.0;
  double sigma = 1.0;

  void validate() const;
};

/// Standard normal CDF and quantile.
double std_normal_cdf(double z);
double std_normal_quantile(double p);

double normal_cdf(const MarginDistribution& dist, double x);

/// Least-squares line through (r, quantile(q)) for the points with q strictly
/// inside (0, 1). Needs two such points with distinct radii and an increasing
/// trend.
MarginDistribution fit_normal(std::span<const CdfPoint> points);

/// q - F(r) at every point.
std::vector<double> fit_residuals(const MarginDistribution& dist, std::span<const CdfPoint> points);

struct Theorem1Bounds {
  double natural_error = 0.0;            // F(gamma)
  double adversarial_error_bound = 0.0;  // F(eps - gamma)
};

Theorem1Bounds theorem1_bounds(const MarginDistribution& dist, double gamma, double epsilon);

}  // namespace abstain
