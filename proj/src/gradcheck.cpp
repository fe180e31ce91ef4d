#include "abstain/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace abstain {

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& scalar_fn, const Tensor& x,
                                  double h) {
  if (!(h > 0)) throw std::invalid_argument("finite difference step must be positive");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float base = x[i];
    const float up = static_cast<float>(base + h);
    const float down = static_cast<float>(base - h);
    probe[i] = up;
    const double f_up = scalar_fn(probe);
    probe[i] = down;
    const double f_down = scalar_fn(probe);
    probe[i] = base;
    grad[i] = static_cast<float>((f_up - f_down) / (static_cast<double>(up) - static_cast<double>(down)));
  }
  return grad;
}

std::vector<double> finite_difference_gradient(
    const std::function<double(std::span<const double>)>& scalar_fn, std::span<const double> x, double h) {
  if (!(h > 0)) throw std::invalid_argument("finite difference step must be positive");
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double f_up = scalar_fn(probe);
    probe[i] = x[i] - h;
    const double f_down = scalar_fn(probe);
    probe[i] = x[i];
    grad[i] = (f_up - f_down) / (2.0 * h);
  }
  return grad;
}

double max_relative_error(std::span<const double> a, std::span<const double> b, double floor) {
  if (a.size() != b.size()) throw std::invalid_argument("max_relative_error: size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

}  // namespace abstain
