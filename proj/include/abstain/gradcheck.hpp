#pragma once

#include <functional>
#include <span>
#include <vector>

#include "abstain/tensor.hpp"

namespace abstain {

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every
/// coordinate of x. The divisor is the step actually realized after the
/// perturbed coordinate is rounded to float.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& scalar_fn, const Tensor& x,
                                  double h);

/// Same in double precision throughout, for reference evaluators.
std::vector<double> finite_difference_gradient(
    const std::function<double(std::span<const double>)>& scalar_fn, std::span<const double> x, double h);

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
double max_relative_error(std::span<const double> a, std::span<const double> b, double floor);

}  // namespace abstain
