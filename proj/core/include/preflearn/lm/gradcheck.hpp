#pragma once

#include <functional>
#include <span>
#include <vector>

#include "preflearn/lm/model.hpp"

namespace preflearn::lm {

using FlatLoss = std::function<double(std::span<const double>)>;

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) for every
/// coordinate, in 64-bit arithmetic. Throws NumericalError when a perturbed
/// evaluation is not finite and ConfigError for eps <= 0.
std::vector<double> finite_diff_gradient(const FlatLoss& loss, std::span<const double> x, double epsilon);

/// Same, over the flat buffer of a model.
std::vector<double> finite_diff_gradient(const std::function<double(const ModelParams<double>&)>& loss,
                                         const ModelParams<double>& params, double epsilon);

/// Norm-wise relative max error: max_i |a_i - n_i| / max(max_i |a_i|, max_i |n_i|).
/// Coordinates whose true gradient is ~0 are judged against the gradient's
/// scale rather than against their own rounding noise. 0 when both are 0.
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric);

}  // namespace preflearn::lm
