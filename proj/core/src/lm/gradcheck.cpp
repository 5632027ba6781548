#include "preflearn/lm/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "preflearn/common/errors.hpp"

namespace preflearn::lm {

std::vector<double> finite_diff_gradient(const FlatLoss& loss, std::span<const double> x, double epsilon) {
  if (!(epsilon > 0.0)) throw ConfigError("finite_diff_gradient: epsilon must be > 0");
  std::vector<double> point(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = point[i];
    point[i] = orig + epsilon;
    const double up = loss(point);
    point[i] = orig - epsilon;
    const double down = loss(point);
    point[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericalError("finite_diff_gradient: non-finite loss at coordinate " + std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * epsilon);
  }
  return grad;
}

std::vector<double> finite_diff_gradient(const std::function<double(const ModelParams<double>&)>& loss,
                                         const ModelParams<double>& params, double epsilon) {
  ModelParams<double> work = params;
  auto values = work.values();
  return finite_diff_gradient(
      [&](std::span<const double> x) {
        std::copy(x.begin(), x.end(), values.begin());
        return loss(work);
      },
      params.values(), epsilon);
}

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) throw ShapeError("max_relative_error: size mismatch");
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  }
  return scale == 0.0 ? diff : diff / scale;
}

}  // namespace preflearn::lm
