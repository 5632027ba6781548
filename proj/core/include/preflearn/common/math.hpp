#pragma once

#include <cmath>

namespace preflearn {

/// log(1 + exp(z)) without overflow.
template <typename T>
T softplus(T z) {
  return z > T(0) ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

template <typename T>
T sigmoid(T z) {
  if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

/// -log sigmoid(m)
template <typename T>
T neg_log_sigmoid(T m) {
  return softplus(-m);
}

}  // namespace preflearn
