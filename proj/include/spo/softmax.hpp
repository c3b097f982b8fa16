#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "spo/types.hpp"

namespace spo {

namespace detail {

/// beta * log sum_i dist[i] * exp(values[i] / beta), max-subtracted. No validation.
template <typename DistDerived, typename ValueDerived>
typename DistDerived::Scalar softmax_operator_unchecked(const Eigen::DenseBase<DistDerived>& dist,
                                                        const Eigen::DenseBase<ValueDerived>& values,
                                                        typename DistDerived::Scalar beta) {
  using Scalar = typename DistDerived::Scalar;
  Scalar peak = -std::numeric_limits<Scalar>::infinity();
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (dist(i) > Scalar(0) && values(i) > peak) peak = values(i);
  }
  Scalar acc(0);
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (dist(i) > Scalar(0)) acc += dist(i) * std::exp((values(i) - peak) / beta);
  }
  return peak + beta * std::log(acc);
}

}  // namespace detail

/// Generalized softmax S^beta_dist[values]. Interpolates between the mean under
/// `dist` (beta -> inf) and the max over its support (beta -> 0).
template <typename DistDerived, typename ValueDerived>
typename DistDerived::Scalar softmax_operator(const Eigen::DenseBase<DistDerived>& dist,
                                              const Eigen::DenseBase<ValueDerived>& values,
                                              typename DistDerived::Scalar beta) {
  using Scalar = typename DistDerived::Scalar;
  if (dist.size() != values.size()) throw InputError("softmax_operator: length mismatch");
  if (dist.size() == 0) throw InputError("softmax_operator: empty input");
  if (!(beta > Scalar(0))) throw InputError("softmax_operator: beta must be positive");
  if ((dist.derived().array() < Scalar(0)).any() || std::abs(dist.sum() - Scalar(1)) > Scalar(1e-9)) {
    throw InputError("softmax_operator: dist is not a probability vector");
  }
  return detail::softmax_operator_unchecked(dist, values, beta);
}

/// Row log-softmax with max subtraction.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> log_softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  const Scalar peak = logits.maxCoeff();
  const Scalar lse = peak + std::log((logits.array() - peak).exp().sum());
  return (logits.array() - lse).matrix();
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(const Eigen::MatrixBase<Derived>& logits) {
  return log_softmax(logits).array().exp().matrix();
}

inline double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace spo
