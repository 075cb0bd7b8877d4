#pragma once

#include <array>
#include <cmath>
#include <cstddef>

#include "racestack/common.hpp"

namespace racestack {

/// Gauss-Legendre nodes and weights on [-1, 1].
template <std::size_t N>
struct GaussLegendre {
  std::array<double, N> nodes{};
  std::array<double, N> weights{};
};

namespace detail {

template <std::size_t N>
GaussLegendre<N> compute_gauss_legendre() {
  GaussLegendre<N> gl;
  const std::size_t half = (N + 1) / 2;
  for (std::size_t i = 0; i < half; ++i) {
    // Chebyshev-style initial guess, then Newton on P_N.
    double x = std::cos(kPi * (static_cast<double>(i) + 0.75) / (static_cast<double>(N) + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (std::size_t k = 2; k <= N; ++k) {
        const double kk = static_cast<double>(k);
        const double p2 = ((2.0 * kk - 1.0) * x * p1 - (kk - 1.0) * p0) / kk;
        p0 = p1;
        p1 = p2;
      }
      dp = static_cast<double>(N) * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    gl.nodes[i] = -x;
    gl.nodes[N - 1 - i] = x;
    gl.weights[i] = w;
    gl.weights[N - 1 - i] = w;
  }
  return gl;
}

}  // namespace detail

template <std::size_t N>
const GaussLegendre<N>& gauss_legendre() {
  static const GaussLegendre<N> gl = detail::compute_gauss_legendre<N>();
  return gl;
}

}  // namespace racestack
