#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ratchet/time_series.hpp"

namespace ratchet::benchmarks {

/// x-component of the Lorenz system (sigma, rho, beta) = (10, 28, 8/3), RK4
/// with `substeps` internal steps per sample, after `transient` discarded samples.
TimeSeries lorenz_x(std::size_t samples, double dt = 0.02, std::size_t substeps = 20, std::size_t transient = 5000);

/// x_{n+1} = r x_n (1 - x_n).
TimeSeries logistic_map(std::size_t samples, double r = 3.97, double x0 = 0.3, std::size_t transient = 1000);

/// sin(2 pi i / period + phase).
TimeSeries sine(std::size_t samples, double period, double phase = 0.0);

/// Points drawn uniformly from the unit square, row-major (x, y) pairs.
std::vector<double> uniform_square(std::size_t points, std::uint64_t seed);

}  // namespace ratchet::benchmarks
