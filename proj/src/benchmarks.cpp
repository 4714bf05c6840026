#include "ratchet/benchmarks.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace ratchet::benchmarks {

TimeSeries lorenz_x(std::size_t samples, double dt, std::size_t substeps, std::size_t transient) {
    if (!(dt > 0.0) || substeps < 1) throw std::invalid_argument("lorenz_x: dt and substeps must be positive");
    using V = std::array<double, 3>;
    constexpr double sigma = 10.0, rho = 28.0, beta = 8.0 / 3.0;
    const auto f = [](const V& s) -> V {
        return {sigma * (s[1] - s[0]), s[0] * (rho - s[2]) - s[1], s[0] * s[1] - beta * s[2]};
    };
    const auto axpy = [](const V& a, double h, const V& b) -> V { return {a[0] + h * b[0], a[1] + h * b[1], a[2] + h * b[2]}; };
    const double h = dt / static_cast<double>(substeps);
    V s{1.0, 1.0, 1.0};
    TimeSeries out(dt, {}, "lorenz_x");
    out.values.reserve(samples);
    for (std::size_t i = 0; i < transient + samples; ++i) {
        for (std::size_t k = 0; k < substeps; ++k) {
            const V k1 = f(s), k2 = f(axpy(s, 0.5 * h, k1)), k3 = f(axpy(s, 0.5 * h, k2)), k4 = f(axpy(s, h, k3));
            for (int c = 0; c < 3; ++c) s[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
        if (i >= transient) out.values.push_back(s[0]);
    }
    return out;
}

TimeSeries logistic_map(std::size_t samples, double r, double x0, std::size_t transient) {
    if (!(x0 > 0.0 && x0 < 1.0)) throw std::invalid_argument("logistic_map: x0 must lie in (0, 1)");
    TimeSeries out(1.0, {}, "logistic");
    out.values.reserve(samples);
    double x = x0;
    for (std::size_t i = 0; i < transient + samples; ++i) {
        x = r * x * (1.0 - x);
        if (i >= transient) out.values.push_back(x);
    }
    return out;
}

TimeSeries sine(std::size_t samples, double period, double phase) {
    if (!(period > 0.0)) throw std::invalid_argument("sine: period must be positive");
    TimeSeries out(1.0, std::vector<double>(samples), "sine");
    for (std::size_t i = 0; i < samples; ++i)
        out.values[i] = std::sin(2.0 * std::numbers::pi * static_cast<double>(i) / period + phase);
    return out;
}

std::vector<double> uniform_square(std::size_t points, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> xy(2 * points);
    for (auto& v : xy) v = u(rng);
    return xy;
}

}  // namespace ratchet::benchmarks
