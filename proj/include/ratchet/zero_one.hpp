#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ratchet/time_series.hpp"

namespace ratchet::chaos {

/// Translation variables of the 0-1 test for one frequency c.
struct PQTrajectory {
    double c = 0.0;
    std::vector<double> p;
    std::vector<double> q;
};

/// p_j = sum_{i<=j} x_i cos(i c), q_j = sum_{i<=j} x_i sin(i c), i starting at 1.
/// Throws std::invalid_argument unless 0 < c < pi and the series has >= 10 samples.
PQTrajectory pq_map(std::span<const double> x, double c);

enum class MsdMethod {
    /// FFT autocorrelation; exact average over every i.
    fft,
    /// Explicit double loop, averaging over every `stride`-th i.
    direct,
};

/// M(j) for j = 1..jmax: mean displacement minus the oscillatory term
/// mean(x)^2 (1 - cos jc) / (1 - cos c).
std::vector<double> modified_msd_curve(std::span<const double> x, const PQTrajectory& pq, std::size_t jmax,
                                       MsdMethod method = MsdMethod::fft, std::size_t stride = 1);

/// Single M(j); 1 <= j <= N/10.
double modified_msd(std::span<const double> x, const PQTrajectory& pq, std::size_t j, std::size_t stride = 1);

struct KcValue {
    double c = 0.0;
    double K = 0.0;
    /// M(j) had zero variance; K is reported as 0.
    bool degenerate = false;
};

/// Correlation of (1..N/10) with M(1..N/10).
KcValue kc_statistic(std::span<const double> x, double c, MsdMethod method = MsdMethod::fft, std::size_t stride = 1);

/// n_c values frac(k phi) * c_max, k = 1..n_c, sorted, duplicates and zeros removed.
std::vector<double> golden_c_grid(double c_max, std::size_t n_c);

struct ZeroOneOptions {
    std::size_t n_c = 100;
    MsdMethod method = MsdMethod::fft;
    std::size_t stride = 1;
    /// 0 picks the hardware concurrency.
    std::size_t threads = 0;
};

struct ZeroOneResult {
    std::string label;
    double K_median = 0.0;
    double c_max = 0.0;
    std::size_t n_c = 0;
    std::vector<KcValue> per_c;  // sorted by c
    /// Every K_c was degenerate (e.g. a constant series).
    bool degenerate = false;

    std::string to_json() const;
};

/// Median K_c over the golden-ratio grid with c_max = 2 pi f_max / f_s.
/// Throws std::invalid_argument if c_max >= pi or n_c < 10.
ZeroOneResult zero_one_test(const TimeSeries& series, double sample_freq, double f_max, const ZeroOneOptions& opt = {});

}  // namespace ratchet::chaos
