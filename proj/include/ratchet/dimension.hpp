#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ratchet/time_series.hpp"

namespace ratchet::dimension {

struct MutualInformation {
    double nats = 0.0;
    /// The series is constant; nats is 0.
    bool degenerate = false;
};

/// Histogram estimate of I(x_t; x_{t+lag}) with equal-width bins over the series range.
MutualInformation mutual_information(std::span<const double> x, std::size_t lag, std::size_t bins = 64);

struct DelaySelection {
    std::size_t tau = 1;
    /// No interior minimum, or the series decorrelates within one sample.
    bool warning = false;
    std::vector<double> mi;  // I(lag) for lag = 0..max_lag
};

/// First local minimum of I(lag), searched on a centred moving average of
/// half-width `smooth` (0 searches the raw curve). If I(1) is already below
/// 5% of I(0), returns tau = 1 with a warning.
DelaySelection select_delay(std::span<const double> x, std::size_t max_lag, std::size_t bins = 64,
                            std::size_t smooth = 2);

/// Row-major point cloud.
struct PointCloud {
    std::size_t dim = 0;
    std::vector<double> coords;

    std::size_t size() const { return dim == 0 ? 0 : coords.size() / dim; }
    std::span<const double> point(std::size_t i) const { return {coords.data() + i * dim, dim}; }
};

/// v_i = (x_i, x_{i+tau}, ..., x_{i+(m-1)tau}), N - (m-1)tau points.
PointCloud delay_embed(std::span<const double> x, std::size_t m, std::size_t tau);

/// n log-spaced radii from lo to hi inclusive.
std::vector<double> log_grid(double lo, double hi, std::size_t n);

struct PairSampling {
    /// Above this many admissible pairs, pairs are drawn uniformly at random.
    std::uint64_t max_pairs = 500'000'000;
    std::uint64_t seed = 0x5eed;
    std::size_t threads = 0;
};

struct CorrelationSum {
    std::vector<double> C;  // one entry per radius
    std::uint64_t pairs = 0;
    bool exhaustive = true;
    /// Every pair sits at distance zero.
    bool degenerate = false;
};

/// Fraction of pairs (j, k), j - k > w, with max-norm distance < eps.
CorrelationSum correlation_sum(const PointCloud& points, std::span<const double> eps, std::size_t theiler_w,
                               const PairSampling& sampling = {});

/// C(m, eps) for every m in 1..m_max over the common points
/// i = 0..N-1-(m_max-1)tau, built incrementally in m. Row m-1 holds dimension m.
std::vector<CorrelationSum> embedded_correlation_sums(std::span<const double> x, std::size_t tau, std::size_t m_max,
                                                      std::span<const double> eps, std::size_t theiler_w,
                                                      const PairSampling& sampling = {});

struct ScalingRegion {
    std::size_t lo = 0;  // inclusive grid indices
    std::size_t hi = 0;
    double slope = 0.0;
    double slope_err = 0.0;
    double r2 = 0.0;
};

/// Longest contiguous window of >= min_points with R^2 >= r2_min; ties go to the
/// smallest slope error. Points with C = 0 or C = 1 (log C non-finite or 0) are
/// skipped. Throws std::invalid_argument for fewer than 12 grid points.
std::optional<ScalingRegion> find_scaling_region(std::span<const double> log_eps, std::span<const double> log_C,
                                                 double r2_min = 0.99, std::size_t min_points = 5);

struct EmbeddingConfig {
    std::size_t delay_tau = 1;
    std::vector<std::size_t> dims_m{2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
    std::size_t theiler_w = 0;
    /// Empty: 40 radii log-spaced over [1e-3, 1] x the max-norm diameter.
    std::vector<double> epsilon_grid;
    double r2_min = 0.99;
    double plateau_tol = 0.15;
    std::size_t plateau_min = 3;
    /// Per-m rise tolerated inside a plateau.
    double drift_tol = 0.05;
    PairSampling sampling;

    void validate(std::size_t series_length) const;
};

/// tau from select_delay (max lag min(N/10, 1000)), w = ceil(sqrt N), m = 2..12.
EmbeddingConfig default_embedding_config(std::span<const double> x);

struct SlopeAtM {
    std::size_t m = 0;
    bool accepted = false;
    ScalingRegion region;
};

struct DimensionEstimate {
    std::string label;
    bool ok = false;
    /// Why there is no estimate; empty when ok.
    std::string failure;
    double d2 = 0.0;
    double d2_err = 0.0;
    std::size_t plateau_start_m = 0;
    std::size_t tau = 0;
    std::size_t w = 0;
    std::uint64_t seed = 0;
    std::vector<SlopeAtM> per_m;
    std::vector<double> epsilon;
    std::vector<std::vector<double>> C;  // C[i] belongs to per_m[i]

    std::string to_json() const;
    /// eps followed by one C column per m.
    void write_correlation_csv(const std::filesystem::path& path) const;
};

/// Plateau over consecutive accepted m: the earliest start from which every
/// step changes the slope by at most plateau_tol, spanning >= plateau_min values,
/// with a fitted trend no steeper than drift_tol per m.
void assign_plateau(DimensionEstimate& est, const EmbeddingConfig& cfg);

DimensionEstimate correlation_dimension(const TimeSeries& series, const EmbeddingConfig& cfg);

}  // namespace ratchet::dimension
