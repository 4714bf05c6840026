#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ratchet/time_series.hpp"

namespace ratchet::fitting {

using Params = std::span<const double>;

struct ModelSpec {
    std::string name;
    std::vector<std::string> param_names;
    std::function<double(Params, double)> eval;
    /// Writes d f / d p_k into `grad` (length = arity).
    std::function<void(Params, double, std::span<double>)> jacobian;
    /// Parameters admissible for every abscissa in `x`.
    std::function<bool(Params, std::span<const double> x)> in_domain;

    std::size_t arity() const { return param_names.size(); }
};

/// slope * x + intercept; params (slope, intercept).
ModelSpec linear_model();
/// A tanh(B (x + C)) + D; params (A, B, C, D).
ModelSpec tanh_onset_model();
/// a x^b + c, x > 0; params (a, b, c).
ModelSpec power_offset_model();
/// alpha (x + beta)^delta, x + beta > 0; params (alpha, beta, delta).
ModelSpec shifted_power_model();
/// Throws std::invalid_argument for unknown names.
ModelSpec model_by_name(const std::string& name);

struct FitResult {
    std::string model;
    std::vector<std::string> param_names;
    std::vector<double> params;
    std::vector<double> std_errs;
    double r2 = 0.0;
    bool converged = false;
    std::size_t iterations = 0;
    double residual_norm = 0.0;

    double param(const std::string& name) const;
    double err(const std::string& name) const;
    std::string to_json() const;
};

/// Ordinary least squares. A constant y gives slope 0 and R^2 = 0.
FitResult linear_fit(std::span<const double> x, std::span<const double> y);

struct FitOptions {
    std::size_t max_iter = 500;
    /// Relative parameter change that ends the iteration.
    double xtol = 1e-10;
    /// Largest cosine between the residual and a Jacobian column at convergence.
    double gtol = 1e-8;
};

/// Levenberg-Marquardt: damped Gauss-Newton steps, rejected (and damping raised)
/// when they leave the model domain or do not lower the residual.
FitResult nonlinear_fit(const ModelSpec& model, std::span<const double> x, std::span<const double> y,
                        std::vector<double> init, const FitOptions& opt = {});

/// Data-driven starting points (quartile/rise-time rules for tanh, log-log
/// regression ignoring the offset for the power laws).
std::vector<double> init_tanh_onset(std::span<const double> x, std::span<const double> y);
std::vector<double> init_power_offset(std::span<const double> x, std::span<const double> y);
std::vector<double> init_shifted_power(std::span<const double> x, std::span<const double> y);

/// Raised when a fit exists but fails its acceptance test.
class FitRejected : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct OnsetResult {
    double onset = 0.0;  // -C of the tanh fit
    FitResult fit;
};

/// Turning point of a tanh fit to a rising depletion curve. Throws FitRejected
/// for a series without an onset, R^2 < 0.9, or a turning point outside the data.
OnsetResult depletion_onset_time(const TimeSeries& depletion, const FitOptions& opt = {});

/// Leading part of a depletion curve up to twice the time it first reaches half its maximum.
TimeSeries onset_window(const TimeSeries& depletion);

struct RevivalOptions {
    double threshold = 0.75;
    /// The search starts once the (enveloped) fidelity first drops below this.
    double burn_in_level = 0.5;
    /// Width in time units of a sliding maximum applied first; 0 uses the raw series.
    double envelope_window = 0.0;
    /// Above-threshold stretches separated by at most this time count as one peak.
    double merge_gap = 0.0;
};

struct RevivalResult {
    bool found = false;
    /// The fidelity never dropped below the burn-in level.
    bool never_decayed = false;
    /// Mean time of the above-threshold samples of the first revival peak.
    double time = 0.0;
    double start = 0.0;
    double end = 0.0;
};

RevivalResult revival_time(const TimeSeries& fidelity, const RevivalOptions& opt = {});

/// Centred sliding maximum over `half` samples on each side.
std::vector<double> sliding_max(std::span<const double> x, std::size_t half);

}  // namespace ratchet::fitting
