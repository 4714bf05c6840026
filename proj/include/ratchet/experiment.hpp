#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ratchet/manybody.hpp"
#include "ratchet/params.hpp"
#include "ratchet/time_series.hpp"

namespace ratchet {

enum class Model { dnls, gp3, ls3 };

std::string to_string(Model m);
/// Throws std::invalid_argument for anything but dnls, gp3, ls3.
Model parse_model(const std::string& s);

struct ObservableSpec {
    enum class Kind { current, local_density, depletion, fidelity };
    Kind kind = Kind::current;
    int site = 0;  // local_density only

    /// "current", "density_3", "depletion", "fidelity"
    std::string label() const;
    bool supported_by(Model m) const;
    bool operator==(const ObservableSpec&) const = default;
};

/// Accepts the labels produced by ObservableSpec::label and "local_density(3)".
ObservableSpec parse_observable(const std::string& s);

struct SamplingPlan {
    double duration_TR = 10.0;
    double current_per_TR = 100.0;
    double density_per_TR = 1000.0;
    /// Many-body observables (current, depletion, fidelity).
    double manybody_per_TR = 20.0;
    /// Largest RK4 step; 0 means default_step.
    double dt_max = 0.0;
};

/// Default RK4 step: drive period / 200 for the three-mode model. The lattice
/// carries the fast band phase (|E| ~ 2J), whose RK4 amplitude error grows as
/// dt^5, so it gets drive period / 4000 to hold the norm to 1e-9 over 1000 T_R.
double default_step(Model model, const RatchetParams& p);

/// Mean-field run: every requested observable sampled at its own rate on a
/// shared RK4 grid (step chosen so each rate is a whole number of steps).
std::vector<TimeSeries> simulate_meanfield(Model model, const RatchetParams& p,
                                           const std::vector<ObservableSpec>& observables, const SamplingPlan& plan);

/// Exact 3LS run from (0, N, 0). `eig` may be shared between runs with equal
/// parameters; pass nullptr to diagonalise here.
std::vector<TimeSeries> simulate_3ls(const RatchetParams& p, int particles,
                                     const std::vector<ObservableSpec>& observables, const SamplingPlan& plan,
                                     std::shared_ptr<const manybody::Eigensystem> eig = nullptr);

/// Mean-field 3GP current sampled on the many-body grid, for integrated-error comparisons.
TimeSeries gp3_current_on_manybody_grid(const RatchetParams& p, const SamplingPlan& plan);

}  // namespace ratchet
