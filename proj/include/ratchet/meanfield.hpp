#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ratchet/params.hpp"
#include "ratchet/time_series.hpp"

namespace ratchet::meanfield {

using Complex = std::complex<double>;
using Amplitudes = std::vector<Complex>;

/// Site amplitudes phi_j of the driven DNLS on an L-site ring.
struct LatticeState {
    Amplitudes amps;

    std::size_t sites() const { return amps.size(); }
    double norm_squared() const;
    /// Throws std::invalid_argument unless sum |phi_j|^2 = 1 within tol.
    void validate(double tol = 1e-10) const;
};

/// Three-mode amplitudes ordered (phi_+, phi_0, phi_-).
struct ModeState {
    Amplitudes amps = Amplitudes(3);

    double norm_squared() const;
    void validate(double tol = 1e-10) const;
};

/// E+ cos(theta_j - omega t) + E- cos(theta_j + omega t), theta_j = 2 pi j / L.
double drive_potential(int site, double t, const RatchetParams& p);

/// d phi / dt for the DNLS. `out` must have the same length as `phi`.
void dnls_rhs(std::span<const Complex> phi, double t, const RatchetParams& p, std::span<Complex> out);
Amplitudes dnls_rhs(const LatticeState& s, double t, const RatchetParams& p);

/// d phi / dt for the three-mode Gross-Pitaevskii model (time independent).
void gp3_rhs(std::span<const Complex> phi, const RatchetParams& p, std::span<Complex> out);
Amplitudes gp3_rhs(const ModeState& s, const RatchetParams& p);

/// Energy functional whose Wirtinger derivative generates gp3_rhs.
double gp3_energy(std::span<const Complex> phi, const RatchetParams& p);

/// Signature shared by every right-hand side: (state, t, derivative out).
using Rhs = std::function<void(std::span<const Complex>, double, std::span<Complex>)>;

/// DNLS right-hand side with the site phases precomputed.
Rhs make_dnls_rhs(const RatchetParams& p);
Rhs make_gp3_rhs(const RatchetParams& p);

struct Observable {
    std::string label;
    std::function<double(std::span<const Complex>, double)> eval;
};

struct EvolveResult {
    Amplitudes final_state;
    double final_time = 0.0;
    double step = 0.0;
    std::size_t steps = 0;
    /// One series per observable; sample k is at t0 + k * stride * step.
    std::vector<TimeSeries> series;
};

/// Raised when an amplitude becomes non-finite, usually a sign of a too large dt.
class IntegrationError : public std::runtime_error {
public:
    IntegrationError(std::size_t step, const std::string& what)
        : std::runtime_error(what), step_(step) {}
    std::size_t step() const { return step_; }

private:
    std::size_t step_;
};

/// Classical fourth-order Runge-Kutta from t0 to t1.
///
/// The interval is split into ceil((t1 - t0) / dt) equal steps, so the last
/// step lands on t1 exactly and the effective step never exceeds dt.
/// Observables are sampled at t0 and after every `sample_stride` steps.
EvolveResult rk4_evolve(Amplitudes initial, const Rhs& rhs, double t0, double t1, double dt,
                        std::span<const Observable> observables, std::size_t sample_stride);

/// Zero-momentum ground state of the undriven, non-interacting ring.
LatticeState initial_state_dnls(const RatchetParams& p);
/// All weight in the zero mode: (0, 1, 0).
ModeState initial_state_3gp();

/// |phi_+|^2 - |phi_-|^2.
double mode_current(std::span<const Complex> phi);
/// sum_m m |phi~_m|^2 with m in {-floor(L/2)+1, ..., floor(L/2)} and unitary DFT amplitudes.
double lattice_current(std::span<const Complex> phi);
double current_meanfield(const ModeState& s);
double current_meanfield(const LatticeState& s);

double local_density(const LatticeState& s, int site);

/// Observables ready to pass to rk4_evolve.
Observable lattice_current_observable();
Observable mode_current_observable();
Observable local_density_observable(int site);
Observable norm_observable();

/// Little-endian float64 (re, im) pairs, no header.
void write_snapshot(const std::filesystem::path& path, std::span<const Complex> amps);
Amplitudes read_snapshot(const std::filesystem::path& path);

}  // namespace ratchet::meanfield
