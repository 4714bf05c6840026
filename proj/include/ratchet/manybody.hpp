#pragma once

#include <Eigen/Dense>

#include <array>
#include <compare>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "ratchet/params.hpp"
#include "ratchet/time_series.hpp"

namespace ratchet::manybody {

/// Occupations (n_+, n_0, n_-) of the three angular-momentum modes.
struct Occupation {
    int plus = 0;
    int zero = 0;
    int minus = 0;

    int operator[](int mode) const { return mode == 0 ? plus : (mode == 1 ? zero : minus); }
    int total() const { return plus + zero + minus; }
    auto operator<=>(const Occupation&) const = default;
};

/// Fock basis of N bosons in three modes in descending lexicographic order, (N, 0, 0) first.
class FockBasis {
public:
    static constexpr int kMaxParticles = 60;

    /// Throws std::out_of_range unless 1 <= N <= kMaxParticles.
    explicit FockBasis(int particles);

    int particles() const { return particles_; }
    std::size_t size() const { return states_.size(); }
    const Occupation& operator[](std::size_t i) const { return states_[i]; }
    std::span<const Occupation> states() const { return states_; }

    /// Closed-form rank of a triple; nullopt if it is not in this sector.
    std::optional<std::size_t> index_of(const Occupation& s) const;

    /// a^dag_mu a_nu connects `from` to `to` with amplitude `amp`.
    struct Transition {
        std::size_t from;
        std::size_t to;
        double amp;
    };
    std::span<const Transition> transitions(int mu, int nu) const {
        return transitions_[static_cast<std::size_t>(3 * mu + nu)];
    }

private:
    int particles_;
    std::vector<Occupation> states_;
    std::array<std::vector<Transition>, 9> transitions_;
};

using BasisPtr = std::shared_ptr<const FockBasis>;

inline BasisPtr build_fock_basis(int particles) { return std::make_shared<const FockBasis>(particles); }

struct ManyBodyState {
    BasisPtr basis;
    Eigen::VectorXcd coeffs;

    double norm() const { return coeffs.norm(); }
    /// Throws std::invalid_argument unless normalised within tol and sized to the basis.
    void validate(double tol = 1e-10) const;
};

/// Dense eigen-decomposition of a real symmetric Hamiltonian.
struct Eigensystem {
    Eigen::VectorXd energies;
    Eigen::MatrixXd vectors;  // columns are eigenvectors

    static Eigensystem diagonalize(const Eigen::MatrixXd& hamiltonian);
    std::size_t size() const { return static_cast<std::size_t>(energies.size()); }
};

/// Three-level Hamiltonian with hopping blocks (E+/2)(a+^dag a0 + h.c.),
/// (E-/2)(a-^dag a0 + h.c.) and diagonal -(U / 2L) sum n(n-1), U = g J / N.
/// Every hopping element is written together with its mirror, so H is exactly symmetric.
Eigen::MatrixXd build_h3ls(const RatchetParams& p, const FockBasis& basis);

/// Fock state (0, N, 0).
ManyBodyState initial_state_3ls(const BasisPtr& basis);

/// Spectral propagator for a fixed initial state.
class Propagator {
public:
    Propagator(std::shared_ptr<const Eigensystem> eig, const ManyBodyState& psi0, double hbar = 1.0);

    ManyBodyState state_at(double t) const;
    /// |<psi(0)|psi(t)>| in O(dim).
    double fidelity_at(double t) const;
    const ManyBodyState& initial() const { return psi0_; }

private:
    std::shared_ptr<const Eigensystem> eig_;
    ManyBodyState psi0_;
    Eigen::VectorXcd overlaps_;  // <k|psi0>
    double hbar_;
};

/// |psi(t)> = sum_k exp(-i E_k t / hbar) <k|psi0> |k> at every requested time.
std::vector<ManyBodyState> evolve_3ls(const Eigensystem& eig, const ManyBodyState& psi0, std::span<const double> times,
                                      double hbar = 1.0);

/// <a^dag_mu a_nu>.
using SingleParticleDensityMatrix = Eigen::Matrix3cd;
SingleParticleDensityMatrix spdm(const ManyBodyState& psi);

/// 1 - lambda_max / N.
double depletion(const SingleParticleDensityMatrix& rho, int particles);
double fidelity(const ManyBodyState& psi0, const ManyBodyState& psi_t);
/// (<n_+> - <n_->) / N.
double current_3ls(const ManyBodyState& psi);
double energy_expectation(const Eigen::MatrixXd& hamiltonian, const ManyBodyState& psi);

enum class ErrorMeasure {
    /// IE(t) = (1/u) * integral_0^t |I_mb - I_mf| dt', u the time unit.
    cumulative,
    /// IE(t) = (1/t) * integral_0^t |I_mb - I_mf| dt'.
    time_average,
};

struct IntegratedError {
    bool exceeded = false;
    /// Threshold crossing time, or the series end when never exceeded.
    double time = 0.0;
    std::size_t index = 0;
    TimeSeries error;
};

/// Earliest time the integrated current error exceeds `threshold` (trapezoidal rule).
IntegratedError integrated_error_time(const TimeSeries& mb, const TimeSeries& mf, double threshold = 0.1,
                                      ErrorMeasure measure = ErrorMeasure::cumulative, double time_unit = 1.0);

/// Small Bose-Hubbard ring with hopping -J, interaction (U/2) n(n-1) and the
/// drive V_j(t); U = g J / N. Only meant to cross-check the reduced models.
struct LatticeFockBasis {
    int particles;
    int sites;
    std::vector<std::vector<int>> states;
    std::size_t index_of(const std::vector<int>& occ) const;
};
LatticeFockBasis build_lattice_basis(int particles, int sites);
Eigen::MatrixXd build_bose_hubbard(const RatchetParams& p, int particles, int sites, double t);

/// Binary eigensystem cache keyed by the parameters that determine H_3LS.
struct EigenCacheKey {
    int particles;
    double g, e_plus, e_minus, J, hbar;
    int sites;
    bool operator==(const EigenCacheKey&) const = default;
};
EigenCacheKey cache_key(const RatchetParams& p, int particles);
void save_eigensystem(const std::filesystem::path& path, const EigenCacheKey& key, const Eigensystem& eig);
/// nullopt when the file is missing, unreadable or stores a different key.
std::optional<Eigensystem> load_eigensystem(const std::filesystem::path& path, const EigenCacheKey& key);

}  // namespace ratchet::manybody
