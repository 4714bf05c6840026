#include "ratchet/meanfield.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>

namespace ratchet::meanfield {

namespace {

constexpr Complex kMinusI{0.0, -1.0};

double sum_sq(std::span<const Complex> a) {
    double s = 0.0;
    for (const auto& z : a) s += std::norm(z);
    return s;
}

void check_norm(double n2, double tol, const char* what) {
    if (!(std::abs(n2 - 1.0) <= tol))
        throw std::invalid_argument(std::string(what) + ": amplitudes not normalised (sum |phi|^2 = " +
                                    std::to_string(n2) + ")");
}

/// e^{i theta_j} for every site.
std::vector<Complex> site_phases(int L) {
    std::vector<Complex> ph(static_cast<std::size_t>(L));
    for (int j = 0; j < L; ++j) ph[static_cast<std::size_t>(j)] = std::polar(1.0, 2.0 * std::numbers::pi * j / L);
    return ph;
}

void dnls_kernel(std::span<const Complex> phi, double t, const RatchetParams& p, std::span<const Complex> phases,
                 std::span<Complex> out) {
    const std::size_t L = phi.size();
    // V_j(t) = Re[(E+ e^{-i w t} + E- e^{i w t}) e^{i theta_j}]
    const double c = std::cos(p.drive_freq_omega * t);
    const double s = std::sin(p.drive_freq_omega * t);
    const double a_re = (p.drive_plus_E + p.drive_minus_E) * c;
    const double a_im = (p.drive_minus_E - p.drive_plus_E) * s;
    const double nl = p.interaction();
    const double J = p.hop_J;
    const Complex scale = kMinusI / p.hbar;
    for (std::size_t j = 0; j < L; ++j) {
        const Complex& left = phi[(j + L - 1) % L];
        const Complex& right = phi[(j + 1) % L];
        const double V = a_re * phases[j].real() - a_im * phases[j].imag();
        out[j] = scale * (-J * (left + right) + (V + nl * std::norm(phi[j])) * phi[j]);
    }
}

}  // namespace

double LatticeState::norm_squared() const { return sum_sq(amps); }

void LatticeState::validate(double tol) const {
    if (amps.size() < 3) throw std::invalid_argument("LatticeState: need at least 3 sites");
    check_norm(norm_squared(), tol, "LatticeState");
}

double ModeState::norm_squared() const { return sum_sq(amps); }

void ModeState::validate(double tol) const {
    if (amps.size() != 3) throw std::invalid_argument("ModeState: exactly 3 amplitudes required");
    check_norm(norm_squared(), tol, "ModeState");
}

double drive_potential(int site, double t, const RatchetParams& p) {
    if (site < 0 || site >= p.sites_L)
        throw std::out_of_range("drive_potential: site " + std::to_string(site) + " outside [0, " +
                                std::to_string(p.sites_L) + ")");
    const double theta = 2.0 * std::numbers::pi * site / p.sites_L;
    return p.drive_plus_E * std::cos(theta - p.drive_freq_omega * t) +
           p.drive_minus_E * std::cos(theta + p.drive_freq_omega * t);
}

void dnls_rhs(std::span<const Complex> phi, double t, const RatchetParams& p, std::span<Complex> out) {
    if (out.size() != phi.size()) throw std::invalid_argument("dnls_rhs: output size mismatch");
    if (static_cast<int>(phi.size()) != p.sites_L) throw std::invalid_argument("dnls_rhs: state length differs from L");
    const auto phases = site_phases(p.sites_L);
    dnls_kernel(phi, t, p, phases, out);
}

Amplitudes dnls_rhs(const LatticeState& s, double t, const RatchetParams& p) {
    Amplitudes out(s.amps.size());
    dnls_rhs(s.amps, t, p, out);
    return out;
}

void gp3_rhs(std::span<const Complex> phi, const RatchetParams& p, std::span<Complex> out) {
    if (phi.size() != 3 || out.size() != 3) throw std::invalid_argument("gp3_rhs: three amplitudes required");
    const double k = -p.interaction() / p.sites_L;
    const double hp = 0.5 * p.drive_plus_E;
    const double hm = 0.5 * p.drive_minus_E;
    const Complex scale = kMinusI / p.hbar;
    const Complex plus = phi[0], zero = phi[1], minus = phi[2];
    out[0] = scale * (k * std::norm(plus) * plus + hp * zero);
    out[1] = scale * (hp * plus + k * std::norm(zero) * zero + hm * minus);
    out[2] = scale * (hm * zero + k * std::norm(minus) * minus);
}

Amplitudes gp3_rhs(const ModeState& s, const RatchetParams& p) {
    Amplitudes out(3);
    gp3_rhs(s.amps, p, out);
    return out;
}

double gp3_energy(std::span<const Complex> phi, const RatchetParams& p) {
    if (phi.size() != 3) throw std::invalid_argument("gp3_energy: three amplitudes required");
    const double k = p.interaction() / p.sites_L;
    double e = p.drive_plus_E * std::real(std::conj(phi[0]) * phi[1]) +
               p.drive_minus_E * std::real(std::conj(phi[2]) * phi[1]);
    for (const auto& z : phi) e -= 0.5 * k * std::norm(z) * std::norm(z);
    return e;
}

Rhs make_dnls_rhs(const RatchetParams& p) {
    p.validate();
    return [p, phases = site_phases(p.sites_L)](std::span<const Complex> phi, double t, std::span<Complex> out) {
        dnls_kernel(phi, t, p, phases, out);
    };
}

Rhs make_gp3_rhs(const RatchetParams& p) {
    p.validate();
    return [p](std::span<const Complex> phi, double, std::span<Complex> out) { gp3_rhs(phi, p, out); };
}

EvolveResult rk4_evolve(Amplitudes y, const Rhs& rhs, double t0, double t1, double dt,
                        std::span<const Observable> observables, std::size_t sample_stride) {
    if (!(dt > 0.0)) throw std::invalid_argument("rk4_evolve: dt must be positive");
    if (sample_stride < 1) throw std::invalid_argument("rk4_evolve: sample_stride must be >= 1");
    if (!((t1 - t0) / dt >= 1.0 - 1e-12)) throw std::invalid_argument("rk4_evolve: interval shorter than one step");

    const auto steps = static_cast<std::size_t>(std::ceil((t1 - t0) / dt - 1e-9));
    const double h = (t1 - t0) / static_cast<double>(steps);
    const std::size_t n = y.size();

    EvolveResult res;
    res.step = h;
    res.steps = steps;
    res.series.reserve(observables.size());
    for (const auto& o : observables) {
        TimeSeries s;
        s.dt = h * static_cast<double>(sample_stride);
        s.label = o.label;
        s.values.reserve(steps / sample_stride + 1);
        s.values.push_back(o.eval(y, t0));
        res.series.push_back(std::move(s));
    }

    Amplitudes k1(n), k2(n), k3(n), k4(n), tmp(n);
    for (std::size_t step = 1; step <= steps; ++step) {
        const double t = t0 + static_cast<double>(step - 1) * h;
        rhs(y, t, k1);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
        rhs(tmp, t + 0.5 * h, k2);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
        rhs(tmp, t + 0.5 * h, k3);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * k3[i];
        rhs(tmp, t + h, k4);
        double check = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            y[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            check += std::norm(y[i]);
        }
        if (!std::isfinite(check))
            throw IntegrationError(step, "rk4_evolve: non-finite amplitude at step " + std::to_string(step) +
                                             " (dt = " + std::to_string(h) + " too large?)");
        if (step % sample_stride == 0) {
            const double ts = t0 + static_cast<double>(step) * h;
            for (std::size_t o = 0; o < observables.size(); ++o)
                res.series[o].values.push_back(observables[o].eval(y, ts));
        }
    }
    res.final_time = t1;
    res.final_state = std::move(y);
    return res;
}

LatticeState initial_state_dnls(const RatchetParams& p) {
    p.validate();
    const auto L = static_cast<std::size_t>(p.sites_L);
    return LatticeState{Amplitudes(L, Complex{1.0 / std::sqrt(static_cast<double>(L)), 0.0})};
}

ModeState initial_state_3gp() { return ModeState{{Complex{0.0}, Complex{1.0}, Complex{0.0}}}; }

double mode_current(std::span<const Complex> phi) {
    if (phi.size() != 3) throw std::invalid_argument("mode_current: three amplitudes required");
    return std::norm(phi[0]) - std::norm(phi[2]);
}

double lattice_current(std::span<const Complex> phi) {
    const int L = static_cast<int>(phi.size());
    if (L < 3) throw std::invalid_argument("lattice_current: need at least 3 sites");
    double current = 0.0;
    for (int m = -(L / 2) + 1; m <= L / 2; ++m) {
        if (m == 0) continue;
        Complex amp{0.0};
        for (int j = 0; j < L; ++j) amp += phi[static_cast<std::size_t>(j)] * std::polar(1.0, -2.0 * std::numbers::pi * m * j / L);
        current += m * std::norm(amp) / L;
    }
    return current;
}

double current_meanfield(const ModeState& s) { return mode_current(s.amps); }
double current_meanfield(const LatticeState& s) { return lattice_current(s.amps); }

double local_density(const LatticeState& s, int site) {
    if (site < 0 || static_cast<std::size_t>(site) >= s.amps.size())
        throw std::out_of_range("local_density: site " + std::to_string(site) + " out of range");
    return std::norm(s.amps[static_cast<std::size_t>(site)]);
}

Observable lattice_current_observable() {
    return {"current", [](std::span<const Complex> phi, double) { return lattice_current(phi); }};
}

Observable mode_current_observable() {
    return {"current", [](std::span<const Complex> phi, double) { return mode_current(phi); }};
}

Observable local_density_observable(int site) {
    return {"density_" + std::to_string(site), [site](std::span<const Complex> phi, double) {
                if (site < 0 || static_cast<std::size_t>(site) >= phi.size())
                    throw std::out_of_range("local_density observable: site out of range");
                return std::norm(phi[static_cast<std::size_t>(site)]);
            }};
}

Observable norm_observable() {
    return {"norm", [](std::span<const Complex> phi, double) { return sum_sq(phi); }};
}

void write_snapshot(const std::filesystem::path& path, std::span<const Complex> amps) {
    static_assert(std::endian::native == std::endian::little, "snapshot format assumes a little-endian host");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    for (const auto& z : amps) {
        const double pair[2] = {z.real(), z.imag()};
        out.write(reinterpret_cast<const char*>(pair), sizeof pair);
    }
}

Amplitudes read_snapshot(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    Amplitudes out;
    double pair[2];
    while (in.read(reinterpret_cast<char*>(pair), sizeof pair)) out.emplace_back(pair[0], pair[1]);
    if (in.gcount() != 0) throw std::runtime_error(path.string() + ": truncated snapshot");
    return out;
}

}  // namespace ratchet::meanfield
