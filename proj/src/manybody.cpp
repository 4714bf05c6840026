#include "ratchet/manybody.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>

namespace ratchet::manybody {

using Complex = std::complex<double>;

FockBasis::FockBasis(int particles) : particles_(particles) {
    if (particles < 1 || particles > kMaxParticles)
        throw std::out_of_range("FockBasis: particle number " + std::to_string(particles) + " outside [1, " +
                                std::to_string(kMaxParticles) + "]");
    const auto N = particles;
    states_.reserve(static_cast<std::size_t>((N + 1) * (N + 2) / 2));
    for (int p = N; p >= 0; --p)
        for (int z = N - p; z >= 0; --z) states_.push_back({p, z, N - p - z});

    for (int mu = 0; mu < 3; ++mu)
        for (int nu = 0; nu < 3; ++nu) {
            auto& table = transitions_[static_cast<std::size_t>(3 * mu + nu)];
            for (std::size_t i = 0; i < states_.size(); ++i) {
                const auto& s = states_[i];
                if (s[nu] == 0) continue;
                if (mu == nu) {
                    table.push_back({i, i, static_cast<double>(s[nu])});
                    continue;
                }
                std::array<int, 3> occ{s.plus, s.zero, s.minus};
                const double amp = std::sqrt(static_cast<double>(occ[nu]) * (occ[mu] + 1));
                --occ[nu];
                ++occ[mu];
                table.push_back({i, *index_of({occ[0], occ[1], occ[2]}), amp});
            }
        }
}

std::optional<std::size_t> FockBasis::index_of(const Occupation& s) const {
    if (s.plus < 0 || s.zero < 0 || s.minus < 0 || s.total() != particles_) return std::nullopt;
    // Descending order: the blocks with larger n_+ hold (N - n_+)(N - n_+ + 1) / 2 states.
    const long r = particles_ - s.plus;
    const long rank = r * (r + 1) / 2 + (r - s.zero);
    return static_cast<std::size_t>(rank);
}

void ManyBodyState::validate(double tol) const {
    if (!basis) throw std::invalid_argument("ManyBodyState: no basis");
    if (static_cast<std::size_t>(coeffs.size()) != basis->size())
        throw std::invalid_argument("ManyBodyState: coefficient count " + std::to_string(coeffs.size()) +
                                    " does not match basis size " + std::to_string(basis->size()));
    if (!(std::abs(coeffs.norm() - 1.0) <= tol))
        throw std::invalid_argument("ManyBodyState: not normalised (norm = " + std::to_string(coeffs.norm()) + ")");
}

Eigensystem Eigensystem::diagonalize(const Eigen::MatrixXd& h) {
    if (h.rows() != h.cols() || h.rows() == 0) throw std::invalid_argument("diagonalize: square, non-empty matrix required");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(h);
    if (solver.info() != Eigen::Success) throw std::runtime_error("diagonalize: eigensolver did not converge");
    return {solver.eigenvalues(), solver.eigenvectors()};
}

Eigen::MatrixXd build_h3ls(const RatchetParams& p, const FockBasis& basis) {
    p.validate();
    const auto n = static_cast<Eigen::Index>(basis.size());
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
    const double U = p.interaction() / basis.particles();
    const double diag = -U / (2.0 * p.sites_L);
    for (Eigen::Index i = 0; i < n; ++i) {
        double sum = 0.0;
        for (int m = 0; m < 3; ++m) {
            const double k = basis[static_cast<std::size_t>(i)][m];
            sum += k * (k - 1.0);
        }
        h(i, i) = diag * sum;
    }
    // mode 1 -> mode 0 carries E+/2, mode 1 -> mode 2 carries E-/2; mirror for h.c.
    const auto hop = [&](int mu, double coupling) {
        for (const auto& tr : basis.transitions(mu, 1)) {
            const auto a = static_cast<Eigen::Index>(tr.to);
            const auto b = static_cast<Eigen::Index>(tr.from);
            h(a, b) += coupling * tr.amp;
            h(b, a) += coupling * tr.amp;
        }
    };
    hop(0, 0.5 * p.drive_plus_E);
    hop(2, 0.5 * p.drive_minus_E);
    return h;
}

ManyBodyState initial_state_3ls(const BasisPtr& basis) {
    if (!basis) throw std::invalid_argument("initial_state_3ls: no basis");
    ManyBodyState s{basis, Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(basis->size()))};
    s.coeffs(static_cast<Eigen::Index>(*basis->index_of({0, basis->particles(), 0}))) = 1.0;
    return s;
}

Propagator::Propagator(std::shared_ptr<const Eigensystem> eig, const ManyBodyState& psi0, double hbar)
    : eig_(std::move(eig)), psi0_(psi0), hbar_(hbar) {
    if (!eig_) throw std::invalid_argument("Propagator: no eigensystem");
    if (!(hbar > 0.0)) throw std::invalid_argument("Propagator: hbar must be positive");
    psi0_.validate(1e-8);
    if (eig_->size() != psi0_.basis->size()) throw std::invalid_argument("Propagator: eigensystem and state sizes differ");
    const Eigen::MatrixXd vt = eig_->vectors.transpose();
    overlaps_ = vt * psi0_.coeffs.real() + Complex{0.0, 1.0} * (vt * psi0_.coeffs.imag());
}

ManyBodyState Propagator::state_at(double t) const {
    const auto n = overlaps_.size();
    Eigen::VectorXd re(n), im(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const Complex c = overlaps_(k) * std::polar(1.0, -eig_->energies(k) * t / hbar_);
        re(k) = c.real();
        im(k) = c.imag();
    }
    ManyBodyState s{psi0_.basis, {}};
    s.coeffs = (eig_->vectors * re).cast<Complex>() + Complex{0.0, 1.0} * (eig_->vectors * im).cast<Complex>();
    return s;
}

double Propagator::fidelity_at(double t) const {
    Complex sum{0.0};
    for (Eigen::Index k = 0; k < overlaps_.size(); ++k)
        sum += std::norm(overlaps_(k)) * std::polar(1.0, -eig_->energies(k) * t / hbar_);
    return std::abs(sum);
}

std::vector<ManyBodyState> evolve_3ls(const Eigensystem& eig, const ManyBodyState& psi0, std::span<const double> times,
                                      double hbar) {
    const Propagator prop(std::make_shared<const Eigensystem>(eig), psi0, hbar);
    std::vector<ManyBodyState> out;
    out.reserve(times.size());
    for (double t : times) out.push_back(prop.state_at(t));
    return out;
}

SingleParticleDensityMatrix spdm(const ManyBodyState& psi) {
    if (!psi.basis || static_cast<std::size_t>(psi.coeffs.size()) != psi.basis->size())
        throw std::invalid_argument("spdm: state does not match its basis");
    SingleParticleDensityMatrix rho = SingleParticleDensityMatrix::Zero();
    for (int mu = 0; mu < 3; ++mu)
        for (int nu = 0; nu < 3; ++nu) {
            Complex acc{0.0};
            for (const auto& tr : psi.basis->transitions(mu, nu))
                acc += std::conj(psi.coeffs(static_cast<Eigen::Index>(tr.to))) * tr.amp *
                       psi.coeffs(static_cast<Eigen::Index>(tr.from));
            rho(mu, nu) = acc;
        }
    return rho;
}

double depletion(const SingleParticleDensityMatrix& rho, int particles) {
    if (particles < 1) throw std::invalid_argument("depletion: particle number must be positive");
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3cd> solver(rho, Eigen::EigenvaluesOnly);
    return 1.0 - solver.eigenvalues().maxCoeff() / particles;
}

double fidelity(const ManyBodyState& psi0, const ManyBodyState& psi_t) {
    if (psi0.coeffs.size() != psi_t.coeffs.size()) throw std::invalid_argument("fidelity: state sizes differ");
    return std::abs(psi0.coeffs.dot(psi_t.coeffs));
}

double current_3ls(const ManyBodyState& psi) {
    if (!psi.basis || static_cast<std::size_t>(psi.coeffs.size()) != psi.basis->size())
        throw std::invalid_argument("current_3ls: state does not match its basis");
    double acc = 0.0;
    for (std::size_t i = 0; i < psi.basis->size(); ++i) {
        const auto& s = (*psi.basis)[i];
        acc += (s.plus - s.minus) * std::norm(psi.coeffs(static_cast<Eigen::Index>(i)));
    }
    return acc / psi.basis->particles();
}

double energy_expectation(const Eigen::MatrixXd& h, const ManyBodyState& psi) {
    if (h.rows() != psi.coeffs.size()) throw std::invalid_argument("energy_expectation: size mismatch");
    const Eigen::VectorXcd hpsi = h.cast<Complex>() * psi.coeffs;
    return psi.coeffs.dot(hpsi).real();
}

IntegratedError integrated_error_time(const TimeSeries& mb, const TimeSeries& mf, double threshold,
                                      ErrorMeasure measure, double time_unit) {
    mb.validate();
    mf.validate();
    if (std::abs(mb.dt - mf.dt) > 1e-9 * mb.dt)
        throw std::invalid_argument("integrated_error_time: series have different dt (" + std::to_string(mb.dt) +
                                    " vs " + std::to_string(mf.dt) + ")");
    if (mb.size() != mf.size()) throw std::invalid_argument("integrated_error_time: series lengths differ");
    if (!(threshold > 0.0)) throw std::invalid_argument("integrated_error_time: threshold must be positive");
    if (!(time_unit > 0.0)) throw std::invalid_argument("integrated_error_time: time unit must be positive");

    const std::size_t n = mb.size();
    const double dt = mb.dt;
    IntegratedError res;
    res.error = TimeSeries{dt, std::vector<double>(n), "integrated_error"};
    auto& ie = res.error.values;

    double integral = 0.0;
    double prev = std::abs(mb.values[0] - mf.values[0]);
    ie[0] = measure == ErrorMeasure::cumulative ? 0.0 : prev;
    for (std::size_t i = 1; i < n; ++i) {
        const double cur = std::abs(mb.values[i] - mf.values[i]);
        integral += 0.5 * dt * (prev + cur);
        prev = cur;
        ie[i] = measure == ErrorMeasure::cumulative ? integral / time_unit : integral / (dt * static_cast<double>(i));
    }

    for (std::size_t i = 1; i < n; ++i)
        if (ie[i] > threshold) {
            const double frac = ie[i - 1] < threshold ? (threshold - ie[i - 1]) / (ie[i] - ie[i - 1]) : 0.0;
            res.exceeded = true;
            res.index = i;
            res.time = (static_cast<double>(i - 1) + frac) * dt;
            return res;
        }
    res.index = n - 1;
    res.time = mb.duration();
    return res;
}

std::size_t LatticeFockBasis::index_of(const std::vector<int>& occ) const {
    // states are sorted in descending lexicographic order
    const auto it = std::lower_bound(states.begin(), states.end(), occ, std::greater<>{});
    if (it == states.end() || *it != occ) throw std::out_of_range("LatticeFockBasis: occupation not in basis");
    return static_cast<std::size_t>(it - states.begin());
}

LatticeFockBasis build_lattice_basis(int particles, int sites) {
    if (particles < 1 || particles > 8) throw std::out_of_range("build_lattice_basis: particles must be in [1, 8]");
    if (sites < 2 || sites > 12) throw std::out_of_range("build_lattice_basis: sites must be in [2, 12]");
    LatticeFockBasis b{particles, sites, {}};
    std::vector<int> occ(static_cast<std::size_t>(sites), 0);
    occ[0] = particles;
    // Descending lexicographic enumeration of compositions.
    while (true) {
        b.states.push_back(occ);
        int k = sites - 2;
        while (k >= 0 && occ[static_cast<std::size_t>(k)] == 0) --k;
        if (k < 0) break;
        const auto uk = static_cast<std::size_t>(k);
        --occ[uk];
        const int rest = occ.back() + 1;
        occ.back() = 0;
        occ[uk + 1] = rest;
    }
    return b;
}

Eigen::MatrixXd build_bose_hubbard(const RatchetParams& p, int particles, int sites, double t) {
    p.validate();
    const auto basis = build_lattice_basis(particles, sites);
    const auto n = static_cast<Eigen::Index>(basis.states.size());
    const double U = p.interaction() / particles;
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);

    std::vector<double> v(static_cast<std::size_t>(sites));
    for (int j = 0; j < sites; ++j) {
        const double theta = 2.0 * std::numbers::pi * j / sites;
        v[static_cast<std::size_t>(j)] = p.drive_plus_E * std::cos(theta - p.drive_freq_omega * t) +
                                         p.drive_minus_E * std::cos(theta + p.drive_freq_omega * t);
    }

    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& occ = basis.states[static_cast<std::size_t>(i)];
        double d = 0.0;
        for (std::size_t j = 0; j < occ.size(); ++j) d += 0.5 * U * occ[j] * (occ[j] - 1) + v[j] * occ[j];
        h(i, i) = d;
        // b^dag_{j+1} b_j and its conjugate cover every bond once
        for (int j = 0; j < sites; ++j) {
            const auto a = static_cast<std::size_t>(j);
            const auto b = static_cast<std::size_t>((j + 1) % sites);
            if (sites == 2 && j == 1) break;
            if (occ[a] == 0) continue;
            auto next = occ;
            const double amp = std::sqrt(static_cast<double>(occ[a]) * (occ[b] + 1));
            --next[a];
            ++next[b];
            const auto k = static_cast<Eigen::Index>(basis.index_of(next));
            h(k, i) -= p.hop_J * amp;
            h(i, k) -= p.hop_J * amp;
        }
    }
    return h;
}

EigenCacheKey cache_key(const RatchetParams& p, int particles) {
    return {particles, p.coupling_g, p.drive_plus_E, p.drive_minus_E, p.hop_J, p.hbar, p.sites_L};
}

namespace {

constexpr char kMagic[8] = {'R', '3', 'L', 'S', 'E', 'I', 'G', '2'};

template <typename T>
void put(std::string& buf, const T& v) {
    buf.append(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
bool get(std::istream& in, T& v) {
    return static_cast<bool>(in.read(reinterpret_cast<char*>(&v), sizeof v));
}

void put_key(std::string& buf, const EigenCacheKey& k) {
    put(buf, static_cast<std::int32_t>(k.particles));
    put(buf, static_cast<std::int32_t>(k.sites));
    for (double d : {k.g, k.e_plus, k.e_minus, k.J, k.hbar}) put(buf, d);
}

}  // namespace

void save_eigensystem(const std::filesystem::path& path, const EigenCacheKey& key, const Eigensystem& eig) {
    static_assert(std::endian::native == std::endian::little, "cache format assumes a little-endian host");
    std::string buf(kMagic, sizeof kMagic);
    put_key(buf, key);
    const auto n = static_cast<std::uint64_t>(eig.size());
    put(buf, n);
    buf.append(reinterpret_cast<const char*>(eig.energies.data()), n * sizeof(double));
    buf.append(reinterpret_cast<const char*>(eig.vectors.data()), n * n * sizeof(double));
    write_file_atomic(path, buf);
}

std::optional<Eigensystem> load_eigensystem(const std::filesystem::path& path, const EigenCacheKey& key) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    char magic[sizeof kMagic];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) return std::nullopt;

    std::string expected;
    put_key(expected, key);
    std::string stored(expected.size(), '\0');
    if (!in.read(stored.data(), static_cast<std::streamsize>(stored.size())) || stored != expected) return std::nullopt;

    std::uint64_t n = 0;
    if (!get(in, n) || n == 0 || n > 100000) return std::nullopt;
    Eigensystem eig{Eigen::VectorXd(static_cast<Eigen::Index>(n)),
                    Eigen::MatrixXd(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n))};
    if (!in.read(reinterpret_cast<char*>(eig.energies.data()), static_cast<std::streamsize>(n * sizeof(double))))
        return std::nullopt;
    if (!in.read(reinterpret_cast<char*>(eig.vectors.data()), static_cast<std::streamsize>(n * n * sizeof(double))))
        return std::nullopt;
    return eig;
}

}  // namespace ratchet::manybody
