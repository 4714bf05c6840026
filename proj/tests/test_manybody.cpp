#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <set>
#include <stdexcept>

#include "doctest.h"
#include "ratchet/experiment.hpp"
#include "ratchet/manybody.hpp"
#include "ratchet/meanfield.hpp"

using namespace ratchet;
using namespace ratchet::manybody;
using cd = std::complex<double>;

namespace {

ManyBodyState fock(const BasisPtr& b, Occupation o) {
    ManyBodyState s{b, Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(b->size()))};
    s.coeffs[static_cast<Eigen::Index>(*b->index_of(o))] = 1.0;
    return s;
}

RatchetParams undriven(double g) {
    auto p = RatchetParams::standard(g);
    p.drive_plus_E = p.drive_minus_E = 0.0;
    return p;
}

}  // namespace

TEST_CASE("Fock basis") {
    const auto b1 = build_fock_basis(1);
    REQUIRE(b1->size() == 3);
    CHECK((*b1)[0] == Occupation{1, 0, 0});
    CHECK((*b1)[1] == Occupation{0, 1, 0});
    CHECK((*b1)[2] == Occupation{0, 0, 1});
    CHECK(build_fock_basis(2)->size() == 6);
    CHECK(build_fock_basis(40)->size() == 861);
    CHECK(build_fock_basis(60)->size() == 1891);
    CHECK_THROWS_AS(build_fock_basis(0), std::out_of_range);
    CHECK_THROWS_AS(build_fock_basis(61), std::out_of_range);

    const auto b = build_fock_basis(13);
    std::set<Occupation> seen;
    for (std::size_t i = 0; i < b->size(); ++i) {
        const auto& s = (*b)[i];
        CHECK(s.total() == 13);
        CHECK(seen.insert(s).second);
        CHECK(*b->index_of(s) == i);
        if (i) CHECK((*b)[i - 1] > s);
    }
    CHECK_FALSE(b->index_of({1, 1, 1}).has_value());
}

TEST_CASE("three-level Hamiltonian") {
    SUBCASE("single particle: no interaction, drive off-diagonals") {
        const auto p = RatchetParams::standard(0.3);
        const auto h = build_h3ls(p, *build_fock_basis(1));
        Eigen::Matrix3d want;
        want << 0, 0.01125, 0, 0.01125, 0, 0.00375, 0, 0.00375, 0;
        CHECK((h - want).cwiseAbs().maxCoeff() < 1e-15);
    }
    SUBCASE("undriven: diagonal -(U/2L) sum n(n-1)") {
        const int N = 5;
        const auto b = build_fock_basis(N);
        const auto p = undriven(0.2);
        const auto h = build_h3ls(p, *b);
        const double u = 0.2 / N;
        for (std::size_t i = 0; i < b->size(); ++i) {
            const auto& s = (*b)[i];
            const double want =
                -u / 12.0 * (s.plus * (s.plus - 1) + s.zero * (s.zero - 1) + s.minus * (s.minus - 1));
            CHECK(h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) == doctest::Approx(want));
        }
        CHECK((h - Eigen::MatrixXd(h.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("two free particles fill single-particle levels") {
        const auto p = RatchetParams::standard(0.0);
        const auto h = build_h3ls(p, *build_fock_basis(2));
        const double w = 0.5 * std::hypot(0.0225, 0.0075);
        const auto e = Eigensystem::diagonalize(h);
        const double want[] = {-2 * w, -w, 0, 0, w, 2 * w};
        for (int k = 0; k < 6; ++k) CHECK(e.energies[k] == doctest::Approx(want[k]).epsilon(1e-12));
    }
    SUBCASE("exactly symmetric") {
        const auto h = build_h3ls(RatchetParams::standard(0.14), *build_fock_basis(17));
        CHECK((h - h.transpose()).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("eigensystem is orthonormal and exact") {
    const auto h = build_h3ls(RatchetParams::standard(0.14), *build_fock_basis(12));
    const auto e = Eigensystem::diagonalize(h);
    const auto n = static_cast<Eigen::Index>(e.size());
    CHECK((e.vectors.transpose() * e.vectors - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((h * e.vectors - e.vectors * e.energies.asDiagonal()).cwiseAbs().maxCoeff() < 1e-8 * h.norm());
}

TEST_CASE("time evolution") {
    const auto p = RatchetParams::standard(0.0);
    const auto b = build_fock_basis(1);
    auto eig = std::make_shared<const Eigensystem>(Eigensystem::diagonalize(build_h3ls(p, *b)));
    const auto psi0 = initial_state_3ls(b);
    CHECK(std::abs(psi0.coeffs[1] - 1.0) == 0.0);
    const Propagator prop(eig, psi0);
    CHECK((prop.state_at(0.0).coeffs - psi0.coeffs).norm() < 1e-14);
    const double w = p.rabi_frequency();
    std::vector<double> times;
    for (int k = 0; k <= 40; ++k) times.push_back(k * 13.7);
    const auto states = evolve_3ls(*eig, psi0, times);
    for (std::size_t k = 0; k < times.size(); ++k) {
        CHECK(std::norm(states[k].coeffs[1]) == doctest::Approx(std::pow(std::cos(0.5 * w * times[k]), 2)).epsilon(1e-12));
        CHECK(states[k].norm() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(prop.fidelity_at(times[k]) == doctest::Approx(fidelity(psi0, states[k])).epsilon(1e-12));
    }

    // an eigenstate only picks up a phase
    const auto h = build_h3ls(RatchetParams::standard(0.2), *build_fock_basis(6));
    auto e6 = std::make_shared<const Eigensystem>(Eigensystem::diagonalize(h));
    ManyBodyState v{build_fock_basis(6), e6->vectors.col(4).cast<cd>()};
    const Propagator pv(e6, v);
    const auto later = pv.state_at(1234.5);
    CHECK(fidelity(v, later) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(current_3ls(later) == doctest::Approx(current_3ls(v)).epsilon(1e-12));
}

TEST_CASE("single-particle density matrix and depletion") {
    const int N = 6;
    const auto b = build_fock_basis(N);
    const auto rho = spdm(initial_state_3ls(b));
    CHECK((rho - Eigen::Matrix3cd(Eigen::Vector3cd(0, N, 0).asDiagonal())).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(depletion(rho, N) == doctest::Approx(0.0));

    const auto b1 = build_fock_basis(1);
    ManyBodyState s{b1, Eigen::VectorXcd::Zero(3)};
    s.coeffs[0] = s.coeffs[2] = 1.0 / std::sqrt(2.0);
    const auto r1 = spdm(s);
    CHECK(std::real(r1(0, 0)) == doctest::Approx(0.5));
    CHECK(std::real(r1(2, 2)) == doctest::Approx(0.5));
    CHECK(std::abs(r1(1, 1)) < 1e-15);
    CHECK(std::abs(r1(0, 1)) < 1e-15);

    Eigen::Matrix3cd frag = Eigen::Matrix3cd::Identity() * (N / 3.0);
    CHECK(depletion(frag, N) == doctest::Approx(2.0 / 3.0));

    // brute-force <a^dag_mu a_nu> from explicit bosonic matrix elements
    ManyBodyState r{b, Eigen::VectorXcd::Random(static_cast<Eigen::Index>(b->size()))};
    r.coeffs.normalize();
    Eigen::Matrix3cd want = Eigen::Matrix3cd::Zero();
    for (std::size_t i = 0; i < b->size(); ++i)
        for (int mu = 0; mu < 3; ++mu)
            for (int nu = 0; nu < 3; ++nu) {
                std::array<int, 3> occ{(*b)[i].plus, (*b)[i].zero, (*b)[i].minus};
                if (occ[static_cast<std::size_t>(nu)] == 0) continue;
                double amp = std::sqrt(occ[static_cast<std::size_t>(nu)]);
                --occ[static_cast<std::size_t>(nu)];
                amp *= std::sqrt(occ[static_cast<std::size_t>(mu)] + 1);
                ++occ[static_cast<std::size_t>(mu)];
                const auto j = *b->index_of({occ[0], occ[1], occ[2]});
                want(mu, nu) += std::conj(r.coeffs[static_cast<Eigen::Index>(j)]) * amp * r.coeffs[static_cast<Eigen::Index>(i)];
            }
    const auto got = spdm(r);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::real(got.trace()) == doctest::Approx(N).epsilon(1e-10));
    CHECK((got - got.adjoint()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fidelity and current") {
    const auto b = build_fock_basis(4);
    CHECK(fidelity(fock(b, {4, 0, 0}), fock(b, {0, 4, 0})) == 0.0);
    CHECK(fidelity(fock(b, {1, 2, 1}), fock(b, {1, 2, 1})) == 1.0);
    CHECK(current_3ls(fock(b, {0, 4, 0})) == 0.0);
    CHECK(current_3ls(fock(b, {4, 0, 0})) == 1.0);
    CHECK(current_3ls(fock(b, {1, 0, 3})) == -0.5);
    CHECK_THROWS_AS(fidelity(fock(b, {4, 0, 0}), fock(build_fock_basis(3), {3, 0, 0})), std::invalid_argument);
}

TEST_CASE("single particle reproduces the linear three-mode model") {
    const auto p = RatchetParams::standard(0.0);
    SamplingPlan plan;
    plan.duration_TR = 3.0;
    plan.manybody_per_TR = 40.0;
    plan.current_per_TR = 40.0;
    plan.dt_max = p.drive_period() / 2000.0;
    const auto mb = simulate_3ls(p, 1, {ObservableSpec{}}, plan).front();
    const auto mf = gp3_current_on_manybody_grid(p, plan);
    REQUIRE(mb.size() == mf.size());
    for (std::size_t i = 0; i < mb.size(); ++i) CHECK(std::abs(mb.values[i] - mf.values[i]) < 1e-8);
}

TEST_CASE("integrated error") {
    const TimeSeries a(0.5, std::vector<double>(41, 0.3));
    auto off = a;
    for (auto& v : off.values) v += 0.2;

    const auto same = integrated_error_time(a, a, 0.1, ErrorMeasure::time_average);
    CHECK_FALSE(same.exceeded);
    CHECK(same.time == doctest::Approx(a.duration()));

    const auto avg = integrated_error_time(off, a, 0.1, ErrorMeasure::time_average);
    CHECK(avg.exceeded);
    CHECK(avg.time == 0.0);

    // cumulative: 0.2 t / u crosses 0.1 at t = u / 2
    const auto cum = integrated_error_time(off, a, 0.1, ErrorMeasure::cumulative, 4.0);
    CHECK(cum.exceeded);
    CHECK(cum.time == doctest::Approx(2.0));
    CHECK(cum.error.values.back() == doctest::Approx(0.2 * 20.0 / 4.0));

    CHECK_THROWS_AS(integrated_error_time(a, TimeSeries(0.25, a.values)), std::invalid_argument);
    CHECK_THROWS_AS(integrated_error_time(a, TimeSeries(0.5, {})), std::invalid_argument);
}

TEST_CASE("error at a fixed horizon shrinks with N in the Rabi regime") {
    const auto p = RatchetParams::standard(0.03);
    SamplingPlan plan;
    plan.duration_TR = 4.0;
    plan.manybody_per_TR = 50.0;
    const auto mf = gp3_current_on_manybody_grid(p, plan);
    std::vector<double> ie;
    for (int N : {4, 8, 16, 32}) {
        const auto mb = simulate_3ls(p, N, {ObservableSpec{}}, plan).front();
        ie.push_back(integrated_error_time(mb, mf, 1e9, ErrorMeasure::cumulative, p.rabi_period()).error.values.back());
    }
    int violations = 0;
    for (std::size_t i = 1; i < ie.size(); ++i)
        if (ie[i] > ie[i - 1]) {
            ++violations;
            CHECK(ie[i] <= 1.05 * ie[i - 1]);
        }
    CHECK(violations <= 1);
}

TEST_CASE("Bose-Hubbard oracle") {
    SUBCASE("single particle ring dispersion") {
        const auto p = undriven(0.7);
        const auto h = build_bose_hubbard(p, 1, 6, 0.0);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
        std::vector<double> want;
        for (int m = 0; m < 6; ++m) want.push_back(-2.0 * std::cos(2.0 * std::numbers::pi * m / 6.0));
        std::sort(want.begin(), want.end());
        for (int k = 0; k < 6; ++k) CHECK(es.eigenvalues()[k] == doctest::Approx(want[static_cast<std::size_t>(k)]).epsilon(1e-12));
        const auto ground = es.eigenvectors().col(0);
        for (int j = 0; j < 6; ++j) CHECK(std::abs(ground[j]) == doctest::Approx(1.0 / std::sqrt(6.0)));
    }
    SUBCASE("basis dimension and interaction") {
        const auto lb = build_lattice_basis(3, 4);
        CHECK(lb.states.size() == 20);  // C(6, 3)
        CHECK(lb.index_of({3, 0, 0, 0}) == 0);
        const auto p = undriven(0.6);
        const auto h = build_bose_hubbard(p, 3, 4, 0.0);
        // U = g / N = 0.2, three on one site: (U/2) 3 2
        CHECK(h(0, 0) == doctest::Approx(0.6));
        CHECK_THROWS(build_bose_hubbard(p, 9, 6, 0.0));
    }
    SUBCASE("driven single particle matches the linear DNLS") {
        const auto p = RatchetParams::standard(0.0);
        const double t1 = 40.0, dt = 0.01;
        Eigen::VectorXcd psi = Eigen::VectorXcd::Constant(6, 1.0 / std::sqrt(6.0));
        const auto f = [&](double t, const Eigen::VectorXcd& y) -> Eigen::VectorXcd {
            return cd(0, -1) * (build_bose_hubbard(p, 1, 6, t).cast<cd>() * y);
        };
        const auto steps = static_cast<int>(std::round(t1 / dt));
        for (int k = 0; k < steps; ++k) {
            const double t = k * dt;
            const auto k1 = f(t, psi);
            const auto k2 = f(t + dt / 2, psi + dt / 2 * k1);
            const auto k3 = f(t + dt / 2, psi + dt / 2 * k2);
            const auto k4 = f(t + dt, psi + dt * k3);
            psi += dt / 6 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        const auto r = meanfield::rk4_evolve(meanfield::initial_state_dnls(p).amps, meanfield::make_dnls_rhs(p), 0.0, t1, dt, {}, 1);
        const auto lb = build_lattice_basis(1, 6);
        for (int j = 0; j < 6; ++j) {
            std::vector<int> occ(6, 0);
            occ[static_cast<std::size_t>(j)] = 1;
            const auto idx = static_cast<Eigen::Index>(lb.index_of(occ));
            CHECK(std::abs(psi[idx] - r.final_state[static_cast<std::size_t>(j)]) < 1e-9);
        }
    }
}

TEST_CASE("eigensystem cache") {
    const auto p = RatchetParams::standard(0.14);
    const auto e = Eigensystem::diagonalize(build_h3ls(p, *build_fock_basis(5)));
    const auto path = std::filesystem::temp_directory_path() / "ratchet_unit_eig.bin";
    save_eigensystem(path, cache_key(p, 5), e);
    const auto back = load_eigensystem(path, cache_key(p, 5));
    REQUIRE(back.has_value());
    CHECK(back->energies == e.energies);
    CHECK(back->vectors == e.vectors);
    CHECK_FALSE(load_eigensystem(path, cache_key(RatchetParams::standard(0.15), 5)).has_value());
    CHECK_FALSE(load_eigensystem(path, cache_key(p, 6)).has_value());
    CHECK_FALSE(load_eigensystem(path.string() + ".missing", cache_key(p, 5)).has_value());
    std::filesystem::remove(path);
}
