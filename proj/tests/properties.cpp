// Randomised invariants across the library. Every generator is seeded, so a
// failure reproduces exactly.

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <numbers>
#include <random>

#include "doctest.h"
#include "ratchet/benchmarks.hpp"
#include "ratchet/dimension.hpp"
#include "ratchet/experiment.hpp"
#include "ratchet/fitting.hpp"
#include "ratchet/manybody.hpp"
#include "ratchet/meanfield.hpp"
#include "ratchet/zero_one.hpp"

using namespace ratchet;
using cd = std::complex<double>;

namespace {

std::mt19937_64& rng() {
    static std::mt19937_64 g(20240611);
    return g;
}

double uni(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng()); }

manybody::ManyBodyState random_state(const manybody::BasisPtr& b) {
    std::normal_distribution<double> n;
    manybody::ManyBodyState s{b, Eigen::VectorXcd(static_cast<Eigen::Index>(b->size()))};
    for (auto& c : s.coeffs) c = cd(n(rng()), n(rng()));
    s.coeffs.normalize();
    return s;
}

meanfield::Amplitudes random_lattice(int L) {
    std::normal_distribution<double> n;
    meanfield::Amplitudes a(static_cast<std::size_t>(L));
    double s = 0;
    for (auto& z : a) {
        z = cd(n(rng()), n(rng()));
        s += std::norm(z);
    }
    for (auto& z : a) z /= std::sqrt(s);
    return a;
}

std::vector<double> dnls_current_series(const RatchetParams& p, double t1, double dt, std::size_t stride) {
    const auto obs = meanfield::lattice_current_observable();
    return meanfield::rk4_evolve(meanfield::initial_state_dnls(p).amps, meanfield::make_dnls_rhs(p), 0.0, t1, dt,
                                 std::span(&obs, 1), stride)
        .series.front()
        .values;
}

double max_gap(const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_SUITE("mean field") {
    TEST_CASE("rk4 converges at fourth order") {
        // The current carries a sizeable dt^5 term; below dt ~ 0.01 the
        // leading term dominates. Series are compared on the coarse grid.
        const auto p = RatchetParams::standard(0.14);
        const double t1 = 20.0;
        const double h = 0.003125;
        const auto a = dnls_current_series(p, t1, h, 1);
        const auto b = dnls_current_series(p, t1, h / 2, 2);
        const auto c = dnls_current_series(p, t1, h / 4, 4);
        const double order = std::log2(max_gap(a, b) / max_gap(b, c));
        CHECK(order == doctest::Approx(4.0).epsilon(0.05));
    }

    TEST_CASE("norm conserved at random couplings") {
        const auto n = meanfield::norm_observable();
        for (int trial = 0; trial < 2; ++trial) {
            const auto p = RatchetParams::standard(uni(0.0, 0.4));
            CAPTURE(p.coupling_g);
            const auto modes = meanfield::rk4_evolve(meanfield::initial_state_3gp().amps, meanfield::make_gp3_rhs(p), 0.0,
                                                     1000.0 * p.rabi_period(), default_step(Model::gp3, p),
                                                     std::span(&n, 1), 1000);
            for (double v : modes.series[0].values) CHECK(std::abs(v - 1.0) <= 1e-8);
            // Drift is linear in time; 10 T_R at 1e-10 stands for 1000 T_R at 1e-8.
            const auto lattice = meanfield::rk4_evolve(meanfield::initial_state_dnls(p).amps, meanfield::make_dnls_rhs(p),
                                                       0.0, 10.0 * p.rabi_period(), default_step(Model::dnls, p),
                                                       std::span(&n, 1), 1000);
            for (double v : lattice.series[0].values) CHECK(std::abs(v - 1.0) <= 1e-10);
        }
    }

    TEST_CASE("three-mode energy is an invariant") {
        for (int trial = 0; trial < 5; ++trial) {
            const auto p = RatchetParams::standard(uni(0.0, 0.4));
            const auto y0 = random_lattice(3);
            const double e0 = meanfield::gp3_energy(y0, p);
            const auto r = meanfield::rk4_evolve(y0, meanfield::make_gp3_rhs(p), 0.0, 3000.0, p.drive_period() / 200.0,
                                                 {}, 1000);
            CHECK(std::abs(meanfield::gp3_energy(r.final_state, p) - e0) < 1e-10);
        }
    }
}

TEST_SUITE("many body") {
    TEST_CASE("unitarity, hermiticity, energy") {
        for (int N : {3, 9, 20}) {
            const auto p = RatchetParams::standard(uni(0.0, 0.4));
            const auto b = manybody::build_fock_basis(N);
            const auto h = manybody::build_h3ls(p, *b);
            CHECK((h - h.transpose()).cwiseAbs().maxCoeff() == 0.0);
            auto eig = std::make_shared<const manybody::Eigensystem>(manybody::Eigensystem::diagonalize(h));
            const auto psi0 = random_state(b);
            const manybody::Propagator prop(eig, psi0);
            const double e0 = manybody::energy_expectation(h, psi0);
            for (int k = 0; k < 20; ++k) {
                const auto psi = prop.state_at(uni(0.0, 1e5));
                CHECK(std::abs(psi.norm() - 1.0) < 1e-12);
                CHECK(std::abs(manybody::energy_expectation(h, psi) - e0) < 1e-10);
            }
        }
    }

    TEST_CASE("density matrix of random states") {
        for (int trial = 0; trial < 30; ++trial) {
            const int N = 1 + static_cast<int>(rng()() % 30);
            const auto psi = random_state(manybody::build_fock_basis(N));
            const auto rho = manybody::spdm(psi);
            CHECK((rho - rho.adjoint()).cwiseAbs().maxCoeff() < 1e-10);
            CHECK(std::abs(rho.trace() - cd(N)) < 1e-8);
            const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3cd> es(rho);
            CHECK(es.eigenvalues().minCoeff() > -1e-8);
            CHECK(es.eigenvalues().maxCoeff() < N + 1e-8);
            const double d = manybody::depletion(rho, N);
            CHECK(d >= -1e-12);
            CHECK(d < 1.0);
            const double cur = manybody::current_3ls(psi);
            CHECK(std::abs(cur) <= 1.0 + 1e-12);
        }
    }
}

TEST_SUITE("zero-one test") {
    TEST_CASE("K_c bounded and scale invariant") {
        const auto x = benchmarks::logistic_map(4000).values;
        const auto s = benchmarks::sine(4000, 31.7).values;
        for (int trial = 0; trial < 20; ++trial) {
            const double c = uni(0.05, 3.0);
            const double a = trial % 2 ? uni(0.01, 100.0) : -uni(0.01, 100.0);
            for (const auto* series : {&x, &s}) {
                auto scaled = *series;
                for (auto& v : scaled) v *= a;
                const auto k1 = chaos::kc_statistic(*series, c);
                const auto k2 = chaos::kc_statistic(scaled, c);
                CHECK(k1.K >= -1.0);
                CHECK(k1.K <= 1.0);
                CHECK(k2.K == doctest::Approx(k1.K).epsilon(1e-9));
            }
        }
    }

    TEST_CASE("offset by one standard deviation keeps chaos visible") {
        auto x = benchmarks::logistic_map(10000).values;
        double m = 0, v = 0;
        for (double e : x) m += e;
        m /= static_cast<double>(x.size());
        for (double e : x) v += (e - m) * (e - m);
        const double sd = std::sqrt(v / static_cast<double>(x.size()));
        for (auto& e : x) e = e - m + sd;
        CHECK(chaos::zero_one_test(TimeSeries(1.0, x), 1.0, 0.4).K_median > 0.9);
    }

    TEST_CASE("golden grid avoids coincidences with the dominant frequency") {
        for (int trial = 0; trial < 10; ++trial) {
            const double c_max = uni(0.2, 3.1);
            const auto g = chaos::golden_c_grid(c_max, 100);
            for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] - g[i - 1] > 1e-9);
            // a dominant angular frequency per sample equal to c_max / 2: no c within 1e-6 of a small rational multiple
            const double w = c_max / 2;
            for (double c : g)
                for (int pn = 1; pn <= 4; ++pn)
                    for (int qn = 1; qn <= 4; ++qn) CHECK(std::abs(c - w * pn / qn) > 1e-6);
        }
    }

    TEST_CASE("bit-identical repeats") {
        const auto x = benchmarks::logistic_map(3000);
        chaos::ZeroOneOptions o;
        o.threads = 3;
        const auto a = chaos::zero_one_test(x, 1.0, 0.3, o);
        o.threads = 1;
        const auto b = chaos::zero_one_test(x, 1.0, 0.3, o);
        CHECK(a.to_json() == b.to_json());
    }
}

TEST_SUITE("correlation dimension") {
    TEST_CASE("C(eps) monotone and invariant under permutations and isometries") {
        const auto eps = dimension::log_grid(1e-3, 2.0, 30);
        for (int trial = 0; trial < 5; ++trial) {
            const std::size_t dim = 1 + rng()() % 4;
            dimension::PointCloud pc{dim, {}};
            for (std::size_t i = 0; i < 600 * dim; ++i) pc.coords.push_back(uni(-1.0, 1.0));
            const auto base = dimension::correlation_sum(pc, eps, 0);
            for (std::size_t i = 1; i < eps.size(); ++i) CHECK(base.C[i] >= base.C[i - 1]);

            // permutation of the points
            std::vector<std::size_t> order(pc.size());
            std::iota(order.begin(), order.end(), 0);
            std::shuffle(order.begin(), order.end(), rng());
            dimension::PointCloud perm{dim, {}};
            for (auto k : order)
                for (std::size_t d = 0; d < dim; ++d) perm.coords.push_back(pc.coords[k * dim + d]);
            CHECK(dimension::correlation_sum(perm, eps, 0).C == base.C);

            // translation, reflection and axis permutation preserve max-norm distances
            dimension::PointCloud moved{dim, pc.coords};
            const double shift = uni(-10.0, 10.0);
            for (std::size_t i = 0; i < moved.size(); ++i) {
                auto pt = std::vector<double>(pc.coords.begin() + static_cast<std::ptrdiff_t>(i * dim),
                                              pc.coords.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
                std::reverse(pt.begin(), pt.end());
                for (std::size_t d = 0; d < dim; ++d) moved.coords[i * dim + d] = (d % 2 ? -pt[d] : pt[d]) + shift;
            }
            const auto iso = dimension::correlation_sum(moved, eps, 0);
            for (std::size_t i = 0; i < eps.size(); ++i) CHECK(iso.C[i] == doctest::Approx(base.C[i]).epsilon(1e-3));
        }
    }

    TEST_CASE("slopes saturate with m and survive small parameter changes") {
        std::vector<double> x(30000);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double t = static_cast<double>(i);
            x[i] = std::sin(0.07 * t) + 0.5 * std::sin(0.07 * std::numbers::phi * t);
        }
        auto cfg = dimension::default_embedding_config(x);
        cfg.dims_m = {2, 3, 4, 5, 6, 7, 8};
        cfg.sampling.max_pairs = 4'000'000;
        const TimeSeries s(1.0, x);
        const auto e = dimension::correlation_dimension(s, cfg);
        REQUIRE(e.ok);
        CHECK(e.d2 == doctest::Approx(2.0).epsilon(0.075));
        for (std::size_t i = 1; i < e.per_m.size(); ++i)
            if (e.per_m[i].accepted && e.per_m[i - 1].accepted)
                CHECK(e.per_m[i].region.slope >= e.per_m[i - 1].region.slope - 2 * e.per_m[i].region.slope_err - 1e-9);

        for (double ft : {0.9, 1.1})
            for (double fw : {0.8, 1.2}) {
                auto c2 = cfg;
                c2.delay_tau = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cfg.delay_tau * ft)));
                c2.theiler_w = static_cast<std::size_t>(std::lround(cfg.theiler_w * fw));
                const auto e2 = dimension::correlation_dimension(s, c2);
                REQUIRE(e2.ok);
                CHECK(std::abs(e2.d2 - e.d2) < e.d2_err + 0.1);
            }
    }
}

TEST_SUITE("fitting") {
    TEST_CASE("analytic Jacobians match central differences") {
        struct Box {
            const char* name;
            std::vector<std::pair<double, double>> p;
            std::pair<double, double> x;
        };
        const Box boxes[] = {
            {"linear", {{-5, 5}, {-5, 5}}, {-10, 10}},
            {"tanh_onset", {{0.1, 2}, {0.01, 1}, {-50, 0}, {-1, 1}}, {0, 60}},
            {"power_offset", {{0.1, 5}, {-1.5, 1.5}, {-3, 3}}, {1, 40}},
            {"shifted_power", {{0.1, 5}, {-0.5, 3}, {-1, 1}}, {1, 40}},
        };
        for (const auto& box : boxes) {
            const auto m = fitting::model_by_name(box.name);
            for (int trial = 0; trial < 100; ++trial) {
                std::vector<double> p;
                for (const auto& [lo, hi] : box.p) p.push_back(uni(lo, hi));
                const double x = uni(box.x.first, box.x.second);
                std::vector<double> grad(p.size());
                m.jacobian(p, x, grad);
                for (std::size_t k = 0; k < p.size(); ++k) {
                    const double h = 1e-6 * std::max(1.0, std::abs(p[k]));
                    auto up = p, dn = p;
                    up[k] += h;
                    dn[k] -= h;
                    const double fd = (m.eval(up, x) - m.eval(dn, x)) / (2 * h);
                    CHECK(std::abs(fd - grad[k]) <= 1e-5 * std::max(1.0, std::abs(grad[k])));
                }
            }
        }
    }

    TEST_CASE("linear fit is scale equivariant") {
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<double> x, y;
            for (int i = 0; i < 15; ++i) {
                x.push_back(uni(-3, 3));
                y.push_back(uni(-3, 3));
            }
            const double a = uni(0.1, 10.0) * (trial % 2 ? 1 : -1);
            auto ya = y;
            for (auto& v : ya) v *= a;
            const auto f = fitting::linear_fit(x, y);
            const auto g = fitting::linear_fit(x, ya);
            CHECK(g.param("slope") == doctest::Approx(a * f.param("slope")));
            CHECK(g.param("intercept") == doctest::Approx(a * f.param("intercept")));
            CHECK(g.r2 == doctest::Approx(f.r2));
        }
    }

    TEST_CASE("refitting from the optimum is idempotent; residual never rises") {
        const auto m = fitting::power_offset_model();
        std::normal_distribution<double> noise(0.0, 0.02);
        for (int trial = 0; trial < 10; ++trial) {
            std::vector<double> x, y;
            const std::vector<double> truth{uni(0.5, 3), uni(0.1, 1.0), uni(-1, 1)};
            for (int n = 2; n <= 40; n += 2) {
                x.push_back(n);
                y.push_back(m.eval(truth, n) + noise(rng()));
            }
            const auto init = fitting::init_power_offset(x, y);
            const auto f = fitting::nonlinear_fit(m, x, y, init);
            REQUIRE(f.converged);
            const auto again = fitting::nonlinear_fit(m, x, y, f.params);
            for (std::size_t k = 0; k < 3; ++k)
                CHECK(std::abs(again.params[k] - f.params[k]) <= 1e-8 * std::max(1.0, std::abs(f.params[k])));

            double prev = INFINITY;
            for (std::size_t it = 1; it <= 30; ++it) {
                fitting::FitOptions o;
                o.max_iter = it;
                const auto partial = fitting::nonlinear_fit(m, x, y, init, o);
                CHECK(partial.residual_norm <= prev + 1e-15);
                prev = partial.residual_norm;
            }
        }
    }
}
