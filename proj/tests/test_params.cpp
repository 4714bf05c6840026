#include <cmath>
#include <numbers>
#include <stdexcept>

#include "doctest.h"
#include "ratchet/params.hpp"

using ratchet::RatchetParams;

TEST_CASE("standard parameters") {
    const auto p = RatchetParams::standard(0.14);
    CHECK(p.drive_plus_E == doctest::Approx(0.0225));
    CHECK(p.drive_minus_E == doctest::Approx(0.0075));
    CHECK(p.sites_L == 6);
    // 2 (1 - cos(pi/3)) = 1
    CHECK(p.drive_freq_omega == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(p.interaction() == doctest::Approx(0.14));
}

TEST_CASE("Rabi period from the drive amplitudes") {
    const auto p = RatchetParams::standard();
    const double w = std::sqrt(0.0225 * 0.0225 + 0.0075 * 0.0075);
    CHECK(p.rabi_frequency() == doctest::Approx(w));
    CHECK(p.rabi_period() == doctest::Approx(264.9).epsilon(1e-3));
    CHECK(p.drive_period() == doctest::Approx(2.0 * std::numbers::pi));
}

TEST_CASE("hbar and J rescale times") {
    const auto p = RatchetParams::standard(0.0, 6, 2.0, 0.5);
    CHECK(p.drive_plus_E == doctest::Approx(0.045));
    CHECK(p.drive_freq_omega == doctest::Approx(4.0));
    CHECK(p.rabi_period() == doctest::Approx(RatchetParams::standard().rabi_period() / 4.0));
}

TEST_CASE("resonant frequency for other ring sizes") {
    CHECK(ratchet::resonant_drive_frequency(1.0, 4, 1.0) == doctest::Approx(2.0));
    CHECK(ratchet::resonant_drive_frequency(1.0, 3, 1.0) == doctest::Approx(3.0));
}

TEST_CASE("invalid parameters name the field") {
    auto p = RatchetParams::standard();
    p.sites_L = 2;
    CHECK_THROWS_WITH_AS(p.validate(), doctest::Contains("sites_L"), std::invalid_argument);
    p = RatchetParams::standard();
    p.coupling_g = -0.1;
    CHECK_THROWS_WITH_AS(p.validate(), doctest::Contains("coupling_g"), std::invalid_argument);
    p = RatchetParams::standard();
    p.drive_minus_E = std::nan("");
    CHECK_THROWS_WITH_AS(p.validate(), doctest::Contains("drive_minus_E"), std::invalid_argument);
    p = RatchetParams::standard();
    p.drive_plus_E = p.drive_minus_E = 0.0;
    CHECK_NOTHROW(p.validate());
    CHECK_THROWS_AS(p.rabi_period(), std::invalid_argument);
}
