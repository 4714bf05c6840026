#include "ratchet/params.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ratchet {

double resonant_drive_frequency(double J, int sites, double hbar) {
    return 2.0 * J * (1.0 - std::cos(2.0 * std::numbers::pi / sites)) / hbar;
}

RatchetParams RatchetParams::standard(double g, int sites, double J, double hbar) {
    RatchetParams p;
    p.hop_J = J;
    p.hbar = hbar;
    p.sites_L = sites;
    p.coupling_g = g;
    p.drive_plus_E = 0.0225 * J;
    p.drive_minus_E = 0.0075 * J;
    p.drive_freq_omega = resonant_drive_frequency(J, sites, hbar);
    p.validate();
    return p;
}

namespace {

void require(bool ok, const char* field, const std::string& what) {
    if (!ok) throw std::invalid_argument(std::string("RatchetParams.") + field + ": " + what);
}

}  // namespace

void RatchetParams::validate() const {
    require(std::isfinite(hop_J) && hop_J > 0.0, "hop_J", "must be positive");
    require(std::isfinite(hbar) && hbar > 0.0, "hbar", "must be positive");
    require(sites_L >= 3, "sites_L", "must be at least 3");
    require(std::isfinite(drive_plus_E) && drive_plus_E >= 0.0, "drive_plus_E", "must be >= 0");
    require(std::isfinite(drive_minus_E) && drive_minus_E >= 0.0, "drive_minus_E", "must be >= 0");
    require(std::isfinite(drive_freq_omega) && drive_freq_omega >= 0.0, "drive_freq_omega", "must be >= 0");
    require(std::isfinite(coupling_g) && coupling_g >= 0.0, "coupling_g", "must be >= 0");
}

double RatchetParams::rabi_frequency() const {
    const double w = std::hypot(drive_plus_E, drive_minus_E) / hbar;
    if (!(w > 0.0)) throw std::invalid_argument("RatchetParams: Rabi frequency undefined for zero drive");
    return w;
}

}  // namespace ratchet
