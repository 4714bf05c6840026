#pragma once

#include <numbers>

namespace ratchet {

/// Physical and drive parameters of the ring ratchet.
///
/// Energies are in units of the hopping J and times in hbar/J unless the
/// caller sets hop_J or hbar explicitly. The interaction is parametrised by
/// the mean-field coupling g = N U / J, so the DNLS nonlinearity is g J and
/// the three-mode nonlinearity is g J / L.
struct RatchetParams {
    double hop_J = 1.0;
    double drive_plus_E = 0.0225;
    double drive_minus_E = 0.0075;
    double drive_freq_omega = 1.0;
    int sites_L = 6;
    double coupling_g = 0.0;
    double hbar = 1.0;

    /// Standard configuration: E+ = 0.0225 J, E- = 0.0075 J and a drive
    /// resonant with the first ring harmonic.
    static RatchetParams standard(double g = 0.0, int sites = 6, double J = 1.0, double hbar = 1.0);

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;

    /// N U, the DNLS on-site nonlinearity.
    double interaction() const { return coupling_g * hop_J; }
    /// Angular Rabi frequency sqrt(E+^2 + E-^2) / hbar.
    double rabi_frequency() const;
    double rabi_period() const { return 2.0 * std::numbers::pi / rabi_frequency(); }
    double drive_period() const { return 2.0 * std::numbers::pi / drive_freq_omega; }
};

/// omega = 2 J [1 - cos(2 pi / L)] / hbar.
double resonant_drive_frequency(double J, int sites, double hbar);

}  // namespace ratchet
