#pragma once

#include "squidmech/constants.hpp"
#include "squidmech/error.hpp"

#include <boost/math/tools/roots.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace squidmech {

// =============================================================================
// Parameter types
// =============================================================================

/// Raw physical inputs of the two-transmon + SQUID + beam circuit.
/// Energies are cyclic frequencies E/h in Hz, everything else in SI units.
struct CircuitParams {
    double EJ1 = 17.0e9;
    double EJ2 = 17.0e9;
    double EJsum_c = 200.0e9;
    double aJ = 0.01;
    double C1 = 52.0e-15;
    double C2 = 52.0e-15;
    double Cc = 9.7e-15;
    double m = 7.7e-16;
    double omega_m = constants::two_pi * 10.0e6;
    double l = 14.7e-6;
    double beta0 = 1.0;
    double B = 10.0e-3;
    double phi_b = 0.495;
    double T = 10.0e-3;
    double T1 = 30.0e-6;
    double T2 = 30.0e-6;
    double Qm = 1.0e6;

    /// Minimum Ẽ_J/E_C ratio before a transmon-regime warning is raised.
    double transmon_ratio_min = 20.0;

    /// Throws ParameterError when an invariant is violated.
    void validate() const {
        auto positive = [](double v, const char* name) {
            if (!(v > 0.0) || !std::isfinite(v))
                throw ParameterError(std::string("parameter ") + name + " must be positive and finite");
        };
        auto non_negative = [](double v, const char* name) {
            if (!(v >= 0.0) || !std::isfinite(v))
                throw ParameterError(std::string("parameter ") + name + " must be non-negative and finite");
        };
        positive(EJ1, "EJ1");
        positive(EJ2, "EJ2");
        non_negative(EJsum_c, "EJsum_c");
        positive(C1, "C1");
        positive(C2, "C2");
        non_negative(Cc, "Cc");
        positive(m, "m");
        positive(omega_m, "omega_m");
        positive(l, "l");
        positive(beta0, "beta0");
        non_negative(B, "B");
        non_negative(T, "T");
        positive(T1, "T1");
        positive(T2, "T2");
        positive(Qm, "Qm");
        if (!(aJ >= 0.0 && aJ < 1.0))
            throw ParameterError("parameter aJ must satisfy 0 <= aJ < 1");
        if (!(phi_b >= 0.0 && phi_b < 1.0))
            throw ParameterError("parameter phi_b must satisfy 0 <= phi_b < 1");
    }
};

/// Quantities derived from CircuitParams at the configured flux bias.
struct DerivedQuantities {
    double Ct1 = 0.0, Ct2 = 0.0;   ///< loaded capacitances (F)
    double EC1 = 0.0, EC2 = 0.0;   ///< charging energies (Hz)
    double EJt1 = 0.0, EJt2 = 0.0; ///< effective Josephson energies (Hz)
    double omega1 = 0.0, omega2 = 0.0;
    double Z1 = 0.0, Z2 = 0.0;
    double X_zpf = 0.0;
    double alpha = 0.0;
    double n_th = 0.0;
    double gamma_m = 0.0;
    double cJ = 1.0, sJ = 1.0;
    double X0 = 0.0;
    std::vector<std::string> warnings;
};

/// Interaction strengths at one flux bias, all in rad/s.
struct CouplingSet {
    double g = 0.0;      ///< tripartite strength including the 3g31x + 3g13x correction
    double g_bare = 0.0; ///< leading-order tripartite strength
    double g1 = 0.0, g2 = 0.0;
    double JL = 0.0, JC = 0.0;
    double V = 0.0;
    double Jn1 = 0.0, Jn2 = 0.0;
    double g22x = 0.0, g31x = 0.0, g13x = 0.0;
    double gx2_11 = 0.0, gx2_12 = 0.0, gx2_22 = 0.0;
    double J_eff = 0.0;
};

/// Result of josephson_energy: both forms in Hz.
struct JosephsonEnergy {
    double exact = 0.0;
    double linear = 0.0;
    double delta() const { return linear - exact; }
};

// =============================================================================
// Flux trigonometry
// =============================================================================

namespace detail {

/// cos(pi x) with an exact zero at half-integers.
inline double cos_pi(double x) {
    double r = std::fmod(x, 2.0);
    if (r < 0.0) r += 2.0;
    if (r <= 1.0) return std::sin(constants::pi * (0.5 - r));
    return std::sin(constants::pi * (r - 1.5));
}

/// sin(pi x) with an exact zero at integers.
inline double sin_pi(double x) {
    double r = std::fmod(x, 2.0);
    if (r < 0.0) r += 2.0;
    if (r <= 0.5) return std::sin(constants::pi * r);
    if (r <= 1.5) return std::sin(constants::pi * (1.0 - r));
    return std::sin(constants::pi * (r - 2.0));
}

} // namespace detail

/// Asymmetry factors and their combined products at flux bias phi.
struct AsymmetryFactors {
    double cJ = 1.0;
    double sJ = 1.0;
    double cos_part = 0.0; ///< cJ·cos(πφ), overflow free
    double sin_part = 0.0; ///< sJ·sin(πφ)
    double x2_part = 0.0;  ///< sJ·sin²(πφ)/(2cJ·cos(πφ))
};

inline AsymmetryFactors asymmetry_factors(double aJ, double phi) {
    const double c = detail::cos_pi(phi);
    const double s = detail::sin_pi(phi);
    AsymmetryFactors f;
    if (aJ == 0.0) {
        f.cJ = 1.0;
        f.sJ = 1.0;
        f.cos_part = c;
        f.sin_part = s;
        f.x2_part = (c == 0.0) ? 0.0 : s * s / (2.0 * c);
        return f;
    }
    const double r2 = c * c + aJ * aJ * s * s;
    const double r = std::sqrt(r2);
    const double one_minus = 1.0 - aJ * aJ;
    f.cJ = (c == 0.0) ? std::numeric_limits<double>::infinity() : r / std::abs(c);
    f.sJ = one_minus * std::abs(c) / r;
    f.cos_part = (c < 0.0) ? -r : r;
    f.sin_part = f.sJ * s;
    f.x2_part = one_minus * c * s * s / (2.0 * r2);
    return f;
}

// =============================================================================
// Derived quantities
// =============================================================================

inline double loaded_capacitance(double Ci, double Cj, double Cc) {
    return Ci + Cj * Cc / (Cj + Cc);
}

inline double charging_energy_hz(double Ct) {
    return constants::e * constants::e / (2.0 * Ct) / constants::h;
}

/// Thermal occupation of a mode at angular frequency omega and temperature T.
inline double thermal_occupation(double omega, double T) {
    if (T <= 0.0) return 0.0;
    return 1.0 / std::expm1(constants::hbar * omega / (constants::kB * T));
}

/// Beam mass giving the requested zero-point amplitude at omega_m.
inline double mass_for_zero_point(double x_zpf, double omega_m) {
    return constants::hbar / (2.0 * omega_m * x_zpf * x_zpf);
}

/// Transmon angular frequency from Ẽ_J and E_C in Hz.
inline double transmon_omega(double EJt, double EC) {
    return constants::two_pi * (std::sqrt(8.0 * EJt * EC) - EC);
}

inline DerivedQuantities derive_static(const CircuitParams& p) {
    p.validate();
    DerivedQuantities d;
    const auto f = asymmetry_factors(p.aJ, p.phi_b);
    d.cJ = f.cJ;
    d.sJ = f.sJ;
    d.Ct1 = loaded_capacitance(p.C1, p.C2, p.Cc);
    d.Ct2 = loaded_capacitance(p.C2, p.C1, p.Cc);
    d.EC1 = charging_energy_hz(d.Ct1);
    d.EC2 = charging_energy_hz(d.Ct2);
    d.EJt1 = p.EJ1 + p.EJsum_c * f.cos_part;
    d.EJt2 = p.EJ2 + p.EJsum_c * f.cos_part;
    if (!(d.EJt1 > 0.0) || !(d.EJt2 > 0.0))
        throw ParameterError("effective Josephson energy is not positive at this flux bias");
    d.omega1 = transmon_omega(d.EJt1, d.EC1);
    d.omega2 = transmon_omega(d.EJt2, d.EC2);
    const double rk = constants::hbar / (constants::e * constants::e);
    d.Z1 = rk * std::sqrt(d.EC1 / (2.0 * d.EJt1));
    d.Z2 = rk * std::sqrt(d.EC2 / (2.0 * d.EJt2));
    d.X_zpf = std::sqrt(constants::hbar / (2.0 * p.m * p.omega_m));
    d.alpha = constants::pi * p.beta0 * p.B * p.l / constants::Phi0;
    d.n_th = thermal_occupation(p.omega_m, p.T);
    d.gamma_m = p.omega_m / p.Qm;
    const double E = constants::h * p.EJsum_c;
    d.X0 = d.alpha * E * f.sin_part / (p.m * p.omega_m * p.omega_m);

    if (d.EJt1 / d.EC1 <= p.transmon_ratio_min)
        d.warnings.push_back("qubit 1 outside transmon regime: EJt/EC = " + std::to_string(d.EJt1 / d.EC1));
    if (d.EJt2 / d.EC2 <= p.transmon_ratio_min)
        d.warnings.push_back("qubit 2 outside transmon regime: EJt/EC = " + std::to_string(d.EJt2 / d.EC2));
    return d;
}

// =============================================================================
// Josephson energy of the coupler
// =============================================================================

/// Coupler Josephson energy at displacement X, exact and linearised in αX.
inline JosephsonEnergy josephson_energy(const CircuitParams& p, double phi_b, double X) {
    const double alpha = constants::pi * p.beta0 * p.B * p.l / constants::Phi0;
    const double ax = alpha * X;
    if (std::abs(ax) > 1e-2)
        throw ParameterError("josephson_energy: |alpha X| exceeds 1e-2, expansion not valid");
    const double shifted = phi_b + ax / constants::pi;
    const double c = detail::cos_pi(shifted);
    const double s = detail::sin_pi(shifted);
    JosephsonEnergy out;
    out.exact = p.EJsum_c * std::sqrt(c * c + p.aJ * p.aJ * s * s);
    const auto f = asymmetry_factors(p.aJ, phi_b);
    out.linear = p.EJsum_c * (f.cos_part - f.sin_part * ax);
    return out;
}

// =============================================================================
// Couplings
// =============================================================================

inline CouplingSet couplings(const CircuitParams& p, double phi_b) {
    CircuitParams q = p;
    q.phi_b = phi_b;
    const DerivedQuantities d = derive_static(q);
    const auto f = asymmetry_factors(q.aJ, phi_b);

    using constants::hbar;
    using constants::phi0;
    const double E = constants::h * q.EJsum_c;
    const double phi0_2 = phi0 * phi0;
    const double phi0_4 = phi0_2 * phi0_2;
    const double zz = std::sqrt(d.Z1 * d.Z2);
    const double ax = d.alpha * d.X_zpf;

    CouplingSet c;
    c.g_bare = ax * f.sin_part * E * zz / (2.0 * phi0_2);
    c.g1 = ax * f.sin_part * E * d.Z1 / (2.0 * phi0_2);
    c.g2 = ax * f.sin_part * E * d.Z2 / (2.0 * phi0_2);
    c.JL = E * f.cos_part * zz / (2.0 * phi0_2);
    c.JC = q.Cc / (2.0 * q.C1 * q.C2) / zz;
    c.V = -hbar * d.Z1 * d.Z2 / (4.0 * phi0_4) * E * f.cos_part;
    c.Jn1 = -hbar * std::sqrt(d.Z1 * d.Z1 * d.Z1 * d.Z2) / (24.0 * phi0_4) * E * f.cos_part;
    c.Jn2 = -hbar * std::sqrt(d.Z2 * d.Z2 * d.Z2 * d.Z1) / (24.0 * phi0_4) * E * f.cos_part;
    c.g22x = hbar * d.alpha * d.Z1 * d.Z2 / (16.0 * phi0_4) * E * f.sin_part * d.X_zpf;
    c.g31x = hbar * d.alpha * d.Z1 * zz / (24.0 * phi0_4) * E * f.sin_part * d.X_zpf;
    c.g13x = hbar * d.alpha * d.Z2 * zz / (24.0 * phi0_4) * E * f.sin_part * d.X_zpf;
    const double x2 = d.alpha * d.alpha * E * f.x2_part * d.X_zpf * d.X_zpf / (2.0 * phi0_2);
    c.gx2_11 = x2 * d.Z1;
    c.gx2_12 = x2 * zz;
    c.gx2_22 = x2 * d.Z2;
    c.g = c.g_bare + 3.0 * c.g31x + 3.0 * c.g13x;
    c.J_eff = c.JC - c.JL + c.Jn1 + c.Jn2;
    return c;
}

// =============================================================================
// Operating-point resolution
// =============================================================================

/// Optional calibration targets applied before a run.
struct OperatingPointTargets {
    std::optional<double> omega_q; ///< common qubit angular frequency; EJ1, EJ2 inferred
    std::optional<double> EC;      ///< common charging energy (Hz); C1 = C2 solved for it
    bool cancel_exchange = false;  ///< solve Cc so that J_eff vanishes at phi_b
};

/// Bare junction energy E_J (Hz) giving angular frequency omega for a given E_C.
inline double infer_josephson_energy(double omega, double EC, double EJsum_c, double cos_part) {
    const double f = omega / constants::two_pi;
    const double EJt = (f + EC) * (f + EC) / (8.0 * EC);
    const double EJ = EJt - EJsum_c * cos_part;
    if (!(EJ > 0.0))
        throw ParameterError("target qubit frequency requires a non-positive junction energy");
    return EJ;
}

/// Bare capacitance C (equal for both transmons) whose loaded value gives charging energy EC.
inline double capacitance_for_charging_energy(double EC, double Cc) {
    const double Ct = constants::e * constants::e / (2.0 * constants::h * EC);
    const double b = 2.0 * Cc - Ct;
    const double C = 0.5 * (-b + std::sqrt(b * b + 4.0 * Ct * Cc));
    if (!(C > 0.0)) throw ParameterError("charging-energy target cannot be met with this coupling capacitance");
    return C;
}

/// Apply the capacitance and frequency targets for a fixed Cc.
inline CircuitParams apply_targets(CircuitParams p, const OperatingPointTargets& t) {
    if (t.EC) {
        const double C = capacitance_for_charging_energy(*t.EC, p.Cc);
        p.C1 = C;
        p.C2 = C;
    }
    if (t.omega_q) {
        const auto f = asymmetry_factors(p.aJ, p.phi_b);
        const double EC1 = charging_energy_hz(loaded_capacitance(p.C1, p.C2, p.Cc));
        const double EC2 = charging_energy_hz(loaded_capacitance(p.C2, p.C1, p.Cc));
        p.EJ1 = infer_josephson_energy(*t.omega_q, EC1, p.EJsum_c, f.cos_part);
        p.EJ2 = infer_josephson_energy(*t.omega_q, EC2, p.EJsum_c, f.cos_part);
    }
    return p;
}

/// Coupling capacitance that cancels J_eff at phi_b. Capacitance and
/// frequency targets, when given, are re-applied for every trial Cc.
inline double cancellation_capacitance(const CircuitParams& p, double phi_b,
                                       const OperatingPointTargets& targets = {}) {
    CircuitParams base = p;
    base.phi_b = phi_b;
    auto j_eff = [&](double Cc) {
        CircuitParams q = base;
        q.Cc = Cc;
        q = apply_targets(q, targets);
        return couplings(q, phi_b).J_eff;
    };
    const double at_zero = j_eff(0.0);
    if (at_zero == 0.0) return 0.0;

    double lo = 0.0;
    double hi = 1e-16;
    double f_hi = j_eff(hi);
    while (std::signbit(f_hi) == std::signbit(at_zero)) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e-9) throw ParameterError("no cancellation point for the exchange coupling");
        f_hi = j_eff(hi);
    }
    double f_lo = j_eff(lo);
    std::uintmax_t iterations = 200;
    auto tol = [](double a, double b) { return std::abs(b - a) <= 1e-28; };
    const auto root = boost::math::tools::toms748_solve(j_eff, lo, hi, f_lo, f_hi, tol, iterations);
    const double Cc = 0.5 * (root.first + root.second);
    const double residual = std::abs(j_eff(Cc)) / constants::two_pi;
    if (residual > 1e3)
        throw ParameterError("cancellation capacitance residual above 1 kHz: " + std::to_string(residual));
    return Cc;
}

/// Resolve all operating-point targets: solve Cc (if requested) and then
/// apply the capacitance and frequency targets.
inline CircuitParams resolve_operating_point(CircuitParams p, const OperatingPointTargets& t) {
    p.validate();
    if (t.cancel_exchange) p.Cc = cancellation_capacitance(p, p.phi_b, t);
    return apply_targets(p, t);
}

/// Default calibration targets of the reference parameter set.
inline OperatingPointTargets reference_targets() {
    OperatingPointTargets t;
    t.omega_q = constants::two_pi * 7.0e9;
    t.EC = 320.0e6;
    t.cancel_exchange = true;
    return t;
}

/// Reference parameter set: ω_m/2π = 10 MHz, X_zpf = 33 fm, B = 10 mT,
/// φ_b = 0.495, E_J,Σ/h = 200 GHz, T = 10 mK, T1 = T2 = 30 μs, Q_m = 1e6,
/// with E_C/h = 320 MHz, ω_i/2π = 7 GHz and Cc at the cancellation point.
inline CircuitParams reference_params() {
    CircuitParams p;
    p.m = mass_for_zero_point(33.0e-15, p.omega_m);
    return resolve_operating_point(p, reference_targets());
}

// =============================================================================
// Sweep
// =============================================================================

struct CouplingSweepRow {
    double phi_b = 0.0;
    CouplingSet c;
};

inline std::vector<CouplingSweepRow> coupling_sweep(const CircuitParams& p, const std::vector<double>& phi_range) {
    std::vector<CouplingSweepRow> rows;
    rows.reserve(phi_range.size());
    for (double phi : phi_range) {
        if (!(phi >= 0.0 && phi < 1.0)) throw ParameterError("coupling_sweep: flux point outside [0, 1)");
        rows.push_back({phi, couplings(p, phi)});
    }
    return rows;
}

/// n evenly spaced points on [lo, hi] inclusive.
inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
    std::vector<double> v(n);
    if (n == 1) {
        v[0] = lo;
        return v;
    }
    for (std::size_t i = 0; i < n; ++i)
        v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return v;
}

} // namespace squidmech
