#pragma once

#include "squidmech/fock.hpp"
#include "squidmech/hamiltonian.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace squidmech {

// =============================================================================
// Reduced states and fidelities
// =============================================================================

/// Reduced density matrix on the kept subsystems (original order preserved).
inline DensityState partial_trace(const DensityState& state, const std::vector<std::string>& keep) {
    const auto& sp = state.space;
    std::vector<bool> kept(sp.dims.size(), false);
    for (const auto& l : keep) kept[sp.slot(l)] = true;

    SpaceDescriptor out;
    for (std::size_t k = 0; k < sp.dims.size(); ++k)
        if (kept[k]) {
            out.dims.push_back(sp.dims[k]);
            out.labels.push_back(sp.labels[k]);
        }
    if (out.dims.empty()) throw ParameterError("partial_trace: nothing kept");

    const int D = sp.total();
    std::vector<int> kidx(static_cast<std::size_t>(D)), tidx(static_cast<std::size_t>(D));
    for (int i = 0; i < D; ++i) {
        const auto lv = basis_levels(sp, i);
        int a = 0, b = 0;
        for (std::size_t k = 0; k < lv.size(); ++k) {
            if (kept[k]) a = a * sp.dims[k] + lv[k];
            else b = b * sp.dims[k] + lv[k];
        }
        kidx[static_cast<std::size_t>(i)] = a;
        tidx[static_cast<std::size_t>(i)] = b;
    }
    DensityState r{out, DenseOp::Zero(out.total(), out.total())};
    for (int j = 0; j < D; ++j)
        for (int i = 0; i < D; ++i)
            if (tidx[static_cast<std::size_t>(i)] == tidx[static_cast<std::size_t>(j)])
                r.rho(kidx[static_cast<std::size_t>(i)], kidx[static_cast<std::size_t>(j)]) += state.rho(i, j);
    return r;
}

/// Overlap <ψ|ρ|ψ> with a normalised pure target.
inline double fidelity(const DensityState& state, const StateVector& target) {
    if (target.size() != state.dim()) throw ParameterError("fidelity: target dimension mismatch");
    const double n = target.squaredNorm();
    if (!(n > 0.0)) throw ParameterError("fidelity: zero target");
    const double f = (target.adjoint() * state.rho * target)(0, 0).real() / n;
    return std::clamp(f, 0.0, 1.0);
}

/// Square-root convention sqrt(<ψ|ρ|ψ>).
inline double root_fidelity(const DensityState& state, const StateVector& target) {
    return std::sqrt(fidelity(state, target));
}

/// Removes the free rotation accumulated in the simulation frame:
/// ρ_ij -> e^{i(θ_i - θ_j)} ρ_ij with θ = Φ1 n1 + Φ2 n2 + Φm n_m.
inline DensityState to_interaction_frame(const DensityState& state, const FramePhases& ph) {
    const auto& sp = state.space;
    const int D = sp.total();
    std::vector<cplx> u(static_cast<std::size_t>(D));
    const bool circuit = sp.labels == std::vector<std::string>{"q1", "q2", "m"};
    for (int k = 0; k < D; ++k) {
        const auto lv = basis_levels(sp, k);
        double theta = 0.0;
        if (circuit) theta = ph.q1 * lv[0] + ph.q2 * lv[1] + ph.m * lv[2];
        else if (sp.labels.size() == 1) theta = ph.m * lv[0];
        u[static_cast<std::size_t>(k)] = std::exp(cplx(0.0, theta));
    }
    DensityState r = state;
    for (int j = 0; j < D; ++j)
        for (int i = 0; i < D; ++i) r.rho(i, j) *= u[static_cast<std::size_t>(i)] * std::conj(u[static_cast<std::size_t>(j)]);
    return r;
}

// =============================================================================
// Wigner function
// =============================================================================

struct WignerGridSpec {
    double x_min = -3.0, x_max = 3.0;
    double p_min = -3.0, p_max = 3.0;
    int nx = 61, np = 61;
    int guard = 10;
};

/// W sampled on a rectangular grid. values(i, j) belongs to (x[i], p[j]).
struct WignerGrid {
    std::vector<double> x;
    std::vector<double> p;
    Eigen::MatrixXd values;
    std::string convention =
        "displaced-parity: alpha = x + i p, W = (2/pi) Tr[rho D(alpha) Parity D(-alpha)], integral dx dp = 1, W_vacuum(0) = 2/pi";
    double padding_delta = 0.0;
    std::string warning;

    /// Trapezoidal integral over the grid.
    double integral() const {
        if (x.size() < 2 || p.size() < 2) return 0.0;
        double s = 0.0;
        const double dx = x[1] - x[0], dp = p[1] - p[0];
        for (std::size_t i = 0; i < x.size(); ++i)
            for (std::size_t j = 0; j < p.size(); ++j) {
                double w = 1.0;
                if (i == 0 || i + 1 == x.size()) w *= 0.5;
                if (j == 0 || j + 1 == p.size()) w *= 0.5;
                s += w * values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            }
        return s * dx * dp;
    }
};

namespace detail {

/// Displaced-parity evaluator for one state and one truncation size.
class DisplacedParity {
public:
    DisplacedParity(const DenseOp& rho, int guard) : rho_(rho), N_(static_cast<int>(rho.rows())), M_(N_ + guard) {
        const DenseOp a = destroy(M_).dense();
        const DenseOp P = cplx(0.0, -1.0) * (a.adjoint() - a);
        Eigen::SelfAdjointEigenSolver<DenseOp> es(P);
        V_ = es.eigenvectors();
        lambda_ = es.eigenvalues();
    }

    /// W(α) at α = x + i p.
    double operator()(double x, double p) const {
        const double r = std::hypot(x, p);
        const double th = std::atan2(p, x);
        // K = exp(r (a† - a)) = V e^{i r Λ} V†, real up to rounding.
        const Eigen::VectorXcd ph = (cplx(0.0, 1.0) * r * lambda_.cast<cplx>()).array().exp();
        const Eigen::MatrixXd KN = (V_.topRows(N_) * ph.asDiagonal() * V_.adjoint()).real();
        DenseOp rt(N_, N_);
        for (int k = 0; k < N_; ++k)
            for (int j = 0; j < N_; ++j) rt(j, k) = rho_(j, k) * std::exp(cplx(0.0, -th * (j - k)));
        const DenseOp B = rt * KN;
        double w = 0.0;
        for (int n = 0; n < M_; ++n) {
            const double sign = (n % 2 == 0) ? 1.0 : -1.0;
            cplx acc = 0.0;
            for (int j = 0; j < N_; ++j) acc += KN(j, n) * B(j, n);
            w += sign * acc.real();
        }
        return 2.0 / constants::pi * w;
    }

private:
    DenseOp rho_;
    int N_, M_;
    DenseOp V_;
    Eigen::VectorXd lambda_;
};

} // namespace detail

/// Wigner function of a single-mode state on a grid.
inline WignerGrid wigner(const DensityState& reduced, const WignerGridSpec& spec) {
    if (reduced.space.dims.size() != 1) throw ParameterError("wigner: single-mode state required");
    if (spec.nx < 1 || spec.np < 1) throw ParameterError("wigner: grid needs at least one point per axis");
    WignerGrid g;
    g.x = linspace(spec.x_min, spec.x_max, static_cast<std::size_t>(spec.nx));
    g.p = linspace(spec.p_min, spec.p_max, static_cast<std::size_t>(spec.np));
    g.values.resize(spec.nx, spec.np);
    // Extra levels so that the state displaced to the farthest grid point stays inside the truncation.
    double r_max = 0.0;
    for (double x : {spec.x_min, spec.x_max})
        for (double p : {spec.p_min, spec.p_max}) r_max = std::max(r_max, std::hypot(x, p));
    const double reach = std::sqrt(static_cast<double>(reduced.dim())) + r_max;
    const int guard = spec.guard + static_cast<int>(std::ceil(std::max(0.0, reach * reach - reduced.dim()) + 4.0 * reach));
    const detail::DisplacedParity eval(reduced.rho, guard);
    for (int i = 0; i < spec.nx; ++i)
        for (int j = 0; j < spec.np; ++j) g.values(i, j) = eval(g.x[static_cast<std::size_t>(i)], g.p[static_cast<std::size_t>(j)]);

    // Padding stability probe at the grid corners, the axis extremes and the origin.
    const detail::DisplacedParity wide(reduced.rho, guard + 10);
    std::vector<std::pair<int, int>> probes = {{0, 0},
                                               {spec.nx - 1, 0},
                                               {0, spec.np - 1},
                                               {spec.nx - 1, spec.np - 1},
                                               {spec.nx / 2, spec.np / 2},
                                               {spec.nx / 2, 0},
                                               {0, spec.np / 2}};
    for (const auto& [i, j] : probes) {
        const double d = std::abs(wide(g.x[static_cast<std::size_t>(i)], g.p[static_cast<std::size_t>(j)]) - g.values(i, j));
        g.padding_delta = std::max(g.padding_delta, d);
    }
    if (g.padding_delta > 1e-4)
        g.warning = "Wigner values not stable under +10 level padding; max delta " + std::to_string(g.padding_delta);
    return g;
}

/// Symmetric grid spanning ±(sqrt(2N)+3) for an N-level mode.
inline WignerGridSpec normalisation_grid(int levels, int points = 81) {
    const double L = std::sqrt(2.0 * levels) + 3.0;
    WignerGridSpec s;
    s.x_min = s.p_min = -L;
    s.x_max = s.p_max = L;
    s.nx = s.np = points;
    return s;
}

// =============================================================================
// Density-matrix export
// =============================================================================

struct DensityEntry {
    std::string bra;
    std::string ket;
    double re = 0.0;
    double im = 0.0;
    double abs = 0.0;
};

/// Elements <bra|ρ|ket> with magnitude above the floor, in row-major order.
inline std::vector<DensityEntry> density_matrix_export(const DensityState& state, double floor) {
    std::vector<DensityEntry> out;
    const int D = state.dim();
    for (int i = 0; i < D; ++i)
        for (int j = 0; j < D; ++j) {
            const cplx v = state.rho(i, j);
            const double a = std::abs(v);
            if (a > floor) out.push_back({basis_label(state.space, i), basis_label(state.space, j), v.real(), v.imag(), a});
        }
    return out;
}

} // namespace squidmech
