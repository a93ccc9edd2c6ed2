#pragma once

#include "squidmech/hamiltonian.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace squidmech {

// =============================================================================
// Dissipation
// =============================================================================

struct CollapseTerm {
    OperatorMatrix op;
    double rate = 0.0; ///< 1/s
    std::string name;
};

struct DissipationSet {
    std::vector<CollapseTerm> terms;
};

/// Mechanical bath on b and b†, qubit decay on c_i at 1/T1 and dephasing on
/// c_i†c_i at 1/T2.
inline DissipationSet make_dissipators(const CircuitParams& p, const DerivedQuantities& d,
                                       const SpaceDescriptor& space) {
    const CircuitOperators op(space);
    DissipationSet s;
    s.terms.push_back({op.wrap(op.b), (d.n_th + 1.0) * d.gamma_m, "b"});
    s.terms.push_back({op.wrap(SparseOp(op.b.adjoint())), d.n_th * d.gamma_m, "b_dag"});
    s.terms.push_back({op.wrap(op.c1), 1.0 / p.T1, "c1"});
    s.terms.push_back({op.wrap(op.c2), 1.0 / p.T1, "c2"});
    s.terms.push_back({op.wrap(op.n1, true), 1.0 / p.T2, "n1"});
    s.terms.push_back({op.wrap(op.n2, true), 1.0 / p.T2, "n2"});
    return s;
}

// =============================================================================
// Instantaneous operations
// =============================================================================

/// Complete amplitude damping of one qubit: Kraus operators |0><k|.
inline DensityState apply_reset(const DensityState& state, int qubit) {
    const std::size_t slot = state.space.slot(qubit == 1 ? "q1" : "q2");
    const auto& dims = state.space.dims;
    int stride = 1;
    for (std::size_t k = slot + 1; k < dims.size(); ++k) stride *= dims[k];
    const int dq = dims[slot];
    const int D = state.dim();
    DensityState out{state.space, DenseOp::Zero(D, D)};
    for (int j = 0; j < D; ++j) {
        const int lj = (j / stride) % dq;
        const int j0 = j - lj * stride;
        for (int i = 0; i < D; ++i) {
            const int li = (i / stride) % dq;
            if (li != lj) continue;
            out.rho(i - li * stride, j0) += state.rho(i, j);
        }
    }
    return out;
}

struct MeasurementOutcome {
    DensityState state;
    double probability = 0.0;
};

/// Projective measurement with post-selection: (PρP/Tr[PρP], Tr[PρP]).
inline MeasurementOutcome apply_measurement(const DensityState& state, const OperatorMatrix& projector) {
    if (state.space != projector.space) throw ParameterError("apply_measurement: projector on a different space");
    DenseOp r = projector.sparse * state.rho;
    r = r * projector.sparse;
    const double p = r.trace().real();
    if (!(p >= 1e-12)) throw PostselectionError("post-selection impossible: outcome probability below 1e-12");
    r /= p;
    r = 0.5 * (r + r.adjoint()).eval();
    return {{state.space, r}, std::min(p, 1.0)};
}

inline DensityState apply_unitary(const DensityState& state, const OperatorMatrix& U) {
    DenseOp r = U.sparse * state.rho;
    DenseOp out = r * SparseOp(U.sparse.adjoint());
    return {state.space, out};
}

// =============================================================================
// Direct-form right-hand side
// =============================================================================

namespace detail {

/// Compressed sparse row copy used by the hot loop.
struct Csr {
    int n = 0;
    std::vector<int> ptr;
    std::vector<int> col;
    std::vector<cplx> val;

    Csr() = default;
    explicit Csr(const SparseOp& m) {
        Eigen::SparseMatrix<cplx, Eigen::RowMajor> r(m);
        r.makeCompressed();
        n = static_cast<int>(r.rows());
        ptr.assign(r.outerIndexPtr(), r.outerIndexPtr() + n + 1);
        col.assign(r.innerIndexPtr(), r.innerIndexPtr() + r.nonZeros());
        val.assign(r.valuePtr(), r.valuePtr() + r.nonZeros());
        split();
    }

    /// out(:, j) (+)= s · M ρ(:, j) for every column j.
    void apply(const DenseOp& rho, DenseOp& out, cplx s, bool accumulate) const {
        const int D = n;
        const auto* re = re_.data();
        const auto* im = im_.data();
        for (int j = 0; j < D; ++j) {
            const double* x = reinterpret_cast<const double*>(rho.data() + static_cast<std::ptrdiff_t>(j) * D);
            cplx* y = out.data() + static_cast<std::ptrdiff_t>(j) * D;
            for (int i = 0; i < D; ++i) {
                double ar = 0.0, ai = 0.0;
                for (int k = ptr[i]; k < ptr[i + 1]; ++k) {
                    const double xr = x[2 * col[k]], xi = x[2 * col[k] + 1];
                    ar += re[k] * xr - im[k] * xi;
                    ai += re[k] * xi + im[k] * xr;
                }
                const cplx acc = s * cplx(ar, ai);
                y[i] = accumulate ? y[i] + acc : acc;
            }
        }
    }

private:
    std::vector<double> re_, im_;

    void split() {
        re_.resize(val.size());
        im_.resize(val.size());
        for (std::size_t k = 0; k < val.size(); ++k) {
            re_[k] = val[k].real();
            im_[k] = val[k].imag();
        }
    }
};

/// Collapse operator L: a gather map when every row and column holds at most
/// one nonzero, a sparse matrix otherwise.
struct Jump {
    double rate = 0.0;
    bool gather = false;
    std::vector<int> src;
    std::vector<cplx> val;
    std::vector<int> rows; ///< rows of L holding a nonzero
    SparseOp L;

    Jump(const SparseOp& op, double r) : rate(r), L(op) {
        const int D = static_cast<int>(op.rows());
        src.assign(static_cast<std::size_t>(D), -1);
        val.assign(static_cast<std::size_t>(D), 0.0);
        std::vector<int> col_count(static_cast<std::size_t>(D), 0);
        gather = true;
        for (int k = 0; k < op.outerSize(); ++k)
            for (SparseOp::InnerIterator it(op, k); it; ++it) {
                if (it.value() == 0.0) continue;
                const auto row = static_cast<std::size_t>(it.row());
                if (src[row] != -1 || ++col_count[static_cast<std::size_t>(it.col())] > 1) gather = false;
                src[row] = static_cast<int>(it.col());
                val[row] = it.value();
            }
        for (int i = 0; i < D; ++i)
            if (src[static_cast<std::size_t>(i)] >= 0) rows.push_back(i);
    }

    /// out += rate · L ρ L†
    void add(const DenseOp& rho, DenseOp& out) const {
        if (rate == 0.0) return;
        const int D = static_cast<int>(rho.rows());
        if (gather) {
            for (int j : rows) {
                const auto uj = static_cast<std::size_t>(j);
                const double vr = rate * val[uj].real(), vi = -rate * val[uj].imag();
                const double* x = reinterpret_cast<const double*>(rho.data() + static_cast<std::ptrdiff_t>(src[uj]) * D);
                double* y = reinterpret_cast<double*>(out.data() + static_cast<std::ptrdiff_t>(j) * D);
                for (int i : rows) {
                    const auto ui = static_cast<std::size_t>(i);
                    const double cr = val[ui].real() * vr - val[ui].imag() * vi;
                    const double ci = val[ui].real() * vi + val[ui].imag() * vr;
                    const double xr = x[2 * src[ui]], xi = x[2 * src[ui] + 1];
                    y[2 * i] += cr * xr - ci * xi;
                    y[2 * i + 1] += cr * xi + ci * xr;
                }
            }
            return;
        }
        DenseOp t = L * rho;
        out += rate * (t * SparseOp(L.adjoint()));
    }
};

} // namespace detail

/// Lindblad generator for one schedule segment: H_eff = H - (i/2)Σγ L†L,
/// dρ/dt = -i H_eff ρ + i ρ H_eff† + Σ γ L ρ L†.
///
/// The state handed to the stepper is taken in the interaction picture of the
/// bound Hamiltonian's diagonal Ω: ρ̃_ab = e^{i(Ω_a - Ω_b)(t - t_ref)} ρ_ab.
/// Only the off-diagonal couplings then drive ρ̃.
class LindbladRhs {
public:
    LindbladRhs(const DissipationSet& diss, int dim) : D_(dim) {
        anti_ = SparseOp(dim, dim);
        for (const auto& t : diss.terms) {
            if (t.op.dim() != dim) throw ParameterError("collapse operator dimension mismatch");
            if (t.rate < 0.0) throw ParameterError("collapse rate must be non-negative");
            jumps_.emplace_back(t.op.sparse, t.rate);
            anti_ += SparseOp(t.rate * SparseOp(t.op.sparse.adjoint() * t.op.sparse));
        }
        A_.resize(dim, dim);
        lab_.resize(dim, dim);
        tmp_.resize(dim, dim);
        omega_ = Eigen::VectorXd::Zero(dim);
    }

    void bind(const BoundSegment& seg) {
        bind_operator(seg.H0, seg.t_start);
        for (const auto& t : seg.terms) terms_.push_back({t.coef, detail::Csr(t.op)});
    }

    void bind_static(const SparseOp& H) { bind_operator(H, 0.0); }

    /// ρ̃ → ρ at time t.
    void to_lab(double t, const DenseOp& rotating, DenseOp& lab) const {
        const Eigen::VectorXcd u = phases(t);
        lab.noalias() = u.conjugate().asDiagonal() * rotating * u.asDiagonal();
    }

    void operator()(double t, const DenseOp& rotating, DenseOp& out) {
        const Eigen::VectorXcd u = phases(t);
        lab_.noalias() = u.conjugate().asDiagonal() * rotating * u.asDiagonal();
        heff_.apply(lab_, A_, 1.0, false);
        for (const auto& term : terms_) {
            const cplx c = term.first(t);
            if (c != 0.0) term.second.apply(lab_, A_, c, true);
        }
        tmp_.noalias() = cplx(0.0, -1.0) * (A_ - A_.adjoint());
        for (const auto& j : jumps_) j.add(lab_, tmp_);
        out.noalias() = u.asDiagonal() * tmp_ * u.conjugate().asDiagonal();
    }

private:
    void bind_operator(const SparseOp& H, double t_ref) {
        omega_ = H.diagonal().real();
        SparseOp diag(D_, D_);
        std::vector<Eigen::Triplet<cplx>> trip;
        for (int k = 0; k < D_; ++k)
            if (omega_(k) != 0.0) trip.emplace_back(k, k, omega_(k));
        diag.setFromTriplets(trip.begin(), trip.end());
        heff_ = detail::Csr(SparseOp(H - diag - cplx(0.0, 0.5) * anti_));
        terms_.clear();
        t_ref_ = t_ref;
    }

    Eigen::VectorXcd phases(double t) const {
        const double tau = t - t_ref_;
        Eigen::VectorXcd u(D_);
        for (int k = 0; k < D_; ++k) u(k) = std::polar(1.0, omega_(k) * tau);
        return u;
    }

    int D_;
    SparseOp anti_;
    detail::Csr heff_;
    std::vector<std::pair<std::function<cplx(double)>, detail::Csr>> terms_;
    std::vector<detail::Jump> jumps_;
    Eigen::VectorXd omega_;
    double t_ref_ = 0.0;
    DenseOp A_, lab_, tmp_;
};

// =============================================================================
// Integrator
// =============================================================================

struct Tolerances {
    double rtol = 1e-8;
    double atol = 1e-10;
    double h_init = 0.0;  ///< 0 selects the step automatically
    double h_min = 1e-18; ///< absolute step-size floor (s)
    double h_max = 0.0;   ///< 0 means unbounded
    long max_steps = 50'000'000;
    int max_rejections = 60; ///< consecutive rejections before failing
};

struct IntegratorStats {
    long steps = 0;
    long rejected = 0;
    long rhs_evals = 0;
};

/// Dormand–Prince 5(4) stepper on a dense complex matrix state.
class Dopri5 {
public:
    Dopri5(LindbladRhs& f, const Tolerances& tol, int dim) : f_(f), tol_(tol) {
        for (auto* k : {&k1_, &k2_, &k3_, &k4_, &k5_, &k6_, &k7_, &y_tmp_, &y_new_}) k->resize(dim, dim);
    }

    IntegratorStats stats() const { return stats_; }
    double last_step() const { return h_; }
    void invalidate() { fsal_valid_ = false; }

    /// Advance y from t to t_end exactly.
    void integrate(DenseOp& y, double t, double t_end) {
        if (t_end <= t) return;
        if (!fsal_valid_) {
            f_(t, y, k1_);
            ++stats_.rhs_evals;
            fsal_valid_ = true;
        }
        if (h_ <= 0.0) h_ = tol_.h_init > 0.0 ? tol_.h_init : initial_step(y, t, t_end);
        int rejections = 0;
        const double span_eps = 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(t_end), 1e-30);
        while (t_end - t > span_eps) {
            if (stats_.steps >= tol_.max_steps) throw SolverError("step budget exhausted", t);
            double h = std::min(h_, t_end - t);
            if (tol_.h_max > 0.0) h = std::min(h, tol_.h_max);
            const bool clipped = h < h_;
            const double err = attempt(y, t, h);
            if (!std::isfinite(err)) throw SolverError("non-finite state during integration", t);
            if (err <= 1.0) {
                t = (t_end - (t + h) <= span_eps) ? t_end : t + h;
                y.swap(y_new_);
                y = 0.5 * (y + y.adjoint()).eval();
                k1_.swap(k7_);
                ++stats_.steps;
                rejections = 0;
                double fac = std::pow(std::max(err, 1e-10), 0.17) / std::pow(err_old_, 0.04) / 0.9;
                fac = std::clamp(fac, 0.1, 5.0);
                err_old_ = std::max(err, 1e-4);
                const double h_new = h / fac;
                if (!clipped || h_new > h_) h_ = h_new;
            } else {
                ++stats_.rejected;
                if (++rejections > tol_.max_rejections) throw SolverError("tolerance not met after repeated step rejections", t);
                const double fac = std::min(5.0, std::pow(err, 0.2) / 0.9);
                h_ = h / fac;
                if (h_ < tol_.h_min) throw SolverError("step-size underflow", t);
            }
        }
    }

private:
    double scaled_norm(const DenseOp& e, const DenseOp& y0, const DenseOp& y1) const {
        const Eigen::Index n = e.size();
        double acc = 0.0;
        const cplx* pe = e.data();
        const cplx* p0 = y0.data();
        const cplx* p1 = y1.data();
        for (Eigen::Index i = 0; i < n; ++i) {
            const double sc = tol_.atol + tol_.rtol * std::max(std::abs(p0[i]), std::abs(p1[i]));
            const double r = std::abs(pe[i]) / sc;
            acc += r * r;
        }
        return std::sqrt(acc / static_cast<double>(n));
    }

    double initial_step(const DenseOp& y, double t, double t_end) {
        const double d0 = scaled_norm(y, y, y);
        const double d1 = scaled_norm(k1_, y, y);
        double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 * (t_end - t) : 0.01 * d0 / d1;
        h0 = std::min(h0, t_end - t);
        y_tmp_ = y + h0 * k1_;
        f_(t + h0, y_tmp_, k2_);
        ++stats_.rhs_evals;
        const double d2 = scaled_norm(DenseOp(k2_ - k1_), y, y) / h0;
        const double dm = std::max(d1, d2);
        const double h1 = dm <= 1e-15 ? std::max(1e-6 * h0, 1e-3 * (t_end - t)) : std::pow(0.01 / dm, 0.2);
        return std::min(100.0 * h0, h1);
    }

    double attempt(const DenseOp& y, double t, double h) {
        static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
        static constexpr double a21 = 1.0 / 5;
        static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
        static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
        static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                                a54 = -212.0 / 729;
        static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                                a65 = -5103.0 / 18656;
        static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                                a76 = 11.0 / 84;
        static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                                e6 = 22.0 / 525, e7 = -1.0 / 40;

        y_tmp_.noalias() = y + (h * a21) * k1_;
        f_(t + c2 * h, y_tmp_, k2_);
        y_tmp_.noalias() = y + h * (a31 * k1_ + a32 * k2_);
        f_(t + c3 * h, y_tmp_, k3_);
        y_tmp_.noalias() = y + h * (a41 * k1_ + a42 * k2_ + a43 * k3_);
        f_(t + c4 * h, y_tmp_, k4_);
        y_tmp_.noalias() = y + h * (a51 * k1_ + a52 * k2_ + a53 * k3_ + a54 * k4_);
        f_(t + c5 * h, y_tmp_, k5_);
        y_tmp_.noalias() = y + h * (a61 * k1_ + a62 * k2_ + a63 * k3_ + a64 * k4_ + a65 * k5_);
        f_(t + h, y_tmp_, k6_);
        y_new_.noalias() = y + h * (a71 * k1_ + a73 * k3_ + a74 * k4_ + a75 * k5_ + a76 * k6_);
        f_(t + h, y_new_, k7_);
        stats_.rhs_evals += 6;
        y_tmp_.noalias() = h * (e1 * k1_ + e3 * k3_ + e4 * k4_ + e5 * k5_ + e6 * k6_ + e7 * k7_);
        return scaled_norm(y_tmp_, y, y_new_);
    }

    LindbladRhs& f_;
    Tolerances tol_;
    DenseOp k1_, k2_, k3_, k4_, k5_, k6_, k7_, y_tmp_, y_new_;
    double h_ = 0.0;
    double err_old_ = 1e-4;
    bool fsal_valid_ = false;
    IntegratorStats stats_;
};

// =============================================================================
// Evolution
// =============================================================================

struct MeasurementRecord {
    double t = 0.0;
    std::string name;
    double probability = 0.0;
};

struct Snapshot {
    double t = 0.0;
    DensityState state;
    FramePhases phases;
};

/// Time series of observables and optional snapshots.
struct Trajectory {
    std::vector<double> t;
    std::vector<double> n_m, n_q1, n_q2, purity;
    std::vector<std::vector<double>> extra; ///< one series per extra diagonal observable
    std::vector<Snapshot> snapshots;
    std::vector<MeasurementRecord> measurements;
    IntegratorStats stats;
    double max_trace_drift = 0.0;
    double worst_eigen_ratio = 0.0; ///< most negative min/max eigenvalue ratio seen
    int positivity_checks = 0;
    DensityState final_state;
    FramePhases final_phases;

    double success_probability() const {
        double p = 1.0;
        for (const auto& m : measurements) p *= m.probability;
        return p;
    }

    /// Appends another trajectory, shifting its times by `offset`.
    void append(const Trajectory& o, double offset, bool skip_first) {
        for (std::size_t i = skip_first ? 1 : 0; i < o.t.size(); ++i) {
            t.push_back(o.t[i] + offset);
            n_m.push_back(o.n_m[i]);
            n_q1.push_back(o.n_q1[i]);
            n_q2.push_back(o.n_q2[i]);
            purity.push_back(o.purity[i]);
            if (extra.size() < o.extra.size()) extra.resize(o.extra.size());
            for (std::size_t k = 0; k < o.extra.size(); ++k) extra[k].push_back(o.extra[k][i]);
        }
        for (auto s : o.snapshots) {
            s.t += offset;
            snapshots.push_back(std::move(s));
        }
        for (auto m : o.measurements) {
            m.t += offset;
            measurements.push_back(std::move(m));
        }
        stats.steps += o.stats.steps;
        stats.rejected += o.stats.rejected;
        stats.rhs_evals += o.stats.rhs_evals;
        max_trace_drift = std::max(max_trace_drift, o.max_trace_drift);
        worst_eigen_ratio = std::min(worst_eigen_ratio, o.worst_eigen_ratio);
        positivity_checks += o.positivity_checks;
        final_state = o.final_state;
    }
};

struct EvolveOptions {
    std::vector<double> snapshot_times;
    std::vector<Eigen::VectorXd> extra_diagonal; ///< weights w: Σ w_i ρ_ii
    int positivity_checks = 10;
    /// Called at every grid point with the state in the simulation frame.
    std::function<void(double, const DensityState&, const FramePhases&)> observer;
};

/// Diagonal weights of the (q1, q2, m) number operators.
inline Eigen::VectorXd number_diagonal(const SpaceDescriptor& space, const std::string& label) {
    const std::size_t slot = space.slot(label);
    Eigen::VectorXd w(space.total());
    for (int k = 0; k < space.total(); ++k) w(k) = basis_levels(space, k)[slot];
    return w;
}

/// Integrate the master equation across a schedule, recording observables at t_grid.
inline Trajectory evolve(const DensityState& rho0, const TimeDependentHamiltonian& H, const DissipationSet& diss,
                         const std::vector<double>& t_grid, const Tolerances& tol, const EvolveOptions& opt = {}) {
    if (rho0.space != H.space()) throw ParameterError("evolve: state and Hamiltonian spaces differ");
    if (std::abs(rho0.trace() - 1.0) > 1e-9) throw ParameterError("evolve: initial state trace differs from 1");
    const double total = H.total_duration();
    for (std::size_t i = 0; i < t_grid.size(); ++i) {
        if (t_grid[i] < 0.0 || t_grid[i] > total * (1.0 + 1e-12) + 1e-18)
            throw ParameterError("evolve: time grid outside the schedule");
        if (i > 0 && !(t_grid[i] > t_grid[i - 1])) throw ParameterError("evolve: time grid must be strictly increasing");
    }

    const SpaceDescriptor& space = H.space();
    const int D = space.total();
    const Eigen::VectorXd w_m = number_diagonal(space, "m");
    const Eigen::VectorXd w_1 = number_diagonal(space, "q1");
    const Eigen::VectorXd w_2 = number_diagonal(space, "q2");

    Trajectory tr;
    tr.extra.resize(opt.extra_diagonal.size());
    DensityState state = rho0;
    state.rho = 0.5 * (state.rho + state.rho.adjoint()).eval();

    std::vector<double> check_times;
    for (int k = 1; k <= opt.positivity_checks; ++k) check_times.push_back(total * k / opt.positivity_checks);
    std::size_t next_check = 0;

    auto record = [&](double t) {
        const Eigen::VectorXd diag = state.rho.diagonal().real();
        tr.t.push_back(t);
        tr.n_m.push_back(diag.dot(w_m));
        tr.n_q1.push_back(diag.dot(w_1));
        tr.n_q2.push_back(diag.dot(w_2));
        tr.purity.push_back(state.purity());
        for (std::size_t k = 0; k < opt.extra_diagonal.size(); ++k) tr.extra[k].push_back(diag.dot(opt.extra_diagonal[k]));
        tr.max_trace_drift = std::max(tr.max_trace_drift, std::abs(state.trace() - 1.0));
        for (double ts : opt.snapshot_times)
            if (std::abs(ts - t) <= 1e-12 * std::max(total, 1e-30)) tr.snapshots.push_back({t, state, H.phases(t)});
        if (opt.observer) opt.observer(t, state, H.phases(t));
    };
    auto check_positivity = [&](double t) {
        while (next_check < check_times.size() && check_times[next_check] <= t * (1.0 + 1e-12)) {
            Eigen::SelfAdjointEigenSolver<DenseOp> es(state.rho, Eigen::EigenvaluesOnly);
            const double ratio = es.eigenvalues().minCoeff() / std::max(es.eigenvalues().maxCoeff(), 1e-300);
            tr.worst_eigen_ratio = std::min(tr.worst_eigen_ratio, ratio);
            ++tr.positivity_checks;
            ++next_check;
        }
    };
    auto apply_events = [&](const std::vector<Event>& events, double t) {
        for (const auto& ev : events) {
            switch (ev.kind) {
            case Event::Kind::reset:
                for (int q : ev.qubits) state = apply_reset(state, q);
                break;
            case Event::Kind::measurement: {
                const auto out = apply_measurement(state, *ev.op);
                state = out.state;
                tr.measurements.push_back({t, ev.name, out.probability});
                break;
            }
            case Event::Kind::gate:
                state = apply_unitary(state, *ev.op);
                break;
            }
        }
    };

    // Snapshots requested at times not on the grid are added to the stop list.
    std::vector<double> stops = t_grid;
    for (double ts : opt.snapshot_times) {
        if (ts < 0.0 || ts > total * (1.0 + 1e-12) + 1e-18) throw ParameterError("evolve: snapshot time outside schedule");
        stops.push_back(ts);
    }
    std::sort(stops.begin(), stops.end());
    stops.erase(std::unique(stops.begin(), stops.end()), stops.end());
    auto on_grid = [&](double t) { return std::binary_search(t_grid.begin(), t_grid.end(), t); };

    LindbladRhs rhs(diss, D);
    Dopri5 stepper(rhs, tol, D);
    DenseOp y; ///< stepper state in the frame of the bound segment
    std::size_t next = 0;
    double t = 0.0;

    auto visit = [&](double ts) {
        if (on_grid(ts)) {
            record(ts);
        } else {
            for (double s : opt.snapshot_times)
                if (s == ts) tr.snapshots.push_back({ts, state, H.phases(ts)});
        }
    };

    if (H.segments().empty()) {
        rhs.bind_static(H.at(0.0).sparse);
        y = state.rho;
        while (next < stops.size()) {
            stepper.integrate(y, t, stops[next]);
            t = stops[next];
            rhs.to_lab(t, y, state.rho);
            visit(t);
            check_positivity(t);
            ++next;
        }
    } else {
        for (const auto& seg : H.segments()) {
            apply_events(seg.spec.events, seg.t_start);
            stepper.invalidate();
            rhs.bind(seg);
            y = state.rho;
            while (next < stops.size() && stops[next] <= seg.t_start) {
                visit(stops[next]);
                ++next;
            }
            while (next < stops.size() && stops[next] < seg.t_end) {
                stepper.integrate(y, t, stops[next]);
                t = stops[next];
                rhs.to_lab(t, y, state.rho);
                visit(t);
                check_positivity(t);
                ++next;
            }
            stepper.integrate(y, t, seg.t_end);
            t = seg.t_end;
            rhs.to_lab(t, y, state.rho);
            check_positivity(t);
        }
        apply_events(H.schedule().final_events, total);
        while (next < stops.size()) {
            visit(stops[next]);
            ++next;
        }
    }
    tr.stats = stepper.stats();
    tr.final_state = state;
    tr.final_phases = H.final_phases();
    return tr;
}

} // namespace squidmech
