#pragma once

#include "squidmech/circuit.hpp"
#include "squidmech/fock.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace squidmech {

// =============================================================================
// Term flags
// =============================================================================

/// Per-term switches of the interaction Hamiltonian. Anharmonicity is always on.
struct TermFlags {
    bool tripartite = true;
    bool radiation_pressure = true;
    bool exchange = true;
    bool cross_kerr = true;
    bool correlated_hopping = true;
    bool pair_hopping = false;
    bool higher_order_phi4X = true;
    bool phi2X2 = false;
    /// Secular filter: drops interaction matrix elements between bare states
    /// whose energies differ by more than secular_cutoff (default ω_m/2).
    bool secular = false;
    double secular_cutoff = 0.0;

    static TermFlags none() {
        TermFlags f;
        f.tripartite = f.radiation_pressure = f.exchange = f.cross_kerr = false;
        f.correlated_hopping = f.pair_hopping = f.higher_order_phi4X = f.phi2X2 = false;
        return f;
    }

    static TermFlags only_tripartite() {
        TermFlags f = none();
        f.tripartite = true;
        return f;
    }

    bool any_interaction() const {
        return tripartite || radiation_pressure || exchange || cross_kerr || correlated_hopping || pair_hopping ||
               higher_order_phi4X || phi2X2;
    }

    static std::vector<std::string> all_names() {
        return {"tripartite", "radiation_pressure", "exchange", "cross_kerr",
                "correlated_hopping", "pair_hopping", "higher_order_phi4X", "phi2X2"};
    }

    bool* field(const std::string& name) {
        if (name == "tripartite") return &tripartite;
        if (name == "radiation_pressure") return &radiation_pressure;
        if (name == "exchange") return &exchange;
        if (name == "cross_kerr") return &cross_kerr;
        if (name == "correlated_hopping") return &correlated_hopping;
        if (name == "pair_hopping") return &pair_hopping;
        if (name == "higher_order_phi4X") return &higher_order_phi4X;
        if (name == "phi2X2") return &phi2X2;
        if (name == "secular") return &secular;
        return nullptr;
    }

    bool get(const std::string& name) const { return *const_cast<TermFlags*>(this)->field(name); }

    /// Enabled set from a comma-separated list; "all", "default" and "none" are accepted.
    static TermFlags parse(const std::string& list) {
        if (list == "default") return TermFlags{};
        TermFlags f = none();
        if (list == "none" || list.empty()) return f;
        std::stringstream ss(list);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item.erase(0, item.find_first_not_of(" \t"));
            item.erase(item.find_last_not_of(" \t") + 1);
            if (item.empty()) continue;
            if (item == "all") {
                for (const auto& n : all_names()) *f.field(n) = true;
                continue;
            }
            bool* p = f.field(item);
            if (!p) throw Error(ErrorKind::config, "unknown Hamiltonian term '" + item + "'");
            *p = true;
        }
        return f;
    }

    std::string to_string() const {
        std::string s;
        for (const auto& n : all_names())
            if (get(n)) s += (s.empty() ? "" : ",") + n;
        if (secular) s += (s.empty() ? "" : ",") + std::string("secular");
        return s.empty() ? "none" : s;
    }
};

// =============================================================================
// Circuit operators
// =============================================================================

/// Ladder operators of the canonical (q1, q2, m) space.
struct CircuitOperators {
    SpaceDescriptor space;
    SparseOp c1, c2, b, n1, n2, nb, xb, id;

    explicit CircuitOperators(const SpaceDescriptor& s) : space(s) {
        if (s.labels != std::vector<std::string>{"q1", "q2", "m"})
            throw ParameterError("circuit operators require the (q1, q2, m) space");
        c1 = embed(destroy(s.dims[0]), 0, s).sparse;
        c2 = embed(destroy(s.dims[1]), 1, s).sparse;
        b = embed(destroy(s.dims[2]), 2, s).sparse;
        n1 = SparseOp(c1.adjoint() * c1);
        n2 = SparseOp(c2.adjoint() * c2);
        nb = SparseOp(b.adjoint() * b);
        xb = SparseOp(b + SparseOp(b.adjoint()));
        id = sparse_identity(s.total());
    }

    OperatorMatrix wrap(const SparseOp& m, bool hermitian = false) const { return {space, m, hermitian}; }
};

namespace detail {

/// Qubit-pair operator x1^k1 x2^k2 restricted to elements that conserve the
/// total qubit excitation number, lifted to the full space times (b + b†)^kb.
inline SparseOp conserving_quadrature_term(const SpaceDescriptor& s, int k1, int k2, int kb) {
    const int d1 = s.dims[0], d2 = s.dims[1], dm = s.dims[2];
    const DenseOp x1 = quadrature_power(d1, k1);
    const DenseOp x2 = quadrature_power(d2, k2);
    SparseOp q(d1 * d2, d1 * d2);
    std::vector<Eigen::Triplet<cplx>> t;
    for (int a1 = 0; a1 < d1; ++a1)
        for (int a2 = 0; a2 < d2; ++a2)
            for (int b1 = 0; b1 < d1; ++b1)
                for (int b2 = 0; b2 < d2; ++b2) {
                    if (a1 + a2 != b1 + b2) continue;
                    const cplx v = x1(a1, b1) * x2(a2, b2);
                    if (v != 0.0) t.emplace_back(a1 * d2 + a2, b1 * d2 + b2, v);
                }
    q.setFromTriplets(t.begin(), t.end());
    const SparseOp xm = single_mode_operator(quadrature_power(dm, kb)).sparse;
    return kron(q, xm);
}

} // namespace detail

// =============================================================================
// Static Hamiltonian
// =============================================================================

/// Rotating-frame Hamiltonian H/ħ (rad/s) at fixed qubit frequencies.
inline OperatorMatrix build_static(const CouplingSet& c, const DerivedQuantities& d, double omega1, double omega2,
                                   double omega_ref, const TermFlags& flags, const SpaceDescriptor& space,
                                   double mechanical_frequency) {
    const double vals[] = {c.g, c.g_bare, c.g1, c.g2, c.J_eff, c.V, c.Jn1, c.Jn2, c.g22x, c.g31x, c.g13x,
                           c.gx2_11, c.gx2_12, c.gx2_22, omega1, omega2, omega_ref, d.EC1, d.EC2};
    for (double v : vals)
        if (!std::isfinite(v)) throw ParameterError("build_static: non-finite coupling or frequency");

    const CircuitOperators op(space);
    const SparseOp c1d = op.c1.adjoint();
    const SparseOp c2d = op.c2.adjoint();
    const SparseOp hop = c1d * op.c2;
    const SparseOp hop_h = SparseOp(hop.adjoint());
    const SparseOp hop_sym = hop + hop_h;

    SparseOp H0 = (omega1 - omega_ref) * op.n1 + (omega2 - omega_ref) * op.n2;
    H0 += -0.5 * constants::two_pi * d.EC1 * SparseOp(c1d * c1d * op.c1 * op.c1);
    H0 += -0.5 * constants::two_pi * d.EC2 * SparseOp(c2d * c2d * op.c2 * op.c2);
    H0 += mechanical_frequency * op.nb;
    SparseOp H(space.total(), space.total());

    if (flags.tripartite) {
        // With the higher-order terms on, the 3g31x + 3g13x correction arises from
        // their projection, so the bare strength is used here.
        const double gt = flags.higher_order_phi4X ? c.g_bare : c.g;
        H += gt * SparseOp(hop_sym * op.xb);
    }
    if (flags.radiation_pressure) H += -SparseOp((c.g1 * op.n1 + c.g2 * op.n2) * op.xb);
    if (flags.exchange) H += c.J_eff * hop_sym;
    if (flags.cross_kerr) H += c.V * SparseOp(op.n1 * op.n2);
    if (flags.correlated_hopping) {
        const SparseOp ch = c1d * SparseOp(c.Jn1 * op.n1 + c.Jn2 * op.n2) * op.c2;
        H += ch + SparseOp(ch.adjoint());
    }
    if (flags.pair_hopping) {
        const SparseOp ph = c1d * c1d * op.c2 * op.c2;
        H += 0.25 * c.V * SparseOp(ph + SparseOp(ph.adjoint()));
    }
    if (flags.higher_order_phi4X) {
        H += c.g22x * detail::conserving_quadrature_term(space, 2, 2, 1);
        H += c.g31x * detail::conserving_quadrature_term(space, 3, 1, 1);
        H += c.g13x * detail::conserving_quadrature_term(space, 1, 3, 1);
    }
    if (flags.phi2X2) {
        const SparseOp x2 = op.xb * op.xb;
        const SparseOp q = c.gx2_11 * op.n1 + c.gx2_22 * op.n2 + c.gx2_12 * hop_sym;
        H += q * x2;
    }
    if (flags.secular) {
        const double cut = flags.secular_cutoff > 0.0 ? flags.secular_cutoff : 0.5 * mechanical_frequency;
        const Eigen::VectorXcd E = SparseOp(H0).diagonal();
        H.prune([&](Eigen::Index i, Eigen::Index j, const cplx&) {
            return i == j || std::abs(E(i).real() - E(j).real()) <= cut;
        });
    }
    H += H0;
    H.prune(cplx(0.0));
    return {space, H, true};
}

// =============================================================================
// Drives, events and schedules
// =============================================================================

/// Microwave drive on one qubit; Ω(t) is calibrated so that ∫Ω dt = area.
struct DrivePulse {
    enum class Shape { gaussian, square };
    int qubit = 1;
    Shape shape = Shape::gaussian;
    double duration = 200e-9;
    double sigma = 50e-9;
    double phase = 0.0;
    double area = constants::pi;

    void validate() const {
        if (qubit != 1 && qubit != 2) throw ParameterError("drive target must be qubit 1 or 2");
        if (!(duration > 0.0)) throw ParameterError("drive duration must be positive");
        if (shape == Shape::gaussian && !(sigma > 0.0)) throw ParameterError("gaussian drive needs sigma > 0");
        if (!(area >= 0.0 && area <= constants::two_pi)) throw ParameterError("drive area must lie in [0, 2pi]");
    }

    /// Peak amplitude (rad/s) such that the envelope integrates to the area.
    double amplitude() const {
        if (shape == Shape::square) return area / duration;
        const double half = 0.5 * duration;
        const double integral = sigma * std::sqrt(constants::two_pi) * std::erf(half / (std::sqrt(2.0) * sigma));
        return area / integral;
    }

    /// Ω(τ) at local time τ in [0, duration].
    double envelope(double tau) const {
        if (tau < 0.0 || tau > duration) return 0.0;
        if (shape == Shape::square) return amplitude();
        const double x = (tau - 0.5 * duration) / sigma;
        return amplitude() * std::exp(-0.5 * x * x);
    }
};

/// Instantaneous operation applied at a segment boundary.
struct Event {
    enum class Kind { reset, measurement, gate };
    Kind kind = Kind::gate;
    std::vector<int> qubits;     ///< reset targets (1 and/or 2)
    std::optional<OperatorMatrix> op; ///< projector or unitary
    std::string name;

    static Event reset(std::vector<int> q) { return {Kind::reset, std::move(q), std::nullopt, "reset"}; }
    static Event measurement(const OperatorMatrix& projector, std::string name = "measure") {
        return {Kind::measurement, {}, projector, std::move(name)};
    }
    static Event gate(const OperatorMatrix& unitary, std::string name = "gate") {
        return {Kind::gate, {}, unitary, std::move(name)};
    }
};

/// One piece of a schedule: fixed qubit frequencies for a duration.
struct Segment {
    double duration = 0.0;
    double omega1 = 0.0;
    double omega2 = 0.0;
    std::optional<DrivePulse> drive;
    std::vector<Event> events; ///< applied at the start of the segment
    double ramp = 0.0;         ///< linear frequency ramp from the previous setting
    std::string name;
};

struct PulseSchedule {
    std::vector<Segment> segments;
    std::vector<Event> final_events;

    double total_duration() const {
        double t = 0.0;
        for (const auto& s : segments) t += s.duration;
        return t;
    }

    void validate() const {
        for (const auto& s : segments) {
            if (!(s.duration >= 0.0) || !std::isfinite(s.duration))
                throw ParameterError("segment durations must be finite and non-negative");
            if (s.ramp < 0.0 || s.ramp > s.duration) throw ParameterError("segment ramp must lie within the segment");
            if (s.drive) {
                s.drive->validate();
                if (s.drive->duration > s.duration + 1e-15)
                    throw ParameterError("drive longer than its segment");
            }
        }
    }
};

/// Accumulated rotating-frame phases of the free evolution.
struct FramePhases {
    double q1 = 0.0;
    double q2 = 0.0;
    double m = 0.0;
};

// =============================================================================
// Ideal gates
// =============================================================================

enum class GateKind { swap_angle, c_phase };

/// Two-qubit unitary on the single-excitation subspace {|0_1 1_2>, |1_1 0_2>},
/// identity elsewhere. swap_angle: U_J with rotation `angle` (= J t) and phase
/// `theta`; c_phase: e^{i angle} on |1_1 0_2>.
inline OperatorMatrix ideal_gate_unitary(GateKind kind, double angle, double theta, const SpaceDescriptor& space) {
    const int D = space.total();
    std::vector<Eigen::Triplet<cplx>> t;
    const cplx I(0.0, 1.0);
    for (int k = 0; k < D; ++k) {
        const auto lv = basis_levels(space, k);
        const bool is01 = lv[0] == 0 && lv[1] == 1;
        const bool is10 = lv[0] == 1 && lv[1] == 0;
        if (kind == GateKind::c_phase) {
            t.emplace_back(k, k, is10 ? std::exp(I * angle) : cplx(1.0));
            continue;
        }
        if (!is01 && !is10) {
            t.emplace_back(k, k, 1.0);
            continue;
        }
        const int partner = basis_index(space, {{"q1", is01 ? 1 : 0}, {"q2", is01 ? 0 : 1}, {"m", lv[2]}});
        t.emplace_back(k, k, std::cos(angle));
        // |01> -> -i e^{iθ} sin |10>,  |10> -> -i e^{-iθ} sin |01>
        const cplx off = -I * std::exp(I * (is01 ? theta : -theta)) * std::sin(angle);
        t.emplace_back(partner, k, off);
    }
    SparseOp U(D, D);
    U.setFromTriplets(t.begin(), t.end());
    return {space, U, false};
}

inline Event ideal_gate(GateKind kind, double angle, double theta, const SpaceDescriptor& space) {
    return Event::gate(ideal_gate_unitary(kind, angle, theta, space),
                       kind == GateKind::swap_angle ? "swap_angle" : "c_phase");
}

/// Ideal π rotation |0> <-> |1> of one qubit (levels >= 2 untouched).
inline Event ideal_excitation(int qubit, const SpaceDescriptor& space) {
    const int D = space.total();
    std::vector<Eigen::Triplet<cplx>> t;
    const std::size_t slot = qubit == 1 ? 0 : 1;
    for (int k = 0; k < D; ++k) {
        auto lv = basis_levels(space, k);
        if (lv[slot] > 1) {
            t.emplace_back(k, k, 1.0);
            continue;
        }
        lv[slot] = 1 - lv[slot];
        const int j = basis_index(space, {{"q1", lv[0]}, {"q2", lv[1]}, {"m", lv[2]}});
        t.emplace_back(j, k, 1.0);
    }
    SparseOp U(D, D);
    U.setFromTriplets(t.begin(), t.end());
    return Event::gate({space, U, false}, "excite_q" + std::to_string(qubit));
}

/// Projector onto a two-qubit basis state (q1, q2), identity on the phonon.
inline OperatorMatrix qubit_projector(int q1, int q2, const SpaceDescriptor& space) {
    const int D = space.total();
    std::vector<Eigen::Triplet<cplx>> t;
    for (int k = 0; k < D; ++k) {
        const auto lv = basis_levels(space, k);
        if (lv[0] == q1 && lv[1] == q2) t.emplace_back(k, k, 1.0);
    }
    SparseOp P(D, D);
    P.setFromTriplets(t.begin(), t.end());
    return {space, P, true};
}

// =============================================================================
// Time-dependent Hamiltonian
// =============================================================================

/// Time-dependent contribution coef(t)·op.
struct DrivenTerm {
    std::function<cplx(double)> coef;
    SparseOp op;
};

/// A schedule segment bound to its static generator.
struct BoundSegment {
    double t_start = 0.0;
    double t_end = 0.0;
    Segment spec;
    SparseOp H0;
    double delta1 = 0.0, delta2 = 0.0;
    double prev_delta1 = 0.0, prev_delta2 = 0.0;
    FramePhases phases_at_start;
    std::vector<DrivenTerm> terms;
};

/// Piecewise Hamiltonian handle built from a schedule.
class TimeDependentHamiltonian {
public:
    TimeDependentHamiltonian(const PulseSchedule& schedule, const CouplingSet& couplings,
                             const DerivedQuantities& derived, const TermFlags& flags, const SpaceDescriptor& space,
                             double mechanical_frequency, double omega_ref)
        : schedule_(schedule), space_(space), omega_m_(mechanical_frequency), omega_ref_(omega_ref) {
        schedule.validate();
        const CircuitOperators ops(space);
        double t = 0.0;
        FramePhases ph;
        double prev1 = 0.0, prev2 = 0.0;
        bool first = true;
        for (const auto& seg : schedule.segments) {
            BoundSegment b;
            b.t_start = t;
            b.t_end = t + seg.duration;
            b.spec = seg;
            b.H0 = build_static(couplings, derived, seg.omega1, seg.omega2, omega_ref, flags, space,
                                mechanical_frequency)
                       .sparse;
            b.delta1 = seg.omega1 - omega_ref;
            b.delta2 = seg.omega2 - omega_ref;
            b.prev_delta1 = first ? b.delta1 : prev1;
            b.prev_delta2 = first ? b.delta2 : prev2;
            b.phases_at_start = ph;
            segments_.push_back(std::move(b));
            BoundSegment& cur = segments_.back();
            add_terms(cur, ops);
            ph = phases_at(cur, cur.t_end);
            prev1 = cur.delta1;
            prev2 = cur.delta2;
            first = false;
            t = cur.t_end;
        }
        total_ = t;
        final_phases_ = ph;
        final_phases_.m = mechanical_frequency * t;
        if (segments_.empty()) {
            static_H_ = build_static(couplings, derived, derived.omega1, derived.omega1 + mechanical_frequency,
                                     omega_ref, flags, space, mechanical_frequency)
                            .sparse;
        }
    }

    const SpaceDescriptor& space() const { return space_; }
    const std::vector<BoundSegment>& segments() const { return segments_; }
    const PulseSchedule& schedule() const { return schedule_; }
    double total_duration() const { return total_; }
    double omega_ref() const { return omega_ref_; }
    FramePhases final_phases() const { return final_phases_; }

    /// H(t)/ħ in rad/s. With an empty schedule the resonant static Hamiltonian is returned.
    OperatorMatrix at(double t) const {
        if (segments_.empty()) return {space_, static_H_, true};
        if (t < 0.0 || t > total_ * (1.0 + 1e-12) + 1e-18)
            throw ParameterError("hamiltonian_of_time: t outside the schedule");
        const BoundSegment& s = segment_at(t);
        SparseOp H = s.H0;
        for (const auto& term : s.terms) H += term.coef(t) * term.op;
        return {space_, H, true};
    }

    const BoundSegment& segment_at(double t) const {
        for (const auto& s : segments_)
            if (t < s.t_end) return s;
        return segments_.back();
    }

    /// Accumulated frame phases at time t inside segment s.
    static FramePhases phases_at(const BoundSegment& s, double t) {
        const double tau = std::clamp(t - s.t_start, 0.0, s.t_end - s.t_start);
        FramePhases p = s.phases_at_start;
        const double r = s.spec.ramp;
        auto integral = [&](double prev, double cur) {
            if (r <= 0.0) return cur * tau;
            if (tau <= r) return prev * tau + (cur - prev) * tau * tau / (2.0 * r);
            return prev * r + (cur - prev) * r / 2.0 + cur * (tau - r);
        };
        p.q1 += integral(s.prev_delta1, s.delta1);
        p.q2 += integral(s.prev_delta2, s.delta2);
        return p;
    }

    FramePhases phases(double t) const {
        if (segments_.empty()) return {};
        FramePhases p = phases_at(segment_at(t), t);
        p.m = omega_m_ * t;
        return p;
    }

private:
    void add_terms(BoundSegment& b, const CircuitOperators& ops) {
        const double t0 = b.t_start;
        if (b.spec.ramp > 0.0) {
            const double r = b.spec.ramp;
            for (int q = 1; q <= 2; ++q) {
                const double prev = q == 1 ? b.prev_delta1 : b.prev_delta2;
                const double cur = q == 1 ? b.delta1 : b.delta2;
                if (prev == cur) continue;
                b.terms.push_back({[=](double t) {
                                       const double tau = t - t0;
                                       if (tau >= r) return cplx(0.0);
                                       return cplx((prev - cur) * (1.0 - tau / r));
                                   },
                                   q == 1 ? ops.n1 : ops.n2});
            }
        }
        if (b.spec.drive) {
            const DrivePulse d = *b.spec.drive;
            const SparseOp c = d.qubit == 1 ? ops.c1 : ops.c2;
            const BoundSegment snapshot = b;
            auto frame = [snapshot, q = d.qubit](double t) {
                const FramePhases p = phases_at(snapshot, t);
                return q == 1 ? p.q1 : p.q2;
            };
            b.terms.push_back({[=](double t) {
                                   const double w = 0.5 * d.envelope(t - t0);
                                   return w * std::exp(cplx(0.0, d.phase + frame(t)));
                               },
                               c});
            b.terms.push_back({[=](double t) {
                                   const double w = 0.5 * d.envelope(t - t0);
                                   return w * std::exp(cplx(0.0, -d.phase - frame(t)));
                               },
                               SparseOp(c.adjoint())});
        }
    }

    PulseSchedule schedule_;
    SpaceDescriptor space_;
    double omega_m_;
    double omega_ref_;
    double total_ = 0.0;
    FramePhases final_phases_;
    std::vector<BoundSegment> segments_;
    SparseOp static_H_;
};

inline TimeDependentHamiltonian hamiltonian_of_time(const PulseSchedule& schedule, const CouplingSet& couplings,
                                                    const DerivedQuantities& derived, const TermFlags& flags,
                                                    const SpaceDescriptor& space, double mechanical_frequency,
                                                    double omega_ref) {
    return TimeDependentHamiltonian(schedule, couplings, derived, flags, space, mechanical_frequency, omega_ref);
}

} // namespace squidmech
