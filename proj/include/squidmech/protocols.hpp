#pragma once

#include "squidmech/analysis.hpp"
#include "squidmech/lindblad.hpp"
#include "squidmech/planner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace squidmech {

// =============================================================================
// Simulation model
// =============================================================================

/// Everything needed to simulate one protocol run.
struct SimulationModel {
    CircuitParams params;
    TermFlags flags;
    int phonon_dim = 15;
    int qubit_dim = 3;
    Tolerances tol;
    double stray_J = 0.0;        ///< added to J_eff (rad/s)
    double omega2_offset = 0.0;  ///< frequency error of qubit 2 in tripartite segments (rad/s)
    double ramp = 0.0;           ///< linear frequency ramp at switches (s)
    double park_detuning = constants::two_pi * 100.0e6;
    double frame_offset = 0.0;   ///< ω_ref − ω_1 (rad/s)
    bool dissipation = true;

    DerivedQuantities derived() const { return derive_static(params); }

    CouplingSet coupling_set() const {
        CouplingSet c = couplings(params, params.phi_b);
        c.J_eff += stray_J;
        return c;
    }

    SpaceDescriptor space() const { return circuit_space(phonon_dim, qubit_dim); }
    double omega1() const { return derived().omega1; }
    double omega_ref() const { return omega1() + frame_offset; }
    double omega2_A() const { return omega1() + params.omega_m + omega2_offset; }
    double omega2_B() const { return omega1() - params.omega_m + omega2_offset; }
    double omega2_park() const { return omega1() + params.omega_m + park_detuning; }

    DissipationSet dissipators() const {
        if (!dissipation) return {};
        return make_dissipators(params, derived(), space());
    }

    TimeDependentHamiltonian hamiltonian(const PulseSchedule& s) const {
        return TimeDependentHamiltonian(s, coupling_set(), derived(), flags, space(), params.omega_m, omega_ref());
    }

    Segment segment_A(double duration, std::string name = "A") const {
        return {duration, omega1(), omega2_A(), std::nullopt, {}, ramp, std::move(name)};
    }
    Segment segment_B(double duration, std::string name = "B") const {
        return {duration, omega1(), omega2_B(), std::nullopt, {}, ramp, std::move(name)};
    }
    Segment segment_park(double duration, std::string name = "park") const {
        return {duration, omega1(), omega2_park(), std::nullopt, {}, ramp, std::move(name)};
    }
};

/// Outcome of one protocol execution.
struct ProtocolResult {
    Trajectory trajectory;
    DensityState final_state;  ///< full state in the interaction frame
    DensityState phonon_state; ///< reduced phonon state
    std::optional<double> fidelity;      ///< <ψ|ρ|ψ>
    std::optional<double> root_fidelity; ///< sqrt(<ψ|ρ|ψ>)
    double success_probability = 1.0;
    PulseSchedule schedule;
    std::vector<double> cycle_n_m; ///< phonon number at every cycle end (cooling)
    std::vector<std::string> warnings;
    double runtime_s = 0.0;
};

namespace detail {

inline DensityState product_state(const SimulationModel& m, int q1, int q2, const DensityState& phonon) {
    return tensor(tensor(fock_state(m.qubit_dim, q1, "q1"), fock_state(m.qubit_dim, q2, "q2")), phonon);
}

inline std::vector<double> grid_for(double total, int points) {
    if (points < 2 || !(total > 0.0)) return {0.0};
    return linspace(0.0, total, static_cast<std::size_t>(points));
}

/// Frame phases at every segment start (m included).
inline std::vector<FramePhases> segment_start_phases(const PulseSchedule& s, const SimulationModel& m) {
    PulseSchedule bare;
    for (auto seg : s.segments) {
        seg.events.clear();
        seg.drive.reset();
        bare.segments.push_back(seg);
    }
    const TimeDependentHamiltonian H(bare, CouplingSet{}, m.derived(), TermFlags::none(), circuit_space(2, 2),
                                     m.params.omega_m, m.omega_ref());
    std::vector<FramePhases> out;
    for (const auto& b : H.segments()) {
        FramePhases p = b.phases_at_start;
        p.m = m.params.omega_m * b.t_start;
        out.push_back(p);
    }
    FramePhases end = H.final_phases();
    out.push_back(end);
    return out;
}

inline void set_fidelity(ProtocolResult& r, double f) {
    r.fidelity = f;
    r.root_fidelity = std::sqrt(f);
}

} // namespace detail

// =============================================================================
// Cooling
// =============================================================================

struct CoolingConfig {
    enum class Excitation { ideal, gaussian };
    int cycles = 100;
    double t_excite = 200e-9;
    double t_cool = 200e-9;
    double t_reset = 200e-9;
    Excitation excitation = Excitation::ideal;
    bool greedy = false;
    std::optional<double> initial_nbar; ///< defaults to the bath occupation
    int samples_per_cycle = 5;

    void validate() const {
        if (cycles < 1) throw ParameterError("cooling needs at least one cycle");
        if (!(t_excite > 0.0) || !(t_cool > 0.0) || !(t_reset > 0.0))
            throw ParameterError("cooling durations must be positive");
        if (samples_per_cycle < 2) throw ParameterError("cooling needs at least two samples per cycle");
    }
};

/// One cooling cycle: excite q1, exchange at ω1 = ω2 − ω_m, reset both qubits.
inline PulseSchedule cooling_cycle(const SimulationModel& m, const CoolingConfig& c, double t_cool) {
    PulseSchedule s;
    const auto space = m.space();
    Segment cool = m.segment_A(t_cool, "cool");
    if (c.excitation == CoolingConfig::Excitation::gaussian) {
        Segment ex = m.segment_park(c.t_excite, "excite");
        DrivePulse d;
        d.qubit = 1;
        d.duration = c.t_excite;
        d.sigma = c.t_excite / 4.0;
        d.phase = -0.5 * constants::pi;
        ex.drive = d;
        s.segments.push_back(ex);
    } else {
        cool.events.push_back(ideal_excitation(1, space));
    }
    s.segments.push_back(cool);
    Segment reset = m.segment_park(c.t_reset, "reset");
    reset.events.push_back(Event::reset({1, 2}));
    s.segments.push_back(reset);
    return s;
}

inline ProtocolResult run_cooling(const SimulationModel& m, const CoolingConfig& c) {
    c.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const auto d = m.derived();
    const double nbar = c.initial_nbar.value_or(d.n_th);
    const double g = m.coupling_set().g;
    DensityState state = detail::product_state(m, 0, 0, thermal_state(m.phonon_dim, nbar, "m"));
    const DissipationSet diss = m.dissipators();

    ProtocolResult r;
    double offset = 0.0;
    double cached_t = -1.0;
    std::optional<TimeDependentHamiltonian> H;
    EvolveOptions opt;
    opt.positivity_checks = 1;
    for (int k = 0; k < c.cycles; ++k) {
        double t_cool = c.t_cool;
        if (c.greedy) {
            const double n = std::max(state.rho.diagonal().real().dot(number_diagonal(state.space, "m")), 1e-12);
            t_cool = std::min(c.t_cool, constants::pi / (2.0 * g * std::sqrt(n)));
        }
        if (t_cool != cached_t) {
            r.schedule = cooling_cycle(m, c, t_cool);
            H.emplace(m.hamiltonian(r.schedule));
            cached_t = t_cool;
        }
        const auto grid = detail::grid_for(H->total_duration(), c.samples_per_cycle);
        const Trajectory tr = evolve(state, *H, diss, grid, m.tol, opt);
        if (k == 0) {
            r.trajectory = tr;
        } else {
            r.trajectory.append(tr, offset, true);
        }
        state = tr.final_state;
        offset += H->total_duration();
        r.cycle_n_m.push_back(tr.n_m.back());
    }
    r.trajectory.final_state = state;
    r.final_state = state;
    r.phonon_state = partial_trace(state, {"m"});
    detail::set_fidelity(r, std::clamp(r.phonon_state.rho(0, 0).real(), 0.0, 1.0));
    r.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

// =============================================================================
// Fock, GHZ and Bell preparation
// =============================================================================

enum class FockTarget { fock, ghz, bell, ideal };

inline std::string to_string(FockTarget t) {
    switch (t) {
    case FockTarget::fock: return "fock";
    case FockTarget::ghz: return "ghz";
    case FockTarget::bell: return "bell";
    case FockTarget::ideal: return "ideal";
    }
    return "?";
}

struct FockConfig {
    FockTarget target = FockTarget::fock;
    std::optional<double> stop_time; ///< default π/(2g), or π/(4g) for GHZ
    double initial_nbar = 0.05;
    bool gaussian_excitation = false;
    double t_excite = 200e-9;
    int samples = 101;
    std::vector<double> snapshot_times; ///< measured from the start of the exchange
};

/// Ideal state cos(gt)|0_1 0_m 1_2> − i sin(gt)|1_1 1_m 0_2>.
inline StateVector ideal_transfer_state(const SpaceDescriptor& sp, double g, double t) {
    return ket(sp, {{{{"q1", 0}, {"q2", 1}, {"m", 0}}, std::cos(g * t)},
                    {{{"q1", 1}, {"q2", 0}, {"m", 1}}, cplx(0.0, -std::sin(g * t))}});
}

/// (|0_1 0_m 1_2> − i|1_1 1_m 0_2>)/√2.
inline StateVector ghz_state(const SpaceDescriptor& sp) { return ideal_transfer_state(sp, 1.0, 0.25 * constants::pi); }

/// (|0_1 0_m 0_2> − i|1_1 1_m 0_2>)/√2.
inline StateVector bell_state(const SpaceDescriptor& sp) {
    return ket(sp, {{{{"q1", 0}, {"q2", 0}, {"m", 0}}, 1.0}, {{{"q1", 1}, {"q2", 0}, {"m", 1}}, cplx(0.0, -1.0)}});
}

/// Default stop time of a target.
inline double fock_stop_time(FockTarget t, double g) {
    return t == FockTarget::ghz ? constants::pi / (4.0 * g) : constants::pi / (2.0 * g);
}

inline ProtocolResult run_fock(const SimulationModel& m, const FockConfig& c) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto sp = m.space();
    const double g = m.coupling_set().g;
    const double stop = c.stop_time.value_or(fock_stop_time(c.target, g));
    if (!(stop >= 0.0)) throw ParameterError("stop time must be non-negative");
    const DensityState phonon = thermal_state(m.phonon_dim, c.initial_nbar, "m");
    const bool superposed = c.target == FockTarget::bell;

    PulseSchedule s;
    DensityState rho0 = detail::product_state(m, 0, 0, phonon);
    double t_pre = 0.0;
    if (c.gaussian_excitation) {
        Segment ex = m.segment_park(c.t_excite, "excite");
        DrivePulse d;
        d.qubit = 2;
        d.duration = c.t_excite;
        d.sigma = c.t_excite / 4.0;
        d.phase = -0.5 * constants::pi;
        d.area = superposed ? 0.5 * constants::pi : constants::pi;
        ex.drive = d;
        s.segments.push_back(ex);
        t_pre = c.t_excite;
    } else if (superposed) {
        const StateVector q = (StateVector(2) << 1.0, 1.0).finished() / std::sqrt(2.0);
        StateVector qq = StateVector::Zero(m.qubit_dim);
        qq.head(2) = q;
        DensityState q2{single_mode_space(m.qubit_dim, "q2"), qq * qq.adjoint()};
        rho0 = tensor(tensor(fock_state(m.qubit_dim, 0, "q1"), q2), phonon);
    } else {
        rho0 = detail::product_state(m, 0, 1, phonon);
    }
    s.segments.push_back(m.segment_A(stop, "exchange"));
    const auto H = m.hamiltonian(s);

    std::vector<double> grid = detail::grid_for(stop, c.samples);
    for (auto& t : grid) t += t_pre;
    if (t_pre > 0.0) grid.insert(grid.begin(), 0.0);
    EvolveOptions opt;
    for (double ts : c.snapshot_times) opt.snapshot_times.push_back(ts + t_pre);

    ProtocolResult r;
    r.schedule = s;
    r.trajectory = evolve(rho0, H, m.dissipators(), grid, m.tol, opt);
    r.final_state = to_interaction_frame(r.trajectory.final_state, r.trajectory.final_phases);
    r.phonon_state = partial_trace(r.final_state, {"m"});
    switch (c.target) {
    case FockTarget::fock:
        detail::set_fidelity(r, fidelity(r.phonon_state, mode_ket(m.phonon_dim, {0.0, 1.0})));
        break;
    case FockTarget::ghz: detail::set_fidelity(r, fidelity(r.final_state, ghz_state(sp))); break;
    case FockTarget::bell: detail::set_fidelity(r, fidelity(r.final_state, bell_state(sp))); break;
    case FockTarget::ideal: detail::set_fidelity(r, fidelity(r.final_state, ideal_transfer_state(sp, g, stop))); break;
    }
    r.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

// =============================================================================
// Multi-phonon superpositions
// =============================================================================

struct SuperpositionConfig {
    std::vector<double> times; ///< t_1..t_k; odd entries configuration A, even B
    double alpha = 1.0;        ///< initial amplitude of |0_1 1_2>
    double beta_phase = 0.0;   ///< phase of the |1_1 0_2> amplitude
    bool measure_each_pair = true;
    bool postselect = true;
    bool frame_correction = true;
    double initial_nbar = 0.05;
    std::vector<cplx> target; ///< physical phonon amplitudes; empty skips the fidelity
    int samples_per_segment = 11;

    static SuperpositionConfig from_plan(const DistributionPlan& p) {
        SuperpositionConfig c;
        c.times = p.times;
        c.alpha = p.alpha;
        c.beta_phase = p.beta_phase;
        c.target = p.mode == PlanMode::amplitudes ? p.target_amplitudes : p.predicted;
        return c;
    }
};

/// Schedule of the alternating protocol, including the frame-correction phase gates.
inline PulseSchedule superposition_schedule(const SimulationModel& m, const SuperpositionConfig& c) {
    if (c.times.empty()) throw ParameterError("superposition needs at least one time");
    if (!(c.alpha >= 0.0 && c.alpha <= 1.0)) throw ParameterError("alpha must lie in [0, 1]");
    for (double t : c.times)
        if (!(t >= 0.0) || !std::isfinite(t)) throw ParameterError("superposition times must be finite and non-negative");
    const auto sp = m.space();
    PulseSchedule s;
    for (std::size_t k = 0; k < c.times.size(); ++k)
        s.segments.push_back(k % 2 == 0 ? m.segment_A(c.times[k], "A" + std::to_string(k + 1))
                                        : m.segment_B(c.times[k], "B" + std::to_string(k + 1)));
    const auto ph = detail::segment_start_phases(s, m);

    std::vector<std::vector<Event>> events(s.segments.size() + 1);
    events[0].push_back(ideal_excitation(2, sp));
    if (c.alpha < 1.0) {
        const double angle = std::acos(c.alpha);
        // −i e^{iθ} sin = e^{iφ_β} sin
        const double theta = c.beta_phase + 0.5 * constants::pi - (ph[0].q1 - ph[0].q2);
        events[0].push_back(ideal_gate(GateKind::swap_angle, angle, theta, sp));
    }
    std::vector<double> before(s.segments.size(), 0.0);
    for (std::size_t k = 0; k < s.segments.size(); ++k) {
        const auto& p = ph[k];
        before[k] = (k % 2 == 0) ? p.q1 + p.m - p.q2 : -(p.q2 + p.m - p.q1);
    }
    auto add_phase = [&](std::size_t slot, double x) {
        if (!c.frame_correction || x == 0.0) return;
        events[slot].push_back(ideal_gate(GateKind::c_phase, std::remainder(x, constants::two_pi), 0.0, sp));
    };
    const OperatorMatrix P = qubit_projector(0, 1, sp);
    for (std::size_t k = 0; k < s.segments.size(); ++k) {
        // Closing gate of the previous segment merged with the opening gate of this one.
        add_phase(k, before[k] - (k > 0 ? before[k - 1] : 0.0));
        if (c.measure_each_pair && k > 0 && k % 2 == 0)
            events[k].push_back(Event::measurement(P, "postselect_01_step" + std::to_string(k / 2)));
    }
    add_phase(s.segments.size(), -before.back());
    for (std::size_t k = 0; k < s.segments.size(); ++k) s.segments[k].events = events[k];
    s.final_events = events.back();
    if (c.postselect) s.final_events.push_back(Event::measurement(P, "postselect_01_final"));
    return s;
}

inline ProtocolResult run_superposition(const SimulationModel& m, const SuperpositionConfig& c) {
    const auto t0 = std::chrono::steady_clock::now();
    const PulseSchedule s = superposition_schedule(m, c);
    const auto H = m.hamiltonian(s);
    const DensityState rho0 = detail::product_state(m, 0, 0, thermal_state(m.phonon_dim, c.initial_nbar, "m"));

    std::vector<double> grid;
    double t = 0.0;
    for (const auto& seg : s.segments) {
        const auto g = linspace(t, t + seg.duration, static_cast<std::size_t>(std::max(2, c.samples_per_segment)));
        for (double v : g)
            if (grid.empty() || v > grid.back()) grid.push_back(v);
        t += seg.duration;
    }
    ProtocolResult r;
    r.schedule = s;
    r.trajectory = evolve(rho0, H, m.dissipators(), grid, m.tol);
    r.success_probability = r.trajectory.success_probability();
    r.final_state = to_interaction_frame(r.trajectory.final_state, r.trajectory.final_phases);
    r.phonon_state = partial_trace(r.final_state, {"m"});
    if (!c.target.empty()) {
        if (static_cast<int>(c.target.size()) > m.phonon_dim) throw ParameterError("target exceeds the phonon dimension");
        detail::set_fidelity(r, fidelity(r.phonon_state, mode_ket(m.phonon_dim, c.target)));
    }
    r.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

struct PlanSelection {
    DistributionPlan plan;
    double fidelity = 0.0;
    double success_probability = 0.0;
    int simulated = 0;
};

/// Chooses among the converged planner solutions by running the most promising
/// ones through the simulator. Candidates are ranked by ln P − T (1/T1 + 1/T2),
/// the expected post-selection yield discounted by qubit decoherence, and the
/// best `top_k` of them are simulated.
inline PlanSelection select_plan_by_simulation(const SimulationModel& m, const DistributionPlan& plan,
                                               const SuperpositionConfig& base, int top_k = 12) {
    std::vector<DistributionPlan> pool = plan.alternatives;
    if (pool.empty()) pool.push_back(plan);
    const double gamma = 1.0 / m.params.T1 + 1.0 / m.params.T2;
    auto score = [&](const DistributionPlan& p) {
        return std::log(std::max(p.success_probability, 1e-300)) - gamma * p.total_time();
    };
    std::stable_sort(pool.begin(), pool.end(),
                     [&](const DistributionPlan& a, const DistributionPlan& b) { return score(a) > score(b); });
    std::vector<DistributionPlan> unique;
    for (const auto& p : pool) {
        bool dup = false;
        for (const auto& u : unique) {
            double d = 0.0;
            for (std::size_t k = 0; k < p.times.size(); ++k) d = std::max(d, std::abs(p.times[k] - u.times[k]));
            if (d < 1e-12 && std::abs(p.alpha - u.alpha) < 1e-9) dup = true;
        }
        if (!dup) unique.push_back(p);
        if (static_cast<int>(unique.size()) >= std::max(1, top_k)) break;
    }
    PlanSelection best;
    best.fidelity = -1.0;
    for (const auto& p : unique) {
        SuperpositionConfig c = base;
        c.times = p.times;
        c.alpha = p.alpha;
        c.beta_phase = p.beta_phase;
        if (c.target.empty()) c.target = p.mode == PlanMode::amplitudes ? p.target_amplitudes : p.predicted;
        try {
            const ProtocolResult r = run_superposition(m, c);
            ++best.simulated;
            if (r.fidelity && *r.fidelity > best.fidelity) {
                best.fidelity = *r.fidelity;
                best.success_probability = r.success_probability;
                best.plan = p;
            }
        } catch (const PostselectionError&) {
            ++best.simulated;
        }
    }
    if (best.fidelity < 0.0) throw PlannerError("no planner candidate survived post-selection", 0.0);
    best.plan.alternatives.clear();
    best.plan.converged_starts = plan.converged_starts;
    return best;
}

/// Pure post-selected phonon amplitudes of a (nearly) pure reduced state,
/// phase-aligned so that the largest amplitude is real and positive.
inline std::vector<cplx> dominant_amplitudes(const DensityState& phonon, int count) {
    Eigen::SelfAdjointEigenSolver<DenseOp> es(phonon.rho);
    const Eigen::Index top = phonon.dim() - 1;
    StateVector v = es.eigenvectors().col(top);
    Eigen::Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    v *= std::conj(v(imax)) / std::abs(v(imax));
    std::vector<cplx> out(static_cast<std::size_t>(count), 0.0);
    for (int n = 0; n < count && n < phonon.dim(); ++n) out[static_cast<std::size_t>(n)] = v(n);
    return out;
}

// =============================================================================
// Arbitrary-state replay through the simulator
// =============================================================================

struct ArbitraryReplayConfig {
    double initial_nbar = 0.0;
    int samples_per_segment = 11;
};

/// Schedule realising an arbitrary-state plan: ideal exchange gates and
/// configuration-B tripartite pulses with phase-setting gates around them.
inline PulseSchedule arbitrary_schedule(const SimulationModel& m, const ArbitraryPlan& plan) {
    const auto sp = m.space();
    PulseSchedule s;
    for (std::size_t k = 0; k < plan.steps.size(); ++k)
        s.segments.push_back(m.segment_B(plan.steps[k].t_tri, "B" + std::to_string(k + 1)));
    if (s.segments.empty()) {
        s.segments.push_back(m.segment_park(0.0, "idle"));
        s.segments[0].events.push_back(ideal_excitation(2, sp));
        return s;
    }
    const auto ph = detail::segment_start_phases(s, m);
    double pending = 0.0; // closing phase of the previous pulse
    for (std::size_t k = 0; k < plan.steps.size(); ++k) {
        const auto& st = plan.steps[k];
        auto& ev = s.segments[k].events;
        if (k == 0) ev.push_back(ideal_excitation(2, sp));
        if (pending != 0.0) ev.push_back(ideal_gate(GateKind::c_phase, pending, 0.0, sp));
        const double thJ = st.theta_J - (ph[k].q1 - ph[k].q2);
        ev.push_back(ideal_gate(GateKind::swap_angle, plan.J * st.t_J, thJ, sp));
        const double Theta = ph[k].q2 + ph[k].m - ph[k].q1;
        const double open = std::remainder(st.theta_tri - Theta, constants::two_pi);
        ev.push_back(ideal_gate(GateKind::c_phase, open, 0.0, sp));
        pending = -open;
    }
    s.final_events.push_back(ideal_gate(GateKind::c_phase, pending, 0.0, sp));
    s.final_events.push_back(Event::measurement(qubit_projector(0, 1, sp), "postselect_01_final"));
    return s;
}

inline ProtocolResult replay_arbitrary_full(const SimulationModel& m, const ArbitraryPlan& plan,
                                            const ArbitraryReplayConfig& c = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    const PulseSchedule s = arbitrary_schedule(m, plan);
    const auto H = m.hamiltonian(s);
    const DensityState rho0 = detail::product_state(m, 0, 0, thermal_state(m.phonon_dim, c.initial_nbar, "m"));
    std::vector<double> grid;
    double t = 0.0;
    for (const auto& seg : s.segments) {
        const auto g = linspace(t, t + seg.duration, static_cast<std::size_t>(std::max(2, c.samples_per_segment)));
        for (double v : g)
            if (grid.empty() || v > grid.back()) grid.push_back(v);
        t += seg.duration;
    }
    if (grid.empty()) grid.push_back(0.0);
    ProtocolResult r;
    r.schedule = s;
    r.trajectory = evolve(rho0, H, m.dissipators(), grid, m.tol);
    r.success_probability = r.trajectory.success_probability();
    r.final_state = to_interaction_frame(r.trajectory.final_state, r.trajectory.final_phases);
    r.phonon_state = partial_trace(r.final_state, {"m"});
    detail::set_fidelity(r, fidelity(r.phonon_state, mode_ket(m.phonon_dim, plan.target)));
    r.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

// =============================================================================
// Robustness sweeps
// =============================================================================

enum class SweepKind { stray_J, detuning, coherence };

inline std::string to_string(SweepKind k) {
    switch (k) {
    case SweepKind::stray_J: return "stray_J";
    case SweepKind::detuning: return "detuning";
    case SweepKind::coherence: return "coherence";
    }
    return "?";
}

struct SweepOptions {
    int samples = 101;           ///< grid over [0, π/g]
    double initial_nbar = 0.0;
    bool include_cooling = false; ///< stray_J only
    CoolingConfig cooling;        ///< used when include_cooling is set
    int cooling_phonon_dim = 20;
    int workers = 0;              ///< 0 selects the hardware concurrency
};

struct SweepRow {
    double value = 0.0;             ///< J_eff/2π (Hz), detuning/2π (Hz) or T1 = T2 (s)
    double fidelity_prep = 0.0;     ///< <ψ_ideal|ρ|ψ_ideal> at π/(2g)
    double root_fidelity_prep = 0.0;
    double min_fidelity = 0.0;      ///< minimum over [0, π/g]
    double peak_phonon_one = 0.0;   ///< max over [0, π/g] of <1_m|ρ_m|1_m>
    std::optional<double> cooling_n_m;
    std::optional<double> cooling_vacuum;
    std::vector<double> t;
    std::vector<double> fidelity_t;
};

inline SweepRow robustness_point(const SimulationModel& base, SweepKind kind, double value, const SweepOptions& o) {
    SimulationModel m = base;
    switch (kind) {
    case SweepKind::stray_J: m.stray_J += constants::two_pi * value; break;
    case SweepKind::detuning: m.omega2_offset += constants::two_pi * value; break;
    case SweepKind::coherence:
        m.params.T1 = value;
        m.params.T2 = value;
        break;
    }
    const auto sp = m.space();
    const double g = m.coupling_set().g;
    const double T = constants::pi / g;

    PulseSchedule s;
    s.segments.push_back(m.segment_A(T, "exchange"));
    const auto H = m.hamiltonian(s);
    const auto rho0 = detail::product_state(m, 0, 1, thermal_state(m.phonon_dim, o.initial_nbar, "m"));
    const auto grid = detail::grid_for(T, o.samples);
    Eigen::VectorXd w1 = Eigen::VectorXd::Zero(sp.total());
    for (int k = 0; k < sp.total(); ++k)
        if (basis_levels(sp, k)[2] == 1) w1(k) = 1.0;

    SweepRow row;
    row.value = value;
    row.min_fidelity = 1.0;
    EvolveOptions opt;
    opt.extra_diagonal = {w1};
    opt.observer = [&](double t, const DensityState& st, const FramePhases& ph) {
        const double f = fidelity(to_interaction_frame(st, ph), ideal_transfer_state(sp, g, t));
        row.t.push_back(t);
        row.fidelity_t.push_back(f);
        row.min_fidelity = std::min(row.min_fidelity, f);
    };
    const Trajectory tr = evolve(rho0, H, m.dissipators(), grid, m.tol, opt);
    const std::size_t mid = static_cast<std::size_t>(o.samples / 2);
    row.fidelity_prep = row.fidelity_t.at(mid);
    row.root_fidelity_prep = std::sqrt(row.fidelity_prep);
    row.peak_phonon_one = *std::max_element(tr.extra[0].begin(), tr.extra[0].end());

    if (kind == SweepKind::stray_J && o.include_cooling) {
        SimulationModel mc = m;
        mc.phonon_dim = o.cooling_phonon_dim;
        const auto cr = run_cooling(mc, o.cooling);
        row.cooling_n_m = cr.cycle_n_m.back();
        row.cooling_vacuum = cr.fidelity;
    }
    return row;
}

/// Runs every sweep point independently; points are distributed over worker threads.
inline std::vector<SweepRow> robustness_sweep(const SimulationModel& base, SweepKind kind,
                                              const std::vector<double>& values, const SweepOptions& o = {}) {
    for (double v : values)
        if (!std::isfinite(v)) throw ParameterError("sweep values must be finite");
    if (o.samples < 3 || o.samples % 2 == 0) throw ParameterError("sweep samples must be odd and at least 3");
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t workers = o.workers > 0 ? static_cast<std::size_t>(o.workers) : hw;
    std::vector<SweepRow> rows(values.size());
    std::size_t next = 0;
    while (next < values.size()) {
        std::vector<std::future<SweepRow>> batch;
        const std::size_t first = next;
        for (; next < values.size() && batch.size() < workers; ++next)
            batch.push_back(std::async(std::launch::async, robustness_point, std::cref(base), kind, values[next], std::cref(o)));
        for (std::size_t i = 0; i < batch.size(); ++i) rows[first + i] = batch[i].get();
    }
    return rows;
}

} // namespace squidmech
