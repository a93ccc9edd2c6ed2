// Acceptance suite. `acceptance N` evaluates criterion N, prints one line per
// individual check followed by a single PASS/FAIL summary line, and exits
// non-zero when any check fails.

#include "squidmech/analysis.hpp"
#include "squidmech/planner.hpp"
#include "squidmech/protocols.hpp"

#include <boost/math/special_functions/factorials.hpp>
#include <boost/math/special_functions/laguerre.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace squidmech;

namespace {

// Pinned thresholds.
namespace limits {
constexpr double g_min_Hz = 0.2e6;
constexpr double g_max_Hz = 0.45e6;
constexpr double couplings_runtime_s = 1.0;

constexpr double cooling_full_n = 0.07;
constexpr double cooling_full_runtime_s = 1800.0;
constexpr double cooling_scaled_n = 0.1;
constexpr double cooling_scaled_runtime_s = 60.0;
constexpr double cooling_fixture_tol = 1e-4;

constexpr double fock_thermal = 0.96;
constexpr double fock_vacuum = 0.98;
constexpr double fock_runtime_s = 120.0;

constexpr double ghz = 0.97;
constexpr double bell_thermal = 0.95;
constexpr double bell_vacuum = 0.97;

constexpr double superposition_024 = 0.97;
constexpr double superposition_04 = 0.96;

constexpr double recursion_coeff = 1e-3;

constexpr double arbitrary_ideal = 1.0 - 1e-9;
constexpr double arbitrary_full = 0.90;

constexpr double stray_small = 0.02;
constexpr double stray_large = 0.1;
constexpr double detuning_peak = 0.95;
constexpr double coherence_peak = 0.90;

constexpr double trace_drift = 1e-7;
constexpr double purity = 1e-6;
constexpr double rabi = 1e-4;
constexpr double decay = 1e-4;
constexpr double halving = 1e-4;

constexpr double wigner_exact = 1e-9;
constexpr double wigner_norm = 0.02;
constexpr double wigner_dual = 1e-6;
} // namespace limits

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

class Criterion {
public:
    Criterion(int id, std::string title) : id_(id), title_(std::move(title)) {}

    void at_least(const std::string& what, double value, double threshold, const std::string& extra = "") {
        record(what, value >= threshold, num(value) + " >= " + num(threshold), extra);
    }
    void below(const std::string& what, double value, double threshold, const std::string& extra = "") {
        record(what, value < threshold, num(value) + " < " + num(threshold), extra);
    }
    void at_most(const std::string& what, double value, double threshold, const std::string& extra = "") {
        record(what, value <= threshold, num(value) + " <= " + num(threshold), extra);
    }
    void within(const std::string& what, double value, double lo, double hi, const std::string& extra = "") {
        record(what, value >= lo && value <= hi, num(value) + " in [" + num(lo) + ", " + num(hi) + "]", extra);
    }
    void holds(const std::string& what, bool ok, const std::string& detail) { record(what, ok, detail, ""); }
    void info(const std::string& text) { std::cout << "        " << text << "\n"; }

    int finish() const {
        std::cout << "acceptance " << id_ << " " << (failed_ == 0 ? "PASS" : "FAIL") << "  " << title_ << " ("
                  << checks_ - failed_ << "/" << checks_ << " checks)\n";
        return failed_ == 0 ? 0 : 1;
    }

private:
    void record(const std::string& what, bool ok, const std::string& detail, const std::string& extra) {
        ++checks_;
        if (!ok) ++failed_;
        std::cout << "  " << (ok ? "ok    " : "FAILED") << " " << what << ": " << detail;
        if (!extra.empty()) std::cout << "  [" << extra << "]";
        std::cout << "\n" << std::flush;
    }

    int id_;
    std::string title_;
    int checks_ = 0;
    int failed_ = 0;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

SimulationModel reference_model(int phonon_dim) {
    SimulationModel m;
    m.params = reference_params();
    m.phonon_dim = phonon_dim;
    return m;
}

std::string both(const ProtocolResult& r) {
    return "F = " + num(*r.fidelity) + ", root F = " + num(*r.root_fidelity);
}

// -----------------------------------------------------------------------------

int coupling_derivation() {
    Criterion c(1, "coupling derivation");
    const auto t0 = std::chrono::steady_clock::now();
    const CircuitParams p = reference_params();
    const double g = couplings(p, p.phi_b).g;
    const double g_half = couplings(p, 0.5).g;
    const double dt = seconds_since(t0);
    c.within("g/2pi at phi_b = 0.495 (Hz)", g / constants::two_pi, limits::g_min_Hz, limits::g_max_Hz);
    c.holds("g at half flux quantum", g_half == 0.0, "g = " + num(g_half) + " == 0 exactly");
    c.below("runtime (s)", dt, limits::couplings_runtime_s);
    return c.finish();
}

int cooling() {
    Criterion c(2, "sideband cooling");
    {
        const auto t0 = std::chrono::steady_clock::now();
        CoolingConfig cc;
        cc.cycles = 20;
        cc.initial_nbar = 5.0;
        const auto r = run_cooling(reference_model(20), cc);
        const double dt = seconds_since(t0);
        c.below("scaled run <n_m> after 20 cycles (nbar 5, dim 20)", r.cycle_n_m.back(), limits::cooling_scaled_n);
        c.below("scaled run runtime (s)", dt, limits::cooling_scaled_runtime_s);
        std::ifstream in(std::string(SQUIDMECH_SOURCE_DIR) + "/fixtures/cooling_scaled.json");
        const auto fx = nlohmann::json::parse(in);
        const auto expected = fx.at("cycle_n_m").get<std::vector<double>>();
        double worst = expected.size() == r.cycle_n_m.size() ? 0.0 : 1.0;
        for (std::size_t k = 0; k < std::min(expected.size(), r.cycle_n_m.size()); ++k)
            worst = std::max(worst, std::abs(expected[k] - r.cycle_n_m[k]));
        c.at_most("scaled run vs tight-tolerance fixture, max |delta|", worst, limits::cooling_fixture_tol);
    }
    {
        const auto t0 = std::chrono::steady_clock::now();
        CoolingConfig cc;
        cc.cycles = 100;
        auto m = reference_model(40);
        m.qubit_dim = 3;
        c.info("initial n_th = " + num(m.derived().n_th) + ", phonon dim 40, 3-level transmons");
        const auto r = run_cooling(m, cc);
        const double dt = seconds_since(t0);
        for (int k : {9, 24, 49, 74, 99}) c.info("cycle " + std::to_string(k + 1) + ": <n_m> = " + num(r.cycle_n_m[static_cast<std::size_t>(k)]));
        c.at_most("full run <n_m> after 100 cycles", r.cycle_n_m.back(), limits::cooling_full_n);
        c.at_most("full run runtime (s)", dt, limits::cooling_full_runtime_s);
    }
    return c.finish();
}

int fock_preparation() {
    Criterion c(3, "Fock state preparation");
    const auto m = reference_model(15);
    const auto t0 = std::chrono::steady_clock::now();
    FockConfig f;
    f.initial_nbar = 0.05;
    const auto thermal = run_fock(m, f);
    f.initial_nbar = 0.0;
    const auto vacuum = run_fock(m, f);
    const double dt = seconds_since(t0);
    c.at_least("|1_m> from 0.05 thermal, root fidelity", *thermal.root_fidelity, limits::fock_thermal, both(thermal));
    c.at_least("|1_m> from vacuum, root fidelity", *vacuum.root_fidelity, limits::fock_vacuum, both(vacuum));
    c.below("runtime of both runs at dim 15 (s)", dt, limits::fock_runtime_s);
    return c.finish();
}

int entangled_states() {
    Criterion c(4, "GHZ and Bell states");
    const auto m = reference_model(15);
    FockConfig f;
    f.target = FockTarget::ghz;
    f.initial_nbar = 0.0;
    const auto ghz = run_fock(m, f);
    c.at_least("GHZ at pi/(4g) from vacuum, root fidelity", *ghz.root_fidelity, limits::ghz, both(ghz));
    f.initial_nbar = 0.05;
    const auto ghz_t = run_fock(m, f);
    c.info("GHZ from 0.05 thermal: " + both(ghz_t) + " (F is bounded by the vacuum weight " + num(1.0 / 1.05) + ")");
    f.target = FockTarget::bell;
    const auto bell_t = run_fock(m, f);
    c.at_least("Bell from 0.05 thermal, root fidelity", *bell_t.root_fidelity, limits::bell_thermal, both(bell_t));
    f.initial_nbar = 0.0;
    const auto bell_v = run_fock(m, f);
    c.at_least("Bell from vacuum, root fidelity", *bell_v.root_fidelity, limits::bell_vacuum, both(bell_v));
    return c.finish();
}

int superpositions() {
    Criterion c(5, "planned phonon superpositions");
    const auto m = reference_model(15);
    const double g = m.coupling_set().g;
    const double r2 = std::sqrt(0.5);
    const std::vector<std::pair<std::string, std::pair<std::vector<cplx>, double>>> cases = {
        {"(|0> + sqrt2|2> + |4>)/2", {{0.5, 0.0, r2, 0.0, 0.5}, limits::superposition_024}},
        {"(|0> + |4>)/sqrt2", {{r2, 0.0, 0.0, 0.0, r2}, limits::superposition_04}},
    };
    for (const auto& [name, spec] : cases) {
        const auto& [target, threshold] = spec;
        const DistributionPlan plan = plan_amplitude_state(target, g);
        SuperpositionConfig base;
        base.initial_nbar = 0.05;
        base.target = target;
        const PlanSelection sel = select_plan_by_simulation(m, plan, base);
        std::ostringstream t;
        for (double x : sel.plan.times) t << num(x * 1e9) << " ";
        c.info(name + ": times (ns) " + t.str() + "alpha " + num(sel.plan.alpha) + ", " + std::to_string(plan.converged_starts) +
               " converged starts, " + std::to_string(sel.simulated) + " simulated");
        const double root = std::sqrt(sel.fidelity);
        c.at_least(name + " post-selected root fidelity", root, threshold, "F = " + num(sel.fidelity));
        c.holds(name + " post-selection probability", sel.success_probability > 0.0, "P = " + num(sel.success_probability) + " > 0");
    }
    return c.finish();
}

/// Post-selected phonon amplitudes from the dissipation-free simulator.
std::vector<cplx> simulated_amplitudes(const SimulationModel& m, double alpha, double phase, const std::vector<double>& times, int count) {
    SuperpositionConfig sc;
    sc.times = times;
    sc.alpha = alpha;
    sc.beta_phase = phase;
    sc.initial_nbar = 0.0;
    sc.samples_per_segment = 2;
    return dominant_amplitudes(run_superposition(m, sc).phonon_state, count);
}

std::vector<cplx> aligned(std::vector<cplx> v) {
    std::size_t imax = 0;
    for (std::size_t k = 0; k < v.size(); ++k)
        if (std::abs(v[k]) > std::abs(v[imax])) imax = k;
    const cplx ph = std::conj(v[imax]) / std::abs(v[imax]);
    for (auto& x : v) x *= ph;
    return v;
}

int recursion_oracle() {
    Criterion c(6, "recursion vs simulator");
    auto m = reference_model(8);
    m.dissipation = false;
    m.flags = TermFlags::only_tripartite();
    m.flags.secular = true;
    m.tol.rtol = 1e-10;
    m.tol.atol = 1e-12;
    auto full = m;
    full.flags = TermFlags{};
    const double g = m.coupling_set().g;
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0, worst_full = 0.0;
    for (int set = 0; set < 20; ++set) {
        const int N = set % 2 == 0 ? 2 : 4;
        std::vector<double> times;
        for (int k = 0; k < N; ++k) times.push_back((0.2 + 1.3 * u(rng)) / g);
        const double alpha = 0.3 + 0.7 * u(rng);
        const double phase = constants::two_pi * u(rng);
        const auto rec = forward_recursion(alpha, std::sqrt(1.0 - alpha * alpha) * std::exp(cplx(0.0, phase)), times, g);
        const auto expect = aligned(to_physical_basis(rec.coeffs));
        const auto sim = aligned(simulated_amplitudes(m, alpha, phase, times, N + 1));
        const auto sim_full = aligned(simulated_amplitudes(full, alpha, phase, times, N + 1));
        double d = 0.0, d_full = 0.0;
        for (int n = 0; n <= N; ++n) {
            d = std::max(d, std::abs(sim[static_cast<std::size_t>(n)] - expect[static_cast<std::size_t>(n)]));
            d_full = std::max(d_full, std::abs(sim_full[static_cast<std::size_t>(n)] - expect[static_cast<std::size_t>(n)]));
        }
        worst = std::max(worst, d);
        worst_full = std::max(worst_full, d_full);
    }
    c.at_most("max coefficient deviation over 20 time sets, tripartite rotating-wave model", worst, limits::recursion_coeff);
    c.info("same time sets with every Hamiltonian term enabled: max deviation " + num(worst_full));
    return c.finish();
}

int arbitrary_states() {
    Criterion c(7, "arbitrary-state planner");
    auto m = reference_model(8);
    const double g = m.coupling_set().g;
    const double J = constants::two_pi * 1.0e6;
    std::mt19937_64 rng(7);
    std::normal_distribution<double> nrm;
    double worst_ideal = 1.0, worst_full = 1.0, worst_full_F = 1.0;
    for (int trial = 0; trial < 10; ++trial) {
        const int N = 1 + trial % 4;
        std::vector<cplx> target(static_cast<std::size_t>(N + 1));
        double s = 0.0;
        for (auto& a : target) {
            a = cplx(nrm(rng), nrm(rng));
            s += std::norm(a);
        }
        for (auto& a : target) a /= std::sqrt(s);
        const ArbitraryPlan plan = plan_arbitrary_state(target, g, J);
        const double fi = sector_fidelity(replay_arbitrary_ideal(plan), target);
        const auto r = replay_arbitrary_full(m, plan);
        c.info("target " + std::to_string(trial) + " (N = " + std::to_string(N) + "): ideal F = " + num(fi) + ", full " + both(r) +
               ", P = " + num(r.success_probability) + ", duration " + num(plan.total_time() * 1e6) + " us");
        worst_ideal = std::min(worst_ideal, fi);
        worst_full = std::min(worst_full, *r.root_fidelity);
        worst_full_F = std::min(worst_full_F, *r.fidelity);
    }
    c.at_least("worst ideal state-vector replay fidelity", worst_ideal, limits::arbitrary_ideal);
    c.at_least("worst full-physics replay root fidelity", worst_full, limits::arbitrary_full, "worst F = " + num(worst_full_F));
    return c.finish();
}

int robustness() {
    Criterion c(8, "robustness sweeps");
    const auto m = reference_model(15);
    SweepOptions o;
    o.samples = 101;
    const auto J = robustness_sweep(m, SweepKind::stray_J, {0.0, 0.1e6, 1e6, 5e6}, o);
    const double base = J[0].root_fidelity_prep;
    for (const auto& r : J)
        c.info("stray J/2pi = " + num(r.value) + " Hz: F = " + num(r.fidelity_prep) + ", root F = " + num(r.root_fidelity_prep));
    c.at_most("0.1 MHz stray J, root fidelity drop from baseline", base - J[1].root_fidelity_prep, limits::stray_small);
    c.at_most("1 MHz stray J, root fidelity drop from baseline", base - J[2].root_fidelity_prep, limits::stray_small);
    c.at_least("5 MHz stray J, root fidelity drop from baseline", base - J[3].root_fidelity_prep, limits::stray_large);
    const auto d = robustness_point(m, SweepKind::detuning, 100e3, o);
    c.at_least("100 kHz detuning, root fidelity", d.root_fidelity_prep, limits::detuning_peak, "F = " + num(d.fidelity_prep));
    const auto t = robustness_point(m, SweepKind::coherence, 10e-6, o);
    c.at_least("T1 = T2 = 10 us, root fidelity", t.root_fidelity_prep, limits::coherence_peak, "F = " + num(t.fidelity_prep));
    return c.finish();
}

int solver_properties() {
    Criterion c(9, "solver properties");
    {
        auto m = reference_model(6);
        FockConfig f;
        f.target = FockTarget::ideal;
        const auto r = run_fock(m, f);
        c.below("trace drift over a dissipative exchange", r.trajectory.max_trace_drift, limits::trace_drift);
        f.samples = 31;
        const auto a = run_fock(m, f);
        m.tol.rtol *= 0.5;
        m.tol.atol *= 0.5;
        const auto b = run_fock(m, f);
        c.below("fidelity shift under tolerance halving", std::abs(*a.fidelity - *b.fidelity), limits::halving);
    }
    {
        auto m = reference_model(6);
        m.dissipation = false;
        PulseSchedule s;
        s.segments.push_back(m.segment_A(1e-6));
        s.segments.push_back(m.segment_B(1e-6));
        const auto tr = evolve(detail::product_state(m, 0, 1, fock_state(6, 0, "m")), m.hamiltonian(s), m.dissipators(),
                               linspace(0.0, 2e-6, 21), m.tol);
        double worst = 0.0;
        for (double p : tr.purity) worst = std::max(worst, std::abs(1.0 - p));
        c.below("purity deviation in unitary mode", worst, limits::purity);
    }
    {
        auto m = reference_model(4);
        m.dissipation = false;
        m.flags = TermFlags::only_tripartite();
        m.flags.secular = true;
        const double g = m.coupling_set().g;
        const double T = constants::two_pi / g;
        PulseSchedule s;
        s.segments.push_back(m.segment_A(T));
        const auto ts = linspace(0.0, T, 41);
        const auto tr = evolve(detail::product_state(m, 0, 1, fock_state(4, 0, "m")), m.hamiltonian(s), m.dissipators(), ts, m.tol);
        double worst = 0.0;
        for (std::size_t i = 0; i < ts.size(); ++i) worst = std::max(worst, std::abs(tr.n_m[i] - std::pow(std::sin(g * ts[i]), 2)));
        c.below("Rabi sin^2(gt) deviation (rotating-wave tripartite model)", worst, limits::rabi);
    }
    {
        auto m = reference_model(3);
        m.flags = TermFlags::none();
        PulseSchedule s;
        s.segments.push_back(m.segment_park(60e-6));
        const auto ts = linspace(0.0, 60e-6, 13);
        const auto tr = evolve(detail::product_state(m, 1, 0, fock_state(3, 0, "m")), m.hamiltonian(s), m.dissipators(), ts, m.tol);
        double worst = 0.0;
        for (std::size_t i = 0; i < ts.size(); ++i) worst = std::max(worst, std::abs(tr.n_q1[i] - std::exp(-ts[i] / m.params.T1)));
        c.below("exp(-t/T1) decay deviation", worst, limits::decay);
    }
    return c.finish();
}

/// Laguerre-series Wigner function, used as the second method.
double wigner_laguerre(const DenseOp& rho, cplx alpha) {
    const int N = static_cast<int>(rho.rows());
    const double r2 = std::norm(alpha);
    auto T = [&](int m, int n) -> cplx {
        const int lo = std::min(m, n), hi = std::max(m, n);
        const cplx e = (lo % 2 == 0 ? 1.0 : -1.0) * std::sqrt(boost::math::factorial<double>(lo) / boost::math::factorial<double>(hi)) *
                       std::pow(2.0 * alpha, hi - lo) * std::exp(-2.0 * r2) * boost::math::laguerre(lo, hi - lo, 4.0 * r2);
        return m >= n ? e : std::conj(e);
    };
    cplx w = 0.0;
    for (int m = 0; m < N; ++m)
        for (int n = 0; n < N; ++n) w += rho(n, m) * T(m, n);
    return 2.0 / constants::pi * w.real();
}

int wigner_checks() {
    Criterion c(10, "Wigner function");
    auto at_origin = [](const DensityState& s) {
        WignerGridSpec p;
        p.x_min = p.x_max = p.p_min = p.p_max = 0.0;
        p.nx = p.np = 1;
        return wigner(s, p).values(0, 0);
    };
    const double w0 = at_origin(fock_state(10, 0, "m"));
    const double w1 = at_origin(fock_state(10, 1, "m"));
    c.at_most("vacuum |W(0,0) - 2/pi|", std::abs(w0 - 2.0 / constants::pi), limits::wigner_exact);
    c.at_most("Fock |1> |W(0,0) + 2/pi|", std::abs(w1 + 2.0 / constants::pi), limits::wigner_exact);

    const StateVector v = mode_ket(10, {0.5, 0.0, std::sqrt(0.5), 0.0, 0.5});
    const DensityState sup{single_mode_space(10, "m"), v * v.adjoint()};
    const auto grid = wigner(sup, normalisation_grid(10));
    c.at_most("grid normalisation |integral - 1|", std::abs(grid.integral() - 1.0), limits::wigner_norm);

    std::mt19937_64 rng(10);
    std::normal_distribution<double> nrm;
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    DenseOp A(8, 8);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) A(i, j) = cplx(nrm(rng), nrm(rng));
    DenseOp rho = A * A.adjoint();
    rho /= rho.trace();
    const DensityState mixed{single_mode_space(8, "m"), rho};
    double worst = 0.0;
    for (int k = 0; k < 5; ++k) {
        const double x = u(rng), p = u(rng);
        WignerGridSpec s;
        s.x_min = s.x_max = x;
        s.p_min = s.p_max = p;
        s.nx = s.np = 1;
        worst = std::max(worst, std::abs(wigner(mixed, s).values(0, 0) - wigner_laguerre(rho, cplx(x, p))));
    }
    c.at_most("displaced parity vs Laguerre series at 5 random points", worst, limits::wigner_dual);
    return c.finish();
}

} // namespace

int main(int argc, char** argv) {
    const std::map<int, std::function<int()>> criteria = {
        {1, coupling_derivation}, {2, cooling},      {3, fock_preparation}, {4, entangled_states},  {5, superpositions},
        {6, recursion_oracle},    {7, arbitrary_states}, {8, robustness},   {9, solver_properties}, {10, wigner_checks},
    };
    std::vector<int> which;
    for (int i = 1; i < argc; ++i) which.push_back(std::atoi(argv[i]));
    if (which.empty())
        for (const auto& [k, f] : criteria) which.push_back(k);
    int failures = 0;
    for (int k : which) {
        const auto it = criteria.find(k);
        if (it == criteria.end()) {
            std::cerr << "unknown criterion " << k << "\n";
            return 2;
        }
        try {
            failures += it->second();
        } catch (const std::exception& e) {
            std::cout << "acceptance " << k << " FAIL  raised: " << e.what() << "\n";
            ++failures;
        }
    }
    return failures == 0 ? 0 : 1;
}
