#pragma once

#include "squidmech/constants.hpp"
#include "squidmech/error.hpp"

#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace squidmech {

using cplx = std::complex<double>;

// =============================================================================
// Ideal single-excitation sector
// =============================================================================

/// Pure state a_n |0_1 n_m 1_2> + b_n |1_1 n_m 0_2> of the single-excitation
/// sector with a perfect tripartite interaction.
struct SectorState {
    std::vector<cplx> a;
    std::vector<cplx> b;

    explicit SectorState(int levels = 1) : a(static_cast<std::size_t>(levels), 0.0), b(static_cast<std::size_t>(levels), 0.0) {}

    int levels() const { return static_cast<int>(a.size()); }

    double norm2() const {
        double s = 0.0;
        for (std::size_t n = 0; n < a.size(); ++n) s += std::norm(a[n]) + std::norm(b[n]);
        return s;
    }

    void grow(int levels) {
        if (levels > this->levels()) {
            a.resize(static_cast<std::size_t>(levels), 0.0);
            b.resize(static_cast<std::size_t>(levels), 0.0);
        }
    }
};

namespace detail {

inline void rotate_pair(cplx& up, cplx& down, double x, double theta) {
    // up   <- cos x · up   − i e^{iθ}  sin x · down
    // down <- cos x · down − i e^{−iθ} sin x · up
    const cplx I(0.0, 1.0);
    const double c = std::cos(x), s = std::sin(x);
    const cplx u = c * up - I * std::exp(I * theta) * s * down;
    const cplx d = c * down - I * std::exp(-I * theta) * s * up;
    up = u;
    down = d;
}

} // namespace detail

/// Configuration A: |0_1 n_m 1_2> ↔ |1_1 (n+1)_m 0_2> with strength g√(n+1);
/// θ is the phase carried by c1† c2 b†.
inline void sector_evolve_A(SectorState& s, double g, double t, double theta = 0.0) {
    s.grow(s.levels() + 1);
    for (int n = s.levels() - 2; n >= 0; --n)
        detail::rotate_pair(s.b[static_cast<std::size_t>(n + 1)], s.a[static_cast<std::size_t>(n)], g * std::sqrt(n + 1.0) * t, theta);
}

/// Configuration B: |1_1 n_m 0_2> ↔ |0_1 (n+1)_m 1_2> with strength g√(n+1);
/// θ is the phase carried by c2† c1 b†.
inline void sector_evolve_B(SectorState& s, double g, double t, double theta = 0.0) {
    s.grow(s.levels() + 1);
    for (int n = s.levels() - 2; n >= 0; --n)
        detail::rotate_pair(s.a[static_cast<std::size_t>(n + 1)], s.b[static_cast<std::size_t>(n)], g * std::sqrt(n + 1.0) * t, theta);
}

/// Qubit exchange U_J: |0_1 1_2> → cos|0_1 1_2> − i e^{iθ} sin|1_1 0_2> at every phonon level.
inline void sector_exchange(SectorState& s, double angle, double theta) {
    for (int n = 0; n < s.levels(); ++n)
        detail::rotate_pair(s.b[static_cast<std::size_t>(n)], s.a[static_cast<std::size_t>(n)], angle, theta);
}

/// Projection on |0_1 1_2>; returns the outcome probability and renormalises.
inline double sector_project(SectorState& s) {
    double p = 0.0;
    for (auto& v : s.b) v = 0.0;
    for (const auto& v : s.a) p += std::norm(v);
    if (!(p >= 1e-12)) throw PostselectionError("post-selection impossible: outcome probability below 1e-12");
    const double k = 1.0 / std::sqrt(p);
    for (auto& v : s.a) v *= k;
    return p;
}

// =============================================================================
// Closed-form recursion
// =============================================================================

/// Coefficients c^rec_n = i^n c_n, the basis in which every term of the
/// recursion carries a positive sign.
inline std::vector<cplx> to_recursion_basis(const std::vector<cplx>& physical) {
    std::vector<cplx> r(physical.size());
    cplx ph = 1.0;
    for (std::size_t n = 0; n < physical.size(); ++n, ph *= cplx(0.0, 1.0)) r[n] = ph * physical[n];
    return r;
}

inline std::vector<cplx> to_physical_basis(const std::vector<cplx>& rec) {
    std::vector<cplx> r(rec.size());
    cplx ph = 1.0;
    for (std::size_t n = 0; n < rec.size(); ++n, ph *= cplx(0.0, -1.0)) r[n] = ph * rec[n];
    return r;
}

struct RecursionResult {
    std::vector<cplx> coeffs; ///< renormalised, recursion basis
    double probability = 1.0; ///< pre-normalisation norm²
};

/// One A–B pair followed by projection on |0_1 1_2>, recursion basis.
inline RecursionResult recursion_step(const std::vector<cplx>& c, double t_odd, double t_even, double g) {
    if (c.empty()) throw ParameterError("recursion_step: empty coefficient list");
    const int M = static_cast<int>(c.size()); // c_0..c_{M-1}
    const int N = M + 1;                      // output c'_0..c'_N
    auto at = [&](int n) -> cplx { return (n >= 0 && n < M) ? c[static_cast<std::size_t>(n)] : cplx(0.0); };
    std::vector<cplx> out(static_cast<std::size_t>(N + 1), 0.0);
    for (int n = 0; n <= N; ++n) {
        const double sn = std::sqrt(static_cast<double>(n));
        cplx v = at(n) * std::cos(g * std::sqrt(n + 1.0) * t_odd) * std::cos(g * sn * t_even);
        if (n >= 2) v += at(n - 2) * std::sin(g * std::sqrt(n - 1.0) * t_odd) * std::sin(g * sn * t_even);
        out[static_cast<std::size_t>(n)] = v;
    }
    double p = 0.0;
    for (const auto& v : out) p += std::norm(v);
    if (!(p > 0.0)) throw ParameterError("recursion_step: zero norm after projection");
    for (auto& v : out) v /= std::sqrt(p);
    return {out, p};
}

/// First pair from the qubit state α|0_1 1_2> + β|1_1 0_2> with the phonon in vacuum.
inline RecursionResult first_step(cplx alpha, cplx beta, double t1, double t2, double g) {
    std::vector<cplx> out = {alpha * std::cos(g * t1), beta * std::sin(g * t2),
                             alpha * std::sin(g * t1) * std::sin(std::sqrt(2.0) * g * t2)};
    double p = 0.0;
    for (const auto& v : out) p += std::norm(v);
    if (!(p > 0.0)) throw ParameterError("first_step: zero norm after projection");
    for (auto& v : out) v /= std::sqrt(p);
    return {out, p};
}

/// Composed forward map for times t_1..t_{2K}; returns recursion-basis coefficients
/// c_0..c_{2K} and the product of the step probabilities.
inline RecursionResult forward_recursion(cplx alpha, cplx beta, const std::vector<double>& times, double g) {
    if (times.size() < 2 || times.size() % 2 != 0) throw ParameterError("forward_recursion: an even number of times is required");
    RecursionResult r = first_step(alpha, beta, times[0], times[1], g);
    for (std::size_t k = 2; k < times.size(); k += 2) {
        const RecursionResult s = recursion_step(r.coeffs, times[k], times[k + 1], g);
        r.coeffs = s.coeffs;
        r.probability *= s.probability;
    }
    return r;
}

// =============================================================================
// Distribution and amplitude planner
// =============================================================================

enum class PlanMode { distribution, amplitudes };

/// Selection rule among converged solutions.
enum class PlanObjective { most_probable, shortest };

struct PlannerOptions {
    PlanObjective objective = PlanObjective::most_probable;
    int starts = 96;
    unsigned seed = 20240611u;
    double residual_tol = 1e-8;
    int max_evaluations = 4000;
};

/// Initial qubit amplitudes, times and predicted outcome of the alternating protocol.
struct DistributionPlan {
    PlanMode mode = PlanMode::distribution;
    double alpha = 1.0;            ///< amplitude of |0_1 1_2>
    double beta_phase = 0.0;       ///< phase of the |1_1 0_2> amplitude
    std::vector<double> times;     ///< t_1..t_N (s); odd entries configuration A, even B
    double success_probability = 0.0;
    double residual = 0.0;         ///< Σ r² at the solution
    std::vector<cplx> predicted;   ///< physical phonon amplitudes c_0..c_N
    std::vector<double> target_probabilities;
    std::vector<cplx> target_amplitudes;
    int converged_starts = 0;
    std::vector<DistributionPlan> alternatives; ///< every converged solution, in start order

    cplx beta() const { return std::sqrt(std::max(0.0, 1.0 - alpha * alpha)) * std::exp(cplx(0.0, beta_phase)); }
    double total_time() const {
        double s = 0.0;
        for (double t : times) s += t;
        return s;
    }
};

namespace detail {

struct PlanProblem {
    using Scalar = double;
    using InputType = Eigen::VectorXd;
    using ValueType = Eigen::VectorXd;
    using JacobianType = Eigen::MatrixXd;
    enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

    PlanMode mode;
    int N;
    double g;
    std::vector<double> p;
    std::vector<cplx> target; // physical, normalised

    int inputs() const { return mode == PlanMode::distribution ? N + 1 : N + 2; }
    int values() const { return mode == PlanMode::distribution ? N + 1 : 2 * (N + 1); }

    static double map_time(double u, double g) { return constants::pi / g * 0.5 * (1.0 - std::cos(u)); }

    void decode(const Eigen::VectorXd& x, double& alpha, double& bphase, std::vector<double>& t) const {
        alpha = std::cos(x(0));
        bphase = mode == PlanMode::amplitudes ? x(N + 1) : 0.0;
        t.resize(static_cast<std::size_t>(N));
        for (int j = 0; j < N; ++j) t[static_cast<std::size_t>(j)] = map_time(x(j + 1), g);
    }

    RecursionResult forward(const Eigen::VectorXd& x) const {
        double alpha, bphase;
        std::vector<double> t;
        decode(x, alpha, bphase, t);
        const cplx beta = std::sin(x(0)) * std::exp(cplx(0.0, bphase));
        return forward_recursion(alpha, beta, t, g);
    }

    int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& f) const {
        f.resize(values());
        RecursionResult r;
        try {
            r = forward(x);
        } catch (const Error&) {
            f.setConstant(1.0);
            return 0;
        }
        const auto phys = to_physical_basis(r.coeffs);
        if (mode == PlanMode::distribution) {
            for (int n = 0; n <= N; ++n) f(n) = std::norm(phys[static_cast<std::size_t>(n)]) - p[static_cast<std::size_t>(n)];
            return 0;
        }
        cplx overlap = 0.0;
        for (int n = 0; n <= N; ++n) overlap += std::conj(target[static_cast<std::size_t>(n)]) * phys[static_cast<std::size_t>(n)];
        const cplx align = std::abs(overlap) > 0.0 ? std::conj(overlap) / std::abs(overlap) : cplx(1.0);
        for (int n = 0; n <= N; ++n) {
            const cplx d = align * phys[static_cast<std::size_t>(n)] - target[static_cast<std::size_t>(n)];
            f(2 * n) = d.real();
            f(2 * n + 1) = d.imag();
        }
        return 0;
    }
};

inline DistributionPlan solve_plan(const PlanProblem& prob, const PlannerOptions& opt) {
    std::mt19937 rng(opt.seed);
    std::uniform_real_distribution<double> U(0.0, constants::pi);
    const int n_in = prob.inputs();
    std::vector<DistributionPlan> candidates;
    auto make_plan = [&](const Eigen::VectorXd& x, double res) {
        DistributionPlan p;
        double alpha, bphase;
        prob.decode(x, alpha, bphase, p.times);
        const RecursionResult r = prob.forward(x);
        double a_c = std::cos(x(0));
        cplx b_c = std::sin(x(0)) * std::exp(cplx(0.0, bphase));
        p.predicted = to_physical_basis(r.coeffs);
        // Keep α ≥ 0 by absorbing the sign into a global phase.
        if (a_c < 0.0) {
            a_c = -a_c;
            b_c = -b_c;
            for (auto& v : p.predicted) v = -v;
        }
        p.alpha = a_c;
        p.beta_phase = std::abs(b_c) > 1e-300 ? std::arg(b_c) : 0.0;
        p.success_probability = r.probability;
        p.residual = res;
        return p;
    };
    double best_any = std::numeric_limits<double>::infinity();
    int converged = 0;

    for (int s = 0; s < opt.starts; ++s) {
        Eigen::VectorXd x(n_in);
        for (int k = 0; k < n_in; ++k) x(k) = U(rng);
        if (prob.mode == PlanMode::amplitudes) x(n_in - 1) = 2.0 * U(rng);
        if (s == 0) x.setConstant(0.0); // all-zero times as the first guess
        Eigen::NumericalDiff<PlanProblem> nd(prob);
        Eigen::LevenbergMarquardt<Eigen::NumericalDiff<PlanProblem>> lm(nd);
        lm.parameters.maxfev = opt.max_evaluations;
        lm.parameters.xtol = 1e-15;
        lm.parameters.ftol = 1e-15;
        lm.minimize(x);
        Eigen::VectorXd f;
        prob(x, f);
        const double res = f.squaredNorm();
        best_any = std::min(best_any, res);
        if (!(res < opt.residual_tol)) continue;
        ++converged;
        candidates.push_back(make_plan(x, res));
    }
    if (converged == 0)
        throw PlannerError("planner did not converge after " + std::to_string(opt.starts) + " starts", best_any);
    auto better = [&](const DistributionPlan& a, const DistributionPlan& b) {
        if (opt.objective == PlanObjective::most_probable)
            return a.success_probability > b.success_probability * (1.0 + 1e-9);
        return a.total_time() < b.total_time() * (1.0 - 1e-9);
    };
    DistributionPlan best = candidates.front();
    for (const auto& c : candidates)
        if (better(c, best)) best = c;
    for (auto& c : candidates) c.mode = prob.mode;
    best.converged_starts = converged;
    best.mode = prob.mode;
    best.alternatives = std::move(candidates);
    return best;
}

} // namespace detail

/// Times reproducing a phonon-number distribution p_0..p_N (N even).
inline DistributionPlan plan_distribution_state(const std::vector<double>& p, double g, const PlannerOptions& opt = {}) {
    const int N = static_cast<int>(p.size()) - 1;
    if (N < 2 || N % 2 != 0) throw ParameterError("plan_distribution_state: N must be even and at least 2");
    if (!(g > 0.0)) throw ParameterError("plan_distribution_state: g must be positive");
    double sum = 0.0;
    for (double v : p) {
        if (!(v >= 0.0)) throw ParameterError("plan_distribution_state: negative probability");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ParameterError("plan_distribution_state: probabilities must sum to 1");
    detail::PlanProblem prob{PlanMode::distribution, N, g, p, {}};
    DistributionPlan plan = detail::solve_plan(prob, opt);
    plan.target_probabilities = p;
    for (auto& a : plan.alternatives) a.target_probabilities = p;
    return plan;
}

/// Times reproducing physical amplitudes c_0..c_N (N even) up to a global phase.
inline DistributionPlan plan_amplitude_state(const std::vector<cplx>& c, double g, const PlannerOptions& opt = {}) {
    const int N = static_cast<int>(c.size()) - 1;
    if (N < 2 || N % 2 != 0) throw ParameterError("plan_amplitude_state: N must be even and at least 2");
    if (!(g > 0.0)) throw ParameterError("plan_amplitude_state: g must be positive");
    double n2 = 0.0;
    for (const auto& v : c) n2 += std::norm(v);
    if (std::abs(n2 - 1.0) > 1e-9) throw ParameterError("plan_amplitude_state: amplitudes must be normalised");
    std::vector<double> p;
    for (const auto& v : c) p.push_back(std::norm(v));
    detail::PlanProblem prob{PlanMode::amplitudes, N, g, p, c};
    DistributionPlan plan = detail::solve_plan(prob, opt);
    plan.target_probabilities = p;
    plan.target_amplitudes = c;
    for (auto& a : plan.alternatives) {
        a.target_probabilities = p;
        a.target_amplitudes = c;
    }
    return plan;
}

/// Phonon target written as "n:p[@phase],...", e.g. "0:0.5,4:0.5@1.5708".
struct SynthesisTarget {
    std::vector<double> probabilities;
    std::vector<cplx> amplitudes; ///< sqrt(p_n) e^{i phase_n}

    static SynthesisTarget parse(const std::string& text) {
        std::vector<std::pair<int, std::pair<double, double>>> items;
        std::size_t pos = 0;
        int max_n = -1;
        while (pos <= text.size()) {
            const auto comma = text.find(',', pos);
            std::string item = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
            pos = comma == std::string::npos ? text.size() + 1 : comma + 1;
            item.erase(0, item.find_first_not_of(" \t"));
            item.erase(item.find_last_not_of(" \t") + 1);
            if (item.empty()) continue;
            const auto colon = item.find(':');
            if (colon == std::string::npos) throw ParameterError("target entry '" + item + "' lacks 'n:'");
            const auto at = item.find('@', colon);
            try {
                std::size_t used = 0;
                const std::string ns = item.substr(0, colon);
                const int n = std::stoi(ns, &used);
                if (used != ns.size() || n < 0) throw ParameterError("bad level");
                const std::string ps = item.substr(colon + 1, at == std::string::npos ? std::string::npos : at - colon - 1);
                const double p = std::stod(ps, &used);
                if (used != ps.size() || !(p >= 0.0)) throw ParameterError("bad probability");
                double ph = 0.0;
                if (at != std::string::npos) {
                    const std::string phs = item.substr(at + 1);
                    ph = std::stod(phs, &used);
                    if (used != phs.size()) throw ParameterError("bad phase");
                }
                items.push_back({n, {p, ph}});
                max_n = std::max(max_n, n);
            } catch (const std::exception&) {
                throw ParameterError("cannot parse target entry '" + item + "'");
            }
        }
        if (max_n < 0) throw ParameterError("empty target");
        SynthesisTarget t;
        t.probabilities.assign(static_cast<std::size_t>(max_n + 1), 0.0);
        t.amplitudes.assign(static_cast<std::size_t>(max_n + 1), 0.0);
        for (const auto& [n, v] : items) {
            t.probabilities[static_cast<std::size_t>(n)] += v.first;
            t.amplitudes[static_cast<std::size_t>(n)] = std::sqrt(v.first) * std::exp(cplx(0.0, v.second));
        }
        double sum = 0.0;
        for (double p : t.probabilities) sum += p;
        if (std::abs(sum - 1.0) > 1e-9) throw ParameterError("target probabilities must sum to 1");
        return t;
    }

    /// Copy padded with empty levels so that the highest level is even and at least 2.
    SynthesisTarget padded_even() const {
        SynthesisTarget t = *this;
        while (t.probabilities.size() < 3 || (t.probabilities.size() - 1) % 2 != 0) {
            t.probabilities.push_back(0.0);
            t.amplitudes.push_back(0.0);
        }
        return t;
    }
};

// =============================================================================
// Arbitrary-state planner (exchange + tripartite gate sequence)
// =============================================================================

/// One forward step: exchange gate U_J(J t_J, θ_J) followed by a configuration-B
/// tripartite pulse of duration t_tri whose coupling carries phase θ_tri.
struct GateStep {
    int n = 0;
    double theta_J = 0.0;
    double t_J = 0.0;
    double theta_tri = 0.0;
    double t_tri = 0.0;
};

struct ArbitraryPlan {
    double g = 0.0;
    double J = 0.0;
    std::vector<GateStep> steps; ///< forward order, starting from |0_1 0_m 1_2>
    std::vector<cplx> target;

    double total_time() const {
        double s = 0.0;
        for (const auto& st : steps) s += st.t_J + st.t_tri;
        return s;
    }
};

/// Builds the forward gate sequence by emptying the target level by level.
inline ArbitraryPlan plan_arbitrary_state(const std::vector<cplx>& target, double g, double J) {
    if (target.empty()) throw ParameterError("plan_arbitrary_state: empty target");
    if (!(g > 0.0) || !(J > 0.0)) throw ParameterError("plan_arbitrary_state: g and J must be positive");
    double n2 = 0.0;
    for (const auto& v : target) n2 += std::norm(v);
    if (std::abs(n2 - 1.0) > 1e-9) throw ParameterError("plan_arbitrary_state: amplitudes must be normalised");

    int N = static_cast<int>(target.size()) - 1;
    while (N > 0 && std::abs(target[static_cast<std::size_t>(N)]) == 0.0) --N;

    ArbitraryPlan plan;
    plan.g = g;
    plan.J = J;
    plan.target = target;

    SectorState s(N + 2);
    for (int n = 0; n <= N; ++n) s.a[static_cast<std::size_t>(n)] = target[static_cast<std::size_t>(n)];

    constexpr double tiny = 1e-300;
    std::vector<GateStep> reverse;
    for (int n = N; n >= 1; --n) {
        GateStep st;
        st.n = n;
        const cplx an = s.a[static_cast<std::size_t>(n)];
        const cplx bm = s.b[static_cast<std::size_t>(n - 1)];
        // Tripartite pulse zeroing a_n against b_{n-1}.
        double x = 0.0, th = 0.0;
        if (std::abs(an) > tiny) {
            x = std::atan2(std::abs(an), std::abs(bm));
            th = std::arg(an) - (std::abs(bm) > tiny ? std::arg(bm) : 0.0) - 0.5 * constants::pi;
        }
        sector_evolve_B(s, g, x / (g * std::sqrt(static_cast<double>(n))), th);
        s.a[static_cast<std::size_t>(n)] = 0.0;
        st.t_tri = x / (g * std::sqrt(static_cast<double>(n)));
        st.theta_tri = th;
        // Exchange zeroing b_{n-1} against a_{n-1}.
        const cplx b1 = s.b[static_cast<std::size_t>(n - 1)];
        const cplx a1 = s.a[static_cast<std::size_t>(n - 1)];
        double y = 0.0, thJ = 0.0;
        if (std::abs(b1) > tiny) {
            y = std::atan2(std::abs(b1), std::abs(a1));
            thJ = std::arg(b1) - (std::abs(a1) > tiny ? std::arg(a1) : 0.0) - 0.5 * constants::pi;
        }
        sector_exchange(s, y, thJ);
        s.b[static_cast<std::size_t>(n - 1)] = 0.0;
        st.t_J = y / J;
        st.theta_J = thJ;
        reverse.push_back(st);
    }
    // Forward order with inverted operations: U(x, θ)^{-1} = U(x, θ + π).
    for (auto it = reverse.rbegin(); it != reverse.rend(); ++it) {
        GateStep f = *it;
        f.theta_J = std::remainder(f.theta_J + constants::pi, constants::two_pi);
        f.theta_tri = std::remainder(f.theta_tri + constants::pi, constants::two_pi);
        plan.steps.push_back(f);
    }
    return plan;
}

/// Ideal replay of a gate sequence from |0_1 0_m 1_2>.
inline SectorState replay_arbitrary_ideal(const ArbitraryPlan& plan) {
    SectorState s(1);
    s.a[0] = 1.0;
    for (const auto& st : plan.steps) {
        sector_exchange(s, plan.J * st.t_J, st.theta_J);
        sector_evolve_B(s, plan.g, st.t_tri, st.theta_tri);
    }
    return s;
}

/// |<target|a>|² of the |0_1 1_2> component (no renormalisation).
inline double sector_fidelity(const SectorState& s, const std::vector<cplx>& target) {
    cplx ov = 0.0;
    for (std::size_t n = 0; n < target.size() && n < s.a.size(); ++n) ov += std::conj(target[n]) * s.a[n];
    return std::norm(ov);
}

} // namespace squidmech
