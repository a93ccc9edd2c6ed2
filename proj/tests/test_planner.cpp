#include "squidmech/planner.hpp"

#include <catch_amalgamated.hpp>

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <random>

using namespace squidmech;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

/// Dense single-excitation sector: index 2n holds |0_1 n_m 1_2>, 2n+1 holds |1_1 n_m 0_2>.
struct DenseSector {
    int L;
    Eigen::VectorXcd psi;

    DenseSector(int levels, cplx alpha, cplx beta) : L(levels), psi(Eigen::VectorXcd::Zero(2 * levels)) {
        psi(0) = alpha;
        psi(1) = beta;
    }

    /// Configuration A couples |0_1 n 1_2> with |1_1 n+1 0_2>; B couples |1_1 n 0_2> with |0_1 n+1 1_2>.
    void evolve(bool config_a, double g, double t) {
        Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(2 * L, 2 * L);
        for (int n = 0; n + 1 < L; ++n) {
            const int from = config_a ? 2 * n : 2 * n + 1;
            const int to = config_a ? 2 * (n + 1) + 1 : 2 * (n + 1);
            H(to, from) = H(from, to) = g * std::sqrt(n + 1.0);
        }
        const Eigen::MatrixXcd U = (cplx(0.0, -t) * H).exp();
        psi = U * psi;
    }

    double project() {
        double p = 0.0;
        for (int n = 0; n < L; ++n) {
            psi(2 * n + 1) = 0.0;
            p += std::norm(psi(2 * n));
        }
        psi /= std::sqrt(p);
        return p;
    }

    std::vector<cplx> phonon(int upto) const {
        std::vector<cplx> c;
        for (int n = 0; n <= upto; ++n) c.push_back(psi(2 * n));
        return c;
    }
};

double overlap2(const std::vector<cplx>& x, const std::vector<cplx>& y) {
    cplx s = 0.0;
    for (std::size_t n = 0; n < std::min(x.size(), y.size()); ++n) s += std::conj(x[n]) * y[n];
    return std::norm(s);
}

} // namespace

TEST_CASE("first step matches the closed-form coefficients", "[planner][recursion]") {
    const double g = 1.6e6;
    const cplx alpha(0.6, 0.0), beta = std::polar(0.8, 0.3);
    const double t1 = 0.4 / g, t2 = 1.1 / g;
    const auto r = first_step(alpha, beta, t1, t2, g);
    const std::vector<cplx> raw = {alpha * std::cos(g * t1), beta * std::sin(g * t2),
                                   alpha * std::sin(g * t1) * std::sin(std::sqrt(2.0) * g * t2)};
    double p = 0.0;
    for (const auto& v : raw) p += std::norm(v);
    CHECK_THAT(r.probability, WithinRel(p, 1e-14));
    for (std::size_t n = 0; n < 3; ++n) CHECK(std::abs(r.coeffs[n] - raw[n] / std::sqrt(p)) < 1e-14);
}

TEST_CASE("zero durations leave the coefficients unchanged", "[planner][recursion]") {
    const std::vector<cplx> c = {0.5, cplx(0.0, 0.5), std::sqrt(0.5)};
    const auto r = recursion_step(c, 0.0, 0.0, 2e6);
    REQUIRE(r.coeffs.size() == 5);
    CHECK_THAT(r.probability, WithinAbs(1.0, 1e-15));
    for (std::size_t n = 0; n < 3; ++n) CHECK(std::abs(r.coeffs[n] - c[n]) < 1e-15);
    CHECK(std::abs(r.coeffs[3]) == 0.0);
    CHECK(std::abs(r.coeffs[4]) == 0.0);
    CHECK_THROWS_AS(recursion_step({}, 0.0, 0.0, 1.0), ParameterError);
}

TEST_CASE("step probability never exceeds one", "[planner][recursion][property]") {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double g = 1.6e6;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<cplx> c(static_cast<std::size_t>(1 + 2 * (trial % 4)));
        double n2 = 0.0;
        for (auto& v : c) {
            v = cplx(u(rng) - 0.5, u(rng) - 0.5);
            n2 += std::norm(v);
        }
        for (auto& v : c) v /= std::sqrt(n2);
        const auto r = recursion_step(c, u(rng) * constants::pi / g, u(rng) * constants::pi / g, g);
        CHECK(r.probability <= 1.0 + 1e-14);
        double out = 0.0;
        for (const auto& v : r.coeffs) out += std::norm(v);
        CHECK_THAT(out, WithinAbs(1.0, 1e-13));
    }
}

TEST_CASE("recursion agrees with exact evolution of the sector Hamiltonian", "[planner][recursion][oracle]") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double g = 1.6e6;
    for (int trial = 0; trial < 20; ++trial) {
        const int pairs = 1 + trial % 3;
        const double a = u(rng);
        const cplx alpha = std::sqrt(a), beta = std::polar(std::sqrt(1.0 - a), constants::two_pi * u(rng));
        std::vector<double> times;
        for (int k = 0; k < 2 * pairs; ++k) times.push_back(u(rng) * constants::pi / g);
        DenseSector ds(2 * pairs + 3, alpha, beta);
        double P = 1.0;
        for (int k = 0; k < pairs; ++k) {
            ds.evolve(true, g, times[static_cast<std::size_t>(2 * k)]);
            ds.evolve(false, g, times[static_cast<std::size_t>(2 * k + 1)]);
            P *= ds.project();
        }
        const auto r = forward_recursion(alpha, beta, times, g);
        const auto phys = to_physical_basis(r.coeffs);
        CHECK_THAT(r.probability, WithinRel(P, 1e-10));
        // Equal up to a global phase, i.e. unit overlap.
        CHECK_THAT(overlap2(phys, ds.phonon(2 * pairs)), WithinAbs(1.0, 1e-10));
        for (int n = 0; n <= 2 * pairs; ++n)
            CHECK_THAT(std::abs(phys[static_cast<std::size_t>(n)]), WithinAbs(std::abs(ds.psi(2 * n)), 1e-10));
    }
}

TEST_CASE("recursion and physical bases are inverse maps", "[planner][recursion]") {
    const std::vector<cplx> c = {0.1, cplx(0.2, 0.3), -0.4, cplx(0.0, 0.5), 0.6};
    const auto back = to_physical_basis(to_recursion_basis(c));
    for (std::size_t n = 0; n < c.size(); ++n) CHECK(std::abs(back[n] - c[n]) < 1e-16);
    CHECK(std::abs(to_recursion_basis(c)[1] - cplx(0.0, 1.0) * c[1]) < 1e-16);
}

TEST_CASE("distribution plan for (1/4, 0, 1/2, 0, 1/4)", "[planner][distribution]") {
    const double g = constants::two_pi * 255.395e3;
    const std::vector<double> p = {0.25, 0.0, 0.5, 0.0, 0.25};
    const auto plan = plan_distribution_state(p, g);
    CHECK(plan.residual < 1e-8);
    REQUIRE(plan.times.size() == 4);
    for (double t : plan.times) {
        CHECK(t >= 0.0);
        CHECK(t <= constants::pi / g * (1.0 + 1e-12));
    }
    // Forward map from the returned parameters reproduces the distribution.
    const auto fwd = forward_recursion(plan.alpha, plan.beta(), plan.times, g);
    double res = 0.0;
    for (std::size_t n = 0; n < p.size(); ++n) res += std::pow(std::norm(fwd.coeffs[n]) - p[n], 2);
    CHECK(res < 1e-8);
    CHECK_THAT(fwd.probability, WithinRel(plan.success_probability, 1e-9));
    CHECK(plan.success_probability > 0.0);
    CHECK(plan.success_probability <= 1.0);
}

TEST_CASE("vacuum distribution admits zero durations", "[planner][distribution]") {
    const double g = 1.6e6;
    const auto fwd = forward_recursion(1.0, 0.0, {0.0, 0.0}, g);
    CHECK_THAT(std::norm(fwd.coeffs[0]), WithinAbs(1.0, 1e-15));
    CHECK_THAT(fwd.probability, WithinAbs(1.0, 1e-15));
    const auto plan = plan_distribution_state({1.0, 0.0, 0.0}, g);
    CHECK(plan.residual < 1e-8);
    CHECK_THAT(std::norm(plan.predicted[0]), WithinAbs(1.0, 1e-4));
}

TEST_CASE("distribution plan for (1/2, 0, 0, 0, 1/2)", "[planner][distribution]") {
    const double g = constants::two_pi * 255.395e3;
    const auto plan = plan_distribution_state({0.5, 0.0, 0.0, 0.0, 0.5}, g);
    CHECK(plan.residual < 1e-8);
    CHECK(plan.converged_starts >= 1);
    CHECK_THAT(std::norm(plan.predicted[4]), WithinAbs(0.5, 1e-4));
}

TEST_CASE("distribution planner rejects malformed targets", "[planner][distribution]") {
    CHECK_THROWS_AS(plan_distribution_state({0.5, 0.5}, 1e6), ParameterError);
    CHECK_THROWS_AS(plan_distribution_state({0.5, 0.0, 0.0, 0.5}, 1e6), ParameterError);
    CHECK_THROWS_AS(plan_distribution_state({0.7, 0.0, 0.7}, 1e6), ParameterError);
    CHECK_THROWS_AS(plan_distribution_state({1.2, 0.0, -0.2}, 1e6), ParameterError);
    CHECK_THROWS_AS(plan_distribution_state({1.0, 0.0, 0.0}, 0.0), ParameterError);
}

TEST_CASE("amplitude plan matches phases up to a global phase", "[planner][amplitudes]") {
    const double g = constants::two_pi * 255.395e3;
    const std::vector<cplx> c = {0.5, 0.0, std::sqrt(0.5), 0.0, 0.5};
    const auto plan = plan_amplitude_state(c, g);
    CHECK(plan.residual < 1e-8);
    CHECK_THAT(overlap2(c, plan.predicted), WithinAbs(1.0, 1e-4));
    CHECK(plan.target_amplitudes.size() == c.size());
    for (const auto& alt : plan.alternatives) CHECK(alt.target_amplitudes.size() == c.size());
}

TEST_CASE("arbitrary planner: vacuum needs no gates", "[planner][arbitrary]") {
    const auto plan = plan_arbitrary_state({1.0}, 1.6e6, 2e6);
    CHECK(plan.steps.empty());
    CHECK(plan.total_time() == 0.0);
    CHECK_THAT(sector_fidelity(replay_arbitrary_ideal(plan), {1.0}), WithinAbs(1.0, 1e-15));
}

TEST_CASE("arbitrary planner: equal superposition of 0 and 1", "[planner][arbitrary]") {
    const std::vector<cplx> t = {std::sqrt(0.5), std::sqrt(0.5)};
    const auto plan = plan_arbitrary_state(t, 1.6e6, 2e6);
    CHECK(plan.steps.size() == 1);
    CHECK(sector_fidelity(replay_arbitrary_ideal(plan), t) > 1.0 - 1e-9);
}

TEST_CASE("arbitrary planner reaches a complex phase that probabilities cannot encode", "[planner][arbitrary]") {
    const std::vector<cplx> plus = {std::sqrt(0.5), 0.0, 0.0, cplx(0.0, std::sqrt(0.5))};
    const std::vector<cplx> minus = {std::sqrt(0.5), 0.0, 0.0, cplx(0.0, -std::sqrt(0.5))};
    const auto plan = plan_arbitrary_state(plus, 1.6e6, 2e6);
    CHECK(plan.steps.size() == 3);
    const auto s = replay_arbitrary_ideal(plan);
    CHECK(sector_fidelity(s, plus) > 1.0 - 1e-9);
    // Same phonon distribution, orthogonal state.
    CHECK(sector_fidelity(s, minus) < 1e-9);
}

TEST_CASE("arbitrary planner handles an empty partner amplitude", "[planner][arbitrary]") {
    for (int n : {1, 2, 4}) {
        std::vector<cplx> t(static_cast<std::size_t>(n + 1), 0.0);
        t.back() = cplx(0.0, 1.0);
        const auto plan = plan_arbitrary_state(t, 1.6e6, 2e6);
        CHECK(sector_fidelity(replay_arbitrary_ideal(plan), t) > 1.0 - 1e-9);
    }
}

TEST_CASE("arbitrary planner reproduces random targets", "[planner][arbitrary][property]") {
    std::mt19937 rng(17);
    std::normal_distribution<double> nrm;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<cplx> t(static_cast<std::size_t>(1 + trial % 7));
        double n2 = 0.0;
        for (auto& v : t) {
            v = cplx(nrm(rng), nrm(rng));
            n2 += std::norm(v);
        }
        for (auto& v : t) v /= std::sqrt(n2);
        const auto plan = plan_arbitrary_state(t, 1.6e6, 2e6);
        CHECK(static_cast<int>(plan.steps.size()) == static_cast<int>(t.size()) - 1);
        CHECK(sector_fidelity(replay_arbitrary_ideal(plan), t) > 1.0 - 1e-9);
        for (const auto& st : plan.steps) {
            CHECK(st.t_J >= 0.0);
            CHECK(st.t_tri >= 0.0);
        }
    }
    CHECK_THROWS_AS(plan_arbitrary_state({0.5}, 1.6e6, 2e6), ParameterError);
    CHECK_THROWS_AS(plan_arbitrary_state({1.0}, 0.0, 2e6), ParameterError);
}

TEST_CASE("target strings parse into probabilities and phases", "[planner][target]") {
    const auto t = SynthesisTarget::parse("0:0.5, 4:0.5@1.5");
    REQUIRE(t.probabilities.size() == 5);
    CHECK(t.probabilities[0] == 0.5);
    CHECK(t.probabilities[4] == 0.5);
    CHECK_THAT(std::arg(t.amplitudes[4]), WithinAbs(1.5, 1e-15));
    CHECK(SynthesisTarget::parse("0:0.5,3:0.5").padded_even().probabilities.size() == 5);
    CHECK(SynthesisTarget::parse("0:1").padded_even().probabilities.size() == 3);
}

TEST_CASE("malformed target strings are rejected", "[planner][target]") {
    for (const char* bad : {"", "0.5", "0:abc", "0:0.6,1:0.6", "-1:1", "x:1", "0:1@phase", "0:-1,1:2"})
        CHECK_THROWS_AS(SynthesisTarget::parse(bad), ParameterError);
}
