#include "squidmech/analysis.hpp"

#include <catch_amalgamated.hpp>

#include <boost/math/special_functions/factorials.hpp>
#include <boost/math/special_functions/laguerre.hpp>

#include <cmath>
#include <random>

using namespace squidmech;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

DensityState mode_state(const std::vector<cplx>& amps, int dim) {
    const StateVector v = mode_ket(dim, amps);
    return {single_mode_space(dim, "m"), v * v.adjoint()};
}

/// Laguerre-series Wigner function:
/// <m|D(α)ΠD(α)†|n> = (−1)^n sqrt(n!/m!) (2α)^{m−n} e^{−2|α|²} L_n^{(m−n)}(4|α|²) for m ≥ n.
double wigner_oracle(const DenseOp& rho, cplx alpha) {
    const int N = static_cast<int>(rho.rows());
    const double r2 = std::norm(alpha);
    auto T = [&](int m, int n) -> cplx {
        if (m < n) return std::conj(
            (m % 2 == 0 ? 1.0 : -1.0) * std::sqrt(boost::math::factorial<double>(m) / boost::math::factorial<double>(n)) *
            std::pow(2.0 * alpha, n - m) * std::exp(-2.0 * r2) * boost::math::laguerre(m, n - m, 4.0 * r2));
        return (n % 2 == 0 ? 1.0 : -1.0) * std::sqrt(boost::math::factorial<double>(n) / boost::math::factorial<double>(m)) *
               std::pow(2.0 * alpha, m - n) * std::exp(-2.0 * r2) * boost::math::laguerre(n, m - n, 4.0 * r2);
    };
    cplx w = 0.0;
    for (int m = 0; m < N; ++m)
        for (int n = 0; n < N; ++n) w += rho(n, m) * T(m, n);
    return 2.0 / constants::pi * w.real();
}

WignerGridSpec point(double x, double p) {
    WignerGridSpec s;
    s.x_min = s.x_max = x;
    s.p_min = s.p_max = p;
    s.nx = s.np = 1;
    return s;
}

} // namespace

TEST_CASE("partial trace of a product state recovers the factor", "[analysis][partial_trace]") {
    const auto a = thermal_state(3, 0.4, "q1");
    const auto b = fock_state(3, 1, "q2");
    const auto c = mode_state({std::sqrt(0.3), cplx(0.0, std::sqrt(0.7))}, 4);
    const auto full = tensor(tensor(a, b), c);
    CHECK((partial_trace(full, {"q1"}).rho - a.rho).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((partial_trace(full, {"m"}).rho - c.rho).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((partial_trace(full, {"q1", "q2", "m"}).rho - full.rho).cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(partial_trace(full, {"x"}), ParameterError);
    CHECK_THROWS_AS(partial_trace(full, {}), ParameterError);
}

TEST_CASE("phonon part of the Bell state is maximally mixed", "[analysis][partial_trace]") {
    const auto sp = circuit_space(4);
    const auto bell = pure_state(sp, {{{{"q1", 0}, {"q2", 0}, {"m", 0}}, 1.0}, {{{"q1", 1}, {"q2", 0}, {"m", 1}}, cplx(0.0, -1.0)}});
    const auto m = partial_trace(bell, {"m"});
    DenseOp expected = DenseOp::Zero(4, 4);
    expected(0, 0) = expected(1, 1) = 0.5;
    CHECK((m.rho - expected).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("reduced states have unit trace", "[analysis][partial_trace][property]") {
    std::mt19937 rng(2);
    std::normal_distribution<double> nrm;
    const auto sp = circuit_space(4);
    for (int trial = 0; trial < 10; ++trial) {
        DenseOp A(sp.total(), sp.total());
        for (int i = 0; i < A.rows(); ++i)
            for (int j = 0; j < A.cols(); ++j) A(i, j) = cplx(nrm(rng), nrm(rng));
        DenseOp rho = A * A.adjoint();
        rho /= rho.trace();
        const DensityState s{sp, rho};
        for (const auto& keep : {std::vector<std::string>{"m"}, {"q1"}, {"q1", "m"}, {"q2", "m"}})
            CHECK_THAT(partial_trace(s, keep).trace(), WithinAbs(1.0, 1e-13));
    }
}

TEST_CASE("fidelity of simple states", "[analysis][fidelity]") {
    const auto s = mode_state({0.6, cplx(0.0, 0.8)}, 3);
    CHECK_THAT(fidelity(s, mode_ket(3, {0.6, cplx(0.0, 0.8)})), WithinAbs(1.0, 1e-15));
    CHECK_THAT(fidelity(s, mode_ket(3, {0.0, 0.0, 1.0})), WithinAbs(0.0, 1e-15));
    CHECK_THAT(fidelity(thermal_state(40, 20.0), mode_ket(40, {1.0})), WithinAbs(0.0555, 5e-4));
    CHECK_THAT(root_fidelity(s, mode_ket(3, {1.0})), WithinRel(0.6, 1e-14));
    CHECK_THROWS_AS(fidelity(s, mode_ket(4, {1.0})), ParameterError);
}

TEST_CASE("fidelity ignores the global phase of the target", "[analysis][fidelity][property]") {
    const auto s = thermal_state(5, 0.7);
    const StateVector psi = mode_ket(5, {0.5, cplx(0.1, 0.4), 0.3, 0.0, cplx(-0.2, 0.6)});
    for (double phi : {0.3, 1.7, -2.9}) CHECK_THAT(fidelity(s, std::exp(cplx(0.0, phi)) * psi), WithinAbs(fidelity(s, psi), 1e-15));
}

TEST_CASE("interaction-frame change keeps populations and undoes itself", "[analysis][frame]") {
    const auto sp = circuit_space(3);
    const auto s = pure_state(sp, {{{{"q1", 0}, {"q2", 1}, {"m", 0}}, 1.0}, {{{"q1", 1}, {"q2", 0}, {"m", 1}}, 1.0}});
    const FramePhases ph{0.4, -1.1, 2.3};
    const auto r = to_interaction_frame(s, ph);
    CHECK((r.rho.diagonal() - s.rho.diagonal()).cwiseAbs().maxCoeff() < 1e-15);
    const auto back = to_interaction_frame(r, {-0.4, 1.1, -2.3});
    CHECK((back.rho - s.rho).cwiseAbs().maxCoeff() < 1e-15);
    const int i = basis_index(sp, {{"q1", 0}, {"q2", 1}, {"m", 0}});
    const int j = basis_index(sp, {{"q1", 1}, {"q2", 0}, {"m", 1}});
    CHECK(std::abs(r.rho(i, j) - 0.5 * std::exp(cplx(0.0, -1.1 - 0.4 - 2.3))) < 1e-15);
}

TEST_CASE("Wigner function of the vacuum at the origin is 2/pi", "[analysis][wigner]") {
    const auto g = wigner(fock_state(6, 0, "m"), point(0.0, 0.0));
    CHECK_THAT(g.values(0, 0), WithinAbs(2.0 / constants::pi, 1e-12));
    CHECK(g.warning.empty());
    CHECK(g.convention.find("2/pi") != std::string::npos);
}

TEST_CASE("Wigner function of one phonon at the origin is -2/pi", "[analysis][wigner]") {
    CHECK_THAT(wigner(fock_state(6, 1, "m"), point(0.0, 0.0)).values(0, 0), WithinAbs(-2.0 / constants::pi, 1e-12));
}

TEST_CASE("Wigner function of (|0>+|4>)/sqrt2", "[analysis][wigner]") {
    const auto s = mode_state({std::sqrt(0.5), 0.0, 0.0, 0.0, std::sqrt(0.5)}, 8);
    CHECK_THAT(wigner(s, point(0.0, 0.0)).values(0, 0), WithinAbs(2.0 / constants::pi, 1e-12));

    std::mt19937 rng(21);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int k = 0; k < 5; ++k) {
        const double x = u(rng), p = u(rng);
        const double w = wigner(s, point(x, p)).values(0, 0);
        CHECK_THAT(w, WithinAbs(wigner_oracle(s.rho, cplx(x, p)), 1e-6));
        // Quarter-turn symmetry of a state with support on levels 0 and 4.
        CHECK_THAT(w, WithinAbs(wigner(s, point(-p, x)).values(0, 0), 1e-10));
    }
}

TEST_CASE("Wigner series oracle agrees on mixed and complex states", "[analysis][wigner][oracle]") {
    std::mt19937 rng(8);
    std::normal_distribution<double> nrm;
    DenseOp A(6, 6);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) A(i, j) = cplx(nrm(rng), nrm(rng));
    DenseOp rho = A * A.adjoint();
    rho /= rho.trace();
    const DensityState s{single_mode_space(6, "m"), rho};
    std::uniform_real_distribution<double> u(-2.5, 2.5);
    for (int k = 0; k < 8; ++k) {
        const double x = u(rng), p = u(rng);
        CHECK_THAT(wigner(s, point(x, p)).values(0, 0), WithinAbs(wigner_oracle(rho, cplx(x, p)), 1e-6));
    }
}

TEST_CASE("Wigner functions integrate to one", "[analysis][wigner][property]") {
    for (const auto& amps : {std::vector<cplx>{1.0}, std::vector<cplx>{0.0, 1.0},
                             std::vector<cplx>{std::sqrt(0.5), 0.0, 0.0, 0.0, std::sqrt(0.5)},
                             std::vector<cplx>{0.5, 0.0, std::sqrt(0.5), 0.0, 0.5}}) {
        const auto s = mode_state(amps, 8);
        const auto g = wigner(s, normalisation_grid(8));
        CHECK_THAT(g.integral(), WithinAbs(1.0, 0.02));
        CHECK(g.padding_delta < 1e-4);
    }
}

TEST_CASE("displaced vacuum peaks at the displacement", "[analysis][wigner][property]") {
    const cplx beta(0.6, 0.8);
    const int N = 25;
    std::vector<cplx> amps;
    double f = 1.0;
    for (int n = 0; n < N; ++n) {
        if (n > 0) f *= std::sqrt(static_cast<double>(n));
        amps.push_back(std::exp(-0.5 * std::norm(beta)) * std::pow(beta, n) / f);
    }
    const auto s = mode_state(amps, N);
    WignerGridSpec spec;
    spec.x_min = spec.p_min = -2.0;
    spec.x_max = spec.p_max = 2.0;
    spec.nx = spec.np = 81;
    const auto g = wigner(s, spec);
    Eigen::Index i = 0, j = 0;
    g.values.maxCoeff(&i, &j);
    CHECK_THAT(g.x[static_cast<std::size_t>(i)], WithinAbs(beta.real(), 0.026));
    CHECK_THAT(g.p[static_cast<std::size_t>(j)], WithinAbs(beta.imag(), 0.026));
    CHECK_THAT(g.values(i, j), WithinAbs(2.0 / constants::pi, 0.01));
}

TEST_CASE("Wigner requires a single mode", "[analysis][wigner]") {
    CHECK_THROWS_AS(wigner(pure_state(circuit_space(2), {{{{"q1", 0}, {"q2", 0}, {"m", 0}}, 1.0}}), point(0, 0)), ParameterError);
}

TEST_CASE("density export of the GHZ state", "[analysis][export]") {
    const auto sp = circuit_space(4);
    const auto ghz = pure_state(sp, {{{{"q1", 0}, {"q2", 1}, {"m", 0}}, 1.0}, {{{"q1", 1}, {"q2", 0}, {"m", 1}}, cplx(0.0, -1.0)}});
    const auto rows = density_matrix_export(ghz, 0.005);
    REQUIRE(rows.size() == 4);
    for (const auto& r : rows) CHECK_THAT(r.abs, WithinAbs(0.5, 1e-15));
    CHECK(rows[0].bra == "|0_1 0_m 1_2>");
    CHECK(rows[0].ket == "|0_1 0_m 1_2>");
}

TEST_CASE("density export of the vacuum and with a high floor", "[analysis][export]") {
    const auto sp = circuit_space(3);
    const auto vac = pure_state(sp, {{{{"q1", 0}, {"q2", 0}, {"m", 0}}, 1.0}});
    const auto rows = density_matrix_export(vac, 0.005);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].re == 1.0);
    CHECK(density_matrix_export(vac, 1.1).empty());
}
