#include "doctest.h"
#include "polarsim/jones.hpp"
#include "polarsim/rng.hpp"

#include <cmath>

using namespace polarsim;

namespace {
constexpr double kPi = 3.141592653589793238462643383279502884;
const double kR = std::sqrt(0.5);

bool close(Complex a, Complex b, double tol = 1e-12) { return std::abs(a - b) <= tol; }
}  // namespace

TEST_CASE("make_state normalizes and validates") {
    const PathState h = make_state({1, 0}, {0, 0});
    CHECK(close(h.alpha, {1, 0}));
    CHECK(close(h.beta, {0, 0}));

    const PathState d = make_state({1, 0}, {1, 0});
    CHECK(close(d.alpha, {kR, 0}));
    CHECK(close(d.beta, {kR, 0}));

    const PathState s = make_state({0, 0}, {0, 2});  // (0, 2i) -> (0, i)
    CHECK(close(s.alpha, {0, 0}));
    CHECK(close(s.beta, {0, 1}));

    CHECK_THROWS_AS(make_state({0, 0}, {0, 0}), std::domain_error);
    CHECK_THROWS_AS(make_state({std::nan(""), 0}, {1, 0}), std::domain_error);
}

TEST_CASE("phase shifter matrix") {
    CHECK(phase_shifter(0.0).is_unitary());
    const Operator2 id = phase_shifter(0.0);
    CHECK(close(id.at(0, 0), {1, 0}));
    CHECK(close(id.at(1, 1), {1, 0}));

    const Operator2 pi_shift = phase_shifter(kPi);
    CHECK(close(pi_shift.at(0, 0), {-1, 0}));
    CHECK(close(pi_shift.at(1, 1), {1, 0}));

    const Operator2 quarter = phase_shifter(0.5 * kPi);
    CHECK(close(quarter.at(0, 0), {0, 1}));
    CHECK(close(quarter.at(0, 1), {0, 0}));
    CHECK(close(quarter.at(1, 0), {0, 0}));
    CHECK(close(quarter.at(1, 1), {1, 0}));
}

TEST_CASE("2x2 coupler") {
    const Operator2 u = mmi_2x2();
    CHECK(u.is_unitary());

    const PathState out = u.apply(make_state({1, 0}, {0, 0}));
    CHECK(close(out.alpha, {kR, 0}));
    CHECK(close(out.beta, {0, kR}));

    // Two couplers in series fully cross over (up to the global i phase).
    const PathState twice = (u * u).apply(make_state({1, 0}, {0, 0}));
    CHECK(close(twice.alpha, {0, 0}));
    CHECK(close(twice.beta, {0, 1}));

    const Operator2 prod = u.adjoint() * u;
    CHECK(close(prod.at(0, 0), {1, 0}));
    CHECK(close(prod.at(0, 1), {0, 0}));
    CHECK(close(prod.at(1, 0), {0, 0}));
    CHECK(close(prod.at(1, 1), {1, 0}));
}

TEST_CASE("1x2 splitter amplitude factor") {
    const Operator2 s = splitter_1x2();
    const PathState h = s.apply(make_state({1, 0}, {0, 0}));
    CHECK(close(h.alpha, {kR, 0}));
    CHECK(close(h.beta, {0, 0}));

    const PathState d = s.apply(make_state({1, 0}, {1, 0}));
    CHECK(close(d.alpha, {0.5, 0}));
    CHECK(close(d.beta, {0.5, 0}));

    Rng rng(21);
    for (int i = 0; i < 100; ++i) {
        const PathState v = make_state({rng.uniform(-1, 1), rng.uniform(-1, 1)},
                                       {rng.uniform(-1, 1), rng.uniform(-1, 1)});
        CHECK(s.apply(v).norm2() == doctest::Approx(0.5).epsilon(1e-12));
    }
}

TEST_CASE("drift canonicalization") {
    const DriftParams d(kPi + 0.25, 3 * kPi + 0.5);
    CHECK(d.varphi == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(d.phi == doctest::Approx(kPi + 0.5 - 2 * kPi).epsilon(1e-12));
    CHECK_THROWS_AS(DriftParams(std::nan(""), 0.0), std::domain_error);

    // Canonicalizing varphi by pi only flips a global sign of the states.
    const DriftParams raw(0.4, -0.9);
    const DriftParams wrapped(0.4 + kPi, -0.9);
    for (const auto st : {Bb84State::H, Bb84State::V, Bb84State::D, Bb84State::A}) {
        const PathState a = drifted_bb84(st, raw);
        const PathState b = drifted_bb84(st, wrapped);
        CHECK(std::abs(std::abs(inner_product(a, b)) - 1.0) <= 1e-12);
    }
}

TEST_CASE("drifted BB84 states") {
    const DriftParams none(0.0, 0.0);
    CHECK(close(drifted_bb84(Bb84State::H, none).alpha, {1, 0}));
    CHECK(close(drifted_bb84(Bb84State::H, none).beta, {0, 0}));
    CHECK(close(drifted_bb84(Bb84State::D, none).alpha, {kR, 0}));
    CHECK(close(drifted_bb84(Bb84State::D, none).beta, {kR, 0}));

    // Closed form of the drifted |D> column.
    const double varphi = 0.37, phi = -1.21;
    const DriftParams d(varphi, phi);
    const Complex em = std::exp(Complex{0, -phi});
    const Complex ep = std::exp(Complex{0, phi});
    const PathState dd = drifted_bb84(Bb84State::D, d);
    CHECK(close(dd.alpha, kR * (std::cos(varphi) - std::sin(varphi) * em)));
    CHECK(close(dd.beta, kR * (std::sin(varphi) * ep + std::cos(varphi))));
}

TEST_CASE("drift preserves pairwise orthogonality and norm") {
    Rng rng(7);
    for (int i = 0; i < 1000; ++i) {
        const DriftParams d(rng.uniform(0, kPi), rng.uniform(-kPi, kPi));
        const PathState h = drifted_bb84(Bb84State::H, d);
        const PathState v = drifted_bb84(Bb84State::V, d);
        const PathState dd = drifted_bb84(Bb84State::D, d);
        const PathState aa = drifted_bb84(Bb84State::A, d);
        CHECK(std::abs(inner_product(h, v)) <= 1e-12);
        CHECK(std::abs(inner_product(dd, aa)) <= 1e-12);
        for (const auto& s : {h, v, dd, aa})
            CHECK(std::abs(s.norm2() - 1.0) <= 1e-12);
    }
}

TEST_CASE("unitaries preserve norm") {
    Rng rng(11);
    for (int i = 0; i < 1000; ++i) {
        const PathState psi = make_state({rng.uniform(-1, 1), rng.uniform(-1, 1)},
                                         {rng.uniform(-1, 1), rng.uniform(-1, 1)});
        const Operator2 op = mmi_2x2() * phase_shifter(rng.uniform(-10, 10)) * mmi_2x2() *
                             phase_shifter(rng.uniform(-10, 10));
        CHECK(op.is_unitary());
        CHECK(std::abs(op.apply(psi).norm2() - 1.0) <= 1e-12);
    }
}
