#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <complex>

#include "delaystab/errors.hpp"
#include "delaystab/gains.hpp"
#include "delaystab/spectrum.hpp"

using namespace delaystab;

namespace {

constexpr double kPi = 3.14159265358979323846;

ModeSystem plain_mode(double k0, double h0, double k0t, double h0t, double tau) {
    return mode_system(GainVector{k0, h0, k0t, h0t}, CouplingGainVector{}, cplx(0.0, 0.0), tau);
}

bool has_root_near(const SpectrumResult& res, cplx target, double tol) {
    return std::any_of(res.roots.begin(), res.roots.end(), [&](const CharacteristicRoot& r) {
        return std::abs(r.mu - target) <= tol;
    });
}

}  // namespace

TEST_CASE("characteristic value anchors") {
    ModeSystem m = plain_mode(2.0, 3.0, 1.5, 1.2, 1.0);
    CHECK(std::abs(char_value(cplx(0.0, 0.0), m) - cplx(3.5, 0.0)) <= 1e-15);

    cplx mu(0.3, 1.7);
    cplx conj_rel = char_value(std::conj(mu), m) - std::conj(char_value(mu, m));
    CHECK(std::abs(conj_rel) <= 1e-12);

    DelaySystem sys = to_delay_system(m);
    cplx f = char_value(mu, sys);
    cplx expected = mu * mu + 3.0 * mu + 2.0 + (1.2 * mu + 1.5) * std::exp(-mu);
    CHECK(std::abs(f - expected) <= 1e-12 * std::abs(expected));

    cplx h(1e-6, 0.0);
    cplx fd = (char_value(mu + h, sys) - char_value(mu - h, sys)) / (2.0 * h);
    CHECK(std::abs(char_derivative(mu, sys) - fd) <= 1e-5);
}

TEST_CASE("delay-free spectra reduce to quadratic eigenvalues") {
    SUBCASE("no delayed gains") {
        ModeSystem m = plain_mode(2.0, 3.0, 0.0, 0.0, 2.0);
        SpectrumResult res = char_roots(m);
        REQUIRE(res.roots.size() == 2);
        CHECK(std::abs(res.roots[0].mu - cplx(-2.0, 0.0)) <= 1e-12);
        CHECK(std::abs(res.roots[1].mu - cplx(-1.0, 0.0)) <= 1e-12);
        CHECK(res.collocation_order == 0);
    }
    SUBCASE("tau = 0 folds the delayed gains into the instantaneous block") {
        ModeSystem m = plain_mode(2.0, 3.0, 1.0, 3.0, 0.0);
        SpectrumResult res = char_roots(m);
        REQUIRE(res.roots.size() == 2);
        CHECK(std::abs(res.roots[0].mu - cplx(-5.44948974278318, 0.0)) <= 1e-10);
        CHECK(std::abs(res.roots[1].mu - cplx(-0.550510257216822, 0.0)) <= 1e-10);
    }
}

TEST_CASE("default window formula") {
    RootWindow w1 = default_root_window(1.0);
    CHECK(w1.re_min == doctest::Approx(-7.0).epsilon(1e-15));
    CHECK(w1.re_max == 3.0);
    CHECK(w1.im_max == doctest::Approx(4.0 * kPi).epsilon(1e-15));

    RootWindow w20 = default_root_window(20.0);
    CHECK(w20.re_min == doctest::Approx(-2.5).epsilon(1e-15));
    CHECK(w20.im_max == 10.0);

    RootWindow w0 = default_root_window(0.0);
    CHECK(w0.re_min == doctest::Approx(-7.0).epsilon(1e-15));
    CHECK(w0.im_max == doctest::Approx(4.0 * kPi / 0.1).epsilon(1e-12));
}

TEST_CASE("full spectrum in the default window at tau = 1") {
    ModeSystem m = plain_mode(2.0, 3.0, 1.5, 1.2, 1.0);
    SpectrumResult res = char_roots(m);
    REQUIRE(res.roots.size() == 5);
    CHECK(res.collocation_order == 0);

    CHECK(has_root_near(res, cplx(-1.2088890098462846, 0.0), 1e-9));
    CHECK(has_root_near(res, cplx(-0.6771686241288800, 2.0308543551525795), 1e-9));
    CHECK(has_root_near(res, cplx(-0.6771686241288800, -2.0308543551525795), 1e-9));
    CHECK(has_root_near(res, cplx(-1.879786391298, 7.837716875742), 1e-8));

    for (const auto& r : res.roots) {
        CHECK(r.residual <= 1e-10 * (1.0 + std::norm(r.mu)));
        CHECK(has_root_near(res, std::conj(r.mu), 1e-9));
    }

    CHECK(argument_principle_count(m, res.window) == 5);
}

TEST_CASE("interface root and band completeness at tau = 20") {
    ModeSystem m = plain_mode(2.0, 3.0, 1.5, 1.2, 20.0);

    SpectrumResult full = char_roots(m);
    CHECK(full.roots.size() == 65);
    CHECK(has_root_near(full, cplx(-1.2499999999978302, 0.0), 1e-8));

    for (const auto& r : full.roots) {
        double absolute = 1e-10 * (1.0 + std::norm(r.mu));
        double backward = std::abs(char_derivative(r.mu, to_delay_system(m))) * 2e-13 * (1.0 + std::abs(r.mu));
        CHECK(r.residual <= std::max(absolute, backward));
    }

    RootWindow band{-0.5, 3.0, 10.0};
    SpectrumResult banded = char_roots(m, band);
    CHECK(banded.roots.size() == 64);

    for (const auto& r : banded.roots) {
        CHECK(r.residual <= 1e-10 * (1.0 + std::norm(r.mu)));
    }
}

TEST_CASE("argument principle counts known clusters") {
    ModeSystem m = plain_mode(2.0, 3.0, 1.5, 1.2, 1.0);
    CHECK(argument_principle_count(m, RootWindow{-1.3, -1.1, 0.5}) == 1);
    CHECK(argument_principle_count(m, RootWindow{-1.0, 0.0, 3.0}) == 2);
    CHECK(argument_principle_count(m, RootWindow{-2.0, 3.0, 10.0}) == 5);
    CHECK(argument_principle_count(m, RootWindow{0.0, 3.0, 10.0}) == 0);
}

TEST_CASE("double root is counted and listed with multiplicity two") {
    double eta = 2.0 + 0.5 * std::exp(1.0);
    ModeSystem m = plain_mode(1.0, eta, 0.5, 0.0, 1.0);
    RootWindow w{-1.6, -0.4, 0.8};
    CHECK(argument_principle_count(m, w) == 2);

    SpectrumResult res = char_roots(m, w);
    REQUIRE(res.roots.size() == 2);
    CHECK(std::abs(res.roots[0].mu - cplx(-1.0, 0.0)) <= 1e-6);
    CHECK(std::abs(res.roots[1].mu - cplx(-1.0, 0.0)) <= 1e-6);
}

TEST_CASE("one-dimensional and generic matrix systems") {
    SUBCASE("scalar lag system") {
        DelaySystem sys;
        sys.A = Eigen::MatrixXcd::Constant(1, 1, cplx(-1.0, 0.0));
        sys.B = Eigen::MatrixXcd::Constant(1, 1, cplx(-0.5, 0.0));
        sys.tau = 1.0;
        SpectrumResult res = char_roots(sys, RootWindow{-3.0, 1.0, 8.0});
        REQUIRE(res.roots.size() == 4);
        CHECK(has_root_near(res, cplx(-1.102659476818049, 1.5025802096948044), 1e-9));
        CHECK(has_root_near(res, cplx(-2.750688434787028, 7.628391593321969), 1e-9));
    }
    SUBCASE("non-companion two-by-two system") {
        DelaySystem sys;
        sys.A = Eigen::MatrixXcd(2, 2);
        sys.A << cplx(-1.0), cplx(0.3), cplx(0.2), cplx(-2.0);
        sys.B = Eigen::MatrixXcd(2, 2);
        sys.B << cplx(0.1), cplx(0.0), cplx(0.0), cplx(0.05);
        sys.tau = 1.0;
        RootWindow w{-6.0, 1.0, 10.0};
        SpectrumResult res = char_roots(sys, w);
        CHECK(res.roots.size() >= 2);
        for (const auto& r : res.roots) {
            CHECK(r.residual <= 1e-10 * std::pow(1.0 + std::norm(r.mu), 1.0));
            CHECK(has_root_near(res, std::conj(r.mu), 1e-9));
        }
        CHECK(static_cast<int>(res.roots.size()) ==
              argument_principle_count(sys, res.window));
    }
}

TEST_CASE("lambda_max anchors") {
    SUBCASE("delayed system at tau = 1") {
        ModeSystem m = plain_mode(2.0, 3.0, 1.5, 1.2, 1.0);
        CHECK(lambda_max(m) == doctest::Approx(-0.6771686241288800).epsilon(1e-9));
    }
    SUBCASE("island structure of the reference gains") {
        CHECK(lambda_max(plain_mode(6.0, 0.0, 0.3, 0.0, 1.0)) ==
              doctest::Approx(0.0401971235252364).epsilon(1e-7));
        CHECK(lambda_max(plain_mode(6.0, 0.0, 0.3, 0.0, 2.0)) ==
              doctest::Approx(-0.0680431198041362).epsilon(1e-7));
        CHECK(lambda_max(plain_mode(6.0, 0.0, 0.3, 0.0, 2.6)) ==
              doctest::Approx(0.0133725704306276).epsilon(1e-7));
    }
    SUBCASE("delay-free") {
        CHECK(lambda_max(plain_mode(2.0, 3.0, 0.0, 0.0, 4.0)) ==
              doctest::Approx(-1.0).epsilon(1e-12));
        CHECK(lambda_max(plain_mode(2.0, 3.0, 1.0, 3.0, 0.0)) ==
              doctest::Approx(-0.550510257216822).epsilon(1e-10));
    }
}

TEST_CASE("strongly unstable and marginal instantaneous spectra") {
    ModeSystem unstable = plain_mode(-3.0, 0.0, 1.5, -3.0, 2.0);
    auto strong = strongly_unstable_spectrum(unstable);
    REQUIRE(strong.size() == 1);
    CHECK(std::abs(strong[0] - cplx(std::sqrt(3.0), 0.0)) <= 1e-12);

    ModeSystem marginal = plain_mode(4.0, 0.0, 1.0, 0.5, 2.0);
    auto edge = instantaneous_marginal_roots(marginal);
    REQUIRE(edge.size() == 2);
    CHECK(std::abs(edge[0] - cplx(0.0, -2.0)) <= 1e-12);
    CHECK(std::abs(edge[1] - cplx(0.0, 2.0)) <= 1e-12);
    CHECK(strongly_unstable_spectrum(marginal).empty());

    ModeSystem stable = plain_mode(2.0, 3.0, 0.5, 0.5, 1.0);
    CHECK(strongly_unstable_spectrum(stable).empty());
    CHECK(instantaneous_marginal_roots(stable).empty());
}

TEST_CASE("spectrum input validation") {
    ModeSystem m = plain_mode(2.0, 3.0, 1.5, 1.2, 1.0);
    CHECK_THROWS_AS((void)char_roots(m, RootWindow{1.0, -1.0, 5.0}), InvalidParameterError);
    CHECK_THROWS_AS((void)char_roots(m, RootWindow{-1.0, 1.0, 0.0}), InvalidParameterError);

    DelaySystem bad;
    bad.A = Eigen::MatrixXcd::Zero(2, 2);
    bad.B = Eigen::MatrixXcd::Zero(3, 3);
    bad.tau = 1.0;
    CHECK_THROWS_AS((void)char_roots(bad, RootWindow{}), InvalidParameterError);

    DelaySystem neg;
    neg.A = Eigen::MatrixXcd::Zero(2, 2);
    neg.B = Eigen::MatrixXcd::Zero(2, 2);
    neg.tau = -1.0;
    CHECK_THROWS_AS((void)char_roots(neg, RootWindow{}), InvalidParameterError);
}
