// Tests for the Huber-style robustification: standardization, the
// equivalent-weight matrix, the corrected covariance R-bar, and the contract
// that clean data passes through the robust update bit-for-bit unchanged
// while flagged channels saturate the measurement's influence.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "dsekit/errors.hpp"
#include "dsekit/filter.hpp"
#include "dsekit/matrix.hpp"

using dsekit::FilterBelief;
using dsekit::FilterFrame;
using dsekit::HuberConfig;
using dsekit::ModelInterface;
using dsekit::SymMatrix;
using dsekit::Vec;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

ModelInterface linear_model() {
    ModelInterface m;
    m.state_dim = 2;
    m.measurement_dim = 2;
    m.transition = [](const Vec& x, const Vec&) {
        return Vec::of({x[0] + 0.1 * x[1], -0.2 * x[0] + 0.9 * x[1]});
    };
    m.measurement = [](const Vec& x, const Vec&) {
        return Vec::of({x[0] + 0.3 * x[1], x[1]});
    };
    m.process_noise = [](const Vec&, const Vec&) {
        return SymMatrix::diagonal(Vec::of({0.01, 0.02}));
    };
    m.measurement_noise = [](const Vec&, const Vec&) {
        return SymMatrix::diagonal(Vec::of({0.04, 0.09}));
    };
    return m;
}

FilterBelief start_belief() {
    SymMatrix p0(2);
    p0.set(0, 0, 0.5);
    p0.set(0, 1, 0.1);
    p0.set(1, 1, 0.4);
    return FilterBelief{Vec::of({1.0, -0.2}), p0, 0, std::nullopt};
}

}  // namespace

TEST_CASE("standardized residuals divide by the channel standard deviation", "[huber]") {
    const Vec r_prime = dsekit::standardized_residuals(
        Vec::of({2.0, -3.0}), SymMatrix::diagonal(Vec::of({4.0, 9.0})));
    CHECK(r_prime[0] == 1.0);
    CHECK(r_prime[1] == -1.0);
}

TEST_CASE("standardization rejects non-positive variances", "[huber]") {
    SymMatrix degenerate = SymMatrix::diagonal(Vec::of({1.0, 0.0}));
    try {
        dsekit::standardized_residuals(Vec::of({1.0, 1.0}), degenerate);
        FAIL("expected DegenerateVariance");
    } catch (const dsekit::DegenerateVariance& err) {
        CHECK(std::string(err.what()).find("channel 1") != std::string::npos);
        CHECK(std::string(err.category()) == "numeric");
    }
}

TEST_CASE("equivalent-weight matrix damps only flagged channels", "[huber]") {
    const HuberConfig cfg;  // c = 1.5
    const SymMatrix pbar = dsekit::huber_weights(
        Vec::of({3.0, 0.5}), cfg, SymMatrix::diagonal(Vec::of({1.0, 1.0})));
    CHECK(pbar(0, 0) == 0.5);   // damp = 1.5/3
    CHECK(pbar(1, 1) == 1.0);   // within threshold: plain 1/R
    CHECK(pbar(0, 1) == 0.0);   // zero R entry stays zero
}

TEST_CASE("off-diagonal weights follow the worse channel", "[huber]") {
    // Exercises the branch a diagonal R never reaches.
    SymMatrix r(2);
    r.set(0, 0, 1.0);
    r.set(0, 1, 0.3);
    r.set(1, 1, 2.0);
    const SymMatrix pbar = dsekit::huber_weights(Vec::of({3.0, 0.5}), HuberConfig{}, r);
    CHECK(pbar(0, 0) == 0.5);
    CHECK_THAT(pbar(0, 1), WithinRel(0.5 / 0.3, 1e-15));
    CHECK(pbar(1, 1) == 1.0 / 2.0);  // channel 1 is clean, so damp stays 1
}

TEST_CASE("corrected covariance inflates flagged channels only", "[huber]") {
    const SymMatrix unit = SymMatrix::diagonal(Vec::of({1.0, 1.0}));
    const SymMatrix r = SymMatrix::diagonal(Vec::of({0.7, 0.09}));
    const SymMatrix rbar =
        dsekit::robust_R(Vec::of({3.0, 0.5}), unit, r, HuberConfig{});
    CHECK(rbar(0, 0) == 0.7 * (3.0 / 1.5));
    CHECK(rbar(1, 1) == 0.09);  // bit-for-bit copy, not 1/(1/x)
    CHECK(rbar.is_diagonal());
}

TEST_CASE("a 30-sigma residual inflates R by exactly 20x", "[huber]") {
    const SymMatrix unit = SymMatrix::diagonal(Vec::of({1.0}));
    const SymMatrix r = SymMatrix::diagonal(Vec::of({0.7}));
    const SymMatrix rbar = dsekit::robust_R(Vec::of({30.0}), unit, r, HuberConfig{});
    CHECK(rbar(0, 0) == 0.7 * 20.0);
}

TEST_CASE("threshold boundary: exactly c is clean, just above is damped", "[huber]") {
    const SymMatrix unit = SymMatrix::diagonal(Vec::of({1.0}));
    const SymMatrix r = SymMatrix::diagonal(Vec::of({0.31}));

    const SymMatrix at = dsekit::robust_R(Vec::of({1.5}), unit, r, HuberConfig{});
    CHECK(at(0, 0) == 0.31);

    const SymMatrix above =
        dsekit::robust_R(Vec::of({1.5 + 1e-9}), unit, r, HuberConfig{});
    CHECK(above(0, 0) > 0.31);
    CHECK_THAT(above(0, 0), WithinRel(0.31, 1e-8));  // continuous at the knee
}

TEST_CASE("doubling a flagged innovation doubles its corrected variance", "[huber]") {
    const SymMatrix pzz = SymMatrix::diagonal(Vec::of({0.37}));
    const SymMatrix r = SymMatrix::diagonal(Vec::of({0.29}));
    const SymMatrix one = dsekit::robust_R(Vec::of({4.1}), pzz, r, HuberConfig{});
    const SymMatrix two = dsekit::robust_R(Vec::of({8.2}), pzz, r, HuberConfig{});
    CHECK(two(0, 0) == 2.0 * one(0, 0));
}

TEST_CASE("a custom threshold rescales weights and R-bar", "[huber]") {
    const HuberConfig cfg{2.0};
    const SymMatrix unit = SymMatrix::diagonal(Vec::of({1.0}));
    const SymMatrix pbar =
        dsekit::huber_weights(Vec::of({3.0}), cfg, SymMatrix::diagonal(Vec::of({1.0})));
    CHECK_THAT(pbar(0, 0), WithinRel(2.0 / 3.0, 1e-15));
    const SymMatrix rbar =
        dsekit::robust_R(Vec::of({3.0}), unit, SymMatrix::diagonal(Vec::of({1.0})), cfg);
    CHECK(rbar(0, 0) == 1.5);
}

TEST_CASE("clean measurements pass the robust update through unchanged", "[huber]") {
    const ModelInterface m = linear_model();
    const FilterBelief pred = dsekit::predict(start_belief(), Vec(1, 0.0), m);
    const Vec z = m.measurement(pred.mean, Vec(1, 0.0));  // near-zero innovation

    const FilterBelief plain = dsekit::update(pred, Vec(1, 0.0), z, m);
    const FilterBelief robust = dsekit::robust_update(pred, Vec(1, 0.0), z, m);
    CHECK(robust.mean.bits_equal(plain.mean));
    CHECK(robust.cov.bits_equal(plain.cov));
    REQUIRE(robust.diagnostics.has_value());
    CHECK(robust.diagnostics->weights.bits_equal(Vec(2, 1.0)));
}

TEST_CASE("a clean multi-step run is bit-identical with robustification on", "[huber]") {
    // Truth evolves exactly on the model with noise-free measurements, so no
    // step should ever flag and the two drivers must agree bitwise.
    const ModelInterface m = linear_model();
    Vec truth = Vec::of({1.0, -0.2});
    std::vector<FilterFrame> frames;
    for (int k = 0; k < 30; ++k) {
        truth = m.transition(truth, Vec(1, 0.0));
        frames.push_back(dsekit::make_frame(Vec(1, 0.0),
                                            m.measurement(truth, Vec(1, 0.0))));
    }
    const auto plain = dsekit::run_filter(m, start_belief(), frames, false);
    const auto robust = dsekit::run_filter(m, start_belief(), frames, true);
    REQUIRE(plain.size() == robust.size());
    for (std::size_t k = 0; k < plain.size(); ++k) {
        CHECK(plain[k].mean.bits_equal(robust[k].mean));
        CHECK(plain[k].cov.bits_equal(robust[k].cov));
    }
}

TEST_CASE("a flagged update equals the plain update under R-bar", "[huber]") {
    const ModelInterface m = linear_model();
    const HuberConfig cfg;
    const FilterBelief pred = dsekit::predict(start_belief(), Vec(1, 0.0), m);
    Vec z = m.measurement(pred.mean, Vec(1, 0.0));
    z[0] += 25.0;  // gross error on channel 0 only

    const FilterBelief plain = dsekit::update(pred, Vec(1, 0.0), z, m);
    const Vec r_prime = dsekit::standardized_residuals(plain.diagnostics->innovation,
                                                       plain.diagnostics->innovation_cov);
    REQUIRE(std::fabs(r_prime[0]) > cfg.c);
    REQUIRE(std::fabs(r_prime[1]) <= cfg.c);

    const SymMatrix r = m.measurement_noise(pred.mean, Vec(1, 0.0));
    const SymMatrix rbar = dsekit::robust_R(plain.diagnostics->innovation,
                                            plain.diagnostics->innovation_cov, r, cfg);
    const FilterBelief expected = dsekit::update(pred, Vec(1, 0.0), z, m, &rbar);

    const FilterBelief robust = dsekit::robust_update(pred, Vec(1, 0.0), z, m, cfg);
    CHECK(robust.mean.bits_equal(expected.mean));
    CHECK(robust.cov.bits_equal(expected.cov));
    CHECK_FALSE(robust.mean.bits_equal(plain.mean));

    // Diagnostics carry the first-pass weights: damped on 0, unit on 1.
    REQUIRE(robust.diagnostics.has_value());
    CHECK_THAT(robust.diagnostics->weights[0],
               WithinRel(cfg.c / std::fabs(r_prime[0]), 1e-15));
    CHECK(robust.diagnostics->weights[1] == 1.0);
}

TEST_CASE("outlier influence saturates instead of growing", "[huber]") {
    const ModelInterface m = linear_model();
    const FilterBelief pred = dsekit::predict(start_belief(), Vec(1, 0.0), m);
    const Vec z0 = m.measurement(pred.mean, Vec(1, 0.0));

    auto spiked = [&](double mag) {
        Vec z = z0;
        z[0] += mag;
        return z;
    };
    const Vec robust6 = dsekit::robust_update(pred, Vec(1, 0.0), spiked(1e6), m).mean;
    const Vec robust9 = dsekit::robust_update(pred, Vec(1, 0.0), spiked(1e9), m).mean;
    const Vec plain6 = dsekit::update(pred, Vec(1, 0.0), spiked(1e6), m).mean;
    const Vec plain9 = dsekit::update(pred, Vec(1, 0.0), spiked(1e9), m).mean;

    // A thousandfold larger outlier moves the robust estimate by almost
    // nothing further, while the plain correction keeps scaling with it.
    CHECK((robust9 - robust6).inf_norm() < 1e-3);
    CHECK((plain9 - plain6).inf_norm() > 1e3);
    // The robust correction saturates: as the outlier grows, the inflated
    // covariance grows with it and the correction tends to the constant
    // P_xz * c * sqrt(P_zz) / R (about 16 for this fixture), while the
    // plain correction keeps a fixed fraction of the outlier itself.
    CHECK((robust9 - pred.mean).inf_norm() < 100.0);
    CHECK((robust9 - pred.mean).inf_norm() < 0.01 * (plain9 - pred.mean).inf_norm());
}
