#include "support.hpp"

#include "twinfringe/optics.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace twinfringe;
using namespace twinfringe::optics;
using namespace testsupport;

namespace {

Photon at(int port, double delay = 0.0) { return {mzi(port), delay, 0}; }

// Compact source whose grid resolves delays of several millimetres with 64 points.
spectral::JointSpectralAmplitude compact_source(double pulse = 1e-12, std::size_t n = 64) {
    WarningCapture quiet;
    spectral::PumpSpec pump;
    pump.pulse_duration_fwhm = pulse;
    return spectral::make_jsa(pump, rect_filter(), rect_filter(), spectral::JsaOptions{},
                              spectral::build_grid(1550e-9, 12e-9, n));
}

}  // namespace

TEST_CASE("element transfer matrices are unitary") {
    const std::vector<ElementSpec> elements = {
        balanced_bs(mzi(1), mzi(2), mzi(3), mzi(4)),
        pbs(Port::In, Port::T, Port::R),
        pbs_combine(Port::T, Port::R, Port::Out),
        hwp(Port::In, 0.3),
        qwp(Port::T, 0.7),
        mirror({mzi(1), mzi(2)}),
        delay(mzi(3), 1e-3),
        phase(mzi(4), 1.1),
    };
    for (const auto& e : elements) {
        const auto u = e.transfer(1.2e15);
        const auto defect = (u.adjoint() * u - Eigen::MatrixXcd::Identity(u.cols(), u.cols())).cwiseAbs().maxCoeff();
        CHECK(defect < 1e-12);
    }
}

TEST_CASE("mode labels") {
    CHECK(is_valid(mzi(3)));
    CHECK_FALSE(is_valid({Port::p3, Polarization::H}));
    CHECK(is_valid({Port::T, Polarization::V}));
    CHECK_FALSE(is_valid({Port::R, Polarization::none}));
    CHECK_THROWS_AS(TwoPhotonState::product({{Port::T, Polarization::none}, 0.0, 0}, at(1)), std::invalid_argument);
}

TEST_CASE("canonical ordering makes photon exchange invisible") {
    const auto ab = TwoPhotonState::product(at(2), at(1, 1e-12));
    const auto ba = TwoPhotonState::product(at(1, 1e-12), at(2));
    REQUIRE(ab.terms().size() == 1);
    CHECK(ab.terms()[0].a == ba.terms()[0].a);
    CHECK(ab.terms()[0].b == ba.terms()[0].b);
    CHECK(ab.terms()[0].a < ab.terms()[0].b);
}

TEST_CASE("balanced beamsplitter bunches simultaneous photons") {
    const auto in = TwoPhotonState::product(at(1), at(2));
    const auto out = apply_element(in, balanced_bs(mzi(1), mzi(2), mzi(3), mzi(4)));
    REQUIRE(out.terms().size() == 2);
    CHECK(out.amplitude_of(at(3), at(4)) == Complex(0.0));
    for (const auto& t : out.terms()) {
        CHECK(t.a.mode == t.b.mode);
        CHECK(std::abs(t.fock_amplitude()) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-14));
    }
    // Relative phase +1 between |2,0> and |0,2>.
    CHECK(std::abs(out.terms()[0].amplitude - out.terms()[1].amplitude) < 1e-15);
    CHECK(out.norm_squared() == doctest::Approx(1.0).epsilon(1e-14));

    const auto d = decompose_tssa_tssb(out);
    CHECK(d.p_tssa == doctest::Approx(0.0));
    CHECK(d.p_tssb == doctest::Approx(1.0));
}

TEST_CASE("delayed input splits into equal TSSA and TSSB") {
    const double d = length_to_delay(2e-3);
    const auto in = TwoPhotonState::product(at(1, d), at(2));
    const auto out = apply_element(in, balanced_bs(mzi(1), mzi(2), mzi(3), mzi(4)));
    REQUIRE(out.terms().size() == 4);
    for (const auto& t : out.terms()) CHECK(std::abs(t.fock_amplitude()) == doctest::Approx(0.5).epsilon(1e-14));

    const auto dec = decompose_tssa_tssb(out);
    CHECK(dec.p_tssa == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(dec.p_tssb == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(dec.p_tssa + dec.p_tssb == doctest::Approx(1.0).epsilon(1e-10));
    // TSSA antisymmetric in which port holds the delayed photon.
    CHECK(std::abs(dec.tssa.amplitude_of(at(3), at(4, d)) + dec.tssa.amplitude_of(at(3, d), at(4))) < 1e-15);

    const auto pre = decompose_tssa_tssb(in);
    CHECK(pre.p_tssa == doctest::Approx(1.0));
    CHECK(pre.p_tssb == doctest::Approx(0.0));
}

TEST_CASE("identity element leaves the state unchanged") {
    const auto in = TwoPhotonState({{Complex(0.6, 0.1), at(1, 1e-12), at(2)}, {Complex(-0.2, 0.7), at(1), at(1)}});
    const auto out = apply_element(in, phase(mzi(1), 0.0));
    REQUIRE(out.terms().size() == in.terms().size());
    for (std::size_t i = 0; i < in.terms().size(); ++i) {
        CHECK(out.terms()[i].amplitude == in.terms()[i].amplitude);
        CHECK(out.terms()[i].a == in.terms()[i].a);
        CHECK(out.terms()[i].b == in.terms()[i].b);
    }
}

TEST_CASE("element acting on empty modes is rejected") {
    const auto in = TwoPhotonState::product(at(1), at(2));
    CHECK_THROWS_AS(apply_element(in, phase(mzi(5), 0.3)), std::invalid_argument);
}

TEST_CASE("two beamsplitters with no delay return a product state") {
    const auto in = TwoPhotonState::product(at(1), at(2));
    const auto out = apply_network(in, {balanced_bs(mzi(1), mzi(2), mzi(3), mzi(4)), balanced_bs(mzi(3), mzi(4), mzi(5), mzi(6))});
    // BS.BS = i * swap: port 1 -> 6, port 2 -> 5.
    const auto expected = TwoPhotonState::product(at(5), at(6));
    CHECK(out.distance_up_to_phase(expected) < 1e-10);
}

TEST_CASE("closed-form MZI output matches the element chain") {
    WarningCapture quiet;
    const double dx1 = 2e-3;
    for (double phi : {0.0, 0.4, 1.0, kPi / 2, 2.2, kPi, 4.0, 5.5}) {
        const auto chain = apply_network(TwoPhotonState::product(at(1), at(2)), mzi_preparation_network(dx1, phi));
        const auto closed = mzi_output_state(dx1, phi);
        CHECK(chain.distance_up_to_phase(closed) < 1e-8);
        CHECK(closed.norm_squared() == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(quiet.messages().empty());
}

TEST_CASE("MZI output limits") {
    const double dx1 = 2e-3, d = length_to_delay(dx1);
    const auto zero = mzi_output_state(dx1, 0.0);
    CHECK(zero.distance_up_to_phase(TwoPhotonState::product(at(5), at(6, d))) < 1e-12);
    const auto pi = mzi_output_state(dx1, kPi);
    CHECK(pi.distance_up_to_phase(TwoPhotonState::product(at(5, d), at(6))) < 1e-12);

    // At phi = pi/2 only the phase-insensitive anti-bunched pair survives.
    const auto half = mzi_output_state(dx1, kPi / 2);
    const auto dec = decompose_tssa_tssb(half);
    CHECK(dec.p_tssa == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(std::abs(half.amplitude_of(at(5, d), at(6)) + half.amplitude_of(at(5), at(6, d))) < 1e-15);
}

TEST_CASE("MZI output warns inside the coherence length") {
    WarningCapture capture;
    mzi_output_state(0.5e-3, 0.3);
    CHECK(capture.messages().size() == 1);
}

TEST_CASE("oracle reproduces the closed-form coincidence at phi = pi/2") {
    const auto jsa = compact_source();
    for (double phi : {0.0, kPi / 4, kPi / 2}) {
        // Phase on arm 4 acts as -phi on arm 3; coincidence depends on cos^2 only.
        const double closed = decompose_tssa_tssb(mzi_output_state(3e-3, phi)).p_tssa;
        const double oracle = oracle_coincidence(jsa, length_to_delay(3e-3), 0.0, 64, phi);
        CHECK(oracle == doctest::Approx(closed).epsilon(0.01));
    }
}

TEST_CASE("PMI intra-interferometer states") {
    const double dx1 = 3.2e-3, d = length_to_delay(dx1);
    const ModeLabel th{Port::T, Polarization::H}, rv{Port::R, Polarization::V};

    const auto deg = pmi_intra_state(dx1, true);
    CHECK(deg.tssa.terms().size() == 2);
    CHECK(deg.tssb.terms().size() == 2);
    CHECK(deg.tssa.norm_squared() == doctest::Approx(1.0));
    CHECK(std::abs(deg.tssa.amplitude_of({th, 0.0, 0}, {rv, d, 0})) == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(std::abs(deg.tssb.amplitude_of({rv, 0.0, 0}, {rv, d, 0})) == doctest::Approx(1.0 / std::sqrt(2.0)));

    const auto full = pmi_intra_state(dx1, false, false);
    CHECK(full.tssa.terms().size() == 4);
    CHECK(full.tssb.terms().size() == 4);
    const auto dropped = pmi_intra_state(dx1, false, true);
    CHECK(dropped.tssa.terms().size() == 2);
    CHECK(dropped.tssb.terms().size() == 2);
    for (const auto& t : dropped.tssb.terms()) {
        CHECK(t.a.slot != t.b.slot);
        const Photon& early = t.a.delay < t.b.delay ? t.a : t.b;
        CHECK(early.slot == 1);
    }

    const auto zero = pmi_intra_state(0.0, true);
    CHECK(zero.tssa.terms().size() == 1);
    for (const auto& t : zero.tssb.terms()) CHECK(t.a.delay == t.b.delay);
    CHECK(zero.tssb.norm_squared() == doctest::Approx(1.0));
}

TEST_CASE("oracle total probability is one") {
    const auto jsa = compact_source(1e-12, 24);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> tau(-2e-12, 2e-12), ang(0.0, kTwoPi);
    for (int i = 0; i < 5; ++i) {
        CHECK(oracle_outcome(jsa, mzi_oracle_setup(tau(rng), tau(rng), ang(rng)), 24).total == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(oracle_outcome(jsa, pmi_oracle_setup(tau(rng), tau(rng), ang(rng)), 24).total == doctest::Approx(1.0).epsilon(1e-10));

        // Random chain of wave plates and a beamsplitter on polarised modes.
        OracleSetup s;
        s.source_a = {Port::In, Polarization::H};
        s.source_b = {Port::In, Polarization::V};
        s.detector_a = Port::T;
        s.detector_b = Port::R;
        s.network = {hwp(Port::In, ang(rng)), qwp(Port::In, ang(rng)), delay({Port::In, Polarization::H}, 1e-4),
                     pbs(Port::In, Port::T, Port::R), qwp(Port::T, ang(rng)),
                     balanced_bs({Port::T, Polarization::V}, {Port::R, Polarization::V}, {Port::T, Polarization::V},
                                 {Port::R, Polarization::V})};
        CHECK(oracle_outcome(jsa, s, 24).total == doctest::Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("oracle limits") {
    const auto jsa = compact_source();
    CHECK(oracle_coincidence(jsa, 0.0, 0.0, 64) == doctest::Approx(1.0).epsilon(1e-10));
    // tau1 well beyond both coherence lengths, tau2 = tau1: quarter-amplitude dip.
    const double tau = length_to_delay(4e-3);
    CHECK(oracle_coincidence(jsa, tau, tau, 64) == doctest::Approx(0.375).epsilon(5e-3));
    CHECK_THROWS_AS(oracle_coincidence(jsa, 0.0, 0.0, 65), std::invalid_argument);
}
