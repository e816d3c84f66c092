#include "support.hpp"

#include "twinfringe/fringe.hpp"
#include "twinfringe/optics.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace twinfringe;
using namespace twinfringe::fringe;
using namespace testsupport;

namespace {

spectral::JointSpectralAmplitude gaussian_source(std::size_t n = 512) {
    const spectral::FilterSpec f{spectral::FilterShape::gaussian, 1550e-9, 6.25e-9};
    const auto grid = spectral::build_grid(1550e-9, 50e-9, n);
    spectral::JsaOptions o;
    o.gvd_broadening_factor = spectral::calibrate_gvd_factor(spectral::PumpSpec{}, f, f, grid, 1.17e-3);
    return spectral::make_jsa(spectral::PumpSpec{}, f, f, o, grid);
}

// Independent two-delay coincidence probability: explicit double loop over absolute frequencies.
double brute_coincidence(const spectral::JointSpectralAmplitude& jsa, double t1, double t2, double phi) {
    const auto& g = jsa.grid;
    const Complex e2(std::cos(2 * phi), std::sin(2 * phi));
    Complex total = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
        for (std::size_t k = 0; k < g.size(); ++k) {
            const double a = g.point(j), b = g.point(k);
            const Complex phi_jk = jsa.amplitude(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
            const Complex phi_kj = jsa.amplitude(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
            const double ww = g.weights[j] * g.weights[k];
            const Complex d1 = ww * std::norm(phi_jk);
            const Complex d2 = ww * std::conj(phi_kj) * phi_jk;
            total += 2.0 * d1 * (std::polar(1.0, t2 * (b - a)) + e2 * std::polar(1.0, t2 * (a + b)));
            total += d2 * (2.0 * e2 * std::polar(1.0, t1 * (a - b) + t2 * (a + b)) - std::polar(1.0, (t1 + t2) * (a - b)) -
                           std::polar(1.0, (t1 - t2) * (a - b)));
        }
    }
    return 0.5 + 0.125 * total.real();
}

}  // namespace

TEST_CASE("bilinear quadrature matches the explicit double sum") {
    WarningCapture quiet;
    const auto sources = {spectral::resample(degenerate_source(128), 48), spectral::resample(nondegenerate_product(128), 48)};
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> tau(-1e-12, 1e-12), ang(0.0, kTwoPi);
    for (const auto& jsa : sources) {
        const CoincidenceEvaluator ev(jsa);
        for (int i = 0; i < 10; ++i) {
            const double t1 = tau(rng), t2 = tau(rng), phi = ang(rng);
            CHECK(ev.full({delay_to_length(t1), delay_to_length(t2), phi}) == doctest::Approx(brute_coincidence(jsa, t1, t2, phi)).epsilon(1e-10));
        }
    }
}

TEST_CASE("quadrature agrees with the operator oracle for MZI and PMI networks") {
    WarningCapture quiet;
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> tau(-0.9e-12, 0.9e-12), ang(0.0, kTwoPi);
    const std::vector<spectral::JointSpectralAmplitude> sources = {
        spectral::resample(degenerate_source(128), 32),
        spectral::resample(spectral::symmetrize(nondegenerate_product(128)), 32),
        spectral::resample(nondegenerate_product(128), 32),
    };
    int cases = 0;
    for (const auto& jsa : sources) {
        const CoincidenceEvaluator ev(jsa);
        for (int i = 0; i < 8; ++i) {
            const double t1 = tau(rng), t2 = tau(rng), phi = ang(rng);
            const double quad = ev.full({delay_to_length(t1), delay_to_length(t2), phi});
            CHECK(optics::oracle_outcome(jsa, optics::mzi_oracle_setup(t1, t2, phi), 32).coincidence == doctest::Approx(quad).epsilon(1e-6));
            CHECK(optics::oracle_outcome(jsa, optics::pmi_oracle_setup(t1, t2, phi), 32).coincidence == doctest::Approx(quad).epsilon(1e-6));
            ++cases;
        }
    }
    CHECK(cases >= 20);
}

TEST_CASE("tau1 = 0 reduces to the NOON form") {
    const auto jsa = degenerate_source(256);
    const CoincidenceEvaluator ev(jsa);
    double worst = 0.0;
    for (double x2 = -3e-3; x2 <= 3e-3; x2 += 37e-6) worst = std::max(worst, std::abs(ev.full({0.0, x2, 0.0}) - ev.noon(length_to_delay(x2))));
    CHECK(worst < 1e-10);
    CHECK(ev.max_imaginary_residue() < 1e-9);
}

TEST_CASE("well-separated regime reduces to centre and side forms") {
    WarningCapture quiet;
    const auto jsa = gaussian_source();
    const CoincidenceEvaluator ev(jsa);
    const auto s = spectral::summarize(jsa);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> mult(5.0, 5.2), near(-0.4e-3, 0.4e-3);
    for (int i = 0; i < 20; ++i) {
        const double x1 = mult(rng) * s.two_photon_coherence_length;
        const double d = near(rng);
        CHECK(std::abs(ev.full({x1, d, 0.0}) - ev.center(length_to_delay(d))) < 1e-4);
        CHECK(std::abs(ev.full({x1, x1 + d, 0.0}) - ev.side(length_to_delay(d))) < 1e-4);
        CHECK(std::abs(ev.full({x1, -x1 + d, 0.0}) - ev.side(length_to_delay(-d))) < 1e-4);
    }
}

TEST_CASE("rectangular filters leave algebraic tails in the side region") {
    WarningCapture quiet;
    const auto grid = spectral::build_grid(1550e-9, 50e-9, 512);
    const double factor = spectral::calibrate_gvd_factor(spectral::PumpSpec{}, rect_filter(), rect_filter(), grid, 1.17e-3);
    const CoincidenceEvaluator ev(degenerate_source(512, 50e-9, factor));
    const double x1 = 5.0 * 1.17e-3;
    const double dev = std::abs(ev.full({x1, x1, 0.0}) - ev.side(0.0));
    CHECK(dev > 1e-4);
    CHECK(dev < 5e-3);
}

TEST_CASE("closed-form limits") {
    WarningCapture quiet;
    const auto jsa = degenerate_source(256);
    const CoincidenceEvaluator ev(jsa);
    const double lp = carrier_wavelength(jsa);
    CHECK(lp == doctest::Approx(775e-9).epsilon(1e-12));

    CHECK(ev.noon(0.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ev.noon(length_to_delay(0.5 * lp)) < 1e-4);
    CHECK(ev.noon(length_to_delay(8e-3)) == doctest::Approx(0.5).epsilon(1e-3));

    CHECK(ev.center(0.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ev.center(0.0, true) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(ev.center(length_to_delay(8e-3)) == doctest::Approx(0.5).epsilon(2e-3));

    CHECK(ev.side(0.0) == doctest::Approx(0.375).epsilon(1e-12));
    CHECK(ev.side(length_to_delay(8e-3)) == doctest::Approx(0.5).epsilon(1e-3));

    CHECK(ev.hom(0.0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::abs(ev.hom(0.0)) < 1e-12);
}

TEST_CASE("broken symmetry is reported as a numerical error") {
    auto jsa = nondegenerate_product(64);
    jsa.is_symmetric = true;  // false claim: |Phi|^2 is not symmetric
    const CoincidenceEvaluator ev(jsa);
    // Quarter beat period: the imaginary part of the difference kernel peaks.
    CHECK_THROWS_AS(ev.full({0.0, 15e-6, 0.0}), NumericalError);
}

TEST_CASE("nondegenerate side dip beats at lambda1 lambda2 / dlambda") {
    const auto jsa = spectral::symmetrize(nondegenerate_product(512));
    const CoincidenceEvaluator ev(jsa);
    const double expected = 1530e-9 * 1570e-9 / 40e-9;
    // Zero crossings of P - 1/2 near the dip centre.
    std::vector<double> crossings;
    double prev_x = -0.2e-3, prev = ev.side(length_to_delay(prev_x)) - 0.5;
    for (double x = prev_x + 0.5e-6; x <= 0.2e-3; x += 0.5e-6) {
        const double v = ev.side(length_to_delay(x)) - 0.5;
        if ((v < 0) != (prev < 0)) crossings.push_back(prev_x + (x - prev_x) * prev / (prev - v));
        prev = v;
        prev_x = x;
    }
    REQUIRE(crossings.size() >= 4);
    const double period = 2.0 * (crossings.back() - crossings.front()) / static_cast<double>(crossings.size() - 1);
    CHECK(period == doctest::Approx(expected).epsilon(0.05));
}

TEST_CASE("envelope model") {
    EnvelopeModel m;
    m.n0 = 1.0;
    m.sigma_s = 0.19e-3;
    m.sigma_t = 0.5e-3;
    CHECK(envelope_probability(m, 0.0) == doctest::Approx(4.0));
    CHECK(envelope_probability(m, 0.05) == doctest::Approx(2.0).epsilon(1e-3));
    CHECK(m.f(0.0) == 1.0);
    CHECK(m.g(0.0) == 1.0);
    CHECK(m.f(m.sigma_s) == doctest::Approx(0.0).scale(1.0));
    CHECK(m.f(2 * kSincHalfMaximum * m.sigma_s / 2) == doctest::Approx(0.5).epsilon(1e-9));
    m.visibility = 1.5;
    CHECK_THROWS_AS(m.validate(), std::invalid_argument);
}

TEST_CASE("envelope model tracks the first-principles central fringe") {
    const auto grid = spectral::build_grid(1550e-9, 50e-9, 512);
    const double factor = spectral::calibrate_gvd_factor(spectral::PumpSpec{}, rect_filter(), rect_filter(), grid, 1.17e-3);
    const auto jsa = degenerate_source(512, 50e-9, factor);
    const CoincidenceEvaluator ev(jsa);
    const auto model = envelope_model(spectral::summarize(jsa), carrier_wavelength(jsa));
    double sq = 0.0, mean = 0.0;
    int n = 0;
    for (double x = -1e-3; x <= 1e-3; x += 0.37e-6) {
        const double p = ev.full({3e-3, x, 0.0});
        const double e = envelope_probability(model, x);
        sq += (p - e) * (p - e);
        mean += p;
        ++n;
    }
    const double rms = std::sqrt(sq / n) / (mean / n);
    MESSAGE("envelope RMS deviation: " << rms);
    CHECK(rms < 0.03);
}

TEST_CASE("scan modes, bounds and Fourier widths") {
    const auto grid = spectral::build_grid(1550e-9, 50e-9, 256);
    const double factor = spectral::calibrate_gvd_factor(spectral::PumpSpec{}, rect_filter(), rect_filter(), grid, 1.17e-3);
    const auto jsa = degenerate_source(256, 50e-9, factor);
    const auto summary = spectral::summarize(jsa);
    const CoincidenceEvaluator ev(jsa);

    ScanRequest req;
    req.lo = -2e-3;
    req.hi = 2e-3;
    req.step = 0.25e-6;
    req.mode = ScanMode::noon;
    const auto noon = scan(ev, req);
    CHECK(noon.size() == 16001);
    for (double p : noon.probability) CHECK((p >= 0.0 && p <= 1.0));

    // Envelope of the NOON fringe: local maxima of |P - 1/2|.
    auto envelope_fwhm = [](const Interferogram& d, double base, double period) {
        const double h = d.delta_x2[1] - d.delta_x2[0];
        const auto half = static_cast<std::size_t>(std::ceil(0.6 * period / h));
        double peak = 0.0;
        std::vector<double> env(d.size(), 0.0);
        for (std::size_t i = 0; i < d.size(); ++i) {
            const std::size_t lo = i > half ? i - half : 0, hi = std::min(d.size() - 1, i + half);
            for (std::size_t k = lo; k <= hi; ++k) env[i] = std::max(env[i], std::abs(d.probability[k] - base));
            peak = std::max(peak, env[i]);
        }
        double left = 0, right = 0;
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (env[i] >= 0.5 * peak) {
                if (left == 0) left = d.delta_x2[i];
                right = d.delta_x2[i];
            }
        }
        return right - left;
    };
    CHECK(envelope_fwhm(noon, 0.5, 775e-9) == doctest::Approx(summary.two_photon_coherence_length).epsilon(0.02));

    // Carrier: spacing of maxima near the centre.
    std::vector<double> maxima;
    for (std::size_t i = 1; i + 1 < noon.size(); ++i) {
        const double x = noon.delta_x2[i];
        if (std::abs(x) < 10e-6 && noon.probability[i] > noon.probability[i - 1] && noon.probability[i] >= noon.probability[i + 1]) maxima.push_back(x);
    }
    REQUIRE(maxima.size() >= 3);
    const double period = (maxima.back() - maxima.front()) / static_cast<double>(maxima.size() - 1);
    CHECK(std::abs(period - 775e-9) <= req.step);

    // Side dip: FWHM of 1/2 - P equals the single-photon coherence length.
    req.mode = ScanMode::side;
    req.delta_x1 = 2e-3;
    req.lo = 1.5e-3;
    req.hi = 2.5e-3;
    req.step = 0.5e-6;
    const auto side = scan(ev, req);
    double left = 1, right = -1;
    for (std::size_t i = 0; i < side.size(); ++i) {
        if (0.5 - side.probability[i] >= 0.5 * 0.125) {
            left = std::min(left, side.delta_x2[i]);
            right = std::max(right, side.delta_x2[i]);
        }
    }
    CHECK(right - left == doctest::Approx(summary.single_photon_coherence_length).epsilon(0.02));
}

TEST_CASE("full scan is independent of thread count") {
    const auto jsa = degenerate_source(128);
    const CoincidenceEvaluator ev(jsa);
    ScanRequest req;
    req.delta_x1 = 1e-3;
    req.lo = -1.2e-3;
    req.hi = 1.2e-3;
    req.step = 10e-6;
    req.threads = 1;
    const auto one = scan(ev, req);
    req.threads = 4;
    const auto four = scan(ev, req);
    CHECK(one.probability == four.probability);
}

TEST_CASE("scan points") {
    const auto x = scan_points(-1e-3, 1e-3, 1e-6);
    CHECK(x.size() == 2001);
    CHECK(x.front() == -1e-3);
    CHECK(x.back() == doctest::Approx(1e-3).epsilon(1e-12));
    CHECK_THROWS_AS(scan_points(0.0, 1.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(scan_points(1.0, 0.0, 0.1), std::invalid_argument);
}

TEST_CASE("CSV round trip is byte-identical") {
    Interferogram d;
    d.delta_x2 = {-1e-6, 0.0, 1.0 / 3.0 * 1e-6};
    d.probability = {0.1, 0.123456789012345678, 1.0};
    d.counts = std::vector<std::int64_t>{3, 0, 12345678901};
    d.metadata.scenario = "noon";
    d.metadata.seed = 42;
    d.metadata.integration_time = 0.1;
    d.metadata.params = {{"delta_x1_m", 0.0021}, {"note", "x,y"}};
    d.metadata.processing = nlohmann::json::array({{{"accidental_rate_hz", 12.5}}});

    std::ostringstream first;
    write_csv(first, d);
    std::istringstream in(first.str());
    const auto back = read_csv(in);
    std::ostringstream second;
    write_csv(second, back);
    CHECK(first.str() == second.str());
    CHECK(back.probability == d.probability);
    CHECK(*back.counts == *d.counts);

    const auto j = to_json(d);
    CHECK(j["schema"] == 1);
    const auto from = from_json(nlohmann::json::parse(j.dump()));
    CHECK(from.delta_x2 == d.delta_x2);
    CHECK(from.metadata.params == d.metadata.params);

    d.counts.reset();
    std::ostringstream no_counts;
    write_csv(no_counts, d);
    std::istringstream in2(no_counts.str());
    CHECK_FALSE(read_csv(in2).counts.has_value());
}

TEST_CASE("malformed CSV is rejected with a line number") {
    auto parse = [](const std::string& text) {
        std::istringstream in(text);
        return read_csv(in);
    };
    CHECK_THROWS_AS(parse(""), InputError);
    CHECK_THROWS_AS(parse("delta_x2_m,probability,counts\n"), InputError);
    CHECK_THROWS_AS(parse("x,y\n1,2\n"), InputError);
    try {
        parse("# schema: 1\ndelta_x2_m,probability,counts\n0,0.5,\n1e-6,abc,\n");
        FAIL("expected an error");
    } catch (const InputError& e) {
        CHECK(std::string(e.what()).find("line 4") != std::string::npos);
    }
    CHECK_THROWS_AS(parse("delta_x2_m,probability,counts\n0,1.5,\n"), InputError);
    CHECK_THROWS_AS(parse("delta_x2_m,probability,counts\n0,0.5,3\n1,0.5,\n"), InputError);
}
