#pragma once

#include "twinfringe/fringe.hpp"
#include "twinfringe/spectral.hpp"

#include <json.hpp>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace twinfringe::lab {

struct DetectorSpec {
    double efficiency = 0.15;
    double dead_time = 10e-6;           // s
    bool gate_mode = true;
    double coincidence_window = 10e-9;  // s
    double dark_count_rate = 0.0;       // Hz, constant additive singles rate

    void validate(double repetition_rate) const;
};

struct SourceRateSpec {
    double pair_probability_per_pulse = 0.24;
    double repetition_rate = 20e6;            // Hz
    double integration_time_per_point = 1.0;  // s

    void validate() const;
};

/// Emulates alignment and component imperfections. The ideal probability p
/// becomes 1/2 + v (p - 1/2), with v = visibility_factor * (1 - 2 / (1 + ER))
/// for a finite extinction ratio ER (ER <= 0 means ideal).
struct Imperfections {
    double visibility_factor = 1.0;
    double extinction_ratio = 0.0;

    void validate() const;
    double effective_factor() const;
    double apply(double p) const;
};

struct ExpectedCounts {
    double coincidences = 0.0;       // Hz, true + accidental
    double accidentals = 0.0;        // Hz
    double true_coincidences = 0.0;  // Hz
    double singles = 0.0;            // Hz per detector after dead time
    double dead_time_factor = 1.0;   // per detector
    double car = 0.0;                // (true + accidental) / accidental
};

/// Lowest-order multi-pair model per pulse with mean pair number mu and
/// efficiency eta: true = mu eta^2 p, accidental = (mu eta + dark)^2 within
/// one gate, singles = mu eta + dark. Each detector's rate is reduced by
/// 1 / (1 + singles_rate * dead_time); coincidences by the product.
ExpectedCounts expected_counts(double p_ideal, const DetectorSpec& det, const SourceRateSpec& src);

/// Independent generator for (seed, index, stream); the same triple always
/// yields the same sequence regardless of evaluation order.
std::mt19937_64 substream(std::uint64_t seed, std::uint64_t index, std::uint64_t stream = 0);

/// counts[i] ~ Poisson(expected_counts(p[i]).coincidences * T). Records the
/// seed and integration time in the metadata.
fringe::Interferogram simulate_counts(const fringe::Interferogram& data, const DetectorSpec& det,
                                      const SourceRateSpec& src, std::uint64_t seed, unsigned threads = 0);

/// Stratified uniform phases in [0, 2 pi): phi_k = 2 pi (k + u_k) / n.
std::vector<double> stratified_phases(std::size_t n, std::mt19937_64& rng);

struct PhaseRandomizedRequest {
    double delta_x1 = 0.0;
    double lo = -0.6e-3;
    double hi = 0.6e-3;
    double step = 2e-6;
    std::size_t n_phase_samples = 64;
    std::uint64_t seed = 1;
    unsigned threads = 0;
};

/// At each scan point, averages the full coincidence probability over
/// stratified random carrier phases drawn from the point's own substream.
fringe::Interferogram phase_randomized_scan(const fringe::CoincidenceEvaluator& evaluator,
                                            const PhaseRandomizedRequest& request);
fringe::Interferogram phase_randomized_scan(const spectral::JointSpectralAmplitude& jsa,
                                            const PhaseRandomizedRequest& request);

// --- scenarios ------------------------------------------------------------------

std::vector<std::string> scenario_names();
/// One-line description of the scenario.
std::string scenario_description(const std::string& name);

/// Fully-populated default configuration for a scenario. Throws InputError
/// for an unknown name.
nlohmann::json default_config(const std::string& name);

/// Merges `overrides` into `base`. Every key of `overrides` must exist in
/// `base`; otherwise InputError names the JSON path of the first unknown key.
nlohmann::json merge_config(const nlohmann::json& base, const nlohmann::json& overrides);

/// Parses a length: a number in metres or a string with suffix m, mm, um,
/// µm or nm. Throws InputError.
double parse_length(const nlohmann::json& value, const std::string& what);
double parse_length(const std::string& text, const std::string& what);

struct ScenarioConfig {
    std::string scenario;
    std::uint64_t seed = 1;
    spectral::PumpSpec pump;
    spectral::FilterSpec signal_filter;
    spectral::FilterSpec idler_filter;
    bool symmetrize = false;
    double phase_matching_bandwidth = 0.0;
    double gvd_broadening_factor = 0.0;  // <= 0: calibrate to the target
    double two_photon_target = 1.17e-3;  // m
    double grid_center_wavelength = 1550e-9;
    double grid_span = 50e-9;
    std::size_t grid_points = 256;
    fringe::ScanRequest scan;
    bool phase_randomization = false;
    std::size_t phase_samples = 64;
    DetectorSpec detector;
    SourceRateSpec rates;
    Imperfections imperfections;
    bool simulate_counts = true;
};

/// Validates a merged JSON configuration and converts it to typed form.
ScenarioConfig parse_config(const nlohmann::json& config);

struct ScenarioResult {
    fringe::Interferogram data;
    nlohmann::json config;  // fully resolved, including the calibrated gvd factor
    spectral::SpectralSummary summary;
    ExpectedCounts baseline;
    double gvd_broadening_factor = 1.0;
};

/// Builds the JSA for a configuration; calibrates the broadening factor
/// when it is not set. Returns the factor used.
spectral::JointSpectralAmplitude build_source(const ScenarioConfig& config, double* factor_used = nullptr);

/// Runs a scenario with overrides merged into its defaults. Overrides may
/// carry a "scenario" key that must match `name`.
ScenarioResult run_scenario(const std::string& name, const nlohmann::json& overrides = nlohmann::json::object(),
                            unsigned threads = 0);
ScenarioResult run_config(const nlohmann::json& resolved, unsigned threads = 0);

}  // namespace twinfringe::lab
