#include "twinfringe/lab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace twinfringe::lab {

using nlohmann::json;

void DetectorSpec::validate(double repetition_rate) const {
    if (!(efficiency > 0.0 && efficiency <= 1.0)) throw std::invalid_argument("detector efficiency must lie in (0, 1]");
    if (!(dead_time >= 0.0)) throw std::invalid_argument("detector dead time must be non-negative");
    if (!(coincidence_window > 0.0)) throw std::invalid_argument("coincidence window must be positive");
    if (gate_mode && !(coincidence_window < 1.0 / repetition_rate)) {
        throw std::invalid_argument("coincidence window must be shorter than the pulse period");
    }
    if (!(dark_count_rate >= 0.0)) throw std::invalid_argument("dark count rate must be non-negative");
}

void SourceRateSpec::validate() const {
    if (!(pair_probability_per_pulse >= 0.0 && pair_probability_per_pulse < 1.0)) {
        throw std::invalid_argument("pair probability per pulse must lie in [0, 1)");
    }
    if (!(repetition_rate > 0.0)) throw std::invalid_argument("repetition rate must be positive");
    if (!(integration_time_per_point >= 0.0)) throw std::invalid_argument("integration time must be non-negative");
}

void Imperfections::validate() const {
    if (!(visibility_factor >= 0.0 && visibility_factor <= 1.0)) throw std::invalid_argument("visibility factor must lie in [0, 1]");
    if (!std::isfinite(extinction_ratio)) throw std::invalid_argument("extinction ratio must be finite");
}

double Imperfections::effective_factor() const {
    double v = visibility_factor;
    if (extinction_ratio > 0.0) v *= std::max(0.0, 1.0 - 2.0 / (1.0 + extinction_ratio));
    return v;
}

double Imperfections::apply(double p) const { return 0.5 + effective_factor() * (p - 0.5); }

ExpectedCounts expected_counts(double p_ideal, const DetectorSpec& det, const SourceRateSpec& src) {
    src.validate();
    det.validate(src.repetition_rate);
    if (!(p_ideal >= 0.0 && p_ideal <= 1.0)) throw std::invalid_argument("coincidence probability must lie in [0, 1]");

    const double mu = src.pair_probability_per_pulse;
    const double eta = det.efficiency;
    const double f = src.repetition_rate;
    const double singles_pp = mu * eta + det.dark_count_rate / f;
    const double true_pp = mu * eta * eta * p_ideal;
    const double acc_pp = det.gate_mode ? singles_pp * singles_pp : singles_pp * singles_pp * f * det.coincidence_window;

    ExpectedCounts out;
    out.dead_time_factor = 1.0 / (1.0 + singles_pp * f * det.dead_time);
    const double live = out.dead_time_factor * out.dead_time_factor;
    out.singles = singles_pp * f * out.dead_time_factor;
    out.true_coincidences = true_pp * f * live;
    out.accidentals = acc_pp * f * live;
    out.coincidences = out.true_coincidences + out.accidentals;
    out.car = acc_pp > 0.0 ? (true_pp + acc_pp) / acc_pp : std::numeric_limits<double>::infinity();
    return out;
}

std::mt19937_64 substream(std::uint64_t seed, std::uint64_t index, std::uint64_t stream) {
    auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
    auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
    std::seed_seq seq{lo(seed), hi(seed), lo(index), hi(index), lo(stream), hi(stream)};
    return std::mt19937_64(seq);
}

fringe::Interferogram simulate_counts(const fringe::Interferogram& data, const DetectorSpec& det,
                                      const SourceRateSpec& src, std::uint64_t seed, unsigned threads) {
    data.validate();
    fringe::Interferogram out = data;
    std::vector<std::int64_t> counts(data.size(), 0);
    const double t = src.integration_time_per_point;
    parallel_for(data.size(), threads, [&](std::size_t i) {
        const double mean = expected_counts(data.probability[i], det, src).coincidences * t;
        if (!(mean > 0.0)) return;
        auto rng = substream(seed, i);
        std::poisson_distribution<std::int64_t> poisson(mean);
        counts[i] = poisson(rng);
    });
    out.counts = std::move(counts);
    out.metadata.seed = seed;
    out.metadata.integration_time = t;
    return out;
}

std::vector<double> stratified_phases(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> phases(n);
    for (std::size_t k = 0; k < n; ++k) phases[k] = kTwoPi * (static_cast<double>(k) + u(rng)) / static_cast<double>(n);
    return phases;
}

fringe::Interferogram phase_randomized_scan(const fringe::CoincidenceEvaluator& evaluator,
                                            const PhaseRandomizedRequest& request) {
    if (request.n_phase_samples < 16) throw std::invalid_argument("phase randomisation needs at least 16 samples");
    fringe::Interferogram out;
    out.delta_x2 = fringe::scan_points(request.lo, request.hi, request.step);
    out.probability.assign(out.size(), 0.0);
    parallel_for(out.size(), request.threads, [&](std::size_t i) {
        auto rng = substream(request.seed, i, 1);
        const auto phases = stratified_phases(request.n_phase_samples, rng);
        out.probability[i] = evaluator.full_phase_average({request.delta_x1, out.delta_x2[i], 0.0}, phases);
    });
    out.metadata.seed = request.seed;
    out.metadata.params = {{"mode", "phase_randomized"},
                           {"delta_x1_m", request.delta_x1},
                           {"phase_samples", request.n_phase_samples},
                           {"grid_points", evaluator.jsa().grid.size()}};
    return out;
}

fringe::Interferogram phase_randomized_scan(const spectral::JointSpectralAmplitude& jsa,
                                            const PhaseRandomizedRequest& request) {
    return phase_randomized_scan(fringe::CoincidenceEvaluator(jsa), request);
}

// --- configuration ------------------------------------------------------------

namespace {

const std::vector<std::pair<std::string, std::string>>& scenario_table() {
    static const std::vector<std::pair<std::string, std::string>> table = {
        {"hom_dip", "HOM dip at a single beamsplitter, 6.25 nm rectangular filters"},
        {"noon", "NOON fringe with delta_x1 = 0 through the MZI"},
        {"mzi_tssa_tssb", "MZI with delta_x1 = 2 mm: central TSSA+TSSB fringe and side dips"},
        {"pmi_degenerate", "Polarisation Michelson, 1550/1550 nm CWDM, delta_x1 = 3.2 mm"},
        {"pmi_nondegenerate", "Polarisation Michelson, 1530/1570 nm CWDM, frequency-entangled"},
    };
    return table;
}

json filter_json(const std::string& shape, double center, double width) {
    return {{"shape", shape}, {"center_wavelength", center}, {"bandwidth_fwhm", width}};
}

std::string path_join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void merge_into(json& base, const json& over, const std::string& path) {
    if (!over.is_object()) throw InputError("configuration at '" + (path.empty() ? std::string("<root>") : path) + "' must be an object");
    for (auto it = over.begin(); it != over.end(); ++it) {
        const std::string p = path_join(path, it.key());
        if (!base.contains(it.key())) throw InputError("unknown configuration key '" + p + "'");
        json& slot = base[it.key()];
        if (slot.is_object()) {
            merge_into(slot, it.value(), p);
        } else {
            const bool number_slot = slot.is_number();
            const bool ok = it.value().type() == slot.type() || (number_slot && it.value().is_number()) ||
                            (number_slot && it.value().is_string());
            if (!ok) throw InputError("configuration key '" + p + "' has the wrong type");
            slot = it.value();
        }
    }
}

double number_at(const json& j, const char* key, const std::string& path) {
    const auto& v = j.at(key);
    if (!v.is_number()) throw InputError("configuration key '" + path_join(path, key) + "' must be a number");
    return v.get<double>();
}

double length_at(const json& j, const char* key, const std::string& path) {
    return parse_length(j.at(key), path_join(path, key));
}

spectral::FilterSpec filter_from(const json& j, const std::string& path) {
    spectral::FilterSpec f;
    const auto shape = j.at("shape").get<std::string>();
    if (shape == "rectangular") {
        f.shape = spectral::FilterShape::rectangular;
    } else if (shape == "gaussian") {
        f.shape = spectral::FilterShape::gaussian;
    } else {
        throw InputError("configuration key '" + path + ".shape' must be 'rectangular' or 'gaussian'");
    }
    f.center_wavelength = length_at(j, "center_wavelength", path);
    f.bandwidth_fwhm = length_at(j, "bandwidth_fwhm", path);
    return f;
}

}  // namespace

std::vector<std::string> scenario_names() {
    std::vector<std::string> names;
    for (const auto& [name, _] : scenario_table()) names.push_back(name);
    return names;
}

std::string scenario_description(const std::string& name) {
    for (const auto& [n, d] : scenario_table()) {
        if (n == name) return d;
    }
    throw InputError("unknown scenario '" + name + "'");
}

json default_config(const std::string& name) {
    scenario_description(name);
    json c = {
        {"scenario", name},
        {"seed", 1},
        {"source",
         {{"pump", {{"center_wavelength", 775e-9}, {"pulse_duration_fwhm_s", 3.5e-12}, {"average_power_w", 20e-3}}},
          {"signal_filter", filter_json("rectangular", 1550e-9, 6.25e-9)},
          {"idler_filter", filter_json("rectangular", 1550e-9, 6.25e-9)},
          {"symmetrize", false},
          {"phase_matching_bandwidth_rad_s", 0.0},
          {"gvd_broadening_factor", 0.0},
          {"two_photon_coherence_target", 1.17e-3},
          {"grid", {{"center_wavelength", 1550e-9}, {"span", 50e-9}, {"points", 256}}}}},
        {"scan", {{"mode", "full"}, {"delta_x1", 0.0}, {"lo", -3e-3}, {"hi", 3e-3}, {"step", 1e-6}, {"phase_offset_rad", 0.0}}},
        {"phase_randomization", {{"enabled", false}, {"samples", 64}}},
        {"detector",
         {{"efficiency", 0.15}, {"dead_time_s", 10e-6}, {"gate_mode", true}, {"coincidence_window_s", 10e-9}, {"dark_count_rate_hz", 0.0}}},
        {"rates", {{"pair_probability_per_pulse", 0.24}, {"repetition_rate_hz", 20e6}, {"integration_time_s", 1.0}}},
        {"imperfections", {{"visibility_factor", 1.0}, {"extinction_ratio", 0.0}}},
        {"simulate_counts", true},
    };
    auto& scan = c["scan"];
    auto& source = c["source"];
    if (name == "hom_dip") {
        scan["mode"] = "hom";
        scan["lo"] = -1.5e-3;
        scan["hi"] = 1.5e-3;
    } else if (name == "noon") {
        scan["lo"] = -2.5e-3;
        scan["hi"] = 2.5e-3;
        scan["step"] = 0.1e-6;
    } else if (name == "mzi_tssa_tssb") {
        scan["delta_x1"] = 2e-3;
    } else if (name == "pmi_degenerate") {
        source["signal_filter"] = filter_json("gaussian", 1550e-9, 18e-9);
        source["idler_filter"] = filter_json("gaussian", 1550e-9, 18e-9);
        source["grid"]["span"] = 100e-9;
        source["grid"]["points"] = 640;
        scan["delta_x1"] = 3.2e-3;
        scan["lo"] = -3.6e-3;
        scan["hi"] = 3.6e-3;
    } else if (name == "pmi_nondegenerate") {
        source["signal_filter"] = filter_json("gaussian", 1530e-9, 18e-9);
        source["idler_filter"] = filter_json("gaussian", 1570e-9, 18e-9);
        source["symmetrize"] = true;
        source["grid"]["span"] = 120e-9;
        source["grid"]["points"] = 768;
        scan["delta_x1"] = 3.2e-3;
        scan["lo"] = -3.6e-3;
        scan["hi"] = 3.6e-3;
    }
    return c;
}

json merge_config(const json& base, const json& overrides) {
    json out = base;
    merge_into(out, overrides, "");
    return out;
}

double parse_length(const std::string& text, const std::string& what) {
    static const std::vector<std::pair<std::string, double>> suffixes = {
        {"nm", 1e-9}, {"um", 1e-6}, {"\xc2\xb5m", 1e-6}, {"mm", 1e-3}, {"m", 1.0}};
    std::string s = text;
    s.erase(0, s.find_first_not_of(" \t"));
    s.erase(s.find_last_not_of(" \t") + 1);
    double scale = 1.0;
    for (const auto& [suffix, factor] : suffixes) {
        if (s.size() > suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0) {
            scale = factor;
            s.erase(s.size() - suffix.size());
            break;
        }
    }
    s.erase(s.find_last_not_of(" \t") + 1);
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw InputError("cannot parse length '" + text + "' for " + what);
    }
    if (used != s.size() || !std::isfinite(v)) throw InputError("cannot parse length '" + text + "' for " + what);
    return v * scale;
}

double parse_length(const json& value, const std::string& what) {
    if (value.is_number()) return value.get<double>();
    if (value.is_string()) return parse_length(value.get<std::string>(), what);
    throw InputError("length for " + what + " must be a number (metres) or a string with a unit");
}

ScenarioConfig parse_config(const json& c) {
    try {
        ScenarioConfig cfg;
        cfg.scenario = c.at("scenario").get<std::string>();
        scenario_description(cfg.scenario);
        cfg.seed = c.at("seed").get<std::uint64_t>();

        const auto& src = c.at("source");
        const auto& pump = src.at("pump");
        cfg.pump.center_wavelength = length_at(pump, "center_wavelength", "source.pump");
        cfg.pump.pulse_duration_fwhm = number_at(pump, "pulse_duration_fwhm_s", "source.pump");
        cfg.pump.average_power = number_at(pump, "average_power_w", "source.pump");
        cfg.signal_filter = filter_from(src.at("signal_filter"), "source.signal_filter");
        cfg.idler_filter = filter_from(src.at("idler_filter"), "source.idler_filter");
        cfg.symmetrize = src.at("symmetrize").get<bool>();
        cfg.phase_matching_bandwidth = number_at(src, "phase_matching_bandwidth_rad_s", "source");
        cfg.gvd_broadening_factor = number_at(src, "gvd_broadening_factor", "source");
        cfg.two_photon_target = length_at(src, "two_photon_coherence_target", "source");
        const auto& grid = src.at("grid");
        cfg.grid_center_wavelength = length_at(grid, "center_wavelength", "source.grid");
        cfg.grid_span = length_at(grid, "span", "source.grid");
        const auto points = grid.at("points");
        if (!points.is_number_integer() || points.get<long long>() < 16) {
            throw InputError("configuration key 'source.grid.points' must be an integer >= 16");
        }
        cfg.grid_points = points.get<std::size_t>();

        const auto& scan = c.at("scan");
        cfg.scan.mode = fringe::scan_mode_from_string(scan.at("mode").get<std::string>());
        cfg.scan.delta_x1 = length_at(scan, "delta_x1", "scan");
        cfg.scan.lo = length_at(scan, "lo", "scan");
        cfg.scan.hi = length_at(scan, "hi", "scan");
        cfg.scan.step = length_at(scan, "step", "scan");
        cfg.scan.phase_offset = number_at(scan, "phase_offset_rad", "scan");

        const auto& pr = c.at("phase_randomization");
        cfg.phase_randomization = pr.at("enabled").get<bool>();
        cfg.phase_samples = pr.at("samples").get<std::size_t>();

        const auto& det = c.at("detector");
        cfg.detector.efficiency = number_at(det, "efficiency", "detector");
        cfg.detector.dead_time = number_at(det, "dead_time_s", "detector");
        cfg.detector.gate_mode = det.at("gate_mode").get<bool>();
        cfg.detector.coincidence_window = number_at(det, "coincidence_window_s", "detector");
        cfg.detector.dark_count_rate = number_at(det, "dark_count_rate_hz", "detector");

        const auto& rates = c.at("rates");
        cfg.rates.pair_probability_per_pulse = number_at(rates, "pair_probability_per_pulse", "rates");
        cfg.rates.repetition_rate = number_at(rates, "repetition_rate_hz", "rates");
        cfg.rates.integration_time_per_point = number_at(rates, "integration_time_s", "rates");
        cfg.pump.repetition_rate = cfg.rates.repetition_rate;

        const auto& imp = c.at("imperfections");
        cfg.imperfections.visibility_factor = number_at(imp, "visibility_factor", "imperfections");
        cfg.imperfections.extinction_ratio = number_at(imp, "extinction_ratio", "imperfections");
        cfg.simulate_counts = c.at("simulate_counts").get<bool>();

        cfg.pump.validate();
        cfg.signal_filter.validate();
        cfg.idler_filter.validate();
        cfg.rates.validate();
        cfg.detector.validate(cfg.rates.repetition_rate);
        cfg.imperfections.validate();
        if (cfg.phase_randomization && cfg.phase_samples < 16) throw InputError("phase_randomization.samples must be >= 16");
        if (!(cfg.scan.step > 0.0) || !(cfg.scan.hi >= cfg.scan.lo)) throw InputError("scan needs step > 0 and lo <= hi");
        if (!(cfg.grid_span > 0.0)) throw InputError("source.grid.span must be positive");
        return cfg;
    } catch (const InputError&) {
        throw;
    } catch (const json::exception& e) {
        throw InputError(std::string("invalid configuration: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw InputError(std::string("invalid configuration: ") + e.what());
    }
}

spectral::JointSpectralAmplitude build_source(const ScenarioConfig& cfg, double* factor_used) {
    const auto grid = spectral::build_grid(cfg.grid_center_wavelength, cfg.grid_span, cfg.grid_points);
    spectral::JsaOptions opts;
    opts.phase_matching_bandwidth = cfg.phase_matching_bandwidth;
    opts.gvd_broadening_factor = cfg.gvd_broadening_factor > 0.0
                                     ? cfg.gvd_broadening_factor
                                     : spectral::calibrate_gvd_factor(cfg.pump, cfg.signal_filter, cfg.idler_filter, grid,
                                                                      cfg.two_photon_target);
    if (factor_used) *factor_used = opts.gvd_broadening_factor;
    auto jsa = spectral::make_jsa(cfg.pump, cfg.signal_filter, cfg.idler_filter, opts, grid);
    if (cfg.symmetrize) jsa = spectral::symmetrize(jsa);
    return jsa;
}

ScenarioResult run_config(const json& resolved, unsigned threads) {
    const ScenarioConfig cfg = parse_config(resolved);
    ScenarioResult result;
    const auto jsa = build_source(cfg, &result.gvd_broadening_factor);
    result.summary = spectral::summarize(jsa);
    result.config = resolved;
    result.config["source"]["gvd_broadening_factor"] = result.gvd_broadening_factor;

    const fringe::CoincidenceEvaluator evaluator(jsa);
    fringe::Interferogram data;
    if (cfg.phase_randomization) {
        PhaseRandomizedRequest req;
        req.delta_x1 = cfg.scan.delta_x1;
        req.lo = cfg.scan.lo;
        req.hi = cfg.scan.hi;
        req.step = cfg.scan.step;
        req.n_phase_samples = cfg.phase_samples;
        req.seed = cfg.seed;
        req.threads = threads;
        data = phase_randomized_scan(evaluator, req);
    } else {
        auto req = cfg.scan;
        req.threads = threads;
        data = fringe::scan(evaluator, req);
    }

    if (cfg.imperfections.effective_factor() != 1.0) {
        for (auto& p : data.probability) p = std::clamp(cfg.imperfections.apply(p), 0.0, 1.0);
    }
    if (cfg.simulate_counts) data = simulate_counts(data, cfg.detector, cfg.rates, cfg.seed, threads);

    data.metadata.scenario = cfg.scenario;
    data.metadata.seed = cfg.seed;
    data.metadata.integration_time = cfg.simulate_counts ? cfg.rates.integration_time_per_point : 0.0;
    data.metadata.params = result.config;
    result.baseline = expected_counts(0.5, cfg.detector, cfg.rates);
    result.data = std::move(data);
    return result;
}

ScenarioResult run_scenario(const std::string& name, const json& overrides, unsigned threads) {
    if (overrides.contains("scenario") && overrides.at("scenario") != name) {
        throw InputError("configuration scenario '" + overrides.at("scenario").dump() + "' does not match '" + name + "'");
    }
    return run_config(merge_config(default_config(name), overrides), threads);
}

}  // namespace twinfringe::lab
