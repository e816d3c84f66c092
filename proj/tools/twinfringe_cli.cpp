#include "twinfringe/common.hpp"
#include "twinfringe/fit.hpp"
#include "twinfringe/fringe.hpp"
#include "twinfringe/lab.hpp"
#include "twinfringe/optics.hpp"
#include "twinfringe/spectral.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace twinfringe;
using nlohmann::json;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t line_of_offset(const std::string& text, std::size_t offset) {
    offset = std::min(offset, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

// Line of the first `"key":` in the raw text, 0 if absent.
std::size_t line_of_key(const std::string& text, const std::string& key) {
    const std::string quoted = "\"" + key + "\"";
    for (std::size_t pos = text.find(quoted); pos != std::string::npos; pos = text.find(quoted, pos + 1)) {
        const auto next = text.find_first_not_of(" \t\r\n", pos + quoted.size());
        if (next != std::string::npos && text[next] == ':') return line_of_offset(text, pos);
    }
    return 0;
}

struct ConfigFile {
    std::string path;
    std::string text;
    json doc;
};

ConfigFile load_config_file(const std::string& path) {
    ConfigFile f{path, read_file(path), {}};
    try {
        f.doc = json::parse(f.text);
    } catch (const json::parse_error& e) {
        throw InputError(path + ":" + std::to_string(line_of_offset(f.text, e.byte)) + ": invalid JSON: " + e.what());
    }
    if (!f.doc.is_object()) throw InputError(path + ": configuration must be a JSON object");
    return f;
}

// Re-throws config errors naming a key with the key's line in the file.
[[noreturn]] void rethrow_anchored(const InputError& e, const ConfigFile* file) {
    std::string msg = e.what();
    if (file) {
        const auto open = msg.find('\'');
        const auto close = open == std::string::npos ? open : msg.find('\'', open + 1);
        if (close != std::string::npos) {
            const std::string path = msg.substr(open + 1, close - open - 1);
            const std::string leaf = path.substr(path.rfind('.') == std::string::npos ? 0 : path.rfind('.') + 1);
            const auto line = line_of_key(file->text, leaf);
            if (line > 0) throw InputError(file->path + ":" + std::to_string(line) + ": " + msg);
        }
        throw InputError(file->path + ": " + msg);
    }
    throw InputError(msg);
}

// key.path=value; value is JSON when it parses, else a string.
void apply_set(json& overrides, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw InputError("--set expects key.path=value, got '" + assignment + "'");
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;
    }
    json* node = &overrides;
    std::stringstream ss(path);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        json& child = (*node)[parts[i]];
        if (child.is_null()) child = json::object();
        node = &child;
    }
    (*node)[parts.back()] = value;
}

std::optional<std::uint64_t> seed_from_env() {
    const char* env = std::getenv("TWINFRINGE_SEED");
    if (!env || !*env) return std::nullopt;
    try {
        std::size_t used = 0;
        const auto v = std::stoull(env, &used);
        if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw InputError(std::string("TWINFRINGE_SEED must be an unsigned integer, got '") + env + "'");
    }
}

void write_json_file(const std::string& path, const json& doc) {
    if (path == "-") {
        std::cout << doc.dump(2) << '\n';
        return;
    }
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path + "'");
    out << doc.dump(2) << '\n';
}

fringe::Interferogram load_data(const std::string& path) {
    const bool is_json = path.size() > 5 && path.compare(path.size() - 5, 5, ".json") == 0;
    if (is_json) {
        try {
            return fringe::from_json(json::parse(read_file(path)));
        } catch (const json::exception& e) {
            throw InputError(path + ": " + e.what());
        }
    }
    try {
        return fringe::load_csv(path);
    } catch (const InputError& e) {
        throw InputError(path + ": " + e.what());
    }
}

// --- scan ---------------------------------------------------------------------

struct ScanOptions {
    std::string scenario;
    std::string config_path;
    std::vector<std::string> sets;
    std::string out = "-";
    std::string json_out;
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;
};

json resolve_config(const std::string& scenario_arg, const std::string& config_path, const std::vector<std::string>& sets,
                    std::optional<std::uint64_t> seed, std::optional<ConfigFile>& file) {
    json overrides = json::object();
    if (!config_path.empty()) {
        file = load_config_file(config_path);
        overrides = file->doc;
    }
    std::string scenario = scenario_arg;
    if (scenario.empty()) {
        if (!overrides.contains("scenario") || !overrides["scenario"].is_string()) {
            throw InputError("no scenario given: use --scenario or a config with a \"scenario\" key");
        }
        scenario = overrides["scenario"].get<std::string>();
    }
    overrides["scenario"] = scenario;
    for (const auto& s : sets) apply_set(overrides, s);
    if (auto env = seed_from_env()) overrides["seed"] = *env;
    if (seed) overrides["seed"] = *seed;
    try {
        const json merged = lab::merge_config(lab::default_config(scenario), overrides);
        lab::parse_config(merged);
        return merged;
    } catch (const InputError& e) {
        rethrow_anchored(e, file ? &*file : nullptr);
    }
}

int run_scan(const ScanOptions& opt) {
    std::optional<ConfigFile> file;
    const json config = resolve_config(opt.scenario, opt.config_path, opt.sets, opt.seed, file);
    const auto result = lab::run_config(config, opt.threads);
    if (opt.out == "-") {
        fringe::write_csv(std::cout, result.data);
    } else {
        fringe::save_csv(opt.out, result.data);
    }
    if (!opt.json_out.empty()) {
        json doc = fringe::to_json(result.data);
        doc["config"] = result.config;
        doc["summary"] = {{"single_photon_coherence_length_m", result.summary.single_photon_coherence_length},
                          {"two_photon_coherence_length_m", result.summary.two_photon_coherence_length},
                          {"gvd_broadening_factor", result.gvd_broadening_factor},
                          {"baseline_coincidence_rate_hz", result.baseline.coincidences},
                          {"accidental_rate_hz", result.baseline.accidentals},
                          {"car", result.baseline.car}};
        write_json_file(opt.json_out, doc);
    }
    std::cerr << "scenario " << result.data.metadata.scenario << ": " << result.data.size() << " points, "
              << "single-photon length " << result.summary.single_photon_coherence_length * 1e3 << " mm, "
              << "two-photon length " << result.summary.two_photon_coherence_length * 1e3 << " mm, "
              << "gvd factor " << result.gvd_broadening_factor << '\n';
    return 0;
}

// --- fit ----------------------------------------------------------------------

struct FitOptions {
    std::string input;
    std::string model = "sinusoid";
    std::string weighting;
    std::string out = "-";
    std::string window_lo;
    std::string window_hi;
    std::string period_min;
    std::string period_max;
    std::string sigma_s;
    std::string sigma_t;
    double accidentals = -1.0;
    bool subtract_expected_accidentals = false;
};

int run_fit(const FitOptions& opt) {
    auto data = load_data(opt.input);
    data.validate();
    json processing = data.metadata.processing;

    std::vector<double> y = fit::observed(data);
    const bool have_config = data.metadata.params.is_object() && data.metadata.params.contains("source");
    if (opt.subtract_expected_accidentals || opt.accidentals >= 0.0) {
        if (!data.counts) throw InputError("accidental subtraction needs count data");
        double acc = opt.accidentals;
        if (opt.subtract_expected_accidentals) {
            if (!have_config) throw InputError("expected accidentals need the scenario configuration in the input metadata");
            const auto cfg = lab::parse_config(data.metadata.params);
            acc = lab::expected_counts(0.5, cfg.detector, cfg.rates).accidentals * data.metadata.integration_time;
        }
        y = fit::subtract_accidentals(*data.counts, acc);
        processing.push_back({{"step", "subtract_accidentals"}, {"accidentals_per_point", acc}});
    }

    std::vector<double> x = data.delta_x2;
    if (!opt.window_lo.empty() || !opt.window_hi.empty()) {
        const double lo = opt.window_lo.empty() ? -INFINITY : lab::parse_length(opt.window_lo, "--window-lo");
        const double hi = opt.window_hi.empty() ? INFINITY : lab::parse_length(opt.window_hi, "--window-hi");
        std::vector<double> xs;
        std::vector<double> ys;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (x[i] >= lo && x[i] <= hi) {
                xs.push_back(x[i]);
                ys.push_back(y[i]);
            }
        }
        x = std::move(xs);
        y = std::move(ys);
        processing.push_back({{"step", "window"}, {"lo_m", lo}, {"hi_m", hi}});
    }

    fit::Weighting weighting = data.counts ? fit::Weighting::poisson : fit::Weighting::uniform;
    if (opt.weighting == "uniform") weighting = fit::Weighting::uniform;
    else if (opt.weighting == "poisson") weighting = fit::Weighting::poisson;
    else if (!opt.weighting.empty()) throw InputError("--weighting must be 'uniform' or 'poisson'");

    fit::FringeFit result;
    if (opt.model == "sinusoid") {
        const double pmin = opt.period_min.empty() ? 0.0 : lab::parse_length(opt.period_min, "--period-min");
        const double pmax = opt.period_max.empty() ? 0.0 : lab::parse_length(opt.period_max, "--period-max");
        result = fit::fit_sinusoid(x, y, weighting, pmin, pmax);
    } else if (opt.model == "sinc") {
        result = fit::fit_dip_or_peak(x, y, fringe::EnvelopeShape::sinc, weighting);
    } else if (opt.model == "gaussian") {
        result = fit::fit_dip_or_peak(x, y, fringe::EnvelopeShape::gaussian, weighting);
    } else if (opt.model == "envelope") {
        fringe::EnvelopeModel start;
        if (have_config) {
            const auto cfg = lab::parse_config(data.metadata.params);
            const auto jsa = lab::build_source(cfg);
            start = fringe::envelope_model(spectral::summarize(jsa), fringe::carrier_wavelength(jsa));
        } else if (opt.sigma_s.empty() || opt.sigma_t.empty()) {
            throw InputError("envelope fit needs --sigma-s and --sigma-t when the input has no configuration");
        }
        if (!opt.sigma_s.empty()) start.sigma_s = lab::parse_length(opt.sigma_s, "--sigma-s");
        if (!opt.sigma_t.empty()) start.sigma_t = lab::parse_length(opt.sigma_t, "--sigma-t");
        double mean = 0.0;
        for (double v : y) mean += v / static_cast<double>(y.size());
        start.n0 = mean / 2.0;
        result = fit::fit_envelope(x, y, start, weighting);
    } else {
        throw InputError("--model must be sinusoid, sinc, gaussian or envelope");
    }

    json doc = result.to_json();
    doc["input"] = opt.input;
    doc["weighting"] = weighting == fit::Weighting::poisson ? "poisson" : "uniform";
    doc["processing"] = processing;
    doc["metadata"] = {{"scenario", data.metadata.scenario}, {"seed", data.metadata.seed},
                       {"integration_time_s", data.metadata.integration_time}, {"params", data.metadata.params}};
    write_json_file(opt.out, doc);
    return 0;
}

// --- validate -----------------------------------------------------------------

struct ValidateOptions {
    std::string scenario;
    std::string config_path;
    std::vector<std::string> sets;
    std::size_t grid_points = 32;
    double tolerance = 1e-6;
};

int run_validate(const ValidateOptions& opt) {
    std::optional<ConfigFile> file;
    const json config = resolve_config(opt.scenario, opt.config_path, opt.sets, std::nullopt, file);
    const auto cfg = lab::parse_config(config);
    const auto full = lab::build_source(cfg);
    const auto coarse = spectral::resample(full, opt.grid_points);
    const bool pmi = cfg.scenario.rfind("pmi", 0) == 0;

    set_warning_handler([](const std::string&) {});
    const fringe::CoincidenceEvaluator ev(coarse);
    const double x1 = cfg.scan.delta_x1;
    std::vector<double> probes = {cfg.scan.lo, 0.5 * (cfg.scan.lo + x1), 0.0, x1, 0.5 * (x1 + cfg.scan.hi), cfg.scan.hi,
                                  x1 + 0.25 * fringe::carrier_wavelength(coarse)};
    double worst = 0.0;
    for (double x2 : probes) {
        const double tau1 = length_to_delay(x1);
        const double tau2 = length_to_delay(x2);
        const double quad = ev.full({x1, x2, cfg.scan.phase_offset});
        const auto setup = pmi ? optics::pmi_oracle_setup(tau1, tau2, cfg.scan.phase_offset)
                               : optics::mzi_oracle_setup(tau1, tau2, cfg.scan.phase_offset);
        const auto outcome = optics::oracle_outcome(coarse, setup, opt.grid_points);
        const double dev = std::abs(quad - outcome.coincidence);
        worst = std::max(worst, dev);
        std::cout << "delta_x2 = " << x2 << " m: quadrature " << quad << ", oracle " << outcome.coincidence
                  << ", |diff| " << dev << ", oracle total " << outcome.total << '\n';
    }
    set_warning_handler(nullptr);
    const bool ok = worst <= opt.tolerance;
    std::cout << (ok ? "PASS" : "FAIL") << " " << cfg.scenario << " (" << (pmi ? "pmi" : "mzi")
              << " network, " << opt.grid_points << " points): max |quadrature - oracle| = " << worst
              << " (tolerance " << opt.tolerance << ")\n";
    return ok ? 0 : kExitNumerical;
}

}  // namespace


int main(int argc, char** argv) {
    CLI::App app{"twinfringe: two-photon interference simulator for Mach-Zehnder and polarisation Michelson interferometers"};
    app.require_subcommand(1);
    unsigned threads = 0;
    app.add_option("--threads", threads, "Worker threads (0 = hardware concurrency)");

    ScanOptions scan_opt;
    auto* scan = app.add_subcommand("scan", "Simulate an interferogram for a scenario");
    scan->add_option("-s,--scenario", scan_opt.scenario, "Scenario name (see `scenarios`)");
    scan->add_option("-c,--config", scan_opt.config_path, "JSON configuration merged over the scenario defaults");
    scan->add_option("--set", scan_opt.sets, "Override key.path=value (lengths accept m, mm, um, nm)");
    scan->add_option("-o,--out", scan_opt.out, "CSV output path, '-' for stdout");
    scan->add_option("--json", scan_opt.json_out, "Also write JSON (data, resolved config, summary)");
    scan->add_option("--seed", scan_opt.seed, "Seed (overrides TWINFRINGE_SEED and the config)");

    FitOptions fit_opt;
    auto* fit = app.add_subcommand("fit", "Fit a model to an interferogram");
    fit->add_option("-i,--input", fit_opt.input, "Interferogram CSV or JSON")->required();
    fit->add_option("-m,--model", fit_opt.model, "sinusoid, sinc, gaussian or envelope");
    fit->add_option("--weighting", fit_opt.weighting, "uniform or poisson (default: poisson for counts)");
    fit->add_option("-o,--out", fit_opt.out, "JSON output path, '-' for stdout");
    fit->add_option("--window-lo", fit_opt.window_lo, "Lower delta_x2 bound");
    fit->add_option("--window-hi", fit_opt.window_hi, "Upper delta_x2 bound");
    fit->add_option("--period-min", fit_opt.period_min, "Shortest sinusoid period");
    fit->add_option("--period-max", fit_opt.period_max, "Longest sinusoid period");
    fit->add_option("--sigma-s", fit_opt.sigma_s, "Envelope start: single-photon width parameter");
    fit->add_option("--sigma-t", fit_opt.sigma_t, "Envelope start: two-photon width parameter");
    fit->add_option("--accidentals", fit_opt.accidentals, "Subtract this many accidental counts per point");
    fit->add_flag("--subtract-expected-accidentals", fit_opt.subtract_expected_accidentals,
                  "Subtract the model accidentals implied by the input configuration");

    ValidateOptions val_opt;
    auto* validate = app.add_subcommand("validate", "Cross-check the quadrature against the mode-level oracle");
    validate->add_option("-s,--scenario", val_opt.scenario, "Scenario name");
    validate->add_option("-c,--config", val_opt.config_path, "JSON configuration");
    validate->add_option("--set", val_opt.sets, "Override key.path=value");
    validate->add_option("--tolerance", val_opt.tolerance, "Maximum allowed deviation");
    validate->add_option("--grid-points", val_opt.grid_points, "Oracle grid points")->group("")->check(CLI::Range(16, 64));

    auto* scenarios = app.add_subcommand("scenarios", "List built-in scenarios");
    bool show_defaults = false;
    scenarios->add_flag("--defaults", show_defaults, "Print each scenario's default configuration");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitInput;
    }

    try {
        if (*scan) {
            scan_opt.threads = threads;
            return run_scan(scan_opt);
        }
        if (*fit) return run_fit(fit_opt);
        if (*validate) return run_validate(val_opt);
        if (*scenarios) {
            for (const auto& name : lab::scenario_names()) {
                std::cout << name << "  " << lab::scenario_description(name) << '\n';
                if (show_defaults) std::cout << lab::default_config(name).dump(2) << '\n';
            }
            return 0;
        }
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kExitInput;
    } catch (const std::invalid_argument& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
