#include "twinfringe/fringe.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace twinfringe::fringe {

namespace {

constexpr double kImaginaryLimit = 1e-6;

double sinc_pi(double u) {
    if (std::abs(u) < 1e-8) return 1.0 - (kPi * u) * (kPi * u) / 6.0;
    return std::sin(kPi * u) / (kPi * u);
}

void update_max(std::atomic<double>& slot, double value) {
    double current = slot.load();
    while (value > current && !slot.compare_exchange_weak(current, value)) {
    }
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void DelayConfig::validate() const {
    if (!std::isfinite(delta_x1) || !std::isfinite(delta_x2) || !std::isfinite(phase_offset)) {
        throw std::invalid_argument("delays and phase must be finite");
    }
}

void EnvelopeModel::validate() const {
    if (!(visibility >= 0.0 && visibility <= 1.0)) throw std::invalid_argument("envelope visibility must lie in [0, 1]");
    if (!(lambda_p > 0.0)) throw std::invalid_argument("envelope carrier wavelength must be positive");
    if (!(sigma_s > 0.0) || !(sigma_t > 0.0)) throw std::invalid_argument("envelope widths must be positive");
    if (!std::isfinite(n0) || !std::isfinite(f_weight)) throw std::invalid_argument("envelope scale must be finite");
}

double EnvelopeModel::f(double x) const {
    if (f_shape == EnvelopeShape::sinc) return sinc_pi(x / sigma_s);
    return std::exp(-0.5 * (x / sigma_s) * (x / sigma_s));
}

double EnvelopeModel::g(double x) const {
    if (g_shape == EnvelopeShape::sinc) return sinc_pi(x / sigma_t);
    return std::exp(-0.5 * (x / sigma_t) * (x / sigma_t));
}

EnvelopeModel envelope_model(const spectral::SpectralSummary& summary, double lambda_p) {
    EnvelopeModel m;
    m.lambda_p = lambda_p;
    m.sigma_s = summary.single_photon_coherence_length / (2.0 * kSincHalfMaximum);
    m.sigma_t = summary.two_photon_coherence_length / kGaussianFwhmPerSigma;
    m.validate();
    return m;
}

double envelope_probability(const EnvelopeModel& model, double x) {
    return model.n0 * (2.0 + model.visibility * (model.f_weight * model.f(x) + model.g(x) * std::cos(kTwoPi * x / model.lambda_p)));
}

// --- evaluator ----------------------------------------------------------------

CoincidenceEvaluator::CoincidenceEvaluator(spectral::JointSpectralAmplitude jsa) : jsa_(std::move(jsa)) {
    const auto n = static_cast<Eigen::Index>(jsa_.grid.size());
    w1_.resize(n, n);
    w2_.resize(n, n);
    const auto& w = jsa_.grid.weights;
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index k = 0; k < n; ++k) {
            const double ww = w[static_cast<std::size_t>(j)] * w[static_cast<std::size_t>(k)];
            w1_(j, k) = ww * std::norm(jsa_.amplitude(j, k));
            w2_(j, k) = ww * std::conj(jsa_.amplitude(k, j)) * jsa_.amplitude(j, k);
        }
    }
    const auto m = static_cast<std::size_t>(2 * n - 1);
    w1_difference_.assign(m, 0.0);
    w1_sum_.assign(m, 0.0);
    w2_difference_.assign(m, 0.0);
    w2_sum_.assign(m, 0.0);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index k = 0; k < n; ++k) {
            const auto d = static_cast<std::size_t>(j - k + n - 1);
            w1_difference_[d] += w1_(j, k);
            w2_difference_[d] += w2_(j, k);
            w1_sum_[static_cast<std::size_t>(j + k)] += w1_(j, k);
            w2_sum_[static_cast<std::size_t>(j + k)] += w2_(j, k);
        }
    }
}

CoincidenceEvaluator::CoincidenceEvaluator(const CoincidenceEvaluator& other)
    : jsa_(other.jsa_),
      w1_(other.w1_),
      w2_(other.w2_),
      w1_difference_(other.w1_difference_),
      w1_sum_(other.w1_sum_),
      w2_difference_(other.w2_difference_),
      w2_sum_(other.w2_sum_),
      max_residue_(other.max_residue_.load()) {}

Complex CoincidenceEvaluator::form(const Eigen::MatrixXcd& w, double alpha, double beta) const {
    const auto& g = jsa_.grid;
    const auto n = static_cast<Eigen::Index>(g.size());
    Eigen::VectorXcd a(n), b(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double o = g.offsets[static_cast<std::size_t>(i)];
        a(i) = std::polar(1.0, alpha * o);
        b(i) = std::polar(1.0, beta * o);
    }
    const Complex reduced = a.transpose() * (w * b);
    return std::polar(1.0, (alpha + beta) * g.center) * reduced;
}

namespace {

// sum_s m_s e^{i theta (s - centre)} by direct phases (no recurrence drift).
Complex lattice_sum(const std::vector<Complex>& marginal, double theta, double centre) {
    Complex total = 0.0;
    for (std::size_t s = 0; s < marginal.size(); ++s) {
        if (marginal[s] == Complex(0.0)) continue;
        total += marginal[s] * std::polar(1.0, theta * (static_cast<double>(s) - centre));
    }
    return total;
}

}  // namespace

Complex CoincidenceEvaluator::difference_kernel(const std::vector<Complex>& marginal, double tau) const {
    // w_j - w_k = h (j - k), index d = j - k + n - 1.
    const double n1 = static_cast<double>(jsa_.grid.size() - 1);
    return lattice_sum(marginal, tau * jsa_.grid.spacing(), n1);
}

Complex CoincidenceEvaluator::sum_kernel(const std::vector<Complex>& marginal, double tau) const {
    // w_j + w_k = 2 w_c + h (j + k - (n - 1)).
    const double n1 = static_cast<double>(jsa_.grid.size() - 1);
    return std::polar(1.0, 2.0 * tau * jsa_.grid.center) * lattice_sum(marginal, tau * jsa_.grid.spacing(), n1);
}

void CoincidenceEvaluator::check_alias(double tau) const {
    if (std::abs(tau) <= 0.5 * jsa_.grid.alias_period()) return;
    if (alias_warned_.exchange(true)) return;
    std::ostringstream msg;
    msg << "delay " << delay_to_length(tau) << " m exceeds half the grid alias range ("
        << delay_to_length(0.5 * jsa_.grid.alias_period()) << " m); kernels will alias";
    warn(msg.str());
}

CoincidenceEvaluator::Kernels CoincidenceEvaluator::kernels(const DelayConfig& delays) const {
    delays.validate();
    const double t1 = delays.tau1(), t2 = delays.tau2();
    check_alias(std::abs(t1) + std::abs(t2));

    Kernels k;
    k.k1 = difference_kernel(w1_difference_, -t2);
    k.k2 = sum_kernel(w1_sum_, t2);
    k.k3 = t1 == 0.0 ? sum_kernel(w2_sum_, t2) : form(w2_, t1 + t2, t2 - t1);
    k.k4 = difference_kernel(w2_difference_, t1 + t2);
    k.k5 = difference_kernel(w2_difference_, t1 - t2);

    double residue = std::max(std::abs(k.k4.imag()), std::abs(k.k5.imag()));
    if (jsa_.is_symmetric) residue = std::max(residue, std::abs(k.k1.imag()));
    update_max(max_residue_, residue);
    if (residue > kImaginaryLimit) {
        std::ostringstream msg;
        msg << "imaginary residue " << residue << " in coincidence integral (broken symmetry or quadrature failure)";
        throw NumericalError(msg.str());
    }
    return k;
}

double CoincidenceEvaluator::combine(const Kernels& k, Complex carrier) {
    const Complex bracket = 2.0 * (k.k1 + carrier * k.k2) + 2.0 * carrier * k.k3 - k.k4 - k.k5;
    const double p = 0.5 + 0.125 * bracket.real();
    if (p < -1e-9 || p > 1.0 + 1e-9) {
        std::ostringstream msg;
        msg << "coincidence probability " << p << " outside [0, 1]";
        throw NumericalError(msg.str());
    }
    return std::clamp(p, 0.0, 1.0);
}

double CoincidenceEvaluator::full(const DelayConfig& delays) const {
    return combine(kernels(delays), std::polar(1.0, 2.0 * delays.phase_offset));
}

double CoincidenceEvaluator::full_phase_average(const DelayConfig& delays, const std::vector<double>& phases) const {
    if (phases.empty()) throw std::invalid_argument("phase average needs at least one phase");
    const Kernels k = kernels(delays);
    double total = 0.0;
    for (double phi : phases) total += combine(k, std::polar(1.0, 2.0 * (delays.phase_offset + phi)));
    return total / static_cast<double>(phases.size());
}

double CoincidenceEvaluator::noon(double tau2) const {
    check_alias(tau2);
    return 0.5 * (1.0 + sum_kernel(w1_sum_, tau2).real());
}

double CoincidenceEvaluator::center(double delta_tau, bool phase_averaged) const {
    check_alias(delta_tau);
    double inner = difference_kernel(w1_difference_, delta_tau).real();
    if (!phase_averaged) inner += sum_kernel(w1_sum_, delta_tau).real();
    return 0.5 * (1.0 + 0.5 * inner);
}

double CoincidenceEvaluator::side(double delta_tau) const {
    check_alias(delta_tau);
    return 0.5 * (1.0 - 0.25 * difference_kernel(w1_difference_, -delta_tau).real());
}

double CoincidenceEvaluator::hom(double delta_tau) const {
    check_alias(delta_tau);
    return 0.5 * (1.0 - difference_kernel(w2_difference_, -delta_tau).real());
}

double coincidence_full(const spectral::JointSpectralAmplitude& jsa, const DelayConfig& delays) {
    return CoincidenceEvaluator(jsa).full(delays);
}

double coincidence_noon(const spectral::JointSpectralAmplitude& jsa, double tau2) {
    return CoincidenceEvaluator(jsa).noon(tau2);
}

double coincidence_center(const spectral::JointSpectralAmplitude& jsa, double delta_tau, bool phase_averaged) {
    return CoincidenceEvaluator(jsa).center(delta_tau, phase_averaged);
}

double coincidence_side(const spectral::JointSpectralAmplitude& jsa, double delta_tau) {
    return CoincidenceEvaluator(jsa).side(delta_tau);
}

double coincidence_hom(const spectral::JointSpectralAmplitude& jsa, double delta_tau) {
    return CoincidenceEvaluator(jsa).hom(delta_tau);
}

// --- scans --------------------------------------------------------------------

void Interferogram::validate() const {
    if (probability.size() != delta_x2.size()) throw std::invalid_argument("interferogram columns differ in length");
    if (counts && counts->size() != delta_x2.size()) throw std::invalid_argument("interferogram counts differ in length");
    for (double p : probability) {
        if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("interferogram probability outside [0, 1]");
    }
    if (counts) {
        for (auto c : *counts) {
            if (c < 0) throw std::invalid_argument("interferogram counts must be non-negative");
        }
    }
}

std::string to_string(ScanMode mode) {
    switch (mode) {
        case ScanMode::full: return "full";
        case ScanMode::noon: return "noon";
        case ScanMode::center: return "center";
        case ScanMode::side: return "side";
        case ScanMode::envelope: return "envelope";
        case ScanMode::hom: return "hom";
    }
    return "full";
}

ScanMode scan_mode_from_string(const std::string& name) {
    for (auto m : {ScanMode::full, ScanMode::noon, ScanMode::center, ScanMode::side, ScanMode::envelope, ScanMode::hom}) {
        if (to_string(m) == name) return m;
    }
    throw InputError("unknown scan mode '" + name + "'");
}

std::vector<double> scan_points(double lo, double hi, double step) {
    if (!(step > 0.0) || !std::isfinite(step)) throw std::invalid_argument("scan step must be positive");
    if (!(hi >= lo)) throw std::invalid_argument("scan range must satisfy lo <= hi");
    const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = lo + static_cast<double>(i) * step;
    return x;
}

double carrier_wavelength(const spectral::JointSpectralAmplitude& jsa) {
    return kPi * kSpeedOfLight / jsa.grid.center;
}

Interferogram scan(const CoincidenceEvaluator& evaluator, const ScanRequest& request) {
    Interferogram out;
    out.delta_x2 = scan_points(request.lo, request.hi, request.step);
    out.probability.assign(out.delta_x2.size(), 0.0);

    std::optional<EnvelopeModel> envelope;
    if (request.mode == ScanMode::envelope) {
        envelope = envelope_model(spectral::summarize(evaluator.jsa()), carrier_wavelength(evaluator.jsa()));
    }

    parallel_for(out.delta_x2.size(), request.threads, [&](std::size_t i) {
        const double x = out.delta_x2[i];
        try {
            double p = 0.0;
            switch (request.mode) {
                case ScanMode::full:
                    p = evaluator.full({request.delta_x1, x, request.phase_offset});
                    break;
                case ScanMode::noon:
                    p = evaluator.noon(length_to_delay(x));
                    break;
                case ScanMode::center:
                    p = evaluator.center(length_to_delay(x));
                    break;
                case ScanMode::side:
                    p = evaluator.side(length_to_delay(x - request.delta_x1));
                    break;
                case ScanMode::hom:
                    p = evaluator.hom(length_to_delay(x));
                    break;
                case ScanMode::envelope:
                    p = envelope_probability(*envelope, x);
                    break;
            }
            out.probability[i] = std::clamp(p, 0.0, 1.0);
        } catch (const NumericalError& e) {
            throw NumericalError(std::string(e.what()) + " at delta_x2 = " + format_double(x) + " m");
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(std::string(e.what()) + " at delta_x2 = " + format_double(x) + " m");
        }
    });
    out.metadata.params = {{"mode", to_string(request.mode)},
                           {"delta_x1_m", request.delta_x1},
                           {"phase_offset_rad", request.phase_offset},
                           {"grid_points", evaluator.jsa().grid.size()}};
    return out;
}

Interferogram scan(const spectral::JointSpectralAmplitude& jsa, const ScanRequest& request) {
    return scan(CoincidenceEvaluator(jsa), request);
}

// --- I/O ------------------------------------------------------------------------

void write_csv(std::ostream& out, const Interferogram& data) {
    data.validate();
    out << "# twinfringe interferogram\n";
    out << "# schema: 1\n";
    out << "# scenario: " << data.metadata.scenario << '\n';
    out << "# seed: " << data.metadata.seed << '\n';
    out << "# integration_time_s: " << format_double(data.metadata.integration_time) << '\n';
    out << "# params: " << data.metadata.params.dump() << '\n';
    out << "# processing: " << data.metadata.processing.dump() << '\n';
    out << "delta_x2_m,probability,counts\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        out << format_double(data.delta_x2[i]) << ',' << format_double(data.probability[i]) << ',';
        if (data.counts) out << (*data.counts)[i];
        out << '\n';
    }
}

namespace {

[[noreturn]] void csv_error(std::size_t line, const std::string& what) {
    throw InputError("line " + std::to_string(line) + ": " + what);
}

double parse_double(const std::string& field, std::size_t line, const char* column) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(field, &used);
    } catch (const std::exception&) {
        csv_error(line, std::string("cannot parse ") + column + " '" + field + "'");
    }
    if (used != field.size()) csv_error(line, std::string("trailing characters in ") + column + " '" + field + "'");
    return v;
}

}  // namespace

Interferogram read_csv(std::istream& in) {
    Interferogram data;
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    bool any_counts = false, any_missing_counts = false;
    std::vector<std::int64_t> counts;

    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto colon = line.find(':');
            if (colon == std::string::npos) continue;
            std::string key = line.substr(1, colon - 1);
            key.erase(0, key.find_first_not_of(' '));
            std::string value = line.substr(colon + 1);
            if (!value.empty() && value[0] == ' ') value.erase(0, 1);
            try {
                if (key == "schema" && value != "1") csv_error(lineno, "unsupported schema '" + value + "'");
                if (key == "scenario") data.metadata.scenario = value;
                if (key == "seed") data.metadata.seed = std::stoull(value);
                if (key == "integration_time_s") data.metadata.integration_time = std::stod(value);
                if (key == "params") data.metadata.params = nlohmann::json::parse(value);
                if (key == "processing") data.metadata.processing = nlohmann::json::parse(value);
            } catch (const InputError&) {
                throw;
            } catch (const std::exception& e) {
                csv_error(lineno, "bad metadata '" + key + "': " + e.what());
            }
            continue;
        }
        if (!header_seen) {
            if (line != "delta_x2_m,probability,counts" && line != "delta_x2_m,probability") {
                csv_error(lineno, "expected header 'delta_x2_m,probability,counts'");
            }
            header_seen = true;
            continue;
        }
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (!line.empty() && line.back() == ',') fields.emplace_back();
        if (fields.size() < 2 || fields.size() > 3) csv_error(lineno, "expected 2 or 3 columns");
        data.delta_x2.push_back(parse_double(fields[0], lineno, "delta_x2_m"));
        const double p = parse_double(fields[1], lineno, "probability");
        if (!(p >= 0.0 && p <= 1.0)) csv_error(lineno, "probability outside [0, 1]");
        data.probability.push_back(p);
        if (fields.size() == 3 && !fields[2].empty()) {
            std::size_t used = 0;
            long long c = 0;
            try {
                c = std::stoll(fields[2], &used);
            } catch (const std::exception&) {
                csv_error(lineno, "cannot parse counts '" + fields[2] + "'");
            }
            if (used != fields[2].size() || c < 0) csv_error(lineno, "counts must be a non-negative integer");
            counts.push_back(c);
            any_counts = true;
        } else {
            counts.push_back(0);
            any_missing_counts = true;
        }
    }
    if (!header_seen) throw InputError("missing CSV header 'delta_x2_m,probability,counts'");
    if (data.delta_x2.empty()) throw InputError("CSV contains no data rows");
    if (any_counts && any_missing_counts) throw InputError("counts column is only partially filled");
    if (any_counts) data.counts = std::move(counts);
    return data;
}

nlohmann::json to_json(const Interferogram& data) {
    data.validate();
    nlohmann::json doc;
    doc["schema"] = 1;
    doc["metadata"] = {{"scenario", data.metadata.scenario},
                       {"seed", data.metadata.seed},
                       {"integration_time_s", data.metadata.integration_time},
                       {"params", data.metadata.params},
                       {"processing", data.metadata.processing}};
    doc["delta_x2_m"] = data.delta_x2;
    doc["probability"] = data.probability;
    doc["counts"] = data.counts ? nlohmann::json(*data.counts) : nlohmann::json(nullptr);
    return doc;
}

Interferogram from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("schema").get<int>() != 1) throw InputError("unsupported interferogram schema");
        Interferogram data;
        const auto& meta = doc.at("metadata");
        data.metadata.scenario = meta.at("scenario").get<std::string>();
        data.metadata.seed = meta.at("seed").get<std::uint64_t>();
        data.metadata.integration_time = meta.at("integration_time_s").get<double>();
        data.metadata.params = meta.at("params");
        data.metadata.processing = meta.value("processing", nlohmann::json::array());
        data.delta_x2 = doc.at("delta_x2_m").get<std::vector<double>>();
        data.probability = doc.at("probability").get<std::vector<double>>();
        if (!doc.at("counts").is_null()) data.counts = doc.at("counts").get<std::vector<std::int64_t>>();
        data.validate();
        return data;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed interferogram JSON: ") + e.what());
    } catch (const InputError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw InputError(e.what());
    }
}

void save_csv(const std::string& path, const Interferogram& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    write_csv(out, data);
}

Interferogram load_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    return read_csv(in);
}

}  // namespace twinfringe::fringe
