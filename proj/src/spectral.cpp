#include "twinfringe/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <stdexcept>

namespace twinfringe::spectral {

namespace {

constexpr double kLn2 = 0.693147180559945309417;

// Gaussian amplitude whose squared modulus has FWHM `fwhm`.
double gaussian_amplitude(double offset, double fwhm) {
    return std::exp(-2.0 * kLn2 * offset * offset / (fwhm * fwhm));
}

}  // namespace

FrequencyGrid build_grid_angular(double center, double half_span, std::size_t n_points) {
    if (n_points < 16) {
        std::ostringstream msg;
        msg << "frequency grid needs at least 16 points, got " << n_points;
        throw std::invalid_argument(msg.str());
    }
    if (!(half_span > 0.0) || !std::isfinite(half_span)) throw std::invalid_argument("frequency grid span must be positive");
    if (!(center > 0.0)) throw std::invalid_argument("frequency grid centre must be positive");

    FrequencyGrid grid;
    grid.center = center;
    grid.half_span = half_span;
    grid.offsets.resize(n_points);
    grid.weights.assign(n_points, 0.0);
    const double last = static_cast<double>(n_points - 1);
    // (2i - (n-1)) is exactly antisymmetric, so offsets are symmetric bit for bit.
    for (std::size_t i = 0; i < n_points; ++i) {
        grid.offsets[i] = half_span * (2.0 * static_cast<double>(i) - last) / last;
    }
    const double h = grid.spacing();
    for (std::size_t i = 0; i < n_points; ++i) grid.weights[i] = h;
    grid.weights.front() = 0.5 * h;
    grid.weights.back() = 0.5 * h;
    return grid;
}

FrequencyGrid build_grid(double center_wavelength, double span_wavelength, std::size_t n_points) {
    if (!(center_wavelength > 0.0)) throw std::invalid_argument("centre wavelength must be positive");
    if (!(span_wavelength > 0.0)) throw std::invalid_argument("wavelength span must be positive");
    return build_grid_angular(angular_frequency(center_wavelength),
                              0.5 * angular_bandwidth(center_wavelength, span_wavelength), n_points);
}

double integrate(const FrequencyGrid& grid, const std::vector<double>& samples) {
    if (samples.size() != grid.size()) throw std::invalid_argument("sample count does not match grid");
    double total = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) total += grid.weights[i] * samples[i];
    return total;
}

void PumpSpec::validate() const {
    if (!(center_wavelength > 0.0)) throw std::invalid_argument("pump centre wavelength must be positive");
    if (!(pulse_duration_fwhm > 0.0)) throw std::invalid_argument("pump pulse duration must be positive");
    if (!(repetition_rate > 0.0)) throw std::invalid_argument("pump repetition rate must be positive");
}

void FilterSpec::validate() const {
    if (!(center_wavelength > 0.0)) throw std::invalid_argument("filter centre wavelength must be positive");
    if (!(bandwidth_fwhm > 0.0)) throw std::invalid_argument("filter bandwidth must be positive");
}

double FilterSpec::center_angular() const { return angular_frequency(center_wavelength); }

double FilterSpec::bandwidth_angular() const { return angular_bandwidth(center_wavelength, bandwidth_fwhm); }

double FilterSpec::amplitude(double omega, double cell) const {
    const double offset = omega - center_angular();
    const double width = bandwidth_angular();
    if (shape == FilterShape::gaussian) return gaussian_amplitude(offset, width);
    if (cell <= 0.0) return std::abs(offset) <= 0.5 * width ? 1.0 : 0.0;
    const double lo = std::max(offset - 0.5 * cell, -0.5 * width);
    const double hi = std::min(offset + 0.5 * cell, 0.5 * width);
    return std::clamp((hi - lo) / cell, 0.0, 1.0);
}

double JointSpectralAmplitude::norm_squared() const {
    const auto& w = grid.weights;
    const auto n = static_cast<Eigen::Index>(grid.size());
    double total = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
        double column = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) column += w[j] * std::norm(amplitude(j, k));
        total += w[k] * column;
    }
    return total;
}

double JointSpectralAmplitude::symmetry_residual() const {
    return (amplitude - amplitude.transpose()).cwiseAbs().maxCoeff();
}

void normalize(JointSpectralAmplitude& jsa) {
    const double n2 = jsa.norm_squared();
    if (!(n2 > 0.0) || !std::isfinite(n2)) throw NumericalError("joint spectral amplitude has zero or non-finite norm");
    jsa.amplitude /= std::sqrt(n2);
}

JointSpectralAmplitude make_jsa(const PumpSpec& pump, const FilterSpec& signal_filter,
                                const FilterSpec& idler_filter, const JsaOptions& options,
                                const FrequencyGrid& grid) {
    pump.validate();
    signal_filter.validate();
    idler_filter.validate();
    if (grid.size() < 16) throw std::invalid_argument("grid too small");
    if (!(options.gvd_broadening_factor > 0.0)) throw std::invalid_argument("gvd_broadening_factor must be positive");

    const double lo = grid.center - grid.half_span;
    const double hi = grid.center + grid.half_span;
    const double widest = std::max(signal_filter.bandwidth_angular(), idler_filter.bandwidth_angular());
    for (const FilterSpec* f : {&signal_filter, &idler_filter}) {
        const double c = f->center_angular();
        const double b = f->bandwidth_angular();
        if (c + 0.5 * b <= lo || c - 0.5 * b >= hi) {
            throw std::invalid_argument("filter passband does not overlap the frequency grid");
        }
        if (c - b < lo || c + b > hi) warn("frequency grid clips a filter passband");
    }
    if (2.0 * grid.half_span < 4.0 * widest) warn("frequency grid spans less than 4x the widest filter bandwidth");

    const double pump_center = angular_frequency(pump.center_wavelength);
    const double pump_width = 4.0 * kLn2 / (pump.pulse_duration_fwhm * options.gvd_broadening_factor);
    const double pm_width = options.phase_matching_bandwidth > 0.0 ? options.phase_matching_bandwidth : 10.0 * widest;
    const double pump_detuning = 2.0 * grid.center - pump_center;
    const double cell = grid.spacing();

    const std::size_t n = grid.size();
    std::vector<double> f1(n), f2(n);
    for (std::size_t i = 0; i < n; ++i) {
        f1[i] = signal_filter.amplitude(grid.point(i), cell);
        f2[i] = idler_filter.amplitude(grid.point(i), cell);
    }

    JointSpectralAmplitude jsa;
    jsa.grid = grid;
    jsa.amplitude.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < n; ++k) {
            const double sum = pump_detuning + (grid.offsets[j] + grid.offsets[k]);
            const double diff = grid.offsets[j] - grid.offsets[k];
            const double value = gaussian_amplitude(sum, pump_width) * gaussian_amplitude(diff, pm_width) * (f1[j] * f2[k]);
            jsa.amplitude(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = value;
        }
    }
    jsa.is_symmetric = signal_filter == idler_filter;
    normalize(jsa);
    return jsa;
}

JointSpectralAmplitude symmetrize(const JointSpectralAmplitude& jsa) {
    JointSpectralAmplitude out;
    out.grid = jsa.grid;
    out.amplitude = jsa.amplitude + jsa.amplitude.transpose();
    const double scale = jsa.amplitude.cwiseAbs().maxCoeff();
    if (!(out.amplitude.cwiseAbs().maxCoeff() > 1e-12 * scale)) {
        throw std::invalid_argument("symmetrised amplitude vanishes (antisymmetric input)");
    }
    out.is_symmetric = true;
    normalize(out);
    return out;
}

JointSpectralAmplitude resample(const JointSpectralAmplitude& jsa, std::size_t n_points) {
    if (n_points == jsa.grid.size()) return jsa;
    JointSpectralAmplitude out;
    out.grid = build_grid_angular(jsa.grid.center, jsa.grid.half_span, n_points);
    const auto n_in = static_cast<Eigen::Index>(jsa.grid.size());
    const double h_in = jsa.grid.spacing();

    auto locate = [&](double offset) {
        const double pos = (offset + jsa.grid.half_span) / h_in;
        auto i0 = static_cast<Eigen::Index>(std::floor(pos));
        i0 = std::clamp<Eigen::Index>(i0, 0, n_in - 2);
        return std::pair{i0, pos - static_cast<double>(i0)};
    };

    const auto n = static_cast<Eigen::Index>(n_points);
    out.amplitude.resize(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto [a0, fa] = locate(out.grid.offsets[j]);
        for (Eigen::Index k = 0; k < n; ++k) {
            const auto [b0, fb] = locate(out.grid.offsets[k]);
            const auto& m = jsa.amplitude;
            out.amplitude(j, k) = (1 - fa) * (1 - fb) * m(a0, b0) + fa * (1 - fb) * m(a0 + 1, b0) +
                                  (1 - fa) * fb * m(a0, b0 + 1) + fa * fb * m(a0 + 1, b0 + 1);
        }
    }
    out.is_symmetric = jsa.is_symmetric;
    if (out.is_symmetric) {
        const Eigen::MatrixXcd sym = 0.5 * (out.amplitude + out.amplitude.transpose());
        out.amplitude = sym;
    }
    normalize(out);
    return out;
}

Marginals marginals(const JointSpectralAmplitude& jsa) {
    const std::size_t n = jsa.grid.size();
    Marginals m;
    m.sum.assign(2 * n - 1, 0.0);
    m.difference.assign(2 * n - 1, 0.0);
    const auto& w = jsa.grid.weights;
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < n; ++k) {
            const double p = w[j] * w[k] * std::norm(jsa.amplitude(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)));
            m.sum[j + k] += p;
            m.difference[j + n - 1 - k] += p;
        }
    }
    return m;
}

double marginal_magnitude(const std::vector<double>& marginal, double spacing, double tau) {
    // Recurrence for e^{i s theta}; renormalised every step to stop drift.
    const std::complex<double> step = std::polar(1.0, tau * spacing);
    std::complex<double> phase = 1.0;
    std::complex<double> total = 0.0;
    for (double m : marginal) {
        total += m * phase;
        phase *= step;
        phase /= std::abs(phase);
    }
    return std::abs(total);
}

namespace {

// Returns the full width at which the normalised magnitude first drops to
// one half, or nullopt when it never does within half an alias period.
std::optional<double> half_maximum_width(const std::vector<double>& marginal, double spacing) {
    const double peak = marginal_magnitude(marginal, spacing, 0.0);
    if (!(peak > 0.0)) return std::nullopt;
    const double period = kTwoPi / spacing;
    const double limit = 0.5 * period;
    const double step = period / (16.0 * static_cast<double>(marginal.size()));
    auto level = [&](double tau) { return marginal_magnitude(marginal, spacing, tau) / peak - 0.5; };

    double prev = 0.0;
    for (double tau = step; tau <= limit; tau += step) {
        if (level(tau) < 0.0) {
            double a = prev, b = tau;
            for (int it = 0; it < 80; ++it) {
                const double mid = 0.5 * (a + b);
                (level(mid) < 0.0 ? b : a) = mid;
            }
            return a + b;  // 2 * crossing
        }
        prev = tau;
    }
    return std::nullopt;
}

}  // namespace

SpectralSummary summarize(const JointSpectralAmplitude& jsa) {
    const Marginals m = marginals(jsa);
    const double h = jsa.grid.spacing();
    SpectralSummary s;
    const double saturated_time = jsa.grid.alias_period();

    if (auto w = half_maximum_width(m.difference, h)) {
        s.single_photon_coherence_time = *w;
    } else {
        s.single_photon_coherence_time = saturated_time;
        s.single_photon_saturated = true;
    }
    if (auto w = half_maximum_width(m.sum, h)) {
        s.two_photon_coherence_time = *w;
    } else {
        s.two_photon_coherence_time = saturated_time;
        s.two_photon_saturated = true;
    }
    s.single_photon_coherence_length = delay_to_length(s.single_photon_coherence_time);
    s.two_photon_coherence_length = delay_to_length(s.two_photon_coherence_time);
    return s;
}

double calibrate_gvd_factor(const PumpSpec& pump, const FilterSpec& signal_filter,
                            const FilterSpec& idler_filter, const FrequencyGrid& grid,
                            double target_length, double min_factor, double max_factor) {
    auto length_at = [&](double factor) {
        JsaOptions opts;
        opts.gvd_broadening_factor = factor;
        return summarize(make_jsa(pump, signal_filter, idler_filter, opts, grid)).two_photon_coherence_length;
    };
    if (!(min_factor > 0.0) || !(max_factor > min_factor)) throw std::invalid_argument("invalid broadening factor bracket");
    double lo = min_factor, hi = max_factor;
    if (length_at(lo) > target_length) throw std::invalid_argument("target two-photon length needs a smaller broadening factor");
    if (length_at(hi) < target_length) throw std::invalid_argument("target two-photon length needs a larger broadening factor");
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (length_at(mid) < target_length ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace twinfringe::spectral
