#pragma once

#include "twinfringe/common.hpp"

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <vector>

namespace twinfringe::spectral {

/// Uniform angular-frequency grid with trapezoidal weights.
///
/// Points are stored as offsets from the centre so that phase factors
/// e^{i tau omega} can be split into a carrier e^{i tau omega_c} and a
/// well-conditioned residual.
struct FrequencyGrid {
    double center = 0.0;     // rad/s
    double half_span = 0.0;  // rad/s
    std::vector<double> offsets;
    std::vector<double> weights;

    std::size_t size() const { return offsets.size(); }
    double point(std::size_t i) const { return center + offsets[i]; }
    double spacing() const { return 2.0 * half_span / static_cast<double>(size() - 1); }
    /// Delay period of the discrete Fourier kernels; delays beyond half of
    /// this alias back into range.
    double alias_period() const { return kTwoPi / spacing(); }
};

/// Builds a grid of `n_points` centred on 2 pi c / center_wavelength that
/// spans `span_wavelength` (converted to angular frequency at the centre).
/// Throws std::invalid_argument for n_points < 16 or a non-positive span.
FrequencyGrid build_grid(double center_wavelength, double span_wavelength, std::size_t n_points);

/// Grid with an explicit angular centre and half span.
FrequencyGrid build_grid_angular(double center, double half_span, std::size_t n_points);

/// Trapezoidal integral of samples f[i] over the grid.
double integrate(const FrequencyGrid& grid, const std::vector<double>& samples);

struct PumpSpec {
    double center_wavelength = 775e-9;     // m
    double pulse_duration_fwhm = 3.5e-12;  // s, intensity FWHM
    double repetition_rate = 20e6;         // Hz
    double average_power = 20e-3;          // W, informational

    void validate() const;
};

enum class FilterShape { rectangular, gaussian };

/// Bandpass filter. bandwidth_fwhm is the FWHM of the power transmission.
struct FilterSpec {
    FilterShape shape = FilterShape::rectangular;
    double center_wavelength = 1550e-9;  // m
    double bandwidth_fwhm = 6.25e-9;     // m

    void validate() const;
    double center_angular() const;
    double bandwidth_angular() const;
    /// Amplitude transmission at angular frequency omega. Rectangular
    /// filters are averaged over the grid cell [omega - cell/2, omega + cell/2]
    /// when cell > 0, which keeps the discrete passband width exact.
    double amplitude(double omega, double cell = 0.0) const;

    bool operator==(const FilterSpec&) const = default;
};

struct JointSpectralAmplitude {
    FrequencyGrid grid;
    Eigen::MatrixXcd amplitude;  // rows: omega_1, columns: omega_2
    bool is_symmetric = false;

    /// Sum over the grid of w_j w_k |Phi_jk|^2.
    double norm_squared() const;
    /// Largest |Phi(w1,w2) - Phi(w2,w1)|.
    double symmetry_residual() const;
};

/// Scales the amplitude so that the weighted L2 norm is one.
void normalize(JointSpectralAmplitude& jsa);

struct JsaOptions {
    /// FWHM of the Gaussian phase-matching factor in (omega_1 - omega_2);
    /// <= 0 selects ten times the widest filter bandwidth.
    double phase_matching_bandwidth = 0.0;
    /// Multiplies the transform-limited two-photon coherence length (> 0).
    /// Values below one stand for an effective pump bandwidth wider than the
    /// transform limit of pulse_duration_fwhm.
    double gvd_broadening_factor = 1.0;
};

/// Phi = pump(w1 + w2) * phase_matching(w1 - w2) * F1(w1) * F2(w2), normalised.
JointSpectralAmplitude make_jsa(const PumpSpec& pump, const FilterSpec& signal_filter,
                                const FilterSpec& idler_filter, const JsaOptions& options,
                                const FrequencyGrid& grid);

/// N [Phi(w1,w2) + Phi(w2,w1)], renormalised. Throws if the sum vanishes.
JointSpectralAmplitude symmetrize(const JointSpectralAmplitude& jsa);

/// Resamples onto a coarser grid over the same span (bilinear in amplitude)
/// and renormalises.
JointSpectralAmplitude resample(const JointSpectralAmplitude& jsa, std::size_t n_points);

struct SpectralSummary {
    double single_photon_coherence_length = 0.0;  // m, FWHM of |<e^{i dt (w1-w2)}>|
    double two_photon_coherence_length = 0.0;     // m, FWHM of |<e^{i t (w1+w2)}>|
    double single_photon_coherence_time = 0.0;    // s
    double two_photon_coherence_time = 0.0;       // s
    bool single_photon_saturated = false;  // no half-maximum crossing inside the alias range
    bool two_photon_saturated = false;
};

SpectralSummary summarize(const JointSpectralAmplitude& jsa);

/// Distribution of |Phi|^2 along w1 + w2 (index s = j + k) and along
/// w1 - w2 (index d = j - k + n - 1), each of length 2n - 1.
struct Marginals {
    std::vector<double> sum;
    std::vector<double> difference;
};
Marginals marginals(const JointSpectralAmplitude& jsa);

/// |sum_s m_s e^{i tau s h}| for a lattice marginal with spacing h.
double marginal_magnitude(const std::vector<double>& marginal, double spacing, double tau);

/// Finds the gvd_broadening_factor for which the two-photon coherence
/// length equals `target_length`. Bisection in [min_factor, max_factor].
double calibrate_gvd_factor(const PumpSpec& pump, const FilterSpec& signal_filter,
                            const FilterSpec& idler_filter, const FrequencyGrid& grid,
                            double target_length, double min_factor = 0.1, double max_factor = 4.0);

}  // namespace twinfringe::spectral
