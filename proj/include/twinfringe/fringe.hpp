#pragma once

#include "twinfringe/spectral.hpp"

#include <json.hpp>

#include <Eigen/Dense>

#include <atomic>
#include <complex>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace twinfringe::fringe {

using Complex = std::complex<double>;

struct DelayConfig {
    double delta_x1 = 0.0;      // m, input-stage delay (tau1 on path 2)
    double delta_x2 = 0.0;      // m, scan delay (tau2 on path 4)
    double phase_offset = 0.0;  // rad, extra single-photon phase on path 4

    double tau1() const { return length_to_delay(delta_x1); }
    double tau2() const { return length_to_delay(delta_x2); }
    void validate() const;
};

enum class EnvelopeShape { sinc, gaussian };

/// Rate model N0 {2 + V [r f(x) + g(x) cos(2 pi x / lambda_p)]}. r = 1 is the
/// standard superposition of TSSA and TSSB fringes; fit_envelope frees it.
/// sinc(u) = sin(pi u) / (pi u), so sigma_s is the first zero of f.
struct EnvelopeModel {
    double n0 = 0.25;
    double visibility = 1.0;
    double lambda_p = 775e-9;  // m
    double sigma_s = 0.0;      // m
    double sigma_t = 0.0;      // m
    EnvelopeShape f_shape = EnvelopeShape::sinc;
    EnvelopeShape g_shape = EnvelopeShape::gaussian;
    double f_weight = 1.0;

    void validate() const;
    double f(double delta_x2) const;
    double g(double delta_x2) const;
};

/// Half maximum of sinc(u) = sin(pi u)/(pi u) is at u = 0.603355.
inline constexpr double kSincHalfMaximum = 0.6033545644;
/// FWHM / sigma for a Gaussian: 2 sqrt(2 ln 2).
inline constexpr double kGaussianFwhmPerSigma = 2.3548200450309493;

/// sigma_s and sigma_t chosen so that f and g have the FWHMs reported by
/// `summary`; lambda_p is the carrier wavelength of the NOON fringe.
EnvelopeModel envelope_model(const spectral::SpectralSummary& summary, double lambda_p);

double envelope_probability(const EnvelopeModel& model, double delta_x2);

/// Quadrature of the two-delay coincidence kernels. Keeps the weighted densities
/// W1 = w w |Phi|^2 and W2 = w w Phi*(w2,w1) Phi(w1,w2). Kernels in a single
/// combination (w1 - w2 or w1 + w2) use lattice marginals of W, O(n); the
/// mixed tau1/tau2 kernel is a bilinear form over 1-D phase vectors, O(n^2).
class CoincidenceEvaluator {
public:
    explicit CoincidenceEvaluator(spectral::JointSpectralAmplitude jsa);
    CoincidenceEvaluator(const CoincidenceEvaluator& other);

    /// General two-delay coincidence probability. Throws NumericalError when
    /// a Hermitian kernel has an imaginary residue above 1e-6.
    double full(const DelayConfig& delays) const;
    /// tau1 = 0 limit: 1/2 {1 + Re sum |Phi|^2 e^{i tau2 (w1+w2)}}.
    double noon(double tau2) const;
    /// Centre of a well-separated scan. With phase_averaged the
    /// (w1+w2) carrier term is dropped.
    double center(double delta_tau, bool phase_averaged = false) const;
    /// Side dip: 1/2 {1 - 1/4 Re sum |Phi|^2 e^{-i dtau (w1-w2)}}.
    double side(double delta_tau) const;
    /// Single-beamsplitter HOM: 1/2 {1 - Re sum Phi*(w2,w1) Phi(w1,w2) e^{-i dtau (w1-w2)}}.
    double hom(double delta_tau) const;
    /// Mean of full() over phase offsets `phases` (delays.phase_offset is
    /// added to each). The kernels do not depend on the phase, so they are
    /// evaluated once.
    double full_phase_average(const DelayConfig& delays, const std::vector<double>& phases) const;

    const spectral::JointSpectralAmplitude& jsa() const { return jsa_; }
    /// Largest imaginary residue seen by full() so far.
    double max_imaginary_residue() const { return max_residue_.load(); }

private:
    // sum_jk W_jk e^{i (alpha w_j + beta w_k)} with absolute frequencies.
    Complex form(const Eigen::MatrixXcd& w, double alpha, double beta) const;
    // sum_jk W_jk e^{i tau (w_j - w_k)} from the difference marginal.
    Complex difference_kernel(const std::vector<Complex>& marginal, double tau) const;
    // sum_jk W_jk e^{i tau (w_j + w_k)} from the sum marginal.
    Complex sum_kernel(const std::vector<Complex>& marginal, double tau) const;
    void check_alias(double tau) const;
    struct Kernels {
        Complex k1, k2, k3, k4, k5;
    };
    Kernels kernels(const DelayConfig& delays) const;
    static double combine(const Kernels& k, Complex carrier_mean);

    spectral::JointSpectralAmplitude jsa_;
    Eigen::MatrixXcd w1_;
    Eigen::MatrixXcd w2_;
    std::vector<Complex> w1_difference_;  // index j - k + n - 1
    std::vector<Complex> w1_sum_;         // index j + k
    std::vector<Complex> w2_difference_;
    std::vector<Complex> w2_sum_;
    mutable std::atomic<double> max_residue_{0.0};
    mutable std::atomic<bool> alias_warned_{false};
};

double coincidence_full(const spectral::JointSpectralAmplitude& jsa, const DelayConfig& delays);
double coincidence_noon(const spectral::JointSpectralAmplitude& jsa, double tau2);
double coincidence_center(const spectral::JointSpectralAmplitude& jsa, double delta_tau, bool phase_averaged = false);
double coincidence_side(const spectral::JointSpectralAmplitude& jsa, double delta_tau);
double coincidence_hom(const spectral::JointSpectralAmplitude& jsa, double delta_tau);

struct InterferogramMetadata {
    std::string scenario;
    std::uint64_t seed = 0;
    double integration_time = 0.0;  // s per point
    nlohmann::json params = nlohmann::json::object();
    nlohmann::json processing = nlohmann::json::array();
};

struct Interferogram {
    std::vector<double> delta_x2;     // m
    std::vector<double> probability;  // in [0, 1]
    std::optional<std::vector<std::int64_t>> counts;
    InterferogramMetadata metadata;

    std::size_t size() const { return delta_x2.size(); }
    void validate() const;
};

enum class ScanMode { full, noon, center, side, envelope, hom };

std::string to_string(ScanMode mode);
ScanMode scan_mode_from_string(const std::string& name);

/// Scan points lo, lo + step, ... up to hi (inclusive within 1e-9 step).
std::vector<double> scan_points(double lo, double hi, double step);

struct ScanRequest {
    double delta_x1 = 0.0;  // m
    double lo = -3e-3;      // m
    double hi = 3e-3;       // m
    double step = 1e-6;     // m
    double phase_offset = 0.0;
    ScanMode mode = ScanMode::full;
    unsigned threads = 0;
};

/// Evaluates the selected model at every scan point. noon and center use
/// delta_x2 as the delay, side uses delta_x2 - delta_x1, hom the relative
/// delay delta_x2, envelope the model derived from summarize(jsa). Points
/// are independent, so the output does not depend on `threads`.
Interferogram scan(const CoincidenceEvaluator& evaluator, const ScanRequest& request);
Interferogram scan(const spectral::JointSpectralAmplitude& jsa, const ScanRequest& request);

/// Carrier wavelength of the (w1 + w2) kernel: pi c / grid centre.
double carrier_wavelength(const spectral::JointSpectralAmplitude& jsa);

// CSV: '#'-prefixed metadata lines, then `delta_x2_m,probability,counts`.
// Numbers use %.17g so write -> read -> write is byte-identical.
void write_csv(std::ostream& out, const Interferogram& data);
Interferogram read_csv(std::istream& in);
nlohmann::json to_json(const Interferogram& data);
Interferogram from_json(const nlohmann::json& doc);

void save_csv(const std::string& path, const Interferogram& data);
Interferogram load_csv(const std::string& path);

}  // namespace twinfringe::fringe
