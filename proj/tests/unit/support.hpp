#pragma once

#include "twinfringe/spectral.hpp"

#include <complex>
#include <functional>
#include <string>
#include <vector>

namespace testsupport {

using twinfringe::spectral::FilterShape;
using twinfringe::spectral::FilterSpec;
using twinfringe::spectral::FrequencyGrid;
using twinfringe::spectral::JointSpectralAmplitude;
using twinfringe::spectral::JsaOptions;
using twinfringe::spectral::PumpSpec;

inline FilterSpec rect_filter(double center = 1550e-9, double width = 6.25e-9) {
    return {FilterShape::rectangular, center, width};
}

inline FilterSpec cwdm_filter(double center) { return {FilterShape::gaussian, center, 18e-9}; }

inline JointSpectralAmplitude degenerate_source(std::size_t n = 256, double span = 50e-9, double gvd = 1.0) {
    JsaOptions opts;
    opts.gvd_broadening_factor = gvd;
    return twinfringe::spectral::make_jsa(PumpSpec{}, rect_filter(), rect_filter(), opts,
                                          twinfringe::spectral::build_grid(1550e-9, span, n));
}

inline JointSpectralAmplitude nondegenerate_product(std::size_t n = 512, double span = 120e-9) {
    return twinfringe::spectral::make_jsa(PumpSpec{}, cwdm_filter(1530e-9), cwdm_filter(1570e-9), JsaOptions{},
                                          twinfringe::spectral::build_grid(1550e-9, span, n));
}

/// Brute-force sum_jk w_j w_k g_jk e^{i(a w_j + b w_k)} with absolute
/// frequencies, written without any separable factorisation.
inline std::complex<double> brute_kernel(const JointSpectralAmplitude& jsa,
                                         const std::function<std::complex<double>(std::size_t, std::size_t)>& weight,
                                         double a, double b) {
    const auto& g = jsa.grid;
    std::complex<double> total = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
        for (std::size_t k = 0; k < g.size(); ++k) {
            const double phase = a * g.point(j) + b * g.point(k);
            total += g.weights[j] * g.weights[k] * weight(j, k) * std::polar(1.0, phase);
        }
    }
    return total;
}

inline std::function<std::complex<double>(std::size_t, std::size_t)> density(const JointSpectralAmplitude& jsa) {
    return [&jsa](std::size_t j, std::size_t k) {
        return std::complex<double>(std::norm(jsa.amplitude(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k))));
    };
}

/// Captures warnings for the lifetime of the object.
class WarningCapture {
public:
    WarningCapture();
    ~WarningCapture();
    const std::vector<std::string>& messages() const { return messages_; }

private:
    std::vector<std::string> messages_;
    twinfringe::WarningHandler previous_;
};

inline WarningCapture::WarningCapture()
    : previous_(twinfringe::set_warning_handler([this](const std::string& m) { messages_.push_back(m); })) {}

inline WarningCapture::~WarningCapture() { twinfringe::set_warning_handler(previous_); }

}  // namespace testsupport
