#pragma once

#include "twinfringe/fringe.hpp"

#include <json.hpp>

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace twinfringe::fit {

using Model = std::function<double(double x, const Eigen::VectorXd& params)>;

struct LmOptions {
    int max_iterations = 200;
    double tolerance = 1e-12;  // relative change in chi^2 and step
    double initial_lambda = 1e-3;
};

struct LmResult {
    Eigen::VectorXd params;
    Eigen::MatrixXd covariance;  // scaled by the reduced chi^2
    double chi2 = 0.0;
    double condition = 0.0;      // of the weighted normal matrix
    int iterations = 0;
    bool converged = false;
};

/// Weighted least squares by Levenberg-Marquardt with a central-difference
/// Jacobian. `scale` sets the finite-difference step per parameter.
LmResult levenberg_marquardt(const Model& model, const std::vector<double>& x, const std::vector<double>& y,
                             const std::vector<double>& weights, const Eigen::VectorXd& initial,
                             const Eigen::VectorXd& scale, const LmOptions& options = {});

enum class Weighting { uniform, poisson };

/// weights 1 or 1 / max(y, 1).
std::vector<double> make_weights(const std::vector<double>& y, Weighting weighting);

struct FringeFit {
    std::string model;
    std::vector<std::string> names;
    std::vector<double> params;
    std::vector<double> stderrs;
    double residual_rms = 0.0;
    std::size_t n_points = 0;
    std::vector<std::string> flags;

    double value(const std::string& name) const;
    double error(const std::string& name) const;
    nlohmann::json to_json() const;
};

/// a + b cos(2 pi x / period + theta), b >= 0. The period is found by a scan
/// of linear least-squares fits over [period_min, period_max] (defaults: four
/// sample spacings to half the span), then refined with three starting
/// phases. Adds visibility = b / a with a delta-method error.
FringeFit fit_sinusoid(const std::vector<double>& x, const std::vector<double>& y,
                       Weighting weighting = Weighting::uniform, double period_min = 0.0, double period_max = 0.0);

/// a + s f((x - x0) / w) with f = sinc or Gaussian; s < 0 is a dip, s > 0 a
/// peak, chosen from the data. Adds fwhm and visibility = |s| / a.
FringeFit fit_dip_or_peak(const std::vector<double>& x, const std::vector<double>& y,
                          fringe::EnvelopeShape shape, Weighting weighting = Weighting::uniform);

/// Envelope rate model with lambda_p fixed; free n0, visibility, sigma_s,
/// sigma_t and f_weight. Flags ill_conditioned when the normal matrix is
/// near singular or an error exceeds its parameter.
FringeFit fit_envelope(const std::vector<double>& x, const std::vector<double>& y, const fringe::EnvelopeModel& start,
                       Weighting weighting = Weighting::uniform);

/// counts - accidentals per point.
std::vector<double> subtract_accidentals(const std::vector<std::int64_t>& counts, double accidentals_per_point);

/// Counts as doubles when present, else probabilities.
std::vector<double> observed(const fringe::Interferogram& data);

}  // namespace twinfringe::fit
