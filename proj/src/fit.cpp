#include "twinfringe/fit.hpp"

#include "twinfringe/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace twinfringe::fit {

namespace {

void check_inputs(const std::vector<double>& x, const std::vector<double>& y, std::size_t n_params) {
    if (x.size() != y.size()) throw std::invalid_argument("fit needs x and y of equal length");
    if (x.size() <= n_params) throw std::invalid_argument("fit needs more points than parameters");
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw std::invalid_argument("fit input contains non-finite values");
    }
}

Eigen::VectorXd residuals(const Model& model, const std::vector<double>& x, const std::vector<double>& y,
                          const std::vector<double>& sqrt_w, const Eigen::VectorXd& p) {
    Eigen::VectorXd r(static_cast<Eigen::Index>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) r(static_cast<Eigen::Index>(i)) = sqrt_w[i] * (y[i] - model(x[i], p));
    return r;
}

Eigen::MatrixXd jacobian(const Model& model, const std::vector<double>& x, const std::vector<double>& sqrt_w,
                         const Eigen::VectorXd& p, const Eigen::VectorXd& scale) {
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::MatrixXd j(n, p.size());
    for (Eigen::Index k = 0; k < p.size(); ++k) {
        const double h = 1e-6 * std::max(std::abs(p(k)), scale(k));
        Eigen::VectorXd up = p;
        Eigen::VectorXd down = p;
        up(k) += h;
        down(k) -= h;
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto ii = static_cast<std::size_t>(i);
            j(i, k) = sqrt_w[ii] * (model(x[ii], up) - model(x[ii], down)) / (2.0 * h);
        }
    }
    return j;
}

double median(std::vector<double> v) {
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
}

FringeFit package(const std::string& name, std::vector<std::string> names, const LmResult& lm,
                  const Model& model, const std::vector<double>& x, const std::vector<double>& y) {
    FringeFit out;
    out.model = name;
    out.names = std::move(names);
    out.n_points = x.size();
    for (Eigen::Index k = 0; k < lm.params.size(); ++k) {
        out.params.push_back(lm.params(k));
        out.stderrs.push_back(std::sqrt(std::max(0.0, lm.covariance(k, k))));
    }
    double ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - model(x[i], lm.params);
        ss += r * r;
    }
    out.residual_rms = std::sqrt(ss / static_cast<double>(x.size()));
    if (!lm.converged) out.flags.push_back("not_converged");
    return out;
}

// Appends f(params) with the delta-method error grad^T C grad.
void add_derived(FringeFit& fit, const LmResult& lm, const std::string& name,
                 const std::function<double(const Eigen::VectorXd&)>& f) {
    const double value = f(lm.params);
    Eigen::VectorXd grad(lm.params.size());
    for (Eigen::Index k = 0; k < lm.params.size(); ++k) {
        const double h = 1e-7 * std::max(std::abs(lm.params(k)), 1e-300);
        Eigen::VectorXd up = lm.params;
        Eigen::VectorXd down = lm.params;
        up(k) += h;
        down(k) -= h;
        grad(k) = (f(up) - f(down)) / (2.0 * h);
    }
    fit.names.push_back(name);
    fit.params.push_back(value);
    fit.stderrs.push_back(std::sqrt(std::max(0.0, grad.dot(lm.covariance * grad))));
}

double sinc_pi(double u) {
    if (std::abs(u) < 1e-8) return 1.0 - (std::numbers::pi * u) * (std::numbers::pi * u) / 6.0;
    return std::sin(std::numbers::pi * u) / (std::numbers::pi * u);
}

}  // namespace

LmResult levenberg_marquardt(const Model& model, const std::vector<double>& x, const std::vector<double>& y,
                             const std::vector<double>& weights, const Eigen::VectorXd& initial,
                             const Eigen::VectorXd& scale, const LmOptions& options) {
    check_inputs(x, y, static_cast<std::size_t>(initial.size()));
    if (weights.size() != x.size()) throw std::invalid_argument("fit weights must match the data length");
    std::vector<double> sqrt_w(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (!(weights[i] > 0.0)) throw std::invalid_argument("fit weights must be positive");
        sqrt_w[i] = std::sqrt(weights[i]);
    }

    LmResult out;
    Eigen::VectorXd p = initial;
    Eigen::VectorXd r = residuals(model, x, y, sqrt_w, p);
    double chi2 = r.squaredNorm();
    double lambda = options.initial_lambda;
    for (out.iterations = 0; out.iterations < options.max_iterations; ++out.iterations) {
        const Eigen::MatrixXd j = jacobian(model, x, sqrt_w, p, scale);
        const Eigen::MatrixXd a = j.transpose() * j;
        const Eigen::VectorXd g = j.transpose() * r;
        bool improved = false;
        while (lambda < 1e16) {
            Eigen::MatrixXd damped = a;
            for (Eigen::Index k = 0; k < a.rows(); ++k) damped(k, k) += lambda * std::max(a(k, k), 1e-300);
            const Eigen::VectorXd step = damped.ldlt().solve(g);
            const Eigen::VectorXd trial = p + step;
            const Eigen::VectorXd r_trial = residuals(model, x, y, sqrt_w, trial);
            const double chi2_trial = r_trial.squaredNorm();
            if (std::isfinite(chi2_trial) && chi2_trial <= chi2) {
                const double drop = chi2 - chi2_trial;
                const bool small_step = step.norm() <= options.tolerance * (p.norm() + options.tolerance);
                p = trial;
                r = r_trial;
                const bool small_drop = drop <= options.tolerance * std::max(chi2, 1e-300);
                chi2 = chi2_trial;
                lambda = std::max(lambda / 10.0, 1e-12);
                improved = true;
                if (small_drop || small_step) out.converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if (!improved) {
            out.converged = true;
            break;
        }
        if (out.converged) break;
    }

    const Eigen::MatrixXd j = jacobian(model, x, sqrt_w, p, scale);
    const Eigen::MatrixXd a = j.transpose() * j;
    // Column-equilibrated condition number, insensitive to parameter units.
    Eigen::VectorXd d = a.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd normalized = d.asDiagonal() * a * d.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(normalized);
    const double lo = eig.eigenvalues().minCoeff();
    out.condition = lo > 0.0 ? eig.eigenvalues().maxCoeff() / lo : std::numeric_limits<double>::infinity();
    const double dof = static_cast<double>(x.size()) - static_cast<double>(p.size());
    out.covariance = d.asDiagonal() * normalized.completeOrthogonalDecomposition().pseudoInverse() * d.asDiagonal();
    out.covariance *= chi2 / dof;
    out.params = p;
    out.chi2 = chi2;
    return out;
}

std::vector<double> make_weights(const std::vector<double>& y, Weighting weighting) {
    std::vector<double> w(y.size(), 1.0);
    if (weighting == Weighting::poisson) {
        for (std::size_t i = 0; i < y.size(); ++i) w[i] = 1.0 / std::max(y[i], 1.0);
    }
    return w;
}

double FringeFit::value(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw std::out_of_range("fit has no parameter '" + name + "'");
    return params[static_cast<std::size_t>(it - names.begin())];
}

double FringeFit::error(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw std::out_of_range("fit has no parameter '" + name + "'");
    return stderrs[static_cast<std::size_t>(it - names.begin())];
}

nlohmann::json FringeFit::to_json() const {
    nlohmann::json p = nlohmann::json::object();
    nlohmann::json e = nlohmann::json::object();
    for (std::size_t k = 0; k < names.size(); ++k) {
        p[names[k]] = params[k];
        e[names[k]] = stderrs[k];
    }
    return {{"model", model}, {"params", p}, {"stderrs", e}, {"residual_rms", residual_rms},
            {"n_points", n_points}, {"flags", flags}};
}

FringeFit fit_sinusoid(const std::vector<double>& x, const std::vector<double>& y, Weighting weighting,
                       double period_min, double period_max) {
    check_inputs(x, y, 4);
    const auto [xmin_it, xmax_it] = std::minmax_element(x.begin(), x.end());
    const double span = *xmax_it - *xmin_it;
    if (!(span > 0.0)) throw std::invalid_argument("fit needs distinct x values");
    const double spacing = span / static_cast<double>(x.size() - 1);
    if (period_min <= 0.0) period_min = 4.0 * spacing;
    if (period_max <= 0.0) period_max = 0.5 * span;
    if (!(period_max > period_min)) throw std::invalid_argument("sinusoid period range is empty");
    const auto w = make_weights(y, weighting);

    // Linear least squares for fixed period: y = a + c cos + s sin.
    auto linear = [&](double period, Eigen::Vector3d& coef) {
        Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
        Eigen::Vector3d v = Eigen::Vector3d::Zero();
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double ph = kTwoPi * x[i] / period;
            const Eigen::Vector3d b(1.0, std::cos(ph), std::sin(ph));
            m += w[i] * b * b.transpose();
            v += w[i] * y[i] * b;
        }
        coef = m.ldlt().solve(v);
        double chi2 = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double ph = kTwoPi * x[i] / period;
            const double r = y[i] - coef(0) - coef(1) * std::cos(ph) - coef(2) * std::sin(ph);
            chi2 += w[i] * r * r;
        }
        return chi2;
    };

    // Frequency spacing fine enough that the phase drifts < 0.1 rad across the span.
    const double f_lo = 1.0 / period_max;
    const double f_hi = 1.0 / period_min;
    const double df = 0.1 / (kTwoPi * span);
    const auto n_scan = static_cast<std::size_t>(std::min(2e5, std::ceil((f_hi - f_lo) / df))) + 1;
    double best_period = period_max;
    double best_chi2 = std::numeric_limits<double>::infinity();
    Eigen::Vector3d best_coef = Eigen::Vector3d::Zero();
    for (std::size_t k = 0; k < n_scan; ++k) {
        const double f = f_lo + (f_hi - f_lo) * static_cast<double>(k) / static_cast<double>(std::max<std::size_t>(n_scan - 1, 1));
        Eigen::Vector3d coef;
        const double chi2 = linear(1.0 / f, coef);
        if (chi2 < best_chi2) {
            best_chi2 = chi2;
            best_period = 1.0 / f;
            best_coef = coef;
        }
    }

    const Model model = [](double xv, const Eigen::VectorXd& p) {
        return p(0) + p(1) * std::cos(kTwoPi * xv / p(2) + p(3));
    };
    const double amp = std::hypot(best_coef(1), best_coef(2));
    const double theta0 = std::atan2(-best_coef(2), best_coef(1));
    const double yscale = std::max(std::abs(best_coef(0)), 1e-300);
    Eigen::VectorXd scale(4);
    scale << yscale, yscale, best_period, 1.0;
    LmResult best;
    best.chi2 = std::numeric_limits<double>::infinity();
    for (double shift : {0.0, kTwoPi / 3.0, -kTwoPi / 3.0}) {
        Eigen::VectorXd start(4);
        start << best_coef(0), amp, best_period, theta0 + shift;
        const auto lm = levenberg_marquardt(model, x, y, w, start, scale);
        if (lm.chi2 < best.chi2) best = lm;
    }
    if (best.params(1) < 0.0) {
        best.params(1) = -best.params(1);
        best.params(3) += std::numbers::pi;
    }
    best.params(3) = std::remainder(best.params(3), kTwoPi);

    auto out = package("sinusoid", {"offset", "amplitude", "period", "phase"}, best, model, x, y);
    add_derived(out, best, "visibility", [](const Eigen::VectorXd& p) { return std::abs(p(1)) / p(0); });
    return out;
}

FringeFit fit_dip_or_peak(const std::vector<double>& x, const std::vector<double>& y, fringe::EnvelopeShape shape,
                          Weighting weighting) {
    check_inputs(x, y, 4);
    const auto w = make_weights(y, weighting);
    const std::size_t edge = std::max<std::size_t>(x.size() / 10, 1);
    std::vector<double> edges(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(edge));
    edges.insert(edges.end(), y.end() - static_cast<std::ptrdiff_t>(edge), y.end());
    const double base = median(edges);

    std::size_t extreme = 0;
    for (std::size_t i = 1; i < y.size(); ++i) {
        if (std::abs(y[i] - base) > std::abs(y[extreme] - base)) extreme = i;
    }
    const double depth = y[extreme] - base;
    std::size_t left = extreme;
    std::size_t right = extreme;
    while (left > 0 && std::abs(y[left] - base) > 0.5 * std::abs(depth)) --left;
    while (right + 1 < y.size() && std::abs(y[right] - base) > 0.5 * std::abs(depth)) ++right;
    const double fwhm0 = std::max(std::abs(x[right] - x[left]), std::abs(x[1] - x[0]));
    const double per_width = shape == fringe::EnvelopeShape::sinc ? 2.0 * fringe::kSincHalfMaximum : fringe::kGaussianFwhmPerSigma;

    const Model model = [shape](double xv, const Eigen::VectorXd& p) {
        const double u = (xv - p(2)) / p(3);
        const double f = shape == fringe::EnvelopeShape::sinc ? sinc_pi(u) : std::exp(-0.5 * u * u);
        return p(0) + p(1) * f;
    };
    Eigen::VectorXd start(4);
    start << base, depth, x[extreme], fwhm0 / per_width;
    const double yscale = std::max(std::abs(base), std::abs(depth));
    Eigen::VectorXd scale(4);
    scale << yscale, yscale, fwhm0, fwhm0;
    auto lm = levenberg_marquardt(model, x, y, w, start, scale);
    lm.params(3) = std::abs(lm.params(3));

    auto out = package(shape == fringe::EnvelopeShape::sinc ? "sinc" : "gaussian",
                       {"offset", "amplitude", "center", "width"}, lm, model, x, y);
    out.flags.push_back(lm.params(1) < 0.0 ? "dip" : "peak");
    add_derived(out, lm, "fwhm", [per_width](const Eigen::VectorXd& p) { return per_width * std::abs(p(3)); });
    add_derived(out, lm, "visibility", [](const Eigen::VectorXd& p) { return std::abs(p(1)) / p(0); });
    return out;
}

FringeFit fit_envelope(const std::vector<double>& x, const std::vector<double>& y, const fringe::EnvelopeModel& start,
                       Weighting weighting) {
    check_inputs(x, y, 5);
    start.validate();
    const auto w = make_weights(y, weighting);
    const Model model = [start](double xv, const Eigen::VectorXd& p) {
        fringe::EnvelopeModel m = start;
        m.n0 = p(0);
        m.visibility = p(1);
        m.sigma_s = std::abs(p(2));
        m.sigma_t = std::abs(p(3));
        m.f_weight = p(4);
        return fringe::envelope_probability(m, xv);
    };
    Eigen::VectorXd p0(5);
    p0 << start.n0, start.visibility, start.sigma_s, start.sigma_t, start.f_weight;
    Eigen::VectorXd scale(5);
    scale << std::abs(start.n0), 1.0, start.sigma_s, start.sigma_t, 1.0;
    auto lm = levenberg_marquardt(model, x, y, w, p0, scale);
    lm.params(2) = std::abs(lm.params(2));
    lm.params(3) = std::abs(lm.params(3));

    auto out = package("envelope", {"n0", "visibility", "sigma_s", "sigma_t", "f_weight"}, lm, model, x, y);
    bool ill = !(lm.condition < 1e10);
    for (std::size_t k = 0; k < out.params.size(); ++k) {
        if (!(out.stderrs[k] < std::abs(out.params[k]))) ill = true;
    }
    if (ill) out.flags.push_back("ill_conditioned");
    const double lambda_p = start.lambda_p;
    out.names.push_back("lambda_p");
    out.params.push_back(lambda_p);
    out.stderrs.push_back(0.0);
    return out;
}

std::vector<double> subtract_accidentals(const std::vector<std::int64_t>& counts, double accidentals_per_point) {
    if (!(accidentals_per_point >= 0.0)) throw std::invalid_argument("accidentals must be non-negative");
    std::vector<double> out(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) out[i] = static_cast<double>(counts[i]) - accidentals_per_point;
    return out;
}

std::vector<double> observed(const fringe::Interferogram& data) {
    if (data.counts) return {data.counts->begin(), data.counts->end()};
    return data.probability;
}

}  // namespace twinfringe::fit
