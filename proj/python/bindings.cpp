#include "twinfringe/fit.hpp"
#include "twinfringe/fringe.hpp"
#include "twinfringe/lab.hpp"
#include "twinfringe/spectral.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace twinfringe;
using nlohmann::json;

namespace {

py::array_t<double> to_array(const std::vector<double>& v) { return py::array_t<double>(v.size(), v.data()); }

std::vector<double> to_vector(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 1) throw std::invalid_argument("expected a one-dimensional array");
    return {a.data(), a.data() + a.shape(0)};
}

py::dict result_dict(const lab::ScenarioResult& r) {
    py::dict d;
    d["delta_x2"] = to_array(r.data.delta_x2);
    d["probability"] = to_array(r.data.probability);
    if (r.data.counts) {
        py::array_t<std::int64_t> c(r.data.counts->size(), r.data.counts->data());
        d["counts"] = c;
    } else {
        d["counts"] = py::none();
    }
    d["config"] = r.config.dump();
    d["single_photon_coherence_length"] = r.summary.single_photon_coherence_length;
    d["two_photon_coherence_length"] = r.summary.two_photon_coherence_length;
    d["gvd_broadening_factor"] = r.gvd_broadening_factor;
    d["car"] = r.baseline.car;
    d["accidental_rate"] = r.baseline.accidentals;
    std::ostringstream csv;
    fringe::write_csv(csv, r.data);
    d["csv"] = csv.str();
    return d;
}

}  // namespace

PYBIND11_MODULE(_twinfringe, m) {
    m.doc() = "Two-photon interference simulator core";

    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

    m.def("scenario_names", &lab::scenario_names);
    m.def("scenario_description", &lab::scenario_description, py::arg("name"));
    m.def("default_config_json", [](const std::string& name) { return lab::default_config(name).dump(); }, py::arg("name"));
    m.def(
        "run_scenario_json",
        [](const std::string& name, const std::string& overrides, unsigned threads) {
            const auto r = lab::run_scenario(name, json::parse(overrides), threads);
            return result_dict(r);
        },
        py::arg("name"), py::arg("overrides") = "{}", py::arg("threads") = 0);

    py::class_<fringe::CoincidenceEvaluator>(m, "Evaluator")
        .def(py::init([](const std::string& config) {
                 return fringe::CoincidenceEvaluator(lab::build_source(lab::parse_config(json::parse(config))));
             }),
             py::arg("config_json"))
        .def("full",
             [](const fringe::CoincidenceEvaluator& e, double x1, double x2, double phase) { return e.full({x1, x2, phase}); },
             py::arg("delta_x1"), py::arg("delta_x2"), py::arg("phase_offset") = 0.0)
        .def("noon", [](const fringe::CoincidenceEvaluator& e, double x2) { return e.noon(length_to_delay(x2)); }, py::arg("delta_x2"))
        .def("side", [](const fringe::CoincidenceEvaluator& e, double dx) { return e.side(length_to_delay(dx)); }, py::arg("delta"))
        .def("hom", [](const fringe::CoincidenceEvaluator& e, double dx) { return e.hom(length_to_delay(dx)); }, py::arg("delta"))
        .def(
            "center",
            [](const fringe::CoincidenceEvaluator& e, double dx, bool averaged) { return e.center(length_to_delay(dx), averaged); },
            py::arg("delta_x2"), py::arg("phase_averaged") = false)
        .def_property_readonly("carrier_wavelength",
                               [](const fringe::CoincidenceEvaluator& e) { return fringe::carrier_wavelength(e.jsa()); });

    m.def(
        "expected_counts",
        [](double p, double efficiency, double dead_time, double pair_probability, double repetition_rate) {
            lab::DetectorSpec det;
            det.efficiency = efficiency;
            det.dead_time = dead_time;
            lab::SourceRateSpec src;
            src.pair_probability_per_pulse = pair_probability;
            src.repetition_rate = repetition_rate;
            const auto c = lab::expected_counts(p, det, src);
            py::dict d;
            d["coincidences"] = c.coincidences;
            d["accidentals"] = c.accidentals;
            d["true_coincidences"] = c.true_coincidences;
            d["singles"] = c.singles;
            d["dead_time_factor"] = c.dead_time_factor;
            d["car"] = c.car;
            return d;
        },
        py::arg("p"), py::arg("efficiency") = 0.15, py::arg("dead_time") = 10e-6, py::arg("pair_probability") = 0.24,
        py::arg("repetition_rate") = 20e6);

    m.def(
        "fit_json",
        [](const std::string& model, const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& y, bool poisson) {
            const auto xs = to_vector(x);
            const auto ys = to_vector(y);
            const auto w = poisson ? fit::Weighting::poisson : fit::Weighting::uniform;
            if (model == "sinusoid") return fit::fit_sinusoid(xs, ys, w).to_json().dump();
            if (model == "sinc") return fit::fit_dip_or_peak(xs, ys, fringe::EnvelopeShape::sinc, w).to_json().dump();
            if (model == "gaussian") return fit::fit_dip_or_peak(xs, ys, fringe::EnvelopeShape::gaussian, w).to_json().dump();
            throw InputError("model must be sinusoid, sinc or gaussian");
        },
        py::arg("model"), py::arg("x"), py::arg("y"), py::arg("poisson") = false);
}
