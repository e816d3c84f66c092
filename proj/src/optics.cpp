#include "twinfringe/optics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace twinfringe::optics {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kDropThreshold = 1e-15;

bool is_mzi_port(Port p) { return p >= Port::p1 && p <= Port::p6; }

char port_name(Port p) {
    switch (p) {
        case Port::T: return 'T';
        case Port::R: return 'R';
        case Port::In: return 'I';
        case Port::Out: return 'O';
        default: return static_cast<char>('0' + static_cast<int>(p));
    }
}

Eigen::MatrixXcd identity(std::size_t n) {
    return Eigen::MatrixXcd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
}

std::vector<ModeLabel> both_polarizations(Port port) {
    return {{port, Polarization::H}, {port, Polarization::V}};
}

}  // namespace

bool is_valid(const ModeLabel& mode) {
    if (is_mzi_port(mode.port)) return mode.polarization == Polarization::none;
    return mode.polarization == Polarization::H || mode.polarization == Polarization::V;
}

void require_valid(const ModeLabel& mode) {
    if (!is_valid(mode)) throw std::invalid_argument("invalid mode label " + to_string(mode));
}

std::string to_string(const ModeLabel& mode) {
    std::string s(1, port_name(mode.port));
    if (mode.polarization == Polarization::H) s += ":H";
    if (mode.polarization == Polarization::V) s += ":V";
    return s;
}

Complex Term::fock_amplitude() const { return a == b ? amplitude * std::sqrt(2.0) : amplitude; }

TwoPhotonState::TwoPhotonState(std::vector<Term> terms) : terms_(std::move(terms)) {
    for (const auto& t : terms_) {
        require_valid(t.a.mode);
        require_valid(t.b.mode);
    }
    canonicalize();
}

TwoPhotonState TwoPhotonState::product(const Photon& first, const Photon& second) {
    return TwoPhotonState({Term{1.0, first, second}});
}

void TwoPhotonState::canonicalize() {
    for (auto& t : terms_) {
        if (t.b < t.a) std::swap(t.a, t.b);
    }
    std::stable_sort(terms_.begin(), terms_.end(), [](const Term& x, const Term& y) {
        return std::tie(x.a, x.b) < std::tie(y.a, y.b);
    });
    std::vector<Term> merged;
    merged.reserve(terms_.size());
    for (const auto& t : terms_) {
        if (!merged.empty() && merged.back().a == t.a && merged.back().b == t.b) {
            merged.back().amplitude += t.amplitude;
        } else {
            merged.push_back(t);
        }
    }
    std::erase_if(merged, [](const Term& t) { return std::abs(t.amplitude) < kDropThreshold; });
    terms_ = std::move(merged);
}

double TwoPhotonState::norm_squared() const {
    double total = 0.0;
    for (const auto& t : terms_) total += std::norm(t.fock_amplitude());
    return total;
}

TwoPhotonState TwoPhotonState::normalized() const {
    const double n2 = norm_squared();
    if (!(n2 > 0.0)) throw std::invalid_argument("cannot normalise an empty two-photon state");
    TwoPhotonState out = *this;
    const double scale = 1.0 / std::sqrt(n2);
    for (auto& t : out.terms_) t.amplitude *= scale;
    return out;
}

Complex TwoPhotonState::amplitude_of(const Photon& a, const Photon& b) const {
    const Photon& lo = std::min(a, b);
    const Photon& hi = std::max(a, b);
    for (const auto& t : terms_) {
        if (t.a == lo && t.b == hi) return t.amplitude;
    }
    return 0.0;
}

bool TwoPhotonState::occupies(const ModeLabel& mode) const {
    return std::any_of(terms_.begin(), terms_.end(),
                       [&](const Term& t) { return t.a.mode == mode || t.b.mode == mode; });
}

double TwoPhotonState::distance_up_to_phase(const TwoPhotonState& other) const {
    Complex overlap = 0.0;
    for (const auto& t : terms_) overlap += t.amplitude * std::conj(other.amplitude_of(t.a, t.b));
    const Complex rotation = std::abs(overlap) > 0.0 ? overlap / std::abs(overlap) : Complex(1.0);
    double worst = 0.0;
    for (const auto& t : terms_) worst = std::max(worst, std::abs(t.amplitude - rotation * other.amplitude_of(t.a, t.b)));
    for (const auto& t : other.terms_) worst = std::max(worst, std::abs(amplitude_of(t.a, t.b) - rotation * t.amplitude));
    return worst;
}

// --- elements ---------------------------------------------------------------

Eigen::MatrixXcd ElementSpec::static_transfer() const {
    switch (kind) {
        case ElementKind::balanced_bs: {
            Eigen::MatrixXcd u(2, 2);
            const Complex t(kInvSqrt2, 0.0), r(0.0, kInvSqrt2);
            u << t, r, r, t;
            return u;
        }
        case ElementKind::pbs:
            return identity(2);
        case ElementKind::hwp: {
            Eigen::MatrixXcd u(2, 2);
            const double c = std::cos(2.0 * parameter), s = std::sin(2.0 * parameter);
            u << c, s, s, -c;
            return u;
        }
        case ElementKind::qwp: {
            Eigen::MatrixXcd u(2, 2);
            const double c = std::cos(parameter), s = std::sin(parameter);
            const Complex i(0.0, 1.0);
            u << c * c + i * s * s, (1.0 - i) * s * c, (1.0 - i) * s * c, s * s + i * c * c;
            return u;
        }
        case ElementKind::mirror:
            return -identity(inputs.size());
        case ElementKind::delay:
            return identity(1);
        case ElementKind::phase:
            return Eigen::MatrixXcd::Constant(1, 1, std::polar(1.0, parameter));
    }
    throw std::logic_error("unhandled element kind");
}

Eigen::MatrixXcd ElementSpec::transfer(double omega) const {
    if (kind == ElementKind::delay) return Eigen::MatrixXcd::Constant(1, 1, std::polar(1.0, omega * delay_seconds()));
    return static_transfer();
}

double ElementSpec::delay_seconds() const { return kind == ElementKind::delay ? length_to_delay(parameter) : 0.0; }

void ElementSpec::validate() const {
    if (inputs.empty() || inputs.size() != outputs.size()) throw std::invalid_argument("element needs matching input and output modes");
    for (const auto& m : inputs) require_valid(m);
    for (const auto& m : outputs) require_valid(m);
    const auto u = static_transfer();
    if (static_cast<std::size_t>(u.rows()) != outputs.size() || static_cast<std::size_t>(u.cols()) != inputs.size()) {
        throw std::invalid_argument("element transfer matrix does not match its modes");
    }
}

ElementSpec balanced_bs(ModeLabel in1, ModeLabel in2, ModeLabel out1, ModeLabel out2) {
    return {ElementKind::balanced_bs, 0.0, {in1, in2}, {out1, out2}};
}

ElementSpec pbs(Port input, Port transmitted, Port reflected) {
    return {ElementKind::pbs, 0.0, both_polarizations(input), {{transmitted, Polarization::H}, {reflected, Polarization::V}}};
}

ElementSpec pbs_combine(Port h_port, Port v_port, Port output) {
    return {ElementKind::pbs, 0.0, {{h_port, Polarization::H}, {v_port, Polarization::V}}, both_polarizations(output)};
}

ElementSpec hwp(Port port, double angle) {
    return {ElementKind::hwp, angle, both_polarizations(port), both_polarizations(port)};
}

ElementSpec qwp(Port port, double angle) {
    return {ElementKind::qwp, angle, both_polarizations(port), both_polarizations(port)};
}

ElementSpec mirror(std::vector<ModeLabel> modes) { return {ElementKind::mirror, 0.0, modes, modes}; }

ElementSpec delay(ModeLabel mode, double length) { return {ElementKind::delay, length, {mode}, {mode}}; }

ElementSpec phase(ModeLabel mode, double phi) { return {ElementKind::phase, phi, {mode}, {mode}}; }

// --- symbolic propagation ----------------------------------------------------

TwoPhotonState apply_element(const TwoPhotonState& state, const ElementSpec& element) {
    element.validate();
    const bool touches = std::any_of(element.inputs.begin(), element.inputs.end(),
                                     [&](const ModeLabel& m) { return state.occupies(m); });
    if (!touches) throw std::invalid_argument("element input modes are not occupied by the state");

    const Eigen::MatrixXcd u = element.static_transfer();
    const double extra_delay = element.delay_seconds();

    auto expand = [&](const Photon& p) {
        std::vector<std::pair<Photon, Complex>> out;
        const auto it = std::find(element.inputs.begin(), element.inputs.end(), p.mode);
        if (it == element.inputs.end()) {
            out.emplace_back(p, 1.0);
            return out;
        }
        const auto col = static_cast<Eigen::Index>(it - element.inputs.begin());
        for (Eigen::Index row = 0; row < u.rows(); ++row) {
            const Complex c = u(row, col);
            if (c == Complex(0.0)) continue;
            Photon q = p;
            q.mode = element.outputs[static_cast<std::size_t>(row)];
            q.delay += extra_delay;
            out.emplace_back(q, c);
        }
        return out;
    };

    std::vector<Term> terms;
    for (const auto& t : state.terms()) {
        const auto ea = expand(t.a);
        const auto eb = expand(t.b);
        for (const auto& [pa, ca] : ea) {
            for (const auto& [pb, cb] : eb) terms.push_back({t.amplitude * ca * cb, pa, pb});
        }
    }
    return TwoPhotonState(std::move(terms));
}

TwoPhotonState apply_network(TwoPhotonState state, const std::vector<ElementSpec>& network) {
    for (const auto& e : network) state = apply_element(state, e);
    return state;
}

Decomposition decompose_tssa_tssb(const TwoPhotonState& state) {
    std::vector<Term> anti, bunched;
    for (const auto& t : state.terms()) (t.a.mode.port == t.b.mode.port ? bunched : anti).push_back(t);
    Decomposition d;
    d.tssa = TwoPhotonState(std::move(anti));
    d.tssb = TwoPhotonState(std::move(bunched));
    const double total = state.norm_squared();
    if (!(total > 0.0)) throw std::invalid_argument("cannot decompose an empty state");
    d.p_tssa = d.tssa.norm_squared() / total;
    d.p_tssb = d.tssb.norm_squared() / total;
    if (d.p_tssa > 0.0) d.tssa = d.tssa.normalized();
    if (d.p_tssb > 0.0) d.tssb = d.tssb.normalized();
    return d;
}

TwoPhotonState mzi_output_state(double delta_x1, double phi, double single_photon_coherence_length) {
    if (delta_x1 < 3.0 * single_photon_coherence_length) {
        std::ostringstream msg;
        msg << "delta_x1 = " << delta_x1 << " m is not well above the single-photon coherence length ("
            << single_photon_coherence_length << " m); the three-term output form is approximate";
        warn(msg.str());
    }
    const double d = length_to_delay(delta_x1);
    const Photon p5{mzi(5), 0.0, 0}, p5d{mzi(5), d, 0}, p6{mzi(6), 0.0, 0}, p6d{mzi(6), d, 0};
    const double s = std::sin(phi), c = std::cos(phi);
    return TwoPhotonState({
        {0.5 * s, p6, p6d},
        {-0.5 * s, p5d, p5},
        {-0.5 * c, p5d, p6},
        {-0.5 * c, p5, p6d},
        {0.5, p5d, p6},
        {-0.5, p5, p6d},
    });
}

std::vector<ElementSpec> mzi_preparation_network(double delta_x1, double phi) {
    return {
        delay(mzi(1), delta_x1),
        balanced_bs(mzi(1), mzi(2), mzi(3), mzi(4)),
        phase(mzi(3), phi),
        balanced_bs(mzi(3), mzi(4), mzi(5), mzi(6)),
    };
}

PmiStates pmi_intra_state(double delta_x1, bool degenerate, bool drop_swapped_terms, double phi) {
    if (!(delta_x1 >= 0.0)) throw std::invalid_argument("delta_x1 must be non-negative");
    const double d = length_to_delay(delta_x1);
    const ModeLabel th{Port::T, Polarization::H}, rv{Port::R, Polarization::V};
    const Complex bunched_phase = std::polar(1.0, 2.0 * phi);

    std::vector<Term> tssa, tssb;
    auto add_pair = [&](int early_slot, int late_slot) {
        tssa.push_back({1.0, {th, 0.0, early_slot}, {rv, d, late_slot}});
        tssa.push_back({1.0, {rv, 0.0, early_slot}, {th, d, late_slot}});
        tssb.push_back({1.0, {th, 0.0, early_slot}, {th, d, late_slot}});
        tssb.push_back({bunched_phase, {rv, 0.0, early_slot}, {rv, d, late_slot}});
    };
    if (degenerate) {
        add_pair(0, 0);
    } else {
        add_pair(1, 2);
        if (!drop_swapped_terms) add_pair(2, 1);
    }
    return {TwoPhotonState(std::move(tssa)).normalized(), TwoPhotonState(std::move(tssb)).normalized()};
}

// --- oracle -------------------------------------------------------------------

namespace {

class ModeIndex {
public:
    int add(const ModeLabel& m) {
        auto [it, inserted] = index_.try_emplace(m, static_cast<int>(labels_.size()));
        if (inserted) labels_.push_back(m);
        return it->second;
    }
    int at(const ModeLabel& m) const { return index_.at(m); }
    std::size_t size() const { return labels_.size(); }
    const ModeLabel& label(std::size_t i) const { return labels_[i]; }

private:
    std::map<ModeLabel, int> index_;
    std::vector<ModeLabel> labels_;
};

// Amplitudes over all modes for a single photon injected in `source`.
Eigen::VectorXcd propagate(const std::vector<ElementSpec>& network, const ModeIndex& modes, const ModeLabel& source,
                           double omega) {
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(modes.size()));
    v(modes.at(source)) = 1.0;
    for (const auto& e : network) {
        const Eigen::MatrixXcd u = e.transfer(omega);
        Eigen::VectorXcd in(static_cast<Eigen::Index>(e.inputs.size()));
        for (std::size_t i = 0; i < e.inputs.size(); ++i) {
            const int idx = modes.at(e.inputs[i]);
            in(static_cast<Eigen::Index>(i)) = v(idx);
            v(idx) = 0.0;
        }
        const Eigen::VectorXcd out = u * in;
        for (std::size_t o = 0; o < e.outputs.size(); ++o) v(modes.at(e.outputs[o])) += out(static_cast<Eigen::Index>(o));
    }
    return v;
}

}  // namespace

OracleOutcome oracle_outcome(const spectral::JointSpectralAmplitude& input, const OracleSetup& setup, std::size_t coarse_n) {
    if (coarse_n > 64) throw std::invalid_argument("oracle grid limited to 64 points");
    if (setup.detector_a == setup.detector_b) throw std::invalid_argument("oracle detectors must be distinct ports");
    const spectral::JointSpectralAmplitude jsa = spectral::resample(input, coarse_n);

    ModeIndex modes;
    require_valid(setup.source_a);
    require_valid(setup.source_b);
    modes.add(setup.source_a);
    modes.add(setup.source_b);
    for (const auto& e : setup.network) {
        e.validate();
        for (const auto& m : e.inputs) modes.add(m);
        for (const auto& m : e.outputs) modes.add(m);
    }

    const std::size_t n = jsa.grid.size();
    const std::size_t m = modes.size();
    std::vector<Eigen::VectorXcd> ta(n), tb(n);
    for (std::size_t j = 0; j < n; ++j) {
        ta[j] = propagate(setup.network, modes, setup.source_a, jsa.grid.point(j));
        tb[j] = propagate(setup.network, modes, setup.source_b, jsa.grid.point(j));
    }

    // B[(mode x, freq al), (mode y, freq be)]: photon a ends in (x, al), photon b in (y, be).
    const std::size_t states = m * n;
    Eigen::MatrixXcd b(static_cast<Eigen::Index>(states), static_cast<Eigen::Index>(states));
    for (std::size_t al = 0; al < n; ++al) {
        for (std::size_t be = 0; be < n; ++be) {
            const Complex phi = std::sqrt(jsa.grid.weights[al] * jsa.grid.weights[be]) *
                                jsa.amplitude(static_cast<Eigen::Index>(al), static_cast<Eigen::Index>(be));
            for (std::size_t x = 0; x < m; ++x) {
                const Complex ax = phi * ta[al](static_cast<Eigen::Index>(x));
                for (std::size_t y = 0; y < m; ++y) {
                    b(static_cast<Eigen::Index>(x * n + al), static_cast<Eigen::Index>(y * n + be)) =
                        ax * tb[be](static_cast<Eigen::Index>(y));
                }
            }
        }
    }

    OracleOutcome outcome;
    const Eigen::MatrixXcd sym = b + b.transpose();
    for (Eigen::Index r = 0; r < sym.rows(); ++r) {
        const ModeLabel& mr = modes.label(static_cast<std::size_t>(r) / n);
        for (Eigen::Index c = 0; c < sym.cols(); ++c) {
            const double p = std::norm(sym(r, c));
            outcome.total += 0.5 * p;
            const ModeLabel& mc = modes.label(static_cast<std::size_t>(c) / n);
            if (mr.port == setup.detector_a && mc.port == setup.detector_b) outcome.coincidence += p;
        }
    }
    return outcome;
}

OracleSetup mzi_oracle_setup(double tau1, double tau2, double phase_offset) {
    OracleSetup s;
    s.network = {
        delay(mzi(2), delay_to_length(tau1)),
        balanced_bs(mzi(1), mzi(2), mzi(3), mzi(4)),
        delay(mzi(4), delay_to_length(tau2)),
        phase(mzi(4), phase_offset),
        balanced_bs(mzi(3), mzi(4), mzi(5), mzi(6)),
    };
    return s;
}

OracleSetup pmi_oracle_setup(double tau1, double tau2, double phase_offset) {
    const double eighth = kPi / 8.0, quarter = kPi / 4.0;
    OracleSetup s;
    s.source_a = {Port::In, Polarization::H};
    s.source_b = {Port::In, Polarization::V};
    s.detector_a = Port::T;
    s.detector_b = Port::R;
    s.network = {
        delay({Port::In, Polarization::V}, delay_to_length(tau1)),
        hwp(Port::In, eighth),
        pbs(Port::In, Port::T, Port::R),
        delay({Port::R, Polarization::V}, delay_to_length(tau2)),
        phase({Port::R, Polarization::V}, phase_offset),
        qwp(Port::T, quarter),
        qwp(Port::R, quarter),
        mirror(both_polarizations(Port::T)),
        mirror(both_polarizations(Port::R)),
        qwp(Port::T, quarter),
        qwp(Port::R, quarter),
        pbs_combine(Port::R, Port::T, Port::Out),
        hwp(Port::Out, eighth),
        pbs(Port::Out, Port::T, Port::R),
    };
    return s;
}

double oracle_coincidence(const spectral::JointSpectralAmplitude& jsa, double tau1, double tau2, std::size_t coarse_n,
                          double phase_offset) {
    return oracle_outcome(jsa, mzi_oracle_setup(tau1, tau2, phase_offset), coarse_n).coincidence;
}

}  // namespace twinfringe::optics
