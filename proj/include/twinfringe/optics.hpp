#pragma once

#include "twinfringe/spectral.hpp"

#include <Eigen/Dense>

#include <compare>
#include <complex>
#include <string>
#include <vector>

namespace twinfringe::optics {

using Complex = std::complex<double>;

// Ports 1..6 label the Mach-Zehnder stages (inputs, arms, outputs). T and R
// are the transmitted and reflected arms of the Michelson PBS; In and Out are
// its shared input and output fibres.
enum class Port : unsigned char { p1 = 1, p2, p3, p4, p5, p6, T, R, In, Out };
enum class Polarization : unsigned char { none, H, V };

struct ModeLabel {
    Port port = Port::p1;
    Polarization polarization = Polarization::none;

    auto operator<=>(const ModeLabel&) const = default;
};

/// MZI ports carry no polarization; Michelson ports carry H or V.
bool is_valid(const ModeLabel& mode);
void require_valid(const ModeLabel& mode);
std::string to_string(const ModeLabel& mode);

inline ModeLabel mzi(int port) { return {static_cast<Port>(port), Polarization::none}; }

/// One photon of a two-photon term. `slot` tags a spectral component
/// (0 = the shared spectrum, 1/2 = the two nondegenerate colours).
struct Photon {
    ModeLabel mode;
    double delay = 0.0;  // s
    int slot = 0;

    auto operator<=>(const Photon&) const = default;
};

/// amplitude * a^dag(a) a^dag(b) |0>, with a <= b.
struct Term {
    Complex amplitude;
    Photon a;
    Photon b;

    /// Coefficient of the normalised Fock ket: sqrt(2) for two identical photons.
    Complex fock_amplitude() const;
};

/// Superposition of two-photon creation-operator products. Terms with
/// different delays are treated as orthogonal, which holds when delays are
/// separated by much more than the single-photon coherence time.
class TwoPhotonState {
public:
    TwoPhotonState() = default;
    explicit TwoPhotonState(std::vector<Term> terms);

    static TwoPhotonState product(const Photon& first, const Photon& second);

    const std::vector<Term>& terms() const { return terms_; }
    double norm_squared() const;
    TwoPhotonState normalized() const;
    /// Amplitude of the canonical term (a, b), zero if absent.
    Complex amplitude_of(const Photon& a, const Photon& b) const;
    bool occupies(const ModeLabel& mode) const;

    /// Max |difference| of term amplitudes, after removing the best global
    /// phase from `other`.
    double distance_up_to_phase(const TwoPhotonState& other) const;

private:
    void canonicalize();
    std::vector<Term> terms_;
};

enum class ElementKind { balanced_bs, pbs, hwp, qwp, mirror, delay, phase };

/// Linear optical element acting on listed modes. transfer(omega) maps the
/// amplitude in inputs[i] to outputs[o] as entry (o, i).
struct ElementSpec {
    ElementKind kind = ElementKind::phase;
    double parameter = 0.0;  // HWP/QWP angle (rad), delay length (m) or phase (rad)
    std::vector<ModeLabel> inputs;
    std::vector<ModeLabel> outputs;

    /// Single-photon transfer matrix at angular frequency omega (delay
    /// elements add e^{i omega tau}).
    Eigen::MatrixXcd transfer(double omega) const;
    /// Frequency-independent part: the matrix for delays is the identity.
    Eigen::MatrixXcd static_transfer() const;
    double delay_seconds() const;
    void validate() const;
};

// Balanced beamsplitter: transmission 1/sqrt2 (in1->out1, in2->out2),
// reflection i/sqrt2 (in1->out2, in2->out1).
ElementSpec balanced_bs(ModeLabel in1, ModeLabel in2, ModeLabel out1, ModeLabel out2);
// H passes to `transmitted`, V to `reflected`, both keeping polarization.
ElementSpec pbs(Port input, Port transmitted, Port reflected);
// Combines H from `h_port` and V from `v_port` into `output`.
ElementSpec pbs_combine(Port h_port, Port v_port, Port output);
ElementSpec hwp(Port port, double angle);
ElementSpec qwp(Port port, double angle);
ElementSpec mirror(std::vector<ModeLabel> modes);
ElementSpec delay(ModeLabel mode, double length);
ElementSpec phase(ModeLabel mode, double phi);

/// Applies an element to every photon in its input modes. Delay elements
/// add to the photon's delay label; phase and mode transforms multiply
/// amplitudes. Throws std::invalid_argument if no photon occupies any input.
TwoPhotonState apply_element(const TwoPhotonState& state, const ElementSpec& element);
TwoPhotonState apply_network(TwoPhotonState state, const std::vector<ElementSpec>& network);

struct Decomposition {
    TwoPhotonState tssa;  // photons in different spatial ports
    TwoPhotonState tssb;  // photons in the same spatial port
    double p_tssa = 0.0;
    double p_tssb = 0.0;
};
Decomposition decompose_tssa_tssb(const TwoPhotonState& state);

/// Phase acquired by the signal carrier over an extra path `delta_x2`.
inline double carrier_phase(double delta_x2, double signal_wavelength) {
    return kTwoPi * delta_x2 / signal_wavelength;
}

/// Closed-form BS2 output for a delayed photon in port 1 and an undelayed
/// photon in port 2: sin(phi) bunched terms, cos(phi) and phase-insensitive
/// anti-bunched terms over ports 5 and 6. Warns when delta_x1 is below three
/// single-photon coherence lengths.
TwoPhotonState mzi_output_state(double delta_x1, double phi, double single_photon_coherence_length = 0.38e-3);

/// Delay on port 1, BS1, phase on arm 3, BS2. Acting on |1>_1 |1>_2 this
/// equals mzi_output_state up to the global phase e^{i phi}.
std::vector<ElementSpec> mzi_preparation_network(double delta_x1, double phi);

struct PmiStates {
    TwoPhotonState tssa;
    TwoPhotonState tssb;
};

/// Polarisation-labelled states inside the Michelson arms. With
/// `degenerate == false` the photons carry colour slots 1 and 2;
/// `drop_swapped_terms` removes the amplitudes in which the colour order is
/// reversed relative to the delay order.
PmiStates pmi_intra_state(double delta_x1, bool degenerate, bool drop_swapped_terms = false, double phi = 0.0);

// ---------------------------------------------------------------------------
// Brute-force oracle: discretised spectrum, explicit mode bookkeeping.

struct OracleSetup {
    std::vector<ElementSpec> network;
    ModeLabel source_a = mzi(1);  // carries omega_1
    ModeLabel source_b = mzi(2);  // carries omega_2
    Port detector_a = Port::p5;
    Port detector_b = Port::p6;
};

struct OracleOutcome {
    double coincidence = 0.0;  // one photon at each detector port
    double total = 0.0;        // all two-photon detection patterns
};

/// Propagates every frequency component of both photons through the
/// network and sums |amplitude|^2 over detection patterns. Frequencies are
/// resolved but arrival times are integrated, so simultaneous and delayed
/// coincidences both count. coarse_n > 64 is rejected.
OracleOutcome oracle_outcome(const spectral::JointSpectralAmplitude& jsa, const OracleSetup& setup, std::size_t coarse_n);

/// Standard MZI: tau1 on port 2 before BS1, tau2 and `phase_offset` on arm 4.
OracleSetup mzi_oracle_setup(double tau1, double tau2, double phase_offset = 0.0);

/// Unfolded polarisation Michelson: H (omega_1) and V (omega_2) share the
/// input fibre, V delayed by tau1; HWP at 22.5 deg, PBS into arms T/R, tau2
/// and `phase_offset` on arm R, double-pass QWP at 45 deg and mirror on
/// both arms, recombination, HWP at 22.5 deg and an analysing PBS whose
/// ports T and R carry the detectors.
OracleSetup pmi_oracle_setup(double tau1, double tau2, double phase_offset = 0.0);

/// MZI coincidence probability between ports 5 and 6.
double oracle_coincidence(const spectral::JointSpectralAmplitude& jsa, double tau1, double tau2, std::size_t coarse_n,
                          double phase_offset = 0.0);

}  // namespace twinfringe::optics
