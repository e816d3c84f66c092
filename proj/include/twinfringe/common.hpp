#pragma once

#include <cstddef>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>

namespace twinfringe {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s
inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Angular frequency (rad/s) of light with vacuum wavelength `wavelength` (m).
inline double angular_frequency(double wavelength) { return kTwoPi * kSpeedOfLight / wavelength; }

/// Width in angular frequency of a wavelength band `bandwidth` centred on `wavelength`.
inline double angular_bandwidth(double wavelength, double bandwidth) {
    return kTwoPi * kSpeedOfLight * bandwidth / (wavelength * wavelength);
}

inline double length_to_delay(double length) { return length / kSpeedOfLight; }
inline double delay_to_length(double delay) { return delay * kSpeedOfLight; }

// Raised when an integral or fit produces a result that cannot be trusted
// (imaginary residue, non-convergence). Maps to CLI exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed external input (config, data files). Maps to CLI exit code 2.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Non-fatal diagnostics. The default handler prints to stderr; tests and the
// CLI install their own.
using WarningHandler = std::function<void(const std::string&)>;

void warn(const std::string& message);
WarningHandler set_warning_handler(WarningHandler handler);

// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is
// handled exactly once, so results written by index are independent of the
// thread count. threads == 0 means hardware concurrency.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace twinfringe
