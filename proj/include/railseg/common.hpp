#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace railseg {

// Error categories shared by the C++ core, the C API and the CLI exit codes.
enum class ErrorCode : int {
    usage = 1,    // bad arguments, bad configuration
    data = 2,     // unreadable/corrupt files, mismatched inputs
    numeric = 3,  // NaN loss, divergence, failed numeric contract
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail_usage(const std::string& msg) { throw Error(ErrorCode::usage, msg); }
[[noreturn]] inline void fail_data(const std::string& msg) { throw Error(ErrorCode::data, msg); }
[[noreturn]] inline void fail_numeric(const std::string& msg) { throw Error(ErrorCode::numeric, msg); }

// SplitMix64. Used to derive stream seeds and as the engine behind Rng so
// that every random draw in the project is reproducible independent of the
// standard library implementation.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Combine a seed with stream identifiers (epoch, frame index, ...).
inline uint64_t seed_stream(uint64_t seed, uint64_t a, uint64_t b = 0) {
    uint64_t s = seed ^ (0x9e3779b97f4a7c15ULL + a * 0xff51afd7ed558ccdULL + b * 0xc4ceb9fe1a85ec53ULL);
    splitmix64(s);
    return splitmix64(s);
}

// Deterministic RNG with explicit uniform/normal draws (Box-Muller).
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {
        // decorrelate trivially close seeds
        splitmix64(state_);
    }

    uint64_t next_u64() { return splitmix64(state_); }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // integer in [0, n)
    uint64_t below(uint64_t n) { return n ? next_u64() % n : 0; }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double mag = std::sqrt(-2.0 * std::log(u1));
        double two_pi_u2 = 6.283185307179586476925286766559 * u2;
        spare_ = mag * std::sin(two_pi_u2);
        have_spare_ = true;
        return mag * std::cos(two_pi_u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

private:
    uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace railseg
