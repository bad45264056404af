#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spikedec/errors.hpp"

namespace spikedec {

// Spike counts per channel per time bin. Counts are uint16: after the 120x
// downsampling a bin holds at most 120 raw samples.
struct SpikeTensor {
    std::size_t C = 0;
    std::size_t T = 0;
    std::vector<std::uint16_t> counts;  // row-major [C x T]

    SpikeTensor() = default;
    SpikeTensor(std::size_t c, std::size_t t) : C(c), T(t), counts(c * t, 0) {}

    std::uint16_t& at(std::size_t c, std::size_t t) { return counts[c * T + t]; }
    std::uint16_t at(std::size_t c, std::size_t t) const { return counts[c * T + t]; }

    bool operator==(const SpikeTensor&) const = default;
};

struct Trial {
    SpikeTensor spikes;
    std::uint16_t label = 0;

    bool operator==(const Trial&) const = default;
};

struct Session {
    std::uint32_t id = 0;
    std::vector<Trial> trials;

    bool operator==(const Session&) const = default;
};

// Labeled trials grouped into recording sessions; the unit of LOSO
// cross-validation. All trials share C, T and the label alphabet.
struct SessionSet {
    std::vector<Session> sessions;
    std::size_t C = 0;
    std::size_t T = 0;
    std::size_t n_class = 0;

    std::size_t total_trials() const {
        std::size_t n = 0;
        for (const auto& s : sessions) n += s.trials.size();
        return n;
    }

    bool operator==(const SessionSet&) const = default;
};

struct SynthConfig {
    std::size_t n_sessions = 6;
    std::size_t trials_per_session = 300;
    std::size_t C = 66;
    std::size_t T = 100;
    std::size_t n_class = 3;
    double base_rate = 0.3;       // expected spikes per bin
    double class_contrast = 2.0;  // rate multiplier on a class's active channels
    double active_fraction = 0.2; // fraction of channels carrying class information
    double session_drift = 0.1;   // lognormal sigma of per-(session, channel) rate factors
    std::uint64_t seed = 0;

    void validate() const;
};

// Sums every `factor` consecutive bins; total spike count is preserved.
SpikeTensor downsample(const SpikeTensor& raw, std::size_t factor);

// Poisson trials with per-class contiguous active channel blocks and
// per-session multiplicative rate drift. Fully determined by cfg.seed.
SessionSet generate_synthetic(const SynthConfig& cfg);

struct LosoSplit {
    std::vector<const Trial*> train;
    std::vector<const Trial*> val;
    std::vector<const Trial*> test;
};

// Holds out test_session entirely; the remaining trials are shuffled by seed
// and split (1 - val_fraction) : val_fraction.
LosoSplit loso_split(const SessionSet& data, std::size_t test_session, double val_fraction,
                     std::uint64_t seed);

// Binary session-set file, format documented in the README. Round trips are
// bit-exact. Throws FormatError / TruncatedError / ChecksumError.
inline constexpr std::uint32_t kSessionSetFormatVersion = 1;
void save_session_set(const SessionSet& data, const std::string& path);
SessionSet load_session_set(const std::string& path);

// Mean spikes per channel-bin; the r of the AC-count formula. May exceed 1
// for count-valued inputs.
double firing_rate(const SpikeTensor& x);

// CRC32 (IEEE, reflected) used by the file formats.
std::uint32_t crc32(const std::uint8_t* data, std::size_t len, std::uint32_t seed = 0);

}  // namespace spikedec
