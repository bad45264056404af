#include "spikedec/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include "spikedec/rng.hpp"

namespace spikedec {

void SynthConfig::validate() const {
    if (n_sessions == 0) throw ConfigError("SynthConfig: n_sessions must be positive");
    if (trials_per_session == 0) throw ConfigError("SynthConfig: trials_per_session must be positive");
    if (C == 0 || T == 0) throw ConfigError("SynthConfig: C and T must be positive");
    if (n_class == 0) throw ConfigError("SynthConfig: n_class must be positive");
    if (base_rate < 0.0) throw ConfigError("SynthConfig: base_rate must be >= 0");
    if (class_contrast < 0.0) throw ConfigError("SynthConfig: class_contrast must be >= 0");
    if (active_fraction <= 0.0 || active_fraction > 1.0)
        throw ConfigError("SynthConfig: active_fraction must be in (0,1]");
    if (session_drift < 0.0) throw ConfigError("SynthConfig: session_drift must be >= 0");
}

SpikeTensor downsample(const SpikeTensor& raw, std::size_t factor) {
    if (factor == 0 || raw.T % factor != 0)
        throw DimensionError("downsample: factor must divide the bin count");
    SpikeTensor out(raw.C, raw.T / factor);
    for (std::size_t c = 0; c < raw.C; ++c)
        for (std::size_t t = 0; t < out.T; ++t) {
            std::uint32_t acc = 0;
            for (std::size_t s = 0; s < factor; ++s) acc += raw.at(c, t * factor + s);
            if (acc > std::numeric_limits<std::uint16_t>::max())
                throw NumericError("downsample: bin sum exceeds uint16 range");
            out.at(c, t) = static_cast<std::uint16_t>(acc);
        }
    return out;
}

SessionSet generate_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    SessionSet set;
    set.C = cfg.C;
    set.T = cfg.T;
    set.n_class = cfg.n_class;

    const std::size_t block = static_cast<std::size_t>(
        std::ceil(cfg.active_fraction * static_cast<double>(cfg.C)));
    set.sessions.resize(cfg.n_sessions);
    for (std::size_t s = 0; s < cfg.n_sessions; ++s) {
        Rng rng = Rng::derive(cfg.seed, s);
        Session& session = set.sessions[s];
        session.id = static_cast<std::uint32_t>(s);

        std::vector<double> drift(cfg.C);
        for (std::size_t c = 0; c < cfg.C; ++c)
            drift[c] = cfg.session_drift > 0.0 ? rng.lognormal(cfg.session_drift) : 1.0;

        session.trials.resize(cfg.trials_per_session);
        for (std::size_t i = 0; i < cfg.trials_per_session; ++i) {
            Trial& trial = session.trials[i];
            trial.label = static_cast<std::uint16_t>(i % cfg.n_class);  // balanced round-robin
            trial.spikes = SpikeTensor(cfg.C, cfg.T);
            // Active channel block: contiguous, disjoint per class when the
            // channel count allows, wrapping cyclically otherwise.
            const std::size_t start = (trial.label * block) % cfg.C;
            for (std::size_t c = 0; c < cfg.C; ++c) {
                const bool active = (c + cfg.C - start) % cfg.C < block;
                double rate = cfg.base_rate * (active ? cfg.class_contrast : 1.0) * drift[c];
                if (rate < 0.0) rate = 0.0;
                for (std::size_t t = 0; t < cfg.T; ++t) {
                    const std::uint64_t n = rng.poisson(rate);
                    trial.spikes.at(c, t) = static_cast<std::uint16_t>(
                        std::min<std::uint64_t>(n, std::numeric_limits<std::uint16_t>::max()));
                }
            }
        }
    }
    return set;
}

LosoSplit loso_split(const SessionSet& data, std::size_t test_session, double val_fraction,
                     std::uint64_t seed) {
    if (test_session >= data.sessions.size())
        throw ConfigError("loso_split: invalid test session index " + std::to_string(test_session));
    if (val_fraction <= 0.0 || val_fraction >= 1.0)
        throw ConfigError("loso_split: val_fraction must be in (0,1)");

    LosoSplit split;
    std::vector<const Trial*> rest;
    for (std::size_t s = 0; s < data.sessions.size(); ++s) {
        for (const Trial& t : data.sessions[s].trials) {
            if (s == test_session)
                split.test.push_back(&t);
            else
                rest.push_back(&t);
        }
    }
    // Fisher-Yates with the library RNG so the permutation is seed-stable.
    Rng rng = Rng::derive(seed, 0x10050);
    for (std::size_t i = rest.size(); i > 1; --i)
        std::swap(rest[i - 1], rest[rng.uniform_int(i)]);

    const std::size_t n_val = static_cast<std::size_t>(
        std::llround(val_fraction * static_cast<double>(rest.size())));
    split.val.assign(rest.begin(), rest.begin() + n_val);
    split.train.assign(rest.begin() + n_val, rest.end());
    return split;
}

double firing_rate(const SpikeTensor& x) {
    if (x.counts.empty()) return 0.0;
    double total = 0.0;
    for (std::uint16_t v : x.counts) total += v;
    return total / static_cast<double>(x.counts.size());
}

std::uint32_t crc32(const std::uint8_t* data, std::size_t len, std::uint32_t seed) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int b = 0; b < 8; ++b) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t crc = ~seed;
    for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
    return ~crc;
}

namespace {

constexpr char kMagic[4] = {'S', 'P', 'K', 'D'};

void put_u16(std::vector<std::uint8_t>& buf, std::uint16_t v) {
    buf.push_back(static_cast<std::uint8_t>(v & 0xFF));
    buf.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

struct Reader {
    const std::uint8_t* p;
    std::size_t left;

    std::uint16_t u16() {
        if (left < 2) throw TruncatedError("session-set file: truncated payload");
        std::uint16_t v = static_cast<std::uint16_t>(p[0] | (p[1] << 8));
        p += 2;
        left -= 2;
        return v;
    }
    std::uint32_t u32() {
        if (left < 4) throw TruncatedError("session-set file: truncated payload");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
        p += 4;
        left -= 4;
        return v;
    }
};

}  // namespace

void save_session_set(const SessionSet& data, const std::string& path) {
    std::vector<std::uint8_t> payload;
    payload.reserve(16 + data.total_trials() * (2 + data.C * data.T * 2));
    put_u32(payload, static_cast<std::uint32_t>(data.C));
    put_u32(payload, static_cast<std::uint32_t>(data.T));
    put_u32(payload, static_cast<std::uint32_t>(data.n_class));
    put_u32(payload, static_cast<std::uint32_t>(data.sessions.size()));
    for (const Session& s : data.sessions) {
        put_u32(payload, s.id);
        put_u32(payload, static_cast<std::uint32_t>(s.trials.size()));
        for (const Trial& t : s.trials) {
            put_u16(payload, t.label);
            for (std::uint16_t v : t.spikes.counts) put_u16(payload, v);
        }
    }

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.write(kMagic, 4);
    std::vector<std::uint8_t> header;
    put_u32(header, kSessionSetFormatVersion);
    f.write(reinterpret_cast<const char*>(header.data()), static_cast<std::streamsize>(header.size()));
    f.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    std::vector<std::uint8_t> tail;
    put_u32(tail, crc32(payload.data(), payload.size()));
    f.write(reinterpret_cast<const char*>(tail.data()), static_cast<std::streamsize>(tail.size()));
    if (!f) throw IoError("write failed: " + path);
}

SessionSet load_session_set(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for reading: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    if (bytes.size() < 8) throw TruncatedError("session-set file: shorter than header");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw FormatError("session-set file: bad magic bytes");
    std::uint32_t version = 0;
    for (int i = 0; i < 4; ++i) version |= static_cast<std::uint32_t>(bytes[4 + i]) << (8 * i);
    if (version != kSessionSetFormatVersion)
        throw FormatError("session-set file: unsupported format version " + std::to_string(version));
    if (bytes.size() < 12) throw TruncatedError("session-set file: missing checksum");

    const std::size_t payload_len = bytes.size() - 12;
    const std::uint8_t* payload = bytes.data() + 8;
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i)
        stored |= static_cast<std::uint32_t>(bytes[8 + payload_len + i]) << (8 * i);
    if (crc32(payload, payload_len) != stored)
        throw ChecksumError("session-set file: checksum mismatch");

    Reader r{payload, payload_len};
    SessionSet set;
    set.C = r.u32();
    set.T = r.u32();
    set.n_class = r.u32();
    const std::uint32_t n_sessions = r.u32();
    set.sessions.resize(n_sessions);
    for (Session& s : set.sessions) {
        s.id = r.u32();
        const std::uint32_t n_trials = r.u32();
        s.trials.resize(n_trials);
        for (Trial& t : s.trials) {
            t.label = r.u16();
            if (t.label >= set.n_class)
                throw FormatError("session-set file: label out of range");
            t.spikes = SpikeTensor(set.C, set.T);
            for (std::uint16_t& v : t.spikes.counts) v = r.u16();
        }
    }
    if (r.left != 0) throw FormatError("session-set file: trailing bytes in payload");
    return set;
}

}  // namespace spikedec
