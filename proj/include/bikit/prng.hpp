#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace bikit::prng {

/// Identifier recorded in files that embed seeded decisions (split files,
/// HPO ledgers), so a reader can tell which generator produced them.
inline constexpr const char* kPrngId = "splitmix64";

/// SplitMix64 (Steele, Lea & Flood). Counter-based, 64-bit, portable:
/// the same seed yields the same stream on every platform, which is what
/// makes split files and search ledgers byte-reproducible.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, n). n must be > 0. Plain modulo: the bias for the
    /// bucket counts used here (n well below 2^32) is unobservable, and
    /// the arithmetic is identical on every platform.
    std::uint64_t bounded(std::uint64_t n) { return next() % n; }

    /// Uniform double in [0, 1) with 53 bits of resolution.
    double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller (deterministic given the stream).
    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(t);
        have_spare_ = true;
        return r * std::cos(t);
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

/// Derives an independent stream seed from a base seed and a stream id.
/// Used to give every trial / sample its own reproducible stream.
inline std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t stream) {
    SplitMix64 mix(seed ^ (stream * 0xD1B54A32D192ED03ULL + 0x8BB84B93962EACC9ULL));
    return mix.next();
}

/// FNV-1a over a byte string; used to key deterministic noise on a
/// hyperparameter configuration.
inline std::uint64_t fnv1a64(const char* data, std::size_t n) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 0x100000001B3ULL;
    }
    return h;
}

} // namespace bikit::prng
