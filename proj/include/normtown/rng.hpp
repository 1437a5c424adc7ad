#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace normtown {

// SplitMix64-based generator. Chosen over std::mt19937 + <random> distributions
// because the standard distributions are implementation-defined: the same seed
// must produce the same artifacts on every platform, and all sampling helpers
// below are fully specified here.
//
// Stream splitting: every sampling pass derives its own child generator via
// split("label"), which mixes the *initial* seed of the parent with an FNV-1a
// hash of the label. Children are therefore independent of how much the parent
// has been consumed, and two children with distinct labels never share a
// stream. Passes document their labels at the call site (e.g. the population
// sampler uses "profiles", "households", "background").
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), state_(seed) {}

    uint64_t seed() const { return seed_; }

    // Core SplitMix64 step (public-domain algorithm by Sebastiano Vigna).
    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9E3779B97f4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [0, bound) without modulo bias; bound must be nonzero.
    uint64_t next_below(uint64_t bound) {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % bound;
    }

    // Uniform integer in [lo, hi], inclusive on both ends.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        return lo + static_cast<int64_t>(next_below(static_cast<uint64_t>(hi - lo + 1)));
    }

    bool bernoulli(double p) { return next_double() < p; }

    // Index drawn proportionally to weights (cumulative scan of the given
    // order). All-zero or empty weight vectors are a caller bug.
    size_t weighted_index(std::span<const double> weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        return weighted_index_at(weights, next_double() * total);
    }

    // Deterministic variant used by tests: picks the bucket containing `point`
    // on the cumulative scale [0, sum(weights)).
    static size_t weighted_index_at(std::span<const double> weights, double point) {
        double cum = 0.0;
        for (size_t i = 0; i < weights.size(); ++i) {
            cum += weights[i];
            if (point < cum) return i;
        }
        return weights.empty() ? 0 : weights.size() - 1;
    }

    template <typename T>
    void shuffle(T& seq) {
        for (size_t i = seq.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(next_below(i));
            using std::swap;
            swap(seq[i - 1], seq[j]);
        }
    }

    // Child stream for a named pass; see class comment.
    Rng split(std::string_view label) const {
        uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a offset basis
        for (char c : label) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
        // One SplitMix64 scramble over seed^hash so labels that differ in a
        // single bit still produce unrelated streams.
        uint64_t z = (seed_ ^ h) + 0x9E3779B97f4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return Rng(z ^ (z >> 31));
    }

private:
    uint64_t seed_;
    uint64_t state_;
};

}  // namespace normtown
