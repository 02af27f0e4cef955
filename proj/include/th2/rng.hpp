#pragma once

#include <cstdint>
#include <string>

namespace th2 {

/// SplitMix64: 64-bit state, fully portable output, trivially serializable.
///
/// std distributions are implementation-defined, so everything that must
/// reproduce across platforms draws through the helpers below.
class Rng {
   public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // [0, 1) with 53 random bits
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Unbiased integer in [0, bound); bound > 0.
    std::uint64_t below(std::uint64_t bound);
    double normal();

    // Independent child stream for a named component.
    Rng split(std::uint64_t stream_id) const;

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; }

    std::string state_hex() const;
    static Rng from_hex(const std::string& hex);

   private:
    std::uint64_t state_;
};

// Reads TH2_SEED when set, else returns fallback.
std::uint64_t default_seed(std::uint64_t fallback);

}  // namespace th2
