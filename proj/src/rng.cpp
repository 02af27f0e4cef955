#include "th2/rng.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numbers>

#include "th2/errors.hpp"

namespace th2 {

std::uint64_t Rng::below(std::uint64_t bound) {
    if (bound == 0) throw ContractError("Rng::below(0)");
    // rejection sampling on the top of the range
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return v % bound;
}

double Rng::normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::split(std::uint64_t stream_id) const {
    Rng mixer(state_ ^ (0xD1B54A32D192ED03ull * (stream_id + 1)));
    return Rng(mixer.next_u64());
}

std::string Rng::state_hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(state_));
    return buf;
}

Rng Rng::from_hex(const std::string& hex) {
    if (hex.empty() || hex.size() > 16) throw InputError("bad RNG state '" + hex + "'");
    char* end = nullptr;
    const unsigned long long v = std::strtoull(hex.c_str(), &end, 16);
    if (*end != '\0') throw InputError("bad RNG state '" + hex + "'");
    return Rng(v);
}

std::uint64_t default_seed(std::uint64_t fallback) {
    if (const char* env = std::getenv("TH2_SEED")) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (end != env && *end == '\0') return v;
    }
    return fallback;
}

}  // namespace th2
