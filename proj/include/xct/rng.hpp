#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace xct {

// splitmix64; used to derive independent seed streams from one master seed.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t seed_mix(uint64_t master, uint64_t stream_tag, uint64_t index) {
    return splitmix64(splitmix64(master ^ stream_tag) + index);
}

// Deterministic RNG wrapper. std::mt19937_64 has a standard-pinned bit
// stream, but the std distributions do not, so all mappings from raw bits
// to values live here.
class Rng {
public:
    Rng() : eng_(0) {}
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n), unbiased via rejection on a power-of-two mask.
    uint64_t uniform_int(uint64_t n) {
        if (n <= 1) return 0;
        uint64_t mask = n - 1;
        mask |= mask >> 1; mask |= mask >> 2; mask |= mask >> 4;
        mask |= mask >> 8; mask |= mask >> 16; mask |= mask >> 32;
        for (;;) {
            uint64_t v = eng_() & mask;
            if (v < n) return v;
        }
    }

    // Box-Muller with a cached spare.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

    // Fisher-Yates; deterministic for a given engine state.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Engine state as text (standard-defined format), for checkpoints.
    // The Box-Muller spare is included so a resumed stream is bit-exact.
    std::string save_state() const {
        std::ostringstream os;
        os << eng_ << " | " << (have_spare_ ? 1 : 0) << " " << std::hexfloat << spare_;
        return os.str();
    }

    void load_state(const std::string& s) {
        std::istringstream is(s);
        is >> eng_;
        have_spare_ = false;
        spare_ = 0.0;
        std::string bar;
        if (is >> bar && bar == "|") {
            int flag = 0;
            is >> flag >> std::hexfloat >> spare_;
            have_spare_ = (flag != 0);
        }
    }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace xct
