#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace fairload::rng {

// splitmix64 finalizer; used for key derivation when splitting streams.
inline uint64_t mix64(uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Philox4x32-10 (Salmon et al. 2011). Counter-based: the output block is a
// pure function of (key, counter), which makes independent substreams cheap.
inline std::array<uint32_t, 4> philox4x32(std::array<uint32_t, 4> ctr,
                                          std::array<uint32_t, 2> key) {
    constexpr uint32_t kMul0 = 0xD2511F53u;
    constexpr uint32_t kMul1 = 0xCD9E8D57u;
    constexpr uint32_t kWeyl0 = 0x9E3779B9u;
    constexpr uint32_t kWeyl1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const uint64_t p0 = static_cast<uint64_t>(kMul0) * ctr[0];
        const uint64_t p1 = static_cast<uint64_t>(kMul1) * ctr[2];
        const uint32_t hi0 = static_cast<uint32_t>(p0 >> 32);
        const uint32_t lo0 = static_cast<uint32_t>(p0);
        const uint32_t hi1 = static_cast<uint32_t>(p1 >> 32);
        const uint32_t lo1 = static_cast<uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kWeyl0;
        key[1] += kWeyl1;
    }
    return ctr;
}

// Seeded stream over the Philox core. Substreams are derived by mixing a
// child index (or tag) into the 64-bit key, never by jumping the counter, so
// stream layout is stable: the draws of subject i / trial j / cycle k come
// from root.child("subject").child(i).child(j).child(k) and are unaffected
// by how many sibling streams exist.
class Stream {
  public:
    explicit Stream(uint64_t key) : key_(key) {}

    Stream child(uint64_t index) const {
        return Stream(mix64(key_ ^ mix64(index + 0x632BE59BD9B4E019ULL)));
    }
    Stream child(std::string_view tag) const {
        return Stream(mix64(key_ ^ fnv1a64(tag)));
    }

    uint64_t next_u64() {
        const std::array<uint32_t, 4> ctr = {
            static_cast<uint32_t>(ctr_), static_cast<uint32_t>(ctr_ >> 32), 0u, 0u};
        const std::array<uint32_t, 2> key = {
            static_cast<uint32_t>(key_), static_cast<uint32_t>(key_ >> 32)};
        ++ctr_;
        const auto out = philox4x32(ctr, key);
        return (static_cast<uint64_t>(out[1]) << 32) | out[0];
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller (two u64 per draw, no caching).
    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

    // Uniform integer in [0, n); Lemire multiply-shift (bias < n / 2^64).
    uint64_t below(uint64_t n) {
        const unsigned __int128 m =
            static_cast<unsigned __int128>(next_u64()) * n;
        return static_cast<uint64_t>(m >> 64);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    uint64_t key() const { return key_; }

  private:
    uint64_t key_;
    uint64_t ctr_ = 0;
};

}  // namespace fairload::rng
