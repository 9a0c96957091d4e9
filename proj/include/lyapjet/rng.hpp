#pragma once

#include <cstdint>
#include <string_view>

// Counter-based random streams. A stream is the pure function
// (seed, stream_id, counter) -> u64, so replicas can be handed their own
// stream_id and run in any order, on any thread, with no shared state, and
// a run is reproducible from the seed alone. The word function is the
// splitmix64 finalizer over a per-stream key; one finalizer pass is already
// statistically solid and two keys never share an orbit segment in practice
// (they would have to land within 2^-64 of each other).

namespace lyapjet {

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

inline constexpr std::uint64_t mix64(std::uint64_t z) {
    z += kGolden;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char ch : s) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ull;
    }
    return h;
}

} // namespace detail

class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id)
        : seed_(seed),
          stream_id_(stream_id),
          key_(detail::mix64(detail::mix64(seed) ^ detail::mix64(~stream_id))) {}

    std::uint64_t next_u64() { return detail::mix64(key_ + (++counter_) * detail::kGolden); }

    // uniform on [0, 1), 53 random bits
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform on [-1, 1)
    double symmetric() { return 2.0 * uniform() - 1.0; }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }
    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

// Streams are addressed by a purpose tag plus an index, so every consumer
// (replica r of estimator X) gets its own reproducible substream of the one
// user-facing seed.
inline RngStream stream_for(std::uint64_t seed, std::string_view purpose, std::uint64_t index = 0) {
    const std::uint64_t sid = detail::mix64(detail::fnv1a64(purpose) ^ detail::mix64(index));
    return RngStream(seed, sid);
}

} // namespace lyapjet
