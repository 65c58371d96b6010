#pragma once

#include <cstdint>
#include <limits>
#include <string_view>

namespace qsched {

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

// SplitMix64 finalizer.
inline constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline constexpr std::uint64_t hash_string(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return mix64(h);
}

}  // namespace detail

inline constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept {
    return detail::mix64(a ^ (detail::mix64(b) + detail::kGolden + (a << 6) + (a >> 2)));
}

inline constexpr std::uint64_t hash_combine(std::uint64_t a, std::string_view b) noexcept {
    return hash_combine(a, detail::hash_string(b));
}

/// Counter-based generator: the i-th output is a pure function of (key, i).
///
/// This is SplitMix64 evaluated at an explicit counter, so a stream can be
/// rewound or jumped with `seek` and two runs that consume the same number of
/// variates see bit-identical values.
class RandomStream {
public:
    using result_type = std::uint64_t;

    constexpr RandomStream() noexcept = default;
    constexpr explicit RandomStream(std::uint64_t key) noexcept : key_(key) {}

    static constexpr RandomStream named(std::uint64_t master, std::string_view name) noexcept {
        return RandomStream(hash_combine(master, name));
    }

    constexpr RandomStream substream(std::string_view name) const noexcept {
        return RandomStream(hash_combine(key_, name));
    }

    constexpr std::uint64_t next_u64() noexcept {
        ++counter_;
        return detail::mix64(key_ + counter_ * detail::kGolden);
    }

    /// Uniform on the open interval (0, 1); never returns 0 or 1.
    constexpr double uniform() noexcept {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    constexpr result_type operator()() noexcept { return next_u64(); }
    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    constexpr std::uint64_t key() const noexcept { return key_; }
    constexpr std::uint64_t counter() const noexcept { return counter_; }
    constexpr void seek(std::uint64_t counter) noexcept { counter_ = counter; }

    friend constexpr bool operator==(const RandomStream&, const RandomStream&) = default;

private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

/// Root of the named streams used by one simulation run.
struct StreamSeeds {
    std::uint64_t master = 0;

    RandomStream stream(std::string_view name) const noexcept {
        return RandomStream::named(master, name);
    }

    /// Seeds for replication `rep` of cell `cell_id` under a master seed.
    static StreamSeeds derive(std::uint64_t master, std::string_view cell_id, std::uint64_t rep) noexcept {
        return StreamSeeds{hash_combine(hash_combine(master, cell_id), rep)};
    }
};

}  // namespace qsched
