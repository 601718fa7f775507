#pragma once

#include <algorithm>
#include <compare>
#include <exception>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace userembed {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file; the message carries `path:line:`.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Identifies a log entry (and hence its query embedding): a user issues at
/// most one query per timestamp.
struct EntryKey {
    std::string user_id;
    std::int64_t timestamp = 0;

    auto operator<=>(const EntryKey&) const = default;
    bool operator==(const EntryKey&) const = default;

    std::string str() const { return user_id + "@" + std::to_string(timestamp); }
};

using Rng = std::mt19937_64;

namespace detail {

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace detail

/// Independent per-item stream: same (seed, name) always yields the same
/// sequence regardless of processing order.
inline Rng derived_rng(std::uint64_t seed, std::string_view name) {
    return Rng(detail::splitmix64(seed ^ detail::splitmix64(detail::fnv1a(name))));
}

// The standard distributions are implementation-defined; these are not, so
// seeded outputs are identical across standard libraries.

/// Uniform in [0, 1).
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

/// Uniform integer in [0, n). n must be positive.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    // Reject the tail so the modulo is unbiased.
    const std::uint64_t bound = n;
    const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % bound);
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
}

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

template <typename RandomIt>
void shuffle(RandomIt first, RandomIt last, Rng& rng) {
    const auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = uniform_index(rng, i);
        std::swap(first[i - 1], first[j]);
    }
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = hardware
/// concurrency). Work is statically strided, so results written to slot i are
/// independent of the thread count.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                try {
                    for (std::size_t i = t; i < n; i += threads) fn(i);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace userembed
