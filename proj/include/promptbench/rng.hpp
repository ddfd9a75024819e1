#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace promptbench {

/// splitmix64 (Vigna), the only random source in the project.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    std::uint64_t next() noexcept {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform integer in [0, bound).  Draws below (2^64 - bound) % bound are
    /// rejected so the remaining range is a multiple of bound.
    std::uint64_t bounded(std::uint64_t bound) noexcept {
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t r = next();
            if (r >= threshold) return r % bound;
        }
    }

private:
    std::uint64_t state_;
};

/// Fisher-Yates from the last element down: for i = n-1 .. 1 swap a[i] with
/// a[bounded(i + 1)].
template <typename T>
void fisher_yates(std::span<T> items, SplitMix64& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.bounded(i));
        using std::swap;
        swap(items[i - 1], items[j]);
    }
}

/// First `count` outputs of splitmix64(master).
inline std::vector<std::uint64_t> derive_seeds(std::uint64_t master, std::size_t count) {
    SplitMix64 rng(master);
    std::vector<std::uint64_t> out(count);
    for (auto& s : out) s = rng.next();
    return out;
}

}  // namespace promptbench
