#ifndef HYPERSAC_COMMON_HPP_
#define HYPERSAC_COMMON_HPP_

#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace hypersac {

namespace detail {
// Keeps batch-sized tensor buffers on the heap instead of per-allocation
// mmaps, which would otherwise pay page-fault costs on every forward pass.
inline bool tune_allocator() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 64 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 128 * 1024 * 1024);
#endif
    return true;
}
inline const bool allocator_tuned = tune_allocator();
}  // namespace detail

// Error categories used across the library.
struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Deterministic random source. mt19937_64 is fully specified by the standard
// and the float/normal conversions below are explicit, so a given seed yields
// the same stream on every platform.
class Rng {
public:
    Rng() : engine_(0x9E3779B97F4A7C15ull) {}
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller without pair caching so the engine state alone captures the
    // generator state (required for exact checkpoint resume).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    std::string serialize() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    void deserialize(const std::string& s) {
        std::istringstream is(s);
        is >> engine_;
        if (!is) throw UsageError("Rng::deserialize: malformed state string");
    }

private:
    std::mt19937_64 engine_;
};

// Derives independent stream seeds from a master seed. splitmix64 finalizer.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t z = master + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Single-threaded loop runner. Kernels are written against this signature;
// training parallelism happens at the run level (independent trainers on
// separate threads), which scales without synchronization cost.
template <typename Fn>
inline void parallel_for(std::size_t n, std::size_t /*flops_estimate*/, Fn&& fn) {
    fn(std::size_t{0}, n);
}

}  // namespace hypersac

#endif  // HYPERSAC_COMMON_HPP_
