#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <random>
#include <string_view>
#include <thread>
#include <vector>

namespace mfk {

/// SplitMix64 finalizer. Used as the seed-mixing function everywhere so that
/// per-stage / per-replicate seeds are reproducible across platforms.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Stage/replicate seed derivation: mix(mix(root ^ fnv1a(stage)) + C*(index+1)).
/// Declared scheme; identical for serial and parallel runs.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view stage, std::uint64_t index = 0) {
    return mix64(mix64(root ^ fnv1a64(stage)) + 0x9e3779b97f4a7c15ULL * (index + 1));
}

/// Gaussian stream on top of mt19937_64 with an explicit Box-Muller transform.
/// The std:: distributions are implementation-defined; this one is bit-stable
/// across compilers, which the determinism contract requires.
class GaussianRng {
  public:
    explicit GaussianRng(std::uint64_t seed) : eng_(seed) {}

    double uniform() {  // in (0, 1]
        return static_cast<double>((eng_() >> 11) + 1) * (1.0 / 9007199254740992.0);
    }

    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double rho = std::sqrt(-2.0 * std::log(u1));
        const double th = 6.283185307179586477 * u2;
        spare_ = rho * std::sin(th);
        have_spare_ = true;
        return rho * std::cos(th);
    }

    std::uint64_t raw() { return eng_(); }

  private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

/// Runs fn(thread_id, task_index) for task_index in [0, n_tasks). Tasks are
/// claimed from an atomic counter; every task writes only to its own output
/// slot, so results do not depend on the number of jobs.
template <class Fn>
void parallel_tasks(std::size_t n_tasks, unsigned jobs, Fn&& fn) {
    if (jobs <= 1 || n_tasks <= 1) {
        for (std::size_t i = 0; i < n_tasks; ++i) fn(0u, i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    unsigned nthreads = std::min<std::size_t>(jobs, n_tasks);
    pool.reserve(nthreads);
    std::exception_ptr err;
    std::mutex err_mu;
    for (unsigned t = 0; t < nthreads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (;;) {
                    std::size_t i = next.fetch_add(1);
                    if (i >= n_tasks) break;
                    fn(t, i);
                }
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mu);
                if (!err) err = std::current_exception();
                next.store(n_tasks);
            }
        });
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace mfk
