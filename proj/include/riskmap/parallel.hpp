#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>

namespace riskmap {

using Rng = std::mt19937_64;

/// Independent stream seed for task `stream` under `base` (splitmix64).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// RISKMAP_THREADS if set and positive, else the hardware concurrency.
std::size_t default_thread_count();

/// Runs body(0..n-1) on up to `threads` workers. Every index runs even when
/// some throw; the exception of the lowest failing index is rethrown.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& body);

} // namespace riskmap
