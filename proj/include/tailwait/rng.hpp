#pragma once

#include <cstdint>
#include <random>

namespace tailwait {

using Rng = std::mt19937_64;

// Counter-based seed derivation: the same (master, stream, index) always
// yields the same child seed, independent of evaluation order.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index = 0);

// Stable 64-bit tag for a stream name, so call sites read as derive_seed(s, tag("panel")).
std::uint64_t stream_tag(const char* name);

// Uniform on the open interval (0, 1).
double uniform_open(Rng& rng);
double std_normal(Rng& rng);
double exponential(Rng& rng, double rate);
double gamma_variate(Rng& rng, double shape, double rate);

}  // namespace tailwait
