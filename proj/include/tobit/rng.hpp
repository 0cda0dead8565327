#pragma once

// Keyed random streams. Every stream is a mt19937_64 seeded from a seed_seq
// built out of (seed, key...), so a replication or bootstrap draw gets the
// same numbers no matter which thread produces it or in what order.

#include <cstdint>
#include <initializer_list>
#include <random>

namespace tobit::rng {

using Engine = std::mt19937_64;

Engine make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> key);

// Uniform on the open interval (0, 1).
double uniform_open(Engine& eng);

// Standard normal by inversion of the normal CDF.
double standard_normal(Engine& eng);

// Stream purposes, used as the first key component to keep unrelated uses apart.
enum class Purpose : std::uint64_t {
    dgp = 1,
    multiplier = 2,
    bootstrap = 3,
    simulate = 4,
};

inline std::uint64_t tag(Purpose p) { return static_cast<std::uint64_t>(p); }

}  // namespace tobit::rng
