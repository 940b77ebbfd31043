// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0
//
// Seeded random source. Distributions are computed here from raw engine
// output so that a seed reproduces the same stream on every standard library.

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace demoalign {

/// splitmix64 finalizer; combines seeds into independent stream ids.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n); n must be positive.
    std::size_t below(std::size_t n);

    double normal();

    /// Index drawn proportionally to non-negative weights (need not sum to 1).
    std::size_t categorical(std::span<const double> weights);

    /// Independent child generator; does not advance this one.
    Rng fork(std::uint64_t stream) const;

private:
    std::mt19937_64 engine_;
};

}  // namespace demoalign
