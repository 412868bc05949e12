// SPDX-License-Identifier: Apache-2.0
//
// mdmimo-sim: Monte-Carlo simulator for mobile distributed MIMO networks
// Copyright (C) 2026 The mdmimo-sim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#ifndef mdmimo_seeding_H
#define mdmimo_seeding_H

#include "mdmimo/types.hpp"

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mdmimo
{

// SplitMix64 finalizer; bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Counter-based split of a root seed. derive_seed(root, {trial, a, b}) gives the
// stream for link (a, b) in a given trial, independent of evaluation order.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path)
{
    std::uint64_t s = mix64(root);
    for (auto p : path)
        s = mix64(s ^ mix64(p + 0x632BE59BD9B4E019ULL));
    return s;
}

// Domain tags so that different consumers of the same node never share a stream.
enum class StreamTag : std::uint64_t
{
    position = 0x100,
    heading = 0x101,
    link_fading = 0x200,
    los = 0x201,
    sync = 0x300,
    noise = 0x400,
    payload = 0x401,
    reservoir = 0x500,
};

inline std::uint64_t tag(StreamTag t) { return static_cast<std::uint64_t>(t); }

using Rng = std::mt19937_64;

// Circularly-symmetric complex Gaussian with E|z|^2 = variance.
inline cplx complex_gaussian(Rng &rng, double variance = 1.0)
{
    std::normal_distribution<double> n(0.0, std::sqrt(variance / 2.0));
    const double re = n(rng);
    const double im = n(rng);
    return {re, im};
}

inline CMatrix complex_gaussian_matrix(Rng &rng, Eigen::Index rows, Eigen::Index cols, double variance = 1.0)
{
    CMatrix m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r)
            m(r, c) = complex_gaussian(rng, variance);
    return m;
}

} // namespace mdmimo

#endif
