#pragma once

#include <cstdint>
#include <random>

namespace opmtrack {

/// Seeded stream shared by all stochastic components. Consumers draw from it
/// in a fixed, documented order so that runs are reproducible.
using Rng = std::mt19937_64;

inline double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

}  // namespace opmtrack
