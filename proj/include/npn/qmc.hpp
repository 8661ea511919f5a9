#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace npn {

enum class PointSet {
  Richtmyer,   // randomly shifted rank-1 lattice, baker's transform
  MonteCarlo,  // plain pseudo-random uniforms
};

struct QmcConfig {
  std::size_t M = 2000;
  std::uint64_t seed = 20240101;
  bool antithetic = true;
  PointSet lattice = PointSet::Richtmyer;
};

/// SplitMix64 mixing step; used to derive independent substreams.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Uniform double in (0, 1) from 64 random bits.
double to_unit(std::uint64_t bits);

/// Fills `w` (row-major M x dim) with the uniforms used by one evaluation.
/// `stream` selects the per-observation substream; identical inputs always
/// give identical points.
void fill_points(const QmcConfig& cfg, std::size_t dim, std::uint64_t stream, std::span<double> w);

/// Generating vector of the Richtmyer lattice: frac(sqrt(p_k)) for the first primes.
const std::vector<double>& richtmyer_vector(std::size_t dim);

}  // namespace npn
