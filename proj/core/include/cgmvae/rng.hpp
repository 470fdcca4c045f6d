#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cgmvae {

/// Independent random streams derived from one run seed. Adding a consumer
/// of one stream never shifts the draws seen by another.
enum class Stream : std::uint64_t {
  Split = 1,      ///< train/val/test assignment
  Subsample = 2,  ///< train-fraction row selection
  Shuffle = 3,    ///< per-epoch batch order (index = epoch)
  Init = 4,       ///< parameter initialization
  Dropout = 5,    ///< dropout masks (index = global step)
  Sampling = 6,   ///< reparameterization noise (index = global step)
};

std::string_view stream_name(Stream s);

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Generator for (seed, stream, index). Deterministic across runs and builds
/// of the same standard library.
std::mt19937_64 make_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0);

}  // namespace cgmvae
