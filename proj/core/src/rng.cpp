#include "cgmvae/rng.hpp"

namespace cgmvae {

std::string_view stream_name(Stream s) {
  switch (s) {
    case Stream::Split: return "split";
    case Stream::Subsample: return "subsample";
    case Stream::Shuffle: return "shuffle";
    case Stream::Init: return "init";
    case Stream::Dropout: return "dropout";
    case Stream::Sampling: return "sampling";
  }
  return "unknown";
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::mt19937_64 make_rng(std::uint64_t seed, Stream stream, std::uint64_t index) {
  const std::uint64_t a = mix64(seed);
  const std::uint64_t b = mix64(a ^ (static_cast<std::uint64_t>(stream) * 0xd1b54a32d192ed03ULL));
  const std::uint64_t c = mix64(b ^ mix64(index + 0x632be59bd9b4e019ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace cgmvae
