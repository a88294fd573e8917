#include "haven/config.hpp"

#include <stdexcept>

namespace haven {

Variant parse_variant(const std::string& name) {
  if (name == "haven") return Variant::kHaven;
  if (name == "haven-i") return Variant::kHavenI;
  if (name == "haven-e") return Variant::kHavenE;
  if (name == "haven-b") return Variant::kHavenB;
  if (name == "flat") return Variant::kFlat;
  throw std::invalid_argument("unknown variant '" + name +
                              "' (expected haven, haven-i, haven-e, haven-b or flat)");
}

std::string to_string(Variant variant) {
  switch (variant) {
    case Variant::kHaven: return "haven";
    case Variant::kHavenI: return "haven-i";
    case Variant::kHavenE: return "haven-e";
    case Variant::kHavenB: return "haven-b";
    case Variant::kFlat: return "flat";
  }
  return "haven";
}

double epsilon(std::size_t step, const TrainConfig& config) {
  if (step >= config.epsilon_anneal_steps) return config.epsilon_end;
  const double frac =
      static_cast<double>(step) / static_cast<double>(config.epsilon_anneal_steps);
  return config.epsilon_start + (config.epsilon_end - config.epsilon_start) * frac;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index);
}

}  // namespace haven
