#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace stir {

// 64-bit FNV-1a over raw bytes; stable across platforms.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Uniform float on [-1, 1) with 24 significant bits, derived from a key.
constexpr float unit_interval_sym(std::uint64_t key) {
  return static_cast<float>(static_cast<double>(key >> 40) * (1.0 / 8388608.0) - 1.0);
}

// Hex SHA-256 of the parts, each length-prefixed so that part boundaries
// are unambiguous.
std::string content_hash(std::span<const std::string_view> parts);
std::string content_hash(std::initializer_list<std::string_view> parts);

}  // namespace stir
