#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace clinex {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user-supplied configuration, schema, or specification.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent data on disk.
class DataError : public Error {
 public:
  using Error::Error;
};

/// 64-bit FNV-1a. Stable across platforms, unlike std::hash.
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

/// splitmix64 finalizer; mixes two words into one.
std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept;

std::uint64_t splitmix64(std::uint64_t& state) noexcept;

std::string to_hex(std::uint64_t value);

}  // namespace clinex
