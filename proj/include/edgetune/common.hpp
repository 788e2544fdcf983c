#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace edgetune {

using i64 = std::int64_t;
using u64 = std::uint64_t;
using u32 = std::uint32_t;
using u16 = std::uint16_t;
using u8 = std::uint8_t;

// Base class for everything this library throws.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor/operation shape mismatches.
struct ShapeError : Error {
  using Error::Error;
};

// Violated preconditions (out-of-range k, non-scalar loss, ...).
struct ContractError : Error {
  using Error::Error;
};

// Non-finite values where finite input is required.
struct NumericError : Error {
  using Error::Error;
};

// File and serialization problems.
struct IoError : Error {
  using Error::Error;
};

enum class Dtype : u8 { f32 = 0, f64 = 1, u8tag = 2 };

inline std::size_t dtype_size(Dtype d) {
  switch (d) {
    case Dtype::f32: return 4;
    case Dtype::f64: return 8;
    case Dtype::u8tag: return 1;
  }
  throw ContractError("unknown dtype tag");
}

template <typename S>
constexpr Dtype dtype_of();
template <>
constexpr Dtype dtype_of<float>() {
  return Dtype::f32;
}
template <>
constexpr Dtype dtype_of<double>() {
  return Dtype::f64;
}

inline i64 shape_numel(const std::vector<i64>& shape) {
  i64 n = 1;
  for (i64 d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const std::vector<i64>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += " x ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace edgetune
